/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#pragma once

#include <hstream/model.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace hstream {

enum class OverflowPolicy { spill, block };

struct QueueConfig {
    std::string name;
    std::size_t memory_capacity = 10'000;
    /// Root of the spill tree; segments go to `<spill_directory>/<name>/`. Empty = broker default.
    std::filesystem::path spill_directory;
    OverflowPolicy overflow_policy = OverflowPolicy::spill;

    friend bool operator==(const QueueConfig&, const QueueConfig&) = default;
};

/// published = delivered + in_memory + on_disk holds exactly at quiescence.
struct QueueStats {
    std::uint64_t published = 0;
    std::uint64_t delivered = 0;
    std::uint64_t spilled = 0;
    std::uint64_t in_memory = 0;
    std::uint64_t on_disk = 0;

    friend bool operator==(const QueueStats&, const QueueStats&) = default;
};

class Subscription;

/// Named FIFO work queue with a bounded memory buffer. Under the spill policy tuples that do
/// not fit in memory are appended to NDJSON segment files and replayed in order, so nothing
/// is lost; under the block policy publishers wait for space.
class Queue : public std::enable_shared_from_this<Queue> {
  public:
    explicit Queue(QueueConfig config);
    ~Queue();

    Queue(const Queue&) = delete;
    Queue& operator=(const Queue&) = delete;

    const QueueConfig& config() const { return config_; }
    const std::string& name() const { return config_.name; }

    /// Throws QueueClosedError once the queue is closed.
    void publish(Tuple tuple);

    /// Only one live subscription per queue; a second one is a ConfigConflictError.
    Subscription subscribe();

    /// Rejects further publishes. Already queued tuples stay receivable.
    void close();
    bool closed() const;

    QueueStats stats() const;

  private:
    friend class Subscription;

    std::optional<Tuple> receive(std::chrono::milliseconds timeout);
    std::size_t receive_batch(std::vector<Tuple>& out, std::size_t max);
    void release_consumer();

    // Require mutex_ held.
    void spill_locked(const Tuple& tuple);
    void refill_locked();
    std::filesystem::path segment_path(std::uint64_t index) const;
    void remove_spill_files();

    QueueConfig config_;
    std::filesystem::path dir_;

    mutable std::mutex mutex_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<Tuple> memory_;
    bool closed_ = false;
    bool has_consumer_ = false;

    std::uint64_t published_ = 0;
    std::uint64_t delivered_ = 0;
    std::uint64_t spilled_ = 0;
    std::uint64_t on_disk_ = 0;

    // Spill segments in write order; front is being read, back is being written.
    struct Segment {
        std::uint64_t index = 0;
        std::uint64_t written = 0;
        bool sealed = false;
    };
    std::deque<Segment> segments_;
    std::uint64_t next_segment_ = 0;
    std::ofstream writer_;
    std::ifstream reader_;
    std::uint64_t read_in_segment_ = 0;
};

using QueueHandle = std::shared_ptr<Queue>;

/// Single-consumer handle; releases the consumer slot on destruction.
class Subscription {
  public:
    Subscription() = default;
    explicit Subscription(QueueHandle queue) : queue_(std::move(queue)) {}
    ~Subscription();

    Subscription(Subscription&&) noexcept = default;
    Subscription& operator=(Subscription&& other) noexcept;
    Subscription(const Subscription&) = delete;
    Subscription& operator=(const Subscription&) = delete;

    /// Waits up to `timeout`; nullopt when nothing arrived.
    std::optional<Tuple> receive(std::chrono::milliseconds timeout);
    std::optional<Tuple> try_receive() { return receive(std::chrono::milliseconds{0}); }
    /// Appends up to `max` immediately available tuples; returns how many.
    std::size_t receive_batch(std::vector<Tuple>& out, std::size_t max);

    bool valid() const { return static_cast<bool>(queue_); }
    const QueueHandle& queue() const { return queue_; }

  private:
    QueueHandle queue_;
};

/// In-process registry of named queues.
class Broker {
  public:
    /// Spill root; when empty, $HSTREAM_SPILL_DIR or a directory under the system temp dir.
    explicit Broker(std::filesystem::path spill_root = {});

    /// Idempotent for an identical config; a different config for a live name is a ConfigConflictError.
    QueueHandle declare_queue(QueueConfig config);
    QueueHandle find(const std::string& name) const;
    /// Closes the queue, drops it from the registry and deletes its spill files.
    void remove_queue(const std::string& name);
    std::vector<std::string> queue_names() const;

    const std::filesystem::path& spill_root() const { return spill_root_; }

  private:
    std::filesystem::path spill_root_;
    mutable std::mutex mutex_;
    std::map<std::string, QueueHandle> queues_;
};

/// Resolves the default spill root honoring $HSTREAM_SPILL_DIR.
std::filesystem::path default_spill_root();

}// namespace hstream
