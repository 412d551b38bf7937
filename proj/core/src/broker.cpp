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

#include <hstream/broker.hpp>
#include <hstream/errors.hpp>
#include <hstream/tuple_codec.hpp>

#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <unistd.h>

namespace hstream {

namespace {
constexpr std::uint64_t kSegmentLines = 65'536;
}

std::filesystem::path default_spill_root() {
    if (const char* env = std::getenv("HSTREAM_SPILL_DIR"); env && *env) {
        return env;
    }
    return std::filesystem::temp_directory_path() / ("hstream-spill-" + std::to_string(::getpid()));
}

Queue::Queue(QueueConfig config) : config_(std::move(config)) {
    if (config_.memory_capacity < 1) {
        throw ContractError("queue '" + config_.name + "': memory capacity must be at least 1");
    }
    if (config_.name.empty()) {
        throw ContractError("queue name must not be empty");
    }
    dir_ = config_.spill_directory / config_.name;
}

Queue::~Queue() {
    writer_.close();
    reader_.close();
    remove_spill_files();
}

std::filesystem::path Queue::segment_path(std::uint64_t index) const {
    std::ostringstream name;
    name << std::setw(8) << std::setfill('0') << index << ".ndjson";
    return dir_ / name.str();
}

void Queue::remove_spill_files() {
    std::error_code ec;
    for (const auto& seg : segments_) {
        std::filesystem::remove(segment_path(seg.index), ec);
    }
    segments_.clear();
    if (std::filesystem::exists(dir_, ec) && std::filesystem::is_empty(dir_, ec)) {
        std::filesystem::remove(dir_, ec);
    }
}

void Queue::publish(Tuple tuple) {
    std::unique_lock lock(mutex_);
    if (closed_) {
        throw QueueClosedError("queue '" + config_.name + "' is closed");
    }
    const bool full = memory_.size() >= config_.memory_capacity;
    if (config_.overflow_policy == OverflowPolicy::block) {
        not_full_.wait(lock, [&] { return closed_ || memory_.size() < config_.memory_capacity; });
        if (closed_) {
            throw QueueClosedError("queue '" + config_.name + "' is closed");
        }
        memory_.push_back(std::move(tuple));
    } else if (full || on_disk_ > 0) {
        spill_locked(tuple);
    } else {
        memory_.push_back(std::move(tuple));
    }
    ++published_;
    lock.unlock();
    not_empty_.notify_one();
}

void Queue::spill_locked(const Tuple& tuple) {
    if (segments_.empty() || segments_.back().sealed || segments_.back().written >= kSegmentLines) {
        if (!segments_.empty() && !segments_.back().sealed) {
            writer_.close();
            segments_.back().sealed = true;
        }
        std::filesystem::create_directories(dir_);
        Segment seg;
        seg.index = next_segment_++;
        writer_.open(segment_path(seg.index), std::ios::out | std::ios::trunc);
        if (!writer_) {
            throw Error("cannot open spill segment " + segment_path(seg.index).string());
        }
        segments_.push_back(seg);
    }
    writer_ << encode_tuple(tuple) << '\n';
    if (!writer_) {
        throw Error("write to spill segment failed for queue '" + config_.name + "'");
    }
    ++segments_.back().written;
    ++spilled_;
    ++on_disk_;
}

void Queue::refill_locked() {
    while (on_disk_ > 0 && memory_.size() < config_.memory_capacity) {
        Segment& head = segments_.front();
        if (!reader_.is_open()) {
            if (!head.sealed) {
                writer_.close();
                head.sealed = true;
            }
            reader_.open(segment_path(head.index));
            if (!reader_) {
                throw Error("cannot reopen spill segment " + segment_path(head.index).string());
            }
            read_in_segment_ = 0;
        }
        std::string line;
        if (!std::getline(reader_, line)) {
            throw Error("spill segment truncated for queue '" + config_.name + "'");
        }
        memory_.push_back(decode_tuple(line));
        --on_disk_;
        if (++read_in_segment_ == head.written) {
            reader_.close();
            std::error_code ec;
            std::filesystem::remove(segment_path(head.index), ec);
            segments_.pop_front();
        }
    }
}

Subscription Queue::subscribe() {
    std::lock_guard lock(mutex_);
    if (has_consumer_) {
        throw ConfigConflictError("queue '" + config_.name + "' already has a consumer");
    }
    has_consumer_ = true;
    return Subscription(shared_from_this());
}

void Queue::release_consumer() {
    std::lock_guard lock(mutex_);
    has_consumer_ = false;
}

std::optional<Tuple> Queue::receive(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    refill_locked();
    if (memory_.empty() && timeout.count() > 0) {
        not_empty_.wait_for(lock, timeout, [&] { return !memory_.empty() || on_disk_ > 0 || closed_; });
        refill_locked();
    }
    if (memory_.empty()) {
        return std::nullopt;
    }
    Tuple t = std::move(memory_.front());
    memory_.pop_front();
    ++delivered_;
    refill_locked();
    lock.unlock();
    not_full_.notify_one();
    return t;
}

std::size_t Queue::receive_batch(std::vector<Tuple>& out, std::size_t max) {
    std::unique_lock lock(mutex_);
    std::size_t n = 0;
    refill_locked();
    while (n < max && !memory_.empty()) {
        out.push_back(std::move(memory_.front()));
        memory_.pop_front();
        ++n;
        if (memory_.empty()) {
            refill_locked();
        }
    }
    delivered_ += n;
    refill_locked();
    lock.unlock();
    if (n > 0) {
        not_full_.notify_all();
    }
    return n;
}

void Queue::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
}

bool Queue::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

QueueStats Queue::stats() const {
    std::lock_guard lock(mutex_);
    QueueStats s;
    s.published = published_;
    s.delivered = delivered_;
    s.spilled = spilled_;
    s.in_memory = memory_.size();
    s.on_disk = on_disk_;
    return s;
}

Subscription::~Subscription() {
    if (queue_) {
        queue_->release_consumer();
    }
}

Subscription& Subscription::operator=(Subscription&& other) noexcept {
    if (this != &other) {
        if (queue_) {
            queue_->release_consumer();
        }
        queue_ = std::move(other.queue_);
    }
    return *this;
}

std::optional<Tuple> Subscription::receive(std::chrono::milliseconds timeout) {
    if (!queue_) {
        throw ContractError("receive on an empty subscription");
    }
    return queue_->receive(timeout);
}

std::size_t Subscription::receive_batch(std::vector<Tuple>& out, std::size_t max) {
    if (!queue_) {
        throw ContractError("receive on an empty subscription");
    }
    return queue_->receive_batch(out, max);
}

Broker::Broker(std::filesystem::path spill_root)
    : spill_root_(spill_root.empty() ? default_spill_root() : std::move(spill_root)) {}

QueueHandle Broker::declare_queue(QueueConfig config) {
    if (config.spill_directory.empty()) {
        config.spill_directory = spill_root_;
    }
    std::lock_guard lock(mutex_);
    if (auto it = queues_.find(config.name); it != queues_.end()) {
        if (it->second->config() == config) {
            return it->second;
        }
        throw ConfigConflictError("queue '" + config.name + "' already declared with a different configuration");
    }
    auto q = std::make_shared<Queue>(config);
    queues_.emplace(config.name, q);
    return q;
}

QueueHandle Broker::find(const std::string& name) const {
    std::lock_guard lock(mutex_);
    auto it = queues_.find(name);
    return it == queues_.end() ? nullptr : it->second;
}

void Broker::remove_queue(const std::string& name) {
    QueueHandle q;
    {
        std::lock_guard lock(mutex_);
        auto it = queues_.find(name);
        if (it == queues_.end()) {
            return;
        }
        q = std::move(it->second);
        queues_.erase(it);
    }
    q->close();
}

std::vector<std::string> Broker::queue_names() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> names;
    names.reserve(queues_.size());
    for (const auto& [name, _] : queues_) {
        names.push_back(name);
    }
    return names;
}

}// namespace hstream
