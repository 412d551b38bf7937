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

#include <hstream/aggregate.hpp>
#include <hstream/broker.hpp>
#include <hstream/clock.hpp>
#include <hstream/errors.hpp>
#include <hstream/historic.hpp>
#include <hstream/model.hpp>
#include <hstream/query.hpp>

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <variant>
#include <vector>

namespace hstream {

struct OperatorConfig {
    Frequency trigger;
    WindowSpec window;
    AggregationFunction aggregation = AggregationFunction::mean;
    std::string attribute;
    Millis allowed_lateness = 0;
    /// Without a historic source, how far before the split the live stream is trusted to be complete.
    Millis live_retention = 3'600'000;

    friend bool operator==(const OperatorConfig&, const OperatorConfig&) = default;
};

/// Answer emitted at one trigger instant.
struct WindowResult {
    Timestamp trigger_time;
    Interval window;
    std::int64_t count = 0;
    std::optional<double> value;
    std::int64_t history_count = 0;
    std::int64_t live_count = 0;

    friend bool operator==(const WindowResult&, const WindowResult&) = default;
};

/// Emitted instead of a result when part of the window is served by no source.
struct WindowError {
    Timestamp trigger_time;
    Interval uncovered;
    std::string message;

    friend bool operator==(const WindowError&, const WindowError&) = default;
};

using Emission = std::variant<WindowResult, WindowError>;

class IncompleteWindowError : public Error {
  public:
    IncompleteWindowError(Interval uncovered, const std::string& what) : Error(what), uncovered_(uncovered) {}
    const Interval& uncovered() const { return uncovered_; }

  private:
    Interval uncovered_;
};

/// `{"trigger_ts","win_start","win_end","count","value","hist_count","live_count"}`; value is
/// omitted when count is 0. A non-empty `op` is appended as an extra field.
std::string encode_emission(const Emission& e, std::string_view op = {});

/// Transport form on broker queues: ts = trigger time, src = emitting stage.
Tuple emission_to_tuple(const Emission& e, const std::string& stage);
Emission tuple_to_emission(const Tuple& t);

/// Boundary between data served by the store (before) and by the live stream (at or after).
class Watermark {
  public:
    explicit Watermark(Timestamp split = {}) : split_(split) {}
    Timestamp split() const { return split_; }
    /// Never moves backwards.
    void advance(Timestamp t) {
        if (t > split_) split_ = t;
    }

  private:
    Timestamp split_;
};

/// sliding: [trigger - d, trigger); landmark: [anchor - d, trigger). Starts clamp at the epoch.
Interval window_extent(const WindowSpec& spec, Timestamp trigger, Timestamp anchor);

/// Timestamp-indexed numeric values of the target attribute; out-of-order arrival is exact.
class LiveBuffer {
  public:
    void insert(Timestamp ts, double v) { entries_.emplace(ts.millis, v); }
    /// Removes every entry with ts < bound.
    void evict_before(Timestamp bound) { entries_.erase(entries_.begin(), entries_.lower_bound(bound.millis)); }
    std::size_t size() const { return entries_.size(); }
    PartialAggregate aggregate(AggregationFunction fn, Interval range) const;

  private:
    std::multimap<Millis, double> entries_;
};

/// Fuses stored history before the split with live values at or after it. With no historic
/// connection the live buffer serves the whole window, and any part earlier than
/// split - live_retention raises IncompleteWindowError.
WindowResult hybrid_evaluate(Interval window, const Watermark& watermark, const LiveBuffer& live,
                             Connection* historic, const OperatorConfig& config);

enum class AdmitOutcome { admitted, late_dropped, ignored };

struct OperatorStats {
    std::uint64_t tuples_in = 0;
    std::uint64_t admitted = 0;
    std::uint64_t late_drops = 0;
    std::uint64_t ignored = 0;
    std::uint64_t triggers_fired = 0;
    std::uint64_t errors = 0;
    Millis max_trigger_lag = 0;
};

/// Window/aggregate operator logic: buffer admission, trigger schedule and evaluation.
/// Triggers fire at start + k * frequency (k >= 1) once the clock reaches trigger + lateness.
class WindowOperator {
  public:
    WindowOperator(OperatorConfig config, Timestamp start, Watermark watermark,
                   std::unique_ptr<Connection> historic = nullptr);

    const OperatorConfig& config() const { return config_; }
    Timestamp start() const { return start_; }
    const Watermark& watermark() const { return watermark_; }

    /// Admitted iff ts >= lower bound of the next window - allowed lateness. Tuples without a
    /// numeric target attribute are ignored.
    AdmitOutcome admit(const Tuple& tuple);

    Timestamp next_trigger() const { return next_trigger_; }
    Timestamp next_deadline() const { return next_trigger_ + config_.allowed_lateness; }
    /// Lower admission bound for the next trigger.
    Timestamp admission_bound() const;

    /// Fires every trigger whose deadline is <= now.
    std::vector<Emission> fire_due(Timestamp now);
    /// Fires every trigger <= end regardless of lateness (used when a run stops).
    std::vector<Emission> fire_through(Timestamp end, Timestamp now);

    const OperatorStats& stats() const { return stats_; }
    std::size_t buffered() const { return buffer_.size(); }

  private:
    Emission fire_next(Timestamp now);

    OperatorConfig config_;
    Millis frequency_;
    Timestamp start_;
    Watermark watermark_;
    std::unique_ptr<Connection> historic_;
    LiveBuffer buffer_;
    Timestamp next_trigger_;
    OperatorStats stats_;
};

/// Drives a WindowOperator from a broker subscription and publishes emissions to a sink queue.
/// Single-threaded; either pumped explicitly (virtual time) or run on its own thread.
class OperatorTask {
  public:
    OperatorTask(std::string stage_id, WindowOperator op, Subscription input, QueueHandle sink);

    /// Drains available input and fires triggers due at `now`. Returns false once the sink closed.
    bool poll(Timestamp now);
    /// Drains input and fires all triggers <= end.
    void finish(Timestamp end, Timestamp now);
    /// Loops until stop is requested; then finishes at the clock's current time.
    void run(std::stop_token stop, const Clock& clock);

    const std::string& id() const { return id_; }
    OperatorStats stats() const;
    std::uint64_t tuples_out() const { return tuples_out_.load(); }
    bool failed() const { return failed_.load(); }
    std::string failure() const;
    const WindowOperator& op() const { return op_; }

  private:
    void drain();
    bool emit(const std::vector<Emission>& out);
    void snapshot();

    std::string id_;
    WindowOperator op_;
    Subscription input_;
    QueueHandle sink_;
    std::vector<Tuple> scratch_;

    mutable std::mutex stats_mutex_;
    OperatorStats stats_snapshot_;
    std::string failure_;
    std::atomic<std::uint64_t> tuples_out_{0};
    std::atomic<bool> failed_{false};
};

/// Runs one operator on the calling thread until `stop` is requested.
void run_operator(const OperatorConfig& config, Subscription fetch, std::unique_ptr<Connection> historic,
                  QueueHandle sink, const Clock& clock, std::stop_token stop);

}// namespace hstream
