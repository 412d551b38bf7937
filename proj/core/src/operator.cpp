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

#include <hstream/operator.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace hstream {

namespace {

constexpr const char* kErrorKey = "error";

std::int64_t int_attr(const Tuple& t, const char* key) {
    auto it = t.attributes.find(key);
    if (it == t.attributes.end()) {
        throw DecodeError(std::string("emission lacks '") + key + "'");
    }
    if (const auto* i = std::get_if<std::int64_t>(&it->second)) {
        return *i;
    }
    throw DecodeError(std::string("emission field '") + key + "' is not an integer");
}

}// namespace

std::string encode_emission(const Emission& e, std::string_view op) {
    nlohmann::ordered_json j;
    if (const auto* r = std::get_if<WindowResult>(&e)) {
        j["trigger_ts"] = r->trigger_time.millis;
        j["win_start"] = r->window.start.millis;
        j["win_end"] = r->window.end.millis;
        j["count"] = r->count;
        if (r->count > 0 && r->value) {
            j["value"] = *r->value;
        }
        j["hist_count"] = r->history_count;
        j["live_count"] = r->live_count;
    } else {
        const auto& err = std::get<WindowError>(e);
        j["trigger_ts"] = err.trigger_time.millis;
        j[kErrorKey] = err.message;
        j["uncovered_start"] = err.uncovered.start.millis;
        j["uncovered_end"] = err.uncovered.end.millis;
    }
    if (!op.empty()) {
        j["op"] = std::string(op);
    }
    return j.dump();
}

Tuple emission_to_tuple(const Emission& e, const std::string& stage) {
    Tuple t;
    t.source_id = stage;
    if (const auto* r = std::get_if<WindowResult>(&e)) {
        t.ts = r->trigger_time;
        t.attributes.emplace("win_start", r->window.start.millis);
        t.attributes.emplace("win_end", r->window.end.millis);
        t.attributes.emplace("count", r->count);
        if (r->count > 0 && r->value) {
            t.attributes.emplace("value", *r->value);
        }
        t.attributes.emplace("hist_count", r->history_count);
        t.attributes.emplace("live_count", r->live_count);
    } else {
        const auto& err = std::get<WindowError>(e);
        t.ts = err.trigger_time;
        t.attributes.emplace(kErrorKey, err.message);
        t.attributes.emplace("uncovered_start", err.uncovered.start.millis);
        t.attributes.emplace("uncovered_end", err.uncovered.end.millis);
    }
    return t;
}

Emission tuple_to_emission(const Tuple& t) {
    if (auto it = t.attributes.find(kErrorKey); it != t.attributes.end()) {
        WindowError err;
        err.trigger_time = t.ts;
        if (const auto* s = std::get_if<std::string>(&it->second)) {
            err.message = *s;
        } else if (const auto* c = std::get_if<char>(&it->second)) {
            err.message = std::string(1, *c);
        }
        err.uncovered = Interval{Timestamp{int_attr(t, "uncovered_start")}, Timestamp{int_attr(t, "uncovered_end")}};
        return err;
    }
    WindowResult r;
    r.trigger_time = t.ts;
    r.window = Interval{Timestamp{int_attr(t, "win_start")}, Timestamp{int_attr(t, "win_end")}};
    r.count = int_attr(t, "count");
    r.history_count = int_attr(t, "hist_count");
    r.live_count = int_attr(t, "live_count");
    if (auto it = t.attributes.find("value"); it != t.attributes.end()) {
        r.value = as_number(it->second);
    }
    return r;
}

Interval window_extent(const WindowSpec& spec, Timestamp trigger, Timestamp anchor) {
    if (trigger < anchor) {
        throw ContractError("trigger precedes the window anchor");
    }
    const Millis d = spec.duration();
    if (spec.kind == WindowKind::sliding) {
        return Interval{saturating_sub(trigger, d), trigger};
    }
    return Interval{saturating_sub(anchor, d), trigger};
}

PartialAggregate LiveBuffer::aggregate(AggregationFunction fn, Interval range) const {
    PartialAggregate p(fn);
    if (range.empty()) {
        return p;
    }
    const auto hi = entries_.lower_bound(range.end.millis);
    for (auto it = entries_.lower_bound(range.start.millis); it != hi; ++it) {
        p = partial_update(p, it->second);
    }
    return p;
}

WindowResult hybrid_evaluate(Interval window, const Watermark& watermark, const LiveBuffer& live,
                             Connection* historic, const OperatorConfig& config) {
    const auto fn = config.aggregation;
    const Timestamp split = watermark.split();
    PartialAggregate hist(fn);
    PartialAggregate fresh(fn);

    if (historic != nullptr) {
        const Timestamp hist_end = std::min(window.end, split);
        if (window.start < hist_end) {
            // One bucket spanning the whole historic part; the partial carries everything needed.
            const Millis len = hist_end - window.start;
            HistoricQuery q;
            q.function = fn;
            q.value = config.attribute;
            q.start = window.start;
            q.end = hist_end;
            q.group_by_number = (len + 999) / 1000;
            q.group_by_unit = TimeUnit::seconds;
            for (const auto& row : historic->query_to_historic(q)) {
                hist = partial_merge(hist, from_aggregate_row(row, fn));
            }
        }
        fresh = live.aggregate(fn, Interval{std::max(window.start, split), window.end});
    } else {
        const Timestamp covered_from = saturating_sub(split, config.live_retention);
        if (window.start < covered_from) {
            const Interval uncovered{window.start, std::min(covered_from, window.end)};
            throw IncompleteWindowError(uncovered, "incomplete window: [" + std::to_string(uncovered.start.millis)
                                                       + ", " + std::to_string(uncovered.end.millis)
                                                       + ") has no historic source");
        }
        fresh = live.aggregate(fn, window);
    }

    const auto total = partial_merge(hist, fresh);
    WindowResult r;
    r.trigger_time = window.end;
    r.window = window;
    r.count = total.count();
    r.value = finalize(total);
    r.history_count = hist.count();
    r.live_count = fresh.count();
    return r;
}

WindowOperator::WindowOperator(OperatorConfig config, Timestamp start, Watermark watermark,
                               std::unique_ptr<Connection> historic)
    : config_(std::move(config)), frequency_(config_.trigger.millis()), start_(start), watermark_(watermark),
      historic_(std::move(historic)), next_trigger_(start + frequency_) {
    if (frequency_ <= 0) {
        throw ContractError("trigger frequency must be positive");
    }
    if (config_.allowed_lateness < 0) {
        throw ContractError("allowed lateness must be non-negative");
    }
}

Timestamp WindowOperator::admission_bound() const {
    const auto extent = window_extent(config_.window, next_trigger_, start_);
    return saturating_sub(extent.start, config_.allowed_lateness);
}

AdmitOutcome WindowOperator::admit(const Tuple& tuple) {
    ++stats_.tuples_in;
    auto it = tuple.attributes.find(config_.attribute);
    std::optional<double> v;
    if (it != tuple.attributes.end()) {
        v = as_number(it->second);
    }
    if (!v || !std::isfinite(*v)) {
        ++stats_.ignored;
        return AdmitOutcome::ignored;
    }
    if (tuple.ts < admission_bound()) {
        ++stats_.late_drops;
        return AdmitOutcome::late_dropped;
    }
    buffer_.insert(tuple.ts, *v);
    ++stats_.admitted;
    return AdmitOutcome::admitted;
}

Emission WindowOperator::fire_next(Timestamp now) {
    const Timestamp trigger = next_trigger_;
    const Interval window = window_extent(config_.window, trigger, start_);
    Emission out;
    try {
        auto r = hybrid_evaluate(window, watermark_, buffer_, historic_.get(), config_);
        r.trigger_time = trigger;
        out = r;
    } catch (const IncompleteWindowError& e) {
        out = WindowError{trigger, e.uncovered(), e.what()};
        ++stats_.errors;
    } catch (const Error& e) {
        out = WindowError{trigger, window, e.what()};
        ++stats_.errors;
    }
    ++stats_.triggers_fired;
    stats_.max_trigger_lag = std::max(stats_.max_trigger_lag, now - (trigger + config_.allowed_lateness));
    next_trigger_ = next_trigger_ + frequency_;
    buffer_.evict_before(admission_bound());
    return out;
}

std::vector<Emission> WindowOperator::fire_due(Timestamp now) {
    std::vector<Emission> out;
    while (next_deadline() <= now) {
        out.push_back(fire_next(now));
    }
    return out;
}

std::vector<Emission> WindowOperator::fire_through(Timestamp end, Timestamp now) {
    std::vector<Emission> out;
    while (next_trigger_ <= end) {
        out.push_back(fire_next(now));
    }
    return out;
}

OperatorTask::OperatorTask(std::string stage_id, WindowOperator op, Subscription input, QueueHandle sink)
    : id_(std::move(stage_id)), op_(std::move(op)), input_(std::move(input)), sink_(std::move(sink)) {}

void OperatorTask::drain() {
    for (;;) {
        scratch_.clear();
        if (input_.receive_batch(scratch_, 4096) == 0) {
            break;
        }
        for (const auto& t : scratch_) {
            op_.admit(t);
        }
    }
}

bool OperatorTask::emit(const std::vector<Emission>& out) {
    for (const auto& e : out) {
        try {
            sink_->publish(emission_to_tuple(e, id_));
            ++tuples_out_;
        } catch (const QueueClosedError& err) {
            std::lock_guard lock(stats_mutex_);
            failure_ = std::string("sink closed: ") + err.what();
            failed_ = true;
            return false;
        }
    }
    return true;
}

void OperatorTask::snapshot() {
    std::lock_guard lock(stats_mutex_);
    stats_snapshot_ = op_.stats();
}

bool OperatorTask::poll(Timestamp now) {
    if (failed_) {
        return false;
    }
    drain();
    const bool ok = emit(op_.fire_due(now));
    snapshot();
    return ok;
}

void OperatorTask::finish(Timestamp end, Timestamp now) {
    if (failed_) {
        return;
    }
    drain();
    emit(op_.fire_through(end, now));
    snapshot();
}

void OperatorTask::run(std::stop_token stop, const Clock& clock) {
    using namespace std::chrono;
    while (!stop.stop_requested()) {
        const Timestamp now = clock.now();
        if (!poll(now)) {
            return;
        }
        const Millis until = op_.next_deadline() - clock.now();
        const auto wait = milliseconds(std::clamp<Millis>(until, 1, 20));
        if (auto t = input_.receive(wait)) {
            op_.admit(*t);
        }
    }
    const Timestamp now = clock.now();
    finish(now, now);
}

OperatorStats OperatorTask::stats() const {
    std::lock_guard lock(stats_mutex_);
    return stats_snapshot_;
}

std::string OperatorTask::failure() const {
    std::lock_guard lock(stats_mutex_);
    return failure_;
}

void run_operator(const OperatorConfig& config, Subscription fetch, std::unique_ptr<Connection> historic,
                  QueueHandle sink, const Clock& clock, std::stop_token stop) {
    const Timestamp start = clock.now();
    OperatorTask task("op0", WindowOperator(config, start, Watermark(start), std::move(historic)), std::move(fetch),
                      std::move(sink));
    task.run(stop, clock);
}

}// namespace hstream
