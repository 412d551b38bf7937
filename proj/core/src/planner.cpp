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

#include <hstream/planner.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <sstream>

namespace hstream {

namespace {

constexpr std::size_t kInternalQueueCapacity = 100'000;

QueueConfig internal_queue(std::string name) {
    QueueConfig q;
    q.name = std::move(name);
    q.memory_capacity = kInternalQueueCapacity;
    return q;
}

OperatorConfig operator_config(const QuerySpec& spec, const Catalog& catalog) {
    OperatorConfig cfg;
    cfg.trigger = spec.frequency;
    cfg.window = spec.window;
    cfg.aggregation = spec.aggregation;
    cfg.attribute = spec.attribute;
    cfg.live_retention = catalog.live_retention;
    // Tumbling: a sliding window as long as the trigger period is expressed in the trigger's unit.
    if (cfg.window.kind == WindowKind::sliding && cfg.window.duration() == cfg.trigger.millis()) {
        cfg.window.number = cfg.trigger.number;
        cfg.window.unit = cfg.trigger.unit;
    }
    return cfg;
}

nlohmann::ordered_json operator_json(const OperatorConfig& op) {
    nlohmann::ordered_json j;
    j["trigger"] = {{"number", op.trigger.number}, {"unit", unit_name(op.trigger.unit)}, {"millis", op.trigger.millis()}};
    j["window"] = {{"kind", op.window.kind == WindowKind::sliding ? "sliding" : "landmark"},
                   {"number", op.window.number},
                   {"unit", unit_name(op.window.unit)},
                   {"millis", op.window.duration()}};
    j["aggregation"] = function_name(op.aggregation);
    j["attribute"] = op.attribute;
    j["allowed_lateness_ms"] = op.allowed_lateness;
    j["live_retention_ms"] = op.live_retention;
    return j;
}

}// namespace

std::string_view stage_kind_name(StageKind kind) {
    switch (kind) {
        case StageKind::fetch: return "fetch";
        case StageKind::window_operator: return "operator";
        case StageKind::sink: return "sink";
    }
    return "fetch";
}

std::string_view state_name(PipelineState s) {
    switch (s) {
        case PipelineState::starting: return "starting";
        case PipelineState::running: return "running";
        case PipelineState::stopped: return "stopped";
        case PipelineState::failed: return "failed";
    }
    return "failed";
}

std::string plan_id(std::string_view canonical_text) {
    // FNV-1a, 64 bit
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "q%016llx", static_cast<unsigned long long>(h));
    return buf;
}

PipelinePlan plan(const QuerySpec& spec, const Catalog& catalog) { return plan(std::span(&spec, 1), catalog); }

PipelinePlan plan(std::span<const QuerySpec> specs, const Catalog& catalog) {
    if (specs.empty()) {
        throw PlanError("nothing to plan");
    }
    std::string diagnostics;
    std::optional<std::string> stream;
    std::string canonical;
    for (const auto& spec : specs) {
        for (const auto& d : validate(spec, catalog)) {
            diagnostics += (diagnostics.empty() ? "" : "; ") + d.message;
        }
        if (spec.sources.stream) {
            if (stream && *stream != *spec.sources.stream) {
                diagnostics += (diagnostics.empty() ? "" : "; ")
                               + std::string("queries in one plan must share one stream queue");
            }
            stream = spec.sources.stream;
        }
        canonical += (canonical.empty() ? "" : "\n") + render_query(spec);
    }
    if (!diagnostics.empty()) {
        throw PlanError(diagnostics);
    }

    PipelinePlan p;
    p.id = plan_id(canonical);
    p.query = canonical;
    const std::string results = p.result_queue();

    StageDescriptor fetch;
    if (stream) {
        fetch.name = "fetch";
        fetch.kind = StageKind::fetch;
        fetch.input_queue = *stream;
        p.queues.push_back(internal_queue(*stream));
    }
    std::vector<StageDescriptor> ops;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        StageDescriptor op;
        op.name = "op" + std::to_string(i);
        op.kind = StageKind::window_operator;
        op.input_queue = "in." + p.id + "." + op.name;
        op.output_queues = {results};
        op.op = operator_config(specs[i], catalog);
        op.historic = specs[i].sources.historic;
        p.queues.push_back(internal_queue(op.input_queue));
        if (stream && specs[i].sources.stream) {
            fetch.output_queues.push_back(op.input_queue);
        }
        ops.push_back(std::move(op));
    }
    p.queues.push_back(internal_queue(results));

    if (stream) {
        p.stages.push_back(std::move(fetch));
    }
    for (auto& op : ops) {
        p.stages.push_back(std::move(op));
    }
    StageDescriptor sink;
    sink.name = "sink";
    sink.kind = StageKind::sink;
    sink.input_queue = results;
    p.stages.push_back(std::move(sink));
    return p;
}

std::string plan_to_json(const PipelinePlan& plan) {
    nlohmann::ordered_json j;
    j["id"] = plan.id;
    j["query"] = plan.query;
    j["stages"] = nlohmann::ordered_json::array();
    for (const auto& s : plan.stages) {
        nlohmann::ordered_json st;
        st["name"] = s.name;
        st["kind"] = stage_kind_name(s.kind);
        st["input"] = s.input_queue;
        st["outputs"] = s.output_queues;
        if (s.op) {
            st["operator"] = operator_json(*s.op);
        }
        if (s.historic) {
            st["historic"] = {{"provider", s.historic->provider},
                              {"database", s.historic->database},
                              {"series", s.historic->series}};
        }
        j["stages"].push_back(std::move(st));
    }
    j["queues"] = nlohmann::ordered_json::array();
    for (const auto& q : plan.queues) {
        j["queues"].push_back({{"name", q.name},
                               {"memory_capacity", q.memory_capacity},
                               {"overflow_policy", q.overflow_policy == OverflowPolicy::spill ? "spill" : "block"}});
    }
    return j.dump(2);
}

struct Pipeline::FetchStage {
    Subscription input;
    std::vector<QueueHandle> outputs;
    std::atomic<std::uint64_t> tuples_in{0};
    std::atomic<std::uint64_t> tuples_out{0};
    std::vector<Tuple> scratch;

    // Returns the number of tuples moved.
    std::size_t pump() {
        std::size_t moved = 0;
        for (;;) {
            scratch.clear();
            const auto n = input.receive_batch(scratch, 4096);
            if (n == 0) break;
            forward(n);
            moved += n;
        }
        return moved;
    }

    void forward(std::size_t n) {
        tuples_in += n;
        for (auto& t : scratch) {
            for (std::size_t i = 0; i < outputs.size(); ++i) {
                if (i + 1 == outputs.size()) {
                    outputs[i]->publish(std::move(t));
                } else {
                    outputs[i]->publish(t);
                }
                ++tuples_out;
            }
        }
    }
};

struct Pipeline::SinkStage {
    Subscription input;
    ResultCallback callback;
    std::atomic<std::uint64_t> tuples_in{0};
    std::vector<Tuple> scratch;

    std::size_t pump() {
        std::size_t moved = 0;
        for (;;) {
            scratch.clear();
            const auto n = input.receive_batch(scratch, 4096);
            if (n == 0) break;
            for (const auto& t : scratch) {
                ++tuples_in;
                if (callback) {
                    callback(t.source_id, tuple_to_emission(t));
                }
            }
            moved += n;
        }
        return moved;
    }
};

Pipeline::Pipeline(PipelinePlan plan, Clock& clock) : plan_(std::move(plan)), clock_(clock), start_(clock.now()) {}

Pipeline::~Pipeline() {
    bool running = false;
    {
        std::lock_guard lock(mutex_);
        running = state_ == PipelineState::running;
    }
    if (running) {
        try {
            stop();
        } catch (...) {
        }
    }
}

void Pipeline::fail(const std::string& cause) {
    std::lock_guard lock(mutex_);
    state_ = PipelineState::failed;
    cause_ = cause;
}

PipelineStatus Pipeline::status() const {
    PipelineStatus s;
    s.id = plan_.id;
    {
        std::lock_guard lock(mutex_);
        s.state = state_;
        s.cause = cause_;
    }
    if (fetch_) {
        s.stages.push_back({"fetch", fetch_->tuples_in.load(), fetch_->tuples_out.load(), 0, 0});
    }
    for (const auto& op : ops_) {
        const auto st = op->stats();
        s.stages.push_back({op->id(), st.tuples_in, op->tuples_out(), st.triggers_fired, st.late_drops});
        if (op->failed() && s.state == PipelineState::running) {
            s.state = PipelineState::failed;
            s.cause = op->id() + ": " + op->failure();
        }
    }
    if (sink_) {
        s.stages.push_back({"sink", sink_->tuples_in.load(), sink_->tuples_in.load(), 0, 0});
    }
    return s;
}

std::map<std::string, QueueStats> Pipeline::queue_stats() const {
    std::map<std::string, QueueStats> out;
    for (const auto& [name, q] : queues_) {
        out[name] = q->stats();
    }
    return out;
}

void Pipeline::pump(Timestamp now) {
    if (fetch_) {
        fetch_->pump();
    }
    for (auto& op : ops_) {
        op->poll(now);
    }
    sink_->pump();
}

void Pipeline::advance_to(Timestamp t) {
    auto* vclock = dynamic_cast<VirtualClock*>(&clock_);
    if (vclock == nullptr) {
        throw ContractError("advance_to requires a virtual clock");
    }
    {
        std::lock_guard lock(mutex_);
        if (state_ != PipelineState::running) {
            throw ContractError("pipeline " + plan_.id + " is not running");
        }
    }
    for (;;) {
        Timestamp next = t;
        for (const auto& op : ops_) {
            next = std::min(next, op->op().next_deadline());
        }
        if (next >= t) break;
        vclock->set(std::max(vclock->now(), next));
        pump(vclock->now());
    }
    vclock->set(std::max(vclock->now(), t));
    pump(vclock->now());
}

void Pipeline::start_threads() {
    using namespace std::chrono_literals;
    if (fetch_) {
        fetch_thread_ = std::jthread([this](std::stop_token stop) {
            auto& f = *fetch_;
            while (!stop.stop_requested()) {
                if (auto t = f.input.receive(20ms)) {
                    f.scratch.clear();
                    f.scratch.push_back(std::move(*t));
                    f.forward(1);
                    f.pump();
                }
            }
            f.pump();
        });
    }
    for (auto& op : ops_) {
        op_threads_.emplace_back([this, task = op.get()](std::stop_token stop) { task->run(stop, clock_); });
    }
    sink_thread_ = std::jthread([this](std::stop_token stop) {
        auto& s = *sink_;
        while (!stop.stop_requested()) {
            if (auto t = s.input.receive(20ms)) {
                ++s.tuples_in;
                if (s.callback) s.callback(t->source_id, tuple_to_emission(*t));
                s.pump();
            }
        }
        s.pump();
    });
}

void Pipeline::stop() {
    {
        std::lock_guard lock(mutex_);
        if (state_ != PipelineState::running) {
            return;
        }
    }
    if (clock_.is_virtual()) {
        const Timestamp now = clock_.now();
        if (fetch_) fetch_->pump();
        for (auto& op : ops_) op->finish(now, now);
        sink_->pump();
    } else {
        // Upstream first so every stage sees all of its input before it stops.
        if (fetch_thread_.joinable()) {
            fetch_thread_.request_stop();
            fetch_thread_.join();
        }
        for (auto& t : op_threads_) {
            t.request_stop();
            t.join();
        }
        op_threads_.clear();
        sink_thread_.request_stop();
        sink_thread_.join();
    }
    std::lock_guard lock(mutex_);
    state_ = PipelineState::stopped;
    for (const auto& op : ops_) {
        if (op->failed()) {
            state_ = PipelineState::failed;
            cause_ = op->id() + ": " + op->failure();
        }
    }
}

PipelineHandle launch(const PipelinePlan& plan, Broker& broker, const ProviderRegistry& providers, Clock& clock,
                      LaunchOptions options) {
    auto pipeline = std::shared_ptr<Pipeline>(new Pipeline(plan, clock));
    pipeline->on_result_ = options.on_result;
    std::vector<std::string> created;
    try {
        for (const auto& q : plan.queues) {
            if (auto existing = broker.find(q.name)) {
                if (!plan.stages.empty() && plan.stages.front().kind == StageKind::fetch
                    && plan.stages.front().input_queue == q.name) {
                    pipeline->queues_[q.name] = existing;// producers own the source queue
                    continue;
                }
            } else {
                created.push_back(q.name);
            }
            pipeline->queues_[q.name] = broker.declare_queue(q);
        }

        for (const auto& stage : plan.stages) {
            switch (stage.kind) {
                case StageKind::fetch: {
                    auto f = std::make_unique<Pipeline::FetchStage>();
                    f->input = pipeline->queues_.at(stage.input_queue)->subscribe();
                    for (const auto& out : stage.output_queues) {
                        f->outputs.push_back(pipeline->queues_.at(out));
                    }
                    pipeline->fetch_ = std::move(f);
                    break;
                }
                case StageKind::window_operator: {
                    std::unique_ptr<Connection> conn;
                    Timestamp split = pipeline->start_;
                    if (stage.historic) {
                        auto provider = providers.get(stage.historic->provider);
                        if (!provider) {
                            throw UnknownSeriesError("unknown historic provider: " + stage.historic->provider);
                        }
                        conn = provider->open_connection(*stage.historic);
                        if (options.split == SplitMode::history_max) {
                            if (auto latest = conn->latest_timestamp()) {
                                split = *latest + 1;
                            }
                        }
                    }
                    WindowOperator op(*stage.op, pipeline->start_, Watermark(split), std::move(conn));
                    auto input = pipeline->queues_.at(stage.input_queue)->subscribe();
                    pipeline->ops_.push_back(std::make_unique<OperatorTask>(
                        stage.name, std::move(op), std::move(input), pipeline->queues_.at(stage.output_queues.at(0))));
                    break;
                }
                case StageKind::sink: {
                    auto s = std::make_unique<Pipeline::SinkStage>();
                    s->input = pipeline->queues_.at(stage.input_queue)->subscribe();
                    s->callback = options.on_result;
                    pipeline->sink_ = std::move(s);
                    break;
                }
            }
        }
    } catch (const std::exception& e) {
        pipeline->fetch_.reset();
        pipeline->ops_.clear();
        pipeline->sink_.reset();
        for (const auto& name : created) {
            broker.remove_queue(name);
            pipeline->queues_.erase(name);
        }
        pipeline->fail(e.what());
        return pipeline;
    }

    {
        std::lock_guard lock(pipeline->mutex_);
        pipeline->state_ = PipelineState::running;
    }
    if (!clock.is_virtual()) {
        pipeline->start_threads();
    }
    return pipeline;
}

}// namespace hstream
