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

#include <hstream/broker.hpp>
#include <hstream/clock.hpp>
#include <hstream/historic.hpp>
#include <hstream/operator.hpp>
#include <hstream/query.hpp>

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace hstream {

enum class StageKind { fetch, window_operator, sink };

std::string_view stage_kind_name(StageKind kind);

struct StageDescriptor {
    std::string name;
    StageKind kind = StageKind::fetch;
    std::string input_queue;
    std::vector<std::string> output_queues;
    std::optional<OperatorConfig> op;
    /// HistoricFetch binding of an operator stage.
    std::optional<SeriesRef> historic;

    friend bool operator==(const StageDescriptor&, const StageDescriptor&) = default;
};

/// Fetch -> window operator(s) -> sink, one queue per edge. A fetch stage with several outputs
/// duplicates the source stream, one dedicated input queue per operator.
struct PipelinePlan {
    std::string id;
    std::string query;
    std::vector<StageDescriptor> stages;
    std::vector<QueueConfig> queues;

    std::string result_queue() const { return "results." + id; }
    friend bool operator==(const PipelinePlan&, const PipelinePlan&) = default;
};

/// Compiles one query. Throws PlanError carrying the validation diagnostics.
PipelinePlan plan(const QuerySpec& spec, const Catalog& catalog);
/// Compiles several queries over the same stream into one fan-out plan.
PipelinePlan plan(std::span<const QuerySpec> specs, const Catalog& catalog);

/// Deterministic id derived from the canonical query text.
std::string plan_id(std::string_view canonical_text);

/// Human-readable JSON for `--explain` and golden tests.
std::string plan_to_json(const PipelinePlan& plan);

enum class PipelineState { starting, running, stopped, failed };
std::string_view state_name(PipelineState s);

struct StageStatus {
    std::string name;
    std::uint64_t tuples_in = 0;
    std::uint64_t tuples_out = 0;
    std::uint64_t triggers_fired = 0;
    std::uint64_t late_drops = 0;
};

struct PipelineStatus {
    std::string id;
    PipelineState state = PipelineState::starting;
    std::string cause;
    std::vector<StageStatus> stages;
};

enum class SplitMode {
    /// History serves everything before the operator start.
    query_start,
    /// History serves everything up to its newest stored tuple.
    history_max,
};

/// Receives every emission reaching the sink, tagged with the operator stage name.
using ResultCallback = std::function<void(const std::string& stage, const Emission& emission)>;

struct LaunchOptions {
    SplitMode split = SplitMode::query_start;
    ResultCallback on_result;
};

/// A launched plan. With a real clock every stage runs on its own thread; with a virtual
/// clock nothing runs until advance_to() steps all stages deterministically on the caller's thread.
class Pipeline {
  public:
    ~Pipeline();
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    const std::string& id() const { return plan_.id; }
    const PipelinePlan& plan() const { return plan_; }
    Timestamp start() const { return start_; }

    PipelineStatus status() const;
    std::map<std::string, QueueStats> queue_stats() const;

    /// Virtual clock only: moves time to `t`, firing every trigger on the way.
    void advance_to(Timestamp t);
    /// Graceful: drains in-flight tuples, fires triggers up to now, then stops every stage.
    void stop();

  private:
    friend std::shared_ptr<Pipeline> launch(const PipelinePlan&, Broker&, const ProviderRegistry&, Clock&,
                                            LaunchOptions);

    struct FetchStage;
    struct SinkStage;

    Pipeline(PipelinePlan plan, Clock& clock);
    void fail(const std::string& cause);
    void pump(Timestamp now);
    void start_threads();

    PipelinePlan plan_;
    Clock& clock_;
    Timestamp start_;
    ResultCallback on_result_;

    mutable std::mutex mutex_;
    PipelineState state_ = PipelineState::starting;
    std::string cause_;

    std::map<std::string, QueueHandle> queues_;
    std::unique_ptr<FetchStage> fetch_;
    std::vector<std::unique_ptr<OperatorTask>> ops_;
    std::unique_ptr<SinkStage> sink_;

    std::jthread fetch_thread_;
    std::vector<std::jthread> op_threads_;
    std::jthread sink_thread_;
};

using PipelineHandle = std::shared_ptr<Pipeline>;

/// Declares queues, opens historic connections and starts every stage. Failures never throw:
/// the returned pipeline is `failed` with a cause and anything declared by this launch is removed.
PipelineHandle launch(const PipelinePlan& plan, Broker& broker, const ProviderRegistry& providers, Clock& clock,
                      LaunchOptions options = {});

}// namespace hstream
