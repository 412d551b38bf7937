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

#include "cli.hpp"

#include <hstream/errors.hpp>
#include <hstream/historic.hpp>
#include <hstream/planner.hpp>
#include <hstream/query.hpp>
#include <hstream/simulator.hpp>
#include <hstream/tuple_codec.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace hstream::cli {

std::atomic<bool>& interrupt_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}

namespace {

/// Thrown while turning flags into configuration; maps to exit code 1.
struct UsageError : Error {
    using Error::Error;
};

struct GlobalOptions {
    std::string store = "hstream-store";
    std::string spill;
};

struct QueryOptions {
    std::string query;
    std::string query_file;
    bool explain = false;
    std::string input;
    std::string farm;
    std::string clock = "virtual";
    std::optional<Millis> start;
    std::string duration;
    std::string output;
    std::string plot_csv;
    std::string split = "query-start";
};

struct IngestOptions {
    std::string file;
    std::string provider;
    std::string database;
    std::string series;
    std::size_t max_malformed = 0;
};

struct BenchOptions {
    std::string config;
    std::optional<std::size_t> things;
    std::string period;
    std::string duration;
    std::string topology;
    std::optional<std::size_t> consumers;
    std::optional<std::uint64_t> seed;
    std::string clock = "real";
    std::vector<std::string> attributes;
    std::vector<std::string> matrix;
    std::string report_json;
    std::string report_csv;
};

struct ReplayOptions {
    std::string file;
    std::string queue = "replay";
    std::string speed = "inf";
};

std::string read_all(std::istream& in) {
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Millis duration_flag(const std::string& text, const char* flag) {
    try {
        return parse_duration(text);
    } catch (const Error& e) {
        throw UsageError(std::string(flag) + ": " + e.what());
    }
}

std::vector<QuerySpec> read_queries(const std::string& inline_text, const std::string& file, std::istream& in) {
    std::string text;
    if (!inline_text.empty()) {
        text = inline_text;
    } else if (!file.empty()) {
        std::ifstream f(file);
        if (!f) throw UsageError("cannot open query file " + file);
        text = read_all(f);
    } else {
        text = read_all(in);
    }
    std::vector<QuerySpec> specs;
    for (const auto& block : split_query_blocks(text)) {
        specs.push_back(parse_query(block));
    }
    if (specs.empty()) throw UsageError("no query given");
    return specs;
}

struct LiveSchema {
    std::set<std::string> attributes;
    std::set<std::string> numeric;
};

LiveSchema live_schema(std::span<const Tuple> tuples) {
    LiveSchema s;
    for (const auto& t : tuples) {
        for (const auto& [k, v] : t.attributes) {
            s.attributes.insert(k);
            if (as_number(v)) s.numeric.insert(k);
        }
    }
    return s;
}

Catalog build_catalog(const HistoricStore& store, const ProviderRegistry& registry, std::span<const QuerySpec> specs,
                      const LiveSchema& live) {
    Catalog c;
    c.providers = registry.names();
    for (const auto& ref : store.series()) {
        c.series[ref] = store.attributes(ref);
        c.non_numeric_series[ref] = store.non_numeric_attributes(ref);
    }
    std::set<std::string> text;
    std::set_difference(live.attributes.begin(), live.attributes.end(), live.numeric.begin(), live.numeric.end(),
                        std::inserter(text, text.end()));
    for (const auto& s : specs) {
        if (!s.sources.stream) continue;
        c.queues[*s.sources.stream] = live.attributes;
        c.non_numeric_queues[*s.sources.stream] = text;
    }
    return c;
}

std::ostream& open_output(const std::string& path, std::ofstream& file, std::ostream& fallback) {
    if (path.empty() || path == "-") return fallback;
    file.open(path, std::ios::out | std::ios::trunc);
    if (!file) throw Error("cannot write " + path);
    return file;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

/// Collects emissions as NDJSON plus optional (trigger_ts, value) CSV rows.
class ResultWriter {
  public:
    ResultWriter(std::ostream& out, std::ostream* plot, bool tag_operator)
        : out_(out), plot_(plot), tag_(tag_operator) {
        if (plot_) *plot_ << (tag_ ? "op,trigger_ts,value\n" : "trigger_ts,value\n");
    }

    void operator()(const std::string& stage, const Emission& e) {
        std::lock_guard lock(mutex_);
        out_ << encode_emission(e, tag_ ? stage : std::string_view{}) << '\n';
        if (flush_) out_.flush();
        if (!plot_) return;
        if (const auto* r = std::get_if<WindowResult>(&e)) {
            if (tag_) *plot_ << stage << ',';
            *plot_ << r->trigger_time.millis << ',' << (r->value ? format_double(*r->value) : "") << '\n';
        }
    }

    void set_flush(bool f) { flush_ = f; }

  private:
    std::mutex mutex_;
    std::ostream& out_;
    std::ostream* plot_;
    bool tag_;
    bool flush_ = false;
};

SplitMode parse_split(const std::string& s) {
    if (s == "query-start") return SplitMode::query_start;
    if (s == "history-max") return SplitMode::history_max;
    throw UsageError("--split must be query-start or history-max");
}

int cmd_query(const GlobalOptions& g, const QueryOptions& o, std::istream& in, std::ostream& out,
              std::ostream& err) {
    // Configuration phase: every failure here is a usage error.
    const auto specs = read_queries(o.query, o.query_file, in);
    if (!o.input.empty() && !o.farm.empty()) throw UsageError("give either --input or --farm, not both");
    if (o.clock != "virtual" && o.clock != "real") throw UsageError("--clock must be virtual or real");
    const bool virtual_clock = o.clock == "virtual";
    const auto split = parse_split(o.split);

    std::vector<Tuple> live;
    std::optional<FarmConfig> farm;
    if (!o.input.empty()) {
        auto file = read_tuple_file(o.input);
        if (file.malformed > 0) err << "warning: skipped " << file.malformed << " malformed lines in " << o.input << '\n';
        live = std::move(file.tuples);
    } else if (!o.farm.empty()) {
        farm = load_farm_config(o.farm);
        if (o.start) farm->start = Timestamp{*o.start};
        if (virtual_clock) live = generate_farm_log(*farm);
    } else if (!o.explain) {
        throw UsageError("a run needs exactly one input: --input LOG or --farm CONFIG");
    }

    auto schema = live_schema(live);
    if (farm) {
        for (const auto& a : farm->attributes) {
            schema.attributes.insert(a.name);
            schema.numeric.insert(a.name);
        }
    }

    HistoricStore store(g.store);
    auto registry = make_default_registry(store);
    const auto catalog = build_catalog(store, registry, specs, schema);
    const auto p = plan(specs, catalog);
    if (o.explain) {
        out << plan_to_json(p) << '\n';
        return ok;
    }

    Millis max_frequency = 0;
    for (const auto& s : specs) max_frequency = std::max(max_frequency, s.frequency.millis());

    std::optional<Millis> first_ts;
    std::optional<Millis> last_ts;
    for (const auto& t : live) {
        first_ts = std::min(first_ts.value_or(t.ts.millis), t.ts.millis);
        last_ts = std::max(last_ts.value_or(t.ts.millis), t.ts.millis);
    }
    Timestamp t0{o.start ? *o.start : farm ? farm->start.millis : first_ts.value_or(0)};
    Millis duration = 0;
    if (!o.duration.empty()) {
        duration = duration_flag(o.duration, "--duration");
    } else if (farm) {
        duration = farm->duration;
    } else if (last_ts && *last_ts >= t0.millis) {
        const Millis span = *last_ts - t0.millis + 1;
        duration = (span + max_frequency - 1) / max_frequency * max_frequency;
    } else {
        throw UsageError("cannot infer the run duration; pass --duration");
    }
    if (duration <= 0) throw UsageError("--duration must be positive");

    // Run phase.
    std::ofstream out_file;
    std::ofstream plot_file;
    std::ostream& results = open_output(o.output, out_file, out);
    std::ostream* plot = nullptr;
    if (!o.plot_csv.empty()) {
        plot = &open_output(o.plot_csv, plot_file, out);
    }
    ResultWriter writer(results, plot, specs.size() > 1);
    writer.set_flush(!virtual_clock);

    Broker broker(g.spill.empty() ? default_spill_root() : std::filesystem::path(g.spill));
    LaunchOptions lo;
    lo.split = split;
    lo.on_result = [&writer](const std::string& stage, const Emission& e) { writer(stage, e); };

    std::optional<std::string> stream;
    for (const auto& s : specs) {
        if (s.sources.stream) stream = s.sources.stream;
    }

    if (virtual_clock) {
        VirtualClock clock(t0);
        auto pipeline = launch(p, broker, registry, clock, lo);
        if (pipeline->status().state == PipelineState::failed) {
            err << "error: " << pipeline->status().cause << '\n';
            return runtime_failure;
        }
        const Timestamp end = t0 + duration;
        std::vector<Tuple> feed;
        if (stream) {
            std::copy_if(live.begin(), live.end(), std::back_inserter(feed), [end](const Tuple& t) { return t.ts < end; });
            replay_virtual(*pipeline, broker.find(*stream), feed, end);
        } else {
            pipeline->advance_to(end);
            pipeline->stop();
        }
        const auto st = pipeline->status();
        if (st.state == PipelineState::failed) {
            err << "error: " << st.cause << '\n';
            return runtime_failure;
        }
        return ok;
    }

    SystemClock clock;
    auto pipeline = launch(p, broker, registry, clock, lo);
    if (pipeline->status().state == PipelineState::failed) {
        err << "error: " << pipeline->status().cause << '\n';
        return runtime_failure;
    }
    const auto wall_start = std::chrono::steady_clock::now();
    const Timestamp start = pipeline->start();
    const auto deadline = wall_start + std::chrono::milliseconds(duration);
    auto& stop_flag = interrupt_flag();
    std::jthread feeder;
    if (stream) {
        auto source = broker.find(*stream);
        feeder = std::jthread([&, source](std::stop_token st) {
            try {
                if (farm) {
                    std::vector<std::mt19937_64> rngs;
                    for (std::size_t i = 0; i < farm->things; ++i) rngs.push_back(thing_rng(farm->seed, i));
                    for (Millis k = 0; !st.stop_requested() && !stop_flag; ++k) {
                        const auto due = wall_start + std::chrono::milliseconds(k * farm->period);
                        if (due >= deadline) break;
                        std::this_thread::sleep_until(due);
                        for (std::size_t i = 0; i < farm->things; ++i) {
                            source->publish(generate_tuple("thing-" + std::to_string(i), farm->attributes, rngs[i],
                                                           clock.now()));
                        }
                    }
                } else {
                    // Live replay: the log is shifted so its first tuple lands at the pipeline start.
                    const Millis first = first_ts.value_or(0);
                    for (auto t : live) {
                        if (st.stop_requested() || stop_flag) break;
                        const Millis offset = t.ts.millis - first;
                        const auto due = wall_start + std::chrono::milliseconds(offset);
                        if (due >= deadline) break;
                        std::this_thread::sleep_until(due);
                        t.ts = start + offset;
                        source->publish(std::move(t));
                    }
                }
            } catch (const QueueClosedError&) {
            }
        });
    }
    while (std::chrono::steady_clock::now() < deadline && !stop_flag) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        if (pipeline->status().state == PipelineState::failed) break;
    }
    if (feeder.joinable()) {
        feeder.request_stop();
        feeder.join();
    }
    pipeline->stop();
    const auto st = pipeline->status();
    if (st.state == PipelineState::failed) {
        err << "error: " << st.cause << '\n';
        return runtime_failure;
    }
    return ok;
}

int cmd_explain(const GlobalOptions& g, const QueryOptions& o, std::istream& in, std::ostream& out) {
    const auto specs = read_queries(o.query, o.query_file, in);
    HistoricStore store(g.store);
    auto registry = make_default_registry(store);
    out << plan_to_json(plan(specs, build_catalog(store, registry, specs, LiveSchema{}))) << '\n';
    return ok;
}

int cmd_ingest(const GlobalOptions& g, const IngestOptions& o, std::ostream& out, std::ostream& err) {
    if (!std::filesystem::is_regular_file(o.file)) {
        err << "error: cannot read " << o.file << '\n';
        return runtime_failure;
    }
    for (const auto* part : {&o.provider, &o.database, &o.series}) {
        if (part->empty() || part->find('/') != std::string::npos || *part == "." || *part == "..") {
            throw UsageError("invalid series component '" + *part + "'");
        }
    }
    auto file = read_tuple_file(o.file);
    if (file.malformed > o.max_malformed) {
        err << "error: " << file.malformed << " malformed lines in " << o.file << " (allowed " << o.max_malformed
            << "); nothing ingested\n";
        return runtime_failure;
    }
    if (file.malformed > 0) err << "warning: skipped " << file.malformed << " malformed lines\n";
    HistoricStore store(g.store);
    const SeriesRef ref{o.provider, o.database, o.series};
    store.register_series(ref);
    const auto r = store.ingest(ref, file.tuples);
    out << "ingested " << r.ingested;
    if (r.duplicates > 0) out << " (" << r.duplicates << " duplicates)";
    out << '\n';
    return ok;
}

void apply_bench_key(FarmConfig& c, const std::string& key, const std::string& value) {
    try {
        if (key == "things") c.things = std::stoul(value);
        else if (key == "period") c.period = parse_duration(value);
        else if (key == "duration") c.duration = parse_duration(value);
        else if (key == "topology") c.topology = parse_topology(value);
        else if (key == "consumers") c.consumers = std::stoul(value);
        else if (key == "seed") c.seed = std::stoull(value);
        else throw UsageError("unknown matrix key '" + key + "'");
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError("invalid " + key + " '" + value + "': " + e.what());
    }
}

int cmd_bench(const GlobalOptions& g, const BenchOptions& o, std::ostream& out, std::ostream& err) {
    FarmConfig base;
    if (!o.config.empty()) base = load_farm_config(o.config);
    if (o.things) base.things = *o.things;
    if (!o.period.empty()) base.period = duration_flag(o.period, "--period");
    if (!o.duration.empty()) base.duration = duration_flag(o.duration, "--duration");
    if (!o.topology.empty()) base.topology = parse_topology(o.topology);
    if (o.consumers) base.consumers = *o.consumers;
    if (o.seed) base.seed = *o.seed;
    if (o.clock == "virtual") base.clock = ClockMode::virtual_time;
    else if (o.clock == "real") base.clock = ClockMode::real_time;
    else throw UsageError("--clock must be virtual or real");
    if (!o.attributes.empty()) {
        base.attributes.clear();
        for (const auto& a : o.attributes) base.attributes.push_back(parse_attribute_model(a));
    }

    // Cartesian product of the matrix axes, first axis varying slowest.
    std::vector<FarmConfig> runs{base};
    for (const auto& axis : o.matrix) {
        const auto eq = axis.find('=');
        if (eq == std::string::npos) throw UsageError("--matrix expects key=v1,v2,...");
        const auto key = axis.substr(0, eq);
        std::vector<std::string> values;
        std::stringstream ss(axis.substr(eq + 1));
        for (std::string v; std::getline(ss, v, ',');) {
            if (!v.empty()) values.push_back(v);
        }
        if (values.empty()) throw UsageError("--matrix axis '" + key + "' has no values");
        std::vector<FarmConfig> next;
        for (const auto& r : runs) {
            for (const auto& v : values) {
                auto c = r;
                apply_bench_key(c, key, v);
                next.push_back(std::move(c));
            }
        }
        runs = std::move(next);
    }
    for (const auto& r : runs) r.validate();

    const auto spill = g.spill.empty() ? default_spill_root() : std::filesystem::path(g.spill);
    std::vector<RunReport> reports;
    bool all_complete = true;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (interrupt_flag()) break;
        Broker broker(spill / ("bench-" + std::to_string(i)));
        auto report = run_farm(runs[i], broker);
        all_complete = all_complete && report.complete;
        out << report_to_json(report) << '\n';
        reports.push_back(std::move(report));
    }
    if (!o.report_json.empty()) {
        std::ofstream f(o.report_json);
        if (!f) throw Error("cannot write " + o.report_json);
        f << "[";
        for (std::size_t i = 0; i < reports.size(); ++i) f << (i ? ",\n" : "\n") << report_to_json(reports[i]);
        f << "\n]\n";
    }
    if (!o.report_csv.empty()) {
        std::ofstream f(o.report_csv);
        if (!f) throw Error("cannot write " + o.report_csv);
        f << report_csv_header() << '\n';
        for (const auto& r : reports) f << report_to_csv(r) << '\n';
    }
    if (!all_complete) {
        err << "error: at least one run is incomplete\n";
        return runtime_failure;
    }
    return ok;
}

int cmd_replay(const GlobalOptions& g, const ReplayOptions& o, std::ostream& out) {
    double speed = 0;
    try {
        speed = std::stod(o.speed);
    } catch (const std::exception&) {
        throw UsageError("--speed must be a positive number or inf");
    }
    if (!(speed > 0)) throw UsageError("--speed must be a positive number or inf");
    if (!std::filesystem::is_regular_file(o.file)) throw Error("cannot read " + o.file);

    Broker broker(g.spill.empty() ? default_spill_root() : std::filesystem::path(g.spill));
    QueueConfig qc;
    qc.name = o.queue;
    auto queue = broker.declare_queue(qc);
    auto sub = queue->subscribe();
    std::atomic<std::uint64_t> delivered{0};
    std::atomic<bool> done{false};
    std::jthread consumer([&] {
        std::vector<Tuple> batch;
        for (;;) {
            batch.clear();
            auto n = sub.receive_batch(batch, 4096);
            delivered += n;
            if (n == 0) {
                if (done && queue->stats().in_memory == 0 && queue->stats().on_disk == 0) break;
                if (auto t = sub.receive(std::chrono::milliseconds(5))) ++delivered;
            }
        }
    });
    const auto report = replay_log(o.file, queue, speed);
    done = true;
    consumer.join();

    nlohmann::ordered_json j;
    j["queue"] = o.queue;
    j["published"] = report.published;
    j["delivered"] = delivered.load();
    j["malformed"] = report.malformed;
    j["elapsed_seconds"] = report.elapsed_seconds;
    out << j.dump() << '\n';
    return delivered.load() == report.published ? ok : runtime_failure;
}

void add_query_input(CLI::App* cmd, QueryOptions& o) {
    cmd->add_option("query", o.query, "Query text (otherwise --query-file or stdin)");
    cmd->add_option("--query-file,-f", o.query_file, "File with queries separated by blank lines");
}

}// namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"hstream: continuous aggregation queries over stored history and live streams"};
    app.name("hstream");
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--store", g.store, "Historic store root")->envname("HSTREAM_STORE");
    app.add_option("--spill-dir", g.spill, "Broker spill root")->envname("HSTREAM_SPILL_DIR");

    IngestOptions ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Load an NDJSON or CSV tuple file into a stored series");
    ingest_cmd->add_option("file", ingest.file, "Tuple file (.ndjson or .csv)")->required();
    ingest_cmd->add_option("--provider", ingest.provider, "Provider name (influxdb, cassandra)")->required();
    ingest_cmd->add_option("--db,--database", ingest.database, "Database name")->required();
    ingest_cmd->add_option("--series", ingest.series, "Series name")->required();
    ingest_cmd->add_option("--max-malformed", ingest.max_malformed, "Malformed lines tolerated before failing");

    QueryOptions query;
    auto* query_cmd = app.add_subcommand("query", "Run queries over a replayed log or a simulated farm");
    add_query_input(query_cmd, query);
    query_cmd->add_flag("--explain", query.explain, "Print the plan JSON without running");
    query_cmd->add_option("--input", query.input, "Live tuple log (.ndjson or .csv)");
    query_cmd->add_option("--farm", query.farm, "Farm config file producing the live stream");
    query_cmd->add_option("--clock", query.clock, "virtual or real")->capture_default_str();
    query_cmd->add_option("--start", query.start, "Query start in ms (default: first live tuple)");
    query_cmd->add_option("--duration", query.duration, "Run length, e.g. 20m (default: span of the input)");
    query_cmd->add_option("--output,-o", query.output, "NDJSON result file (default stdout)");
    query_cmd->add_option("--plot-csv", query.plot_csv, "Also write trigger_ts,value CSV here");
    query_cmd->add_option("--split", query.split, "query-start or history-max")->capture_default_str();

    QueryOptions explain;
    auto* explain_cmd = app.add_subcommand("explain", "Print the plan JSON for queries");
    add_query_input(explain_cmd, explain);

    BenchOptions bench;
    auto* bench_cmd = app.add_subcommand("bench", "Run the thing farm and report throughput and latency");
    bench_cmd->add_option("--config", bench.config, "Farm config file");
    bench_cmd->add_option("--things", bench.things, "Number of things");
    bench_cmd->add_option("--period", bench.period, "Publish period per thing, e.g. 10ms");
    bench_cmd->add_option("--duration", bench.duration, "Run length, e.g. 30s");
    bench_cmd->add_option("--topology", bench.topology, "shared or per-thing");
    bench_cmd->add_option("--consumers", bench.consumers, "Consumer threads");
    bench_cmd->add_option("--seed", bench.seed, "Generator seed");
    bench_cmd->add_option("--clock", bench.clock, "virtual or real")->capture_default_str();
    bench_cmd->add_option("--attribute", bench.attributes, "Attribute model name:kind:params (repeatable)");
    bench_cmd->add_option("--matrix", bench.matrix, "Axis key=v1,v2 (things, topology, period, consumers, duration, seed)");
    bench_cmd->add_option("--report-json", bench.report_json, "Write all reports as a JSON array");
    bench_cmd->add_option("--report-csv", bench.report_csv, "Write one CSV row per run");

    ReplayOptions replay;
    auto* replay_cmd = app.add_subcommand("replay", "Publish an NDJSON log into a broker queue with its original pacing");
    replay_cmd->add_option("file", replay.file, "NDJSON tuple log")->required();
    replay_cmd->add_option("--queue", replay.queue, "Target queue")->capture_default_str();
    replay_cmd->add_option("--speed", replay.speed, "Speed-up factor, inf for no pacing")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? ok : usage_error;
    }

    try {
        if (ingest_cmd->parsed()) return cmd_ingest(g, ingest, out, err);
        if (query_cmd->parsed()) return cmd_query(g, query, in, out, err);
        if (explain_cmd->parsed()) return cmd_explain(g, explain, in, out);
        if (bench_cmd->parsed()) return cmd_bench(g, bench, out, err);
        if (replay_cmd->parsed()) return cmd_replay(g, replay, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const PlanError& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return runtime_failure;
    }
    return usage_error;
}

}// namespace hstream::cli
