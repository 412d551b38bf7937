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

#include <hstream/errors.hpp>
#include <hstream/planner.hpp>
#include <hstream/simulator.hpp>
#include <hstream/tuple_codec.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace hstream {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double to_double(const std::string& s) {
    try {
        std::size_t used = 0;
        double d = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return d;
    } catch (const std::exception&) {
        throw ContractError("invalid number: '" + s + "'");
    }
}

std::uint64_t to_uint(const std::string& s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
        throw ContractError("invalid integer: '" + s + "'");
    }
    return v;
}

/// 1 ms buckets up to a minute, then one overflow bucket.
class LatencyHistogram {
  public:
    void add(Millis ms) {
        const auto idx = static_cast<std::size_t>(std::clamp<Millis>(ms, 0, kBuckets - 1));
        ++buckets_[idx];
        ++total_;
        max_ = std::max(max_, ms);
    }

    void merge(const LatencyHistogram& other) {
        for (std::size_t i = 0; i < buckets_.size(); ++i) buckets_[i] += other.buckets_[i];
        total_ += other.total_;
        max_ = std::max(max_, other.max_);
    }

    LatencySummary summary() const {
        LatencySummary s;
        if (total_ == 0) return s;
        s.p50 = percentile(0.50);
        s.p95 = percentile(0.95);
        s.p99 = percentile(0.99);
        s.max = static_cast<double>(max_);
        return s;
    }

  private:
    static constexpr Millis kBuckets = 60'001;

    double percentile(double q) const {
        const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(total_)));
        std::uint64_t seen = 0;
        for (std::size_t i = 0; i < buckets_.size(); ++i) {
            seen += buckets_[i];
            if (seen >= std::max<std::uint64_t>(rank, 1)) return static_cast<double>(i);
        }
        return static_cast<double>(kBuckets - 1);
    }

    std::vector<std::uint64_t> buckets_ = std::vector<std::uint64_t>(kBuckets, 0);
    std::uint64_t total_ = 0;
    Millis max_ = 0;
};

std::string queue_name(const FarmConfig& c, std::size_t thing) {
    return c.topology == Topology::shared_queue ? c.queue_prefix : c.queue_prefix + "." + std::to_string(thing);
}

std::string thing_name(std::size_t i) { return "thing-" + std::to_string(i); }

}// namespace

std::vector<AttributeModel> neubot_model() {
    GeneratorSpec down;
    down.kind = GeneratorSpec::Kind::sine_noise;
    down.base = 50.0;
    down.amplitude = 20.0;
    down.period = 86'400'000;
    down.noise = 5.0;
    down.floor = 0.1;
    GeneratorSpec up = down;
    up.base = 10.0;
    up.amplitude = 4.0;
    up.noise = 1.0;
    return {{"download_speed", down}, {"upload_speed", up}};
}

std::string_view topology_name(Topology t) { return t == Topology::shared_queue ? "shared" : "per-thing"; }

Topology parse_topology(std::string_view s) {
    if (s == "shared" || s == "shared_queue") return Topology::shared_queue;
    if (s == "per-thing" || s == "queue_per_thing" || s == "per_thing") return Topology::queue_per_thing;
    throw ContractError("unknown topology: '" + std::string(s) + "' (expected shared or per-thing)");
}

void FarmConfig::validate() const {
    if (things < 1) throw ContractError("farm needs at least one thing");
    if (period < 1) throw ContractError("thing period must be at least 1 ms");
    if (duration < 0) throw ContractError("farm duration must be non-negative");
    if (attributes.empty()) throw ContractError("attribute model is empty");
    if (consumers < 1) throw ContractError("farm needs at least one consumer");
}

AttributeModel parse_attribute_model(std::string_view text) {
    const auto parts = split(text, ':');
    if (parts.size() < 2 || parts[0].empty()) {
        throw ContractError("invalid attribute model: '" + std::string(text) + "'");
    }
    AttributeModel m;
    m.name = parts[0];
    const auto& kind = parts[1];
    if (kind == "constant" && parts.size() == 3) {
        m.generator.kind = GeneratorSpec::Kind::constant;
        m.generator.value = to_double(parts[2]);
    } else if (kind == "uniform" && parts.size() == 4) {
        m.generator.kind = GeneratorSpec::Kind::uniform;
        m.generator.low = to_double(parts[2]);
        m.generator.high = to_double(parts[3]);
        if (!(m.generator.low < m.generator.high)) throw ContractError("uniform range is empty");
    } else if (kind == "sine" && parts.size() == 6) {
        m.generator.kind = GeneratorSpec::Kind::sine_noise;
        m.generator.base = to_double(parts[2]);
        m.generator.amplitude = to_double(parts[3]);
        m.generator.period = parse_duration(parts[4]);
        m.generator.noise = to_double(parts[5]);
        if (m.generator.period <= 0) throw ContractError("sine period must be positive");
    } else {
        throw ContractError("invalid attribute model: '" + std::string(text) + "'");
    }
    return m;
}

FarmConfig parse_farm_config(std::string_view text) {
    FarmConfig c;
    bool custom_attributes = false;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        auto line = raw.substr(0, raw.find('#'));
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ContractError("farm config line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = trim(std::string_view(line).substr(0, eq));
        const auto value = trim(std::string_view(line).substr(eq + 1));
        if (key == "things") c.things = to_uint(value);
        else if (key == "period") c.period = parse_duration(value);
        else if (key == "duration") c.duration = parse_duration(value);
        else if (key == "topology") c.topology = parse_topology(value);
        else if (key == "seed") c.seed = to_uint(value);
        else if (key == "consumers") c.consumers = to_uint(value);
        else if (key == "queue") c.queue_prefix = value;
        else if (key == "capacity") c.queue_capacity = to_uint(value);
        else if (key == "start") c.start = Timestamp{static_cast<Millis>(to_uint(value))};
        else if (key == "clock") {
            if (value == "virtual") c.clock = ClockMode::virtual_time;
            else if (value == "real") c.clock = ClockMode::real_time;
            else throw ContractError("farm config: clock must be virtual or real");
        } else if (key == "attribute") {
            if (!custom_attributes) {
                c.attributes.clear();
                custom_attributes = true;
            }
            c.attributes.push_back(parse_attribute_model(value));
        } else {
            throw ContractError("farm config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

FarmConfig load_farm_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_farm_config(ss.str());
}

std::mt19937_64 thing_rng(std::uint64_t seed, std::size_t thing_index) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(thing_index) + 1)));
}

Tuple generate_tuple(const std::string& thing_id, std::span<const AttributeModel> model, std::mt19937_64& rng,
                     Timestamp now) {
    if (model.empty()) {
        throw ContractError("attribute model is empty");
    }
    Tuple t;
    t.ts = now;
    t.source_id = thing_id;
    for (const auto& attr : model) {
        const auto& g = attr.generator;
        double v = 0.0;
        switch (g.kind) {
            case GeneratorSpec::Kind::constant: v = g.value; break;
            case GeneratorSpec::Kind::uniform: v = std::uniform_real_distribution<double>(g.low, g.high)(rng); break;
            case GeneratorSpec::Kind::sine_noise: {
                const double phase = 2.0 * std::numbers::pi * static_cast<double>(now.millis % g.period)
                                     / static_cast<double>(g.period);
                v = g.base + g.amplitude * std::sin(phase);
                if (g.noise > 0) v += std::normal_distribution<double>(0.0, g.noise)(rng);
                v = std::max(v, g.floor);
                break;
            }
        }
        t.attributes.emplace(attr.name, v);
    }
    return t;
}

std::vector<Tuple> generate_farm_log(const FarmConfig& c) {
    c.validate();
    std::vector<std::mt19937_64> rngs;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < c.things; ++i) {
        rngs.push_back(thing_rng(c.seed, i));
        names.push_back(thing_name(i));
    }
    const auto rounds = c.duration / c.period;
    std::vector<Tuple> out;
    out.reserve(static_cast<std::size_t>(rounds) * c.things);
    for (Millis k = 0; k < rounds; ++k) {
        for (std::size_t i = 0; i < c.things; ++i) {
            out.push_back(generate_tuple(names[i], c.attributes, rngs[i], c.start + k * c.period));
        }
    }
    return out;
}

std::string report_to_json(const RunReport& r) {
    nlohmann::ordered_json j;
    j["things"] = r.things;
    j["topology"] = topology_name(r.topology);
    j["period_ms"] = r.period;
    j["duration_ms"] = r.duration;
    j["consumers"] = r.consumers;
    j["clock"] = r.clock == ClockMode::virtual_time ? "virtual" : "real";
    j["published"] = r.published;
    j["delivered"] = r.delivered;
    j["elapsed_seconds"] = r.elapsed_seconds;
    j["throughput"] = r.throughput;
    j["latency_ms"] = {{"p50", r.latency_ms.p50}, {"p95", r.latency_ms.p95}, {"p99", r.latency_ms.p99},
                       {"max", r.latency_ms.max}};
    j["jitter_ms"] = {{"mean", r.jitter_mean_ms}, {"max", r.jitter_max_ms}};
    j["complete"] = r.complete;
    if (!r.error.empty()) j["error"] = r.error;
    j["queue_count"] = r.queues.size();
    return j.dump();
}

std::string report_csv_header() {
    return "things,topology,period_ms,duration_ms,consumers,clock,published,delivered,elapsed_s,throughput,"
           "p50_ms,p95_ms,p99_ms,jitter_mean_ms,jitter_max_ms,complete";
}

std::string report_to_csv(const RunReport& r) {
    std::ostringstream os;
    os << r.things << ',' << topology_name(r.topology) << ',' << r.period << ',' << r.duration << ',' << r.consumers
       << ',' << (r.clock == ClockMode::virtual_time ? "virtual" : "real") << ',' << r.published << ','
       << r.delivered << ',' << r.elapsed_seconds << ',' << r.throughput << ',' << r.latency_ms.p50 << ','
       << r.latency_ms.p95 << ',' << r.latency_ms.p99 << ',' << r.jitter_mean_ms << ',' << r.jitter_max_ms << ','
       << (r.complete ? "true" : "false");
    return os.str();
}

namespace {

struct FarmQueues {
    std::vector<QueueHandle> by_thing;
    std::vector<QueueHandle> distinct;
};

FarmQueues declare_farm_queues(const FarmConfig& c, Broker& broker) {
    FarmQueues q;
    std::map<std::string, QueueHandle> seen;
    for (std::size_t i = 0; i < c.things; ++i) {
        const auto name = queue_name(c, i);
        auto it = seen.find(name);
        if (it == seen.end()) {
            QueueConfig qc;
            qc.name = name;
            qc.memory_capacity = c.queue_capacity;
            it = seen.emplace(name, broker.declare_queue(qc)).first;
            q.distinct.push_back(it->second);
        }
        q.by_thing.push_back(it->second);
    }
    return q;
}

void fill_queue_stats(RunReport& r, const FarmQueues& q) {
    for (const auto& h : q.distinct) {
        r.queues[h->name()] = h->stats();
    }
}

RunReport run_virtual(const FarmConfig& c, Broker& broker) {
    RunReport r;
    const auto queues = declare_farm_queues(c, broker);
    std::vector<Subscription> subs;
    for (const auto& h : queues.distinct) subs.push_back(h->subscribe());

    std::ofstream log;
    if (c.log_path) {
        log.open(*c.log_path, std::ios::out | std::ios::trunc);
        if (!log) throw Error("cannot open log " + c.log_path->string());
    }
    std::vector<std::mt19937_64> rngs;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < c.things; ++i) {
        rngs.push_back(thing_rng(c.seed, i));
        names.push_back(thing_name(i));
    }
    VirtualClock clock(c.start);
    const auto wall_start = std::chrono::steady_clock::now();
    const auto rounds = c.duration / c.period;
    std::vector<Tuple> batch;
    try {
        for (Millis k = 0; k < rounds; ++k) {
            clock.set(c.start + k * c.period);
            for (std::size_t i = 0; i < c.things; ++i) {
                Tuple t = generate_tuple(names[i], c.attributes, rngs[i], clock.now());
                if (log.is_open()) log << encode_tuple(t) << '\n';
                queues.by_thing[i]->publish(std::move(t));
                ++r.published;
            }
            for (auto& s : subs) {
                batch.clear();
                r.delivered += s.receive_batch(batch, SIZE_MAX);
            }
        }
    } catch (const Error& e) {
        r.complete = false;
        r.error = e.what();
    }
    for (auto& s : subs) {
        batch.clear();
        r.delivered += s.receive_batch(batch, SIZE_MAX);
    }
    r.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    r.throughput = r.elapsed_seconds > 0 ? static_cast<double>(r.delivered) / r.elapsed_seconds : 0.0;
    fill_queue_stats(r, queues);
    return r;
}

RunReport run_real(const FarmConfig& c, Broker& broker) {
    using namespace std::chrono;
    RunReport r;
    const auto queues = declare_farm_queues(c, broker);
    const std::size_t consumer_count = std::min(c.consumers, queues.distinct.size());
    std::vector<std::vector<Subscription>> consumer_subs(consumer_count);
    for (std::size_t i = 0; i < queues.distinct.size(); ++i) {
        consumer_subs[i % consumer_count].push_back(queues.distinct[i]->subscribe());
    }

    const Millis rounds = c.duration / c.period;
    const std::uint64_t expected = static_cast<std::uint64_t>(rounds) * c.things;
    std::atomic<std::uint64_t> published{0};
    std::atomic<std::uint64_t> delivered{0};
    std::atomic<bool> publishers_done{false};
    std::atomic<bool> aborted{false};
    std::mutex err_mutex;
    std::string error;
    std::mutex log_mutex;
    std::ofstream log;
    if (c.log_path) {
        log.open(*c.log_path, std::ios::out | std::ios::trunc);
    }

    std::vector<LatencyHistogram> histograms(consumer_count);
    std::vector<double> jitter_sum(1, 0.0);
    std::atomic<std::int64_t> jitter_total_us{0};
    std::atomic<std::int64_t> jitter_max_us{0};
    SystemClock clock;

    const auto wall_start = steady_clock::now();
    std::atomic<std::int64_t> last_delivery_ns{0};

    std::vector<std::jthread> consumers;
    for (std::size_t ci = 0; ci < consumer_count; ++ci) {
        consumers.emplace_back([&, ci] {
            auto& subs = consumer_subs[ci];
            auto& hist = histograms[ci];
            std::vector<Tuple> batch;
            batch.reserve(4096);
            const auto drain_deadline_after = seconds(60);
            std::optional<steady_clock::time_point> drain_started;
            for (;;) {
                std::size_t got = 0;
                for (auto& s : subs) {
                    batch.clear();
                    const auto n = s.receive_batch(batch, 4096);
                    if (n == 0) continue;
                    got += n;
                    const Millis now = clock.now().millis;
                    for (const auto& t : batch) hist.add(now - t.ts.millis);
                }
                if (got > 0) {
                    delivered += got;
                    last_delivery_ns = duration_cast<nanoseconds>(steady_clock::now() - wall_start).count();
                    continue;
                }
                if (publishers_done) {
                    if (delivered.load() >= published.load()) break;
                    if (!drain_started) drain_started = steady_clock::now();
                    if (steady_clock::now() - *drain_started > drain_deadline_after) break;
                }
                if (subs.size() == 1) {
                    if (auto t = subs.front().receive(milliseconds(5))) {
                        hist.add(clock.now().millis - t->ts.millis);
                        ++delivered;
                        last_delivery_ns = duration_cast<nanoseconds>(steady_clock::now() - wall_start).count();
                    }
                } else {
                    std::this_thread::sleep_for(milliseconds(1));
                }
            }
        });
    }

    const std::size_t publisher_count = std::min<std::size_t>(c.things, 8);
    std::vector<std::jthread> publishers;
    const auto schedule_start = steady_clock::now() + milliseconds(10);
    for (std::size_t pi = 0; pi < publisher_count; ++pi) {
        publishers.emplace_back([&, pi] {
            struct Thing {
                std::size_t index;
                std::string name;
                std::mt19937_64 rng;
                Millis offset;
            };
            std::vector<Thing> mine;
            for (std::size_t i = pi; i < c.things; i += publisher_count) {
                const Millis offset = static_cast<Millis>((static_cast<__int128>(i) * c.period) / c.things);
                mine.push_back({i, thing_name(i), thing_rng(c.seed, i), offset});
            }
            std::sort(mine.begin(), mine.end(), [](const Thing& a, const Thing& b) { return a.offset < b.offset; });
            std::int64_t local_jitter = 0;
            std::int64_t local_max = 0;
            for (Millis k = 0; k < rounds && !aborted; ++k) {
                for (auto& th : mine) {
                    const auto due = schedule_start + milliseconds(th.offset + k * c.period);
                    if (steady_clock::now() < due) std::this_thread::sleep_until(due);
                    const auto lag = duration_cast<microseconds>(steady_clock::now() - due).count();
                    local_jitter += lag;
                    local_max = std::max<std::int64_t>(local_max, lag);
                    Tuple t = generate_tuple(th.name, c.attributes, th.rng, clock.now());
                    if (log.is_open()) {
                        std::lock_guard lock(log_mutex);
                        log << encode_tuple(t) << '\n';
                    }
                    try {
                        queues.by_thing[th.index]->publish(std::move(t));
                    } catch (const Error& e) {
                        std::lock_guard lock(err_mutex);
                        error = e.what();
                        aborted = true;
                        break;
                    }
                    ++published;
                }
            }
            jitter_total_us += local_jitter;
            std::int64_t prev = jitter_max_us.load();
            while (local_max > prev && !jitter_max_us.compare_exchange_weak(prev, local_max)) {
            }
        });
    }
    publishers.clear();// joins
    publishers_done = true;
    consumers.clear();

    r.published = published.load();
    r.delivered = delivered.load();
    r.complete = !aborted && r.published == expected && r.delivered == r.published;
    r.error = error;
    if (r.error.empty() && !r.complete) {
        r.error = "run ended before quiescence";
    }
    const double elapsed = static_cast<double>(last_delivery_ns.load()) / 1e9;
    r.elapsed_seconds = elapsed > 0 ? elapsed
                                    : duration<double>(steady_clock::now() - wall_start).count();
    r.throughput = r.elapsed_seconds > 0 ? static_cast<double>(r.delivered) / r.elapsed_seconds : 0.0;
    LatencyHistogram all;
    for (const auto& h : histograms) all.merge(h);
    r.latency_ms = all.summary();
    if (r.published > 0) {
        r.jitter_mean_ms = static_cast<double>(jitter_total_us.load()) / 1000.0 / static_cast<double>(r.published);
    }
    r.jitter_max_ms = static_cast<double>(jitter_max_us.load()) / 1000.0;
    fill_queue_stats(r, queues);
    return r;
}

}// namespace

RunReport run_farm(const FarmConfig& config, Broker& broker) {
    config.validate();
    RunReport r = config.clock == ClockMode::virtual_time ? run_virtual(config, broker) : run_real(config, broker);
    r.things = config.things;
    r.topology = config.topology;
    r.period = config.period;
    r.duration = config.duration;
    r.consumers = config.consumers;
    r.clock = config.clock;
    if (r.delivered != r.published) {
        r.complete = false;
    }
    return r;
}

ReplayReport replay_log(const std::filesystem::path& path, const QueueHandle& queue, double speed) {
    using namespace std::chrono;
    if (!(speed > 0)) {
        throw ContractError("replay speed must be positive");
    }
    auto file = read_ndjson(path);
    ReplayReport report;
    report.malformed = file.malformed;
    const auto wall_start = steady_clock::now();
    const bool paced = std::isfinite(speed);
    const Millis first = file.tuples.empty() ? 0 : file.tuples.front().ts.millis;
    for (auto& t : file.tuples) {
        if (paced) {
            const double offset_ms = static_cast<double>(t.ts.millis - first) / speed;
            if (offset_ms > 0) {
                std::this_thread::sleep_until(wall_start + duration_cast<steady_clock::duration>(
                                                               duration<double, std::milli>(offset_ms)));
            }
        }
        queue->publish(std::move(t));
        ++report.published;
    }
    report.elapsed_seconds = duration<double>(steady_clock::now() - wall_start).count();
    return report;
}

void replay_virtual(Pipeline& pipeline, const QueueHandle& source, std::span<const Tuple> tuples, Timestamp end) {
    for (const auto& t : tuples) {
        pipeline.advance_to(t.ts);
        source->publish(t);
    }
    pipeline.advance_to(end);
    pipeline.stop();
}

}// namespace hstream
