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
#include <hstream/model.hpp>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hstream {

class Pipeline;

struct GeneratorSpec {
    enum class Kind { constant, uniform, sine_noise };
    Kind kind = Kind::constant;
    double value = 0.0;// constant
    double low = 0.0;  // uniform [low, high)
    double high = 1.0;
    double base = 0.0;// sine_noise: base + amplitude * sin(2*pi*t/period) + N(0, noise), floored at `floor`
    double amplitude = 0.0;
    Millis period = 86'400'000;
    double noise = 0.0;
    double floor = -std::numeric_limits<double>::infinity();
};

struct AttributeModel {
    std::string name;
    GeneratorSpec generator;
};

/// download_speed / upload_speed as positive noisy diurnal sines.
std::vector<AttributeModel> neubot_model();

enum class Topology { shared_queue, queue_per_thing };
std::string_view topology_name(Topology t);
Topology parse_topology(std::string_view s);

enum class ClockMode { virtual_time, real_time };

struct FarmConfig {
    std::size_t things = 3;
    Millis period = 100;
    Millis duration = 10'000;
    Topology topology = Topology::shared_queue;
    std::vector<AttributeModel> attributes = neubot_model();
    std::uint64_t seed = 42;
    std::size_t consumers = 1;
    std::string queue_prefix = "things";
    std::size_t queue_capacity = 1 << 20;
    /// Virtual-time origin.
    Timestamp start{1'700'000'000'000};
    ClockMode clock = ClockMode::real_time;
    /// When set, every published tuple is appended here as NDJSON in publish order.
    std::optional<std::filesystem::path> log_path;

    /// Throws ContractError for things < 1, period < 1 or an empty attribute model.
    void validate() const;
};

/// Parses `key = value` lines (`#` comments). Keys: things, period, duration, topology,
/// seed, consumers, queue, capacity, start, clock, attribute (repeatable).
FarmConfig parse_farm_config(std::string_view text);
FarmConfig load_farm_config(const std::filesystem::path& path);

/// `name:constant:v`, `name:uniform:lo:hi`, `name:sine:base:amplitude:period:noise`.
AttributeModel parse_attribute_model(std::string_view text);

struct LatencySummary {
    double p50 = 0;
    double p95 = 0;
    double p99 = 0;
    double max = 0;
};

struct RunReport {
    std::size_t things = 0;
    Topology topology = Topology::shared_queue;
    Millis period = 0;
    Millis duration = 0;
    std::size_t consumers = 0;
    ClockMode clock = ClockMode::real_time;

    std::uint64_t published = 0;
    std::uint64_t delivered = 0;
    double elapsed_seconds = 0;
    double throughput = 0;
    LatencySummary latency_ms;
    double jitter_mean_ms = 0;
    double jitter_max_ms = 0;
    std::map<std::string, QueueStats> queues;
    bool complete = true;
    std::string error;
};

std::string report_to_json(const RunReport& r);
std::string report_csv_header();
std::string report_to_csv(const RunReport& r);

/// Deterministic per-thing generator: the seed is mixed with the thing index.
std::mt19937_64 thing_rng(std::uint64_t seed, std::size_t thing_index);

Tuple generate_tuple(const std::string& thing_id, std::span<const AttributeModel> model, std::mt19937_64& rng,
                     Timestamp now);

/// The tuples a virtual-time farm publishes, in publish order.
std::vector<Tuple> generate_farm_log(const FarmConfig& config);

/// Every thing publishes floor(duration / period) tuples, at start + k * period on virtual time
/// or on a staggered real-time schedule. Consumers drain every queue; the report is taken at quiescence.
RunReport run_farm(const FarmConfig& config, Broker& broker);

struct ReplayReport {
    std::uint64_t published = 0;
    std::uint64_t malformed = 0;
    double elapsed_seconds = 0;
};

/// Publishes an NDJSON tuple log keeping inter-arrival gaps divided by `speed`
/// (infinity = as fast as possible). Malformed lines are skipped and counted.
ReplayReport replay_log(const std::filesystem::path& path, const QueueHandle& queue,
                        double speed = std::numeric_limits<double>::infinity());

/// Virtual-time replay into a launched pipeline: each tuple is published once the pipeline has
/// been advanced to its timestamp, then time advances to `end` and the pipeline stops.
void replay_virtual(Pipeline& pipeline, const QueueHandle& source, std::span<const Tuple> tuples, Timestamp end);

}// namespace hstream
