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

#include "oracles.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unistd.h>

namespace hstream::testing {

namespace {

std::optional<double> numeric(const Tuple& t, const std::string& attribute) {
    auto it = t.attributes.find(attribute);
    if (it == t.attributes.end()) return std::nullopt;
    if (auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&it->second)) return *d;
    return std::nullopt;
}

OracleResult fold(const std::vector<double>& values, AggregationFunction fn) {
    OracleResult r;
    r.count = static_cast<std::int64_t>(values.size());
    if (values.empty()) return r;
    switch (fn) {
        case AggregationFunction::min: r.value = *std::min_element(values.begin(), values.end()); break;
        case AggregationFunction::max: r.value = *std::max_element(values.begin(), values.end()); break;
        case AggregationFunction::mean: {
            // Kahan sum keeps the oracle itself well inside the comparison tolerance.
            double sum = 0, c = 0;
            for (double v : values) {
                double y = v - c;
                double t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            r.value = sum / static_cast<double>(values.size());
            break;
        }
    }
    return r;
}

}// namespace

OracleResult oracle_aggregate(std::span<const Tuple> tuples, const std::string& attribute, AggregationFunction fn,
                              Interval range) {
    std::vector<double> values;
    for (const auto& t : tuples) {
        if (t.ts.millis < range.start.millis || t.ts.millis >= range.end.millis) continue;
        if (auto v = numeric(t, attribute)) values.push_back(*v);
    }
    return fold(values, fn);
}

std::vector<AggregateRow> oracle_historic(std::span<const Tuple> tuples, const HistoricQuery& q) {
    const Millis width = q.group_by_number * unit_millis(q.group_by_unit);
    std::vector<AggregateRow> rows;
    for (Millis s = q.start.millis; s < q.end.millis; s += width) {
        const Millis e = std::min(s + width, q.end.millis);
        auto r = oracle_aggregate(tuples, q.value, q.function, Interval{Timestamp{s}, Timestamp{e}});
        rows.push_back(AggregateRow{Timestamp{s}, static_cast<double>(r.count), r.value});
    }
    return rows;
}

bool close_rel(double a, double b, double tol) {
    return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

bool same_value(std::optional<double> a, std::optional<double> b, AggregationFunction fn, double tol) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    if (fn == AggregationFunction::mean) return close_rel(*a, *b, tol);
    return *a == *b;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path()
            / ("hstream-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::vector<Tuple> random_tuples(std::mt19937_64& rng, std::size_t n, Interval range,
                                 const std::vector<std::string>& attributes, double p_text) {
    std::uniform_int_distribution<Millis> ts(range.start.millis, range.end.millis - 1);
    std::uniform_real_distribution<double> real(-1000.0, 1000.0);
    std::uniform_int_distribution<std::int64_t> integer(-500, 500);
    std::bernoulli_distribution text(p_text);
    std::bernoulli_distribution is_int(0.2);
    std::vector<Tuple> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tuple t;
        t.ts = Timestamp{ts(rng)};
        t.source_id = "s" + std::to_string(i % 7);
        for (const auto& a : attributes) {
            if (text(rng)) {
                t.attributes.emplace(a, std::string("txt") + std::to_string(i));
            } else if (is_int(rng)) {
                t.attributes.emplace(a, integer(rng));
            } else {
                t.attributes.emplace(a, real(rng));
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::string random_identifier(std::mt19937_64& rng) {
    static const std::string first = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
    static const std::string rest = first + "0123456789.-";
    std::uniform_int_distribution<std::size_t> len(1, 12);
    for (;;) {
        std::string s(1, first[std::uniform_int_distribution<std::size_t>(0, first.size() - 1)(rng)]);
        const auto n = len(rng);
        for (std::size_t i = 1; i < n; ++i) s += rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
        if (!is_reserved_word(s)) return s;
    }
}

QuerySpec random_spec(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> unit(0, 3);
    std::uniform_int_distribution<std::int64_t> number(1, 100'000);
    std::uniform_int_distribution<int> fn(0, 2);
    std::uniform_int_distribution<int> sources(0, 3);
    QuerySpec s;
    s.frequency = {number(rng), static_cast<TimeUnit>(unit(rng))};
    s.aggregation = static_cast<AggregationFunction>(fn(rng));
    s.attribute = random_identifier(rng);
    s.window.kind = std::bernoulli_distribution(0.5)(rng) ? WindowKind::sliding : WindowKind::landmark;
    s.window.number = number(rng);
    s.window.unit = static_cast<TimeUnit>(unit(rng));
    const int src = sources(rng);
    if (src == 0 || src == 2) {
        s.sources.historic = SeriesRef{random_identifier(rng), random_identifier(rng), random_identifier(rng)};
    }
    if (src == 1 || src == 2) {
        s.sources.stream = random_identifier(rng);
    }
    return s;
}

const std::vector<std::string>& neubot_queries() {
    static const std::vector<std::string> q = {
        "EVERY 20 seconds compute the mean value of download_speed \n"
        "      of the last 10 minutes \n"
        "FROM influxdb database neubot series speedtest and streaming\n"
        "     RabbitMQ queue neubotspeed",
        "EVERY 60 seconds compute the max value of download_speed \n"
        "      of the last 3 minutes \n"
        "FROM  cassandra database neubot series speedtests and streaming \n"
        "      rabbitmq queue neubotspeed",
        "EVERY \t5 minutes compute the mean of the download_speed \n"
        "        of the last 120 days \n"
        "FROM \tcassandra database neubot series speedtests and streaming \n"
        "        rabbitmq queue neubotspeed",
        "EVERY   30 seconds compute the mean value of upload_speed \n"
        "        starting 10 days ago \n"
        "FROM \tcassandra database neubot series speedtests and streaming \n"
        "        rabbitmq queue neubotspeed",
    };
    return q;
}

const std::string& fastest_speed_query() {
    static const std::string q = "EVERY 2 minutes compute the max value of download_speed of the last 8 minutes";
    return q;
}

}// namespace hstream::testing
