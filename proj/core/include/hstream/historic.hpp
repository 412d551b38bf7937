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
#include <hstream/query.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace hstream {

/// Grouped temporal aggregation over a stored series: `function(value)` over [start, end),
/// grouped into buckets of group_by_number * group_by_unit anchored at start.
struct HistoricQuery {
    AggregationFunction function = AggregationFunction::mean;
    std::string value;
    Timestamp start;
    Timestamp end;
    std::int64_t group_by_number = 1;
    TimeUnit group_by_unit = TimeUnit::minutes;
};

struct IngestResult {
    std::size_t ingested = 0;
    std::size_t duplicates = 0;
};

/// An open session against one series. Stays usable across queries until closed.
class Connection {
  public:
    virtual ~Connection() = default;

    virtual const SeriesRef& ref() const = 0;
    /// Throws ConnectionClosedError after close().
    virtual std::vector<AggregateRow> query_to_historic(const HistoricQuery& q) = 0;
    /// Newest stored timestamp, nullopt for an empty series.
    virtual std::optional<Timestamp> latest_timestamp() const = 0;
    virtual void close() = 0;
    virtual bool is_open() const = 0;
};

/// Proxy for one kind of store. Remote InfluxDB or Cassandra clients would implement this.
class HistoricProvider {
  public:
    virtual ~HistoricProvider() = default;

    virtual const std::string& name() const = 0;
    virtual std::unique_ptr<Connection> open_connection(const SeriesRef& ref) = 0;
};

/// Embedded time-series engine. Each series lives under `<root>/<provider>/<database>/<series>/`
/// as append-only NDJSON segments; a sorted in-memory index is rebuilt when the store opens.
class HistoricStore {
  public:
    explicit HistoricStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    /// Idempotent. Creates the series directory.
    void register_series(const SeriesRef& ref);
    bool is_registered(const SeriesRef& ref) const;
    std::vector<SeriesRef> series() const;
    std::set<std::string> attributes(const SeriesRef& ref) const;
    /// Attributes that never held a numeric value.
    std::set<std::string> non_numeric_attributes(const SeriesRef& ref) const;
    std::size_t size(const SeriesRef& ref) const;
    /// Largest stored timestamp, or nullopt for an empty series.
    std::optional<Timestamp> max_timestamp(const SeriesRef& ref) const;
    /// Non-numeric target values skipped by queries so far.
    std::uint64_t skipped_non_numeric(const SeriesRef& ref) const;

    /// Appends tuples not already stored (same ts, source and attributes).
    IngestResult ingest(const SeriesRef& ref, std::span<const Tuple> tuples);

    /// One row per bucket intersecting [q.start, q.end), ascending. Empty buckets have count 0
    /// and no result.
    std::vector<AggregateRow> query_to_historic(const SeriesRef& ref, const HistoricQuery& q) const;

    std::unique_ptr<Connection> open_connection(const SeriesRef& ref);

  private:
    struct Column {
        std::vector<Millis> ts;
        std::vector<double> values;
        std::vector<Millis> other_ts;// timestamps of non-numeric values
    };

    struct Series {
        std::filesystem::path dir;
        mutable std::shared_mutex mutex;
        std::vector<Tuple> tuples;// sorted by ts, stable in arrival order
        std::unordered_set<std::string> keys;
        std::map<std::string, std::pair<std::uint64_t, std::uint64_t>, std::less<>> kinds;// numeric, other
        std::uint64_t next_segment = 0;
        std::uint64_t version = 0;

        mutable std::mutex cache_mutex;
        mutable std::map<std::string, std::pair<std::uint64_t, std::shared_ptr<const Column>>, std::less<>> columns;
        mutable std::atomic<std::uint64_t> skipped{0};
    };

    Series& get(const SeriesRef& ref) const;
    std::shared_ptr<const Column> column(const Series& s, const std::string& attr) const;
    void load(Series& s);
    std::filesystem::path series_dir(const SeriesRef& ref) const;

    std::filesystem::path root_;
    mutable std::shared_mutex mutex_;
    std::map<SeriesRef, std::unique_ptr<Series>> series_;
};

/// Provider backed by the embedded store, registered under an arbitrary name.
class EmbeddedProvider final : public HistoricProvider {
  public:
    EmbeddedProvider(std::string name, HistoricStore& store) : name_(std::move(name)), store_(store) {}

    const std::string& name() const override { return name_; }
    std::unique_ptr<Connection> open_connection(const SeriesRef& ref) override;

  private:
    std::string name_;
    HistoricStore& store_;
};

class ProviderRegistry {
  public:
    void add(std::shared_ptr<HistoricProvider> provider);
    /// nullptr when unknown.
    std::shared_ptr<HistoricProvider> get(const std::string& name) const;
    std::set<std::string> names() const;

  private:
    std::map<std::string, std::shared_ptr<HistoricProvider>> providers_;
};

/// "influxdb" and "cassandra", both served by `store`.
ProviderRegistry make_default_registry(HistoricStore& store);

}// namespace hstream
