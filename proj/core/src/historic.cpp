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
#include <hstream/historic.hpp>
#include <hstream/tuple_codec.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hstream {

namespace {

std::string segment_name(std::uint64_t index) {
    std::ostringstream os;
    os << std::setw(8) << std::setfill('0') << index << ".ndjson";
    return os.str();
}

bool by_ts(const Tuple& a, const Tuple& b) { return a.ts < b.ts; }

class EmbeddedConnection final : public Connection {
  public:
    EmbeddedConnection(const HistoricStore& store, SeriesRef ref) : store_(store), ref_(std::move(ref)) {}

    const SeriesRef& ref() const override { return ref_; }

    std::vector<AggregateRow> query_to_historic(const HistoricQuery& q) override {
        if (!open_) {
            throw ConnectionClosedError("connection to " + ref_.to_string() + " is closed");
        }
        return store_.query_to_historic(ref_, q);
    }

    std::optional<Timestamp> latest_timestamp() const override {
        if (!open_) {
            throw ConnectionClosedError("connection to " + ref_.to_string() + " is closed");
        }
        return store_.max_timestamp(ref_);
    }

    void close() override { open_ = false; }
    bool is_open() const override { return open_; }

  private:
    const HistoricStore& store_;
    SeriesRef ref_;
    bool open_ = true;
};

}// namespace

HistoricStore::HistoricStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
    // <root>/<provider>/<database>/<series>/
    for (const auto& provider : std::filesystem::directory_iterator(root_)) {
        if (!provider.is_directory()) continue;
        for (const auto& db : std::filesystem::directory_iterator(provider.path())) {
            if (!db.is_directory()) continue;
            for (const auto& ser : std::filesystem::directory_iterator(db.path())) {
                if (!ser.is_directory()) continue;
                SeriesRef ref{provider.path().filename().string(), db.path().filename().string(),
                              ser.path().filename().string()};
                auto s = std::make_unique<Series>();
                s->dir = ser.path();
                load(*s);
                series_.emplace(std::move(ref), std::move(s));
            }
        }
    }
}

std::filesystem::path HistoricStore::series_dir(const SeriesRef& ref) const {
    return root_ / ref.provider / ref.database / ref.series;
}

void HistoricStore::load(Series& s) {
    std::vector<std::pair<std::uint64_t, std::filesystem::path>> segments;
    for (const auto& entry : std::filesystem::directory_iterator(s.dir)) {
        if (entry.path().extension() != ".ndjson") continue;
        try {
            segments.emplace_back(std::stoull(entry.path().stem().string()), entry.path());
        } catch (const std::exception&) {
            continue;
        }
    }
    std::sort(segments.begin(), segments.end());
    for (const auto& [index, path] : segments) {
        std::ifstream in(path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            Tuple t = decode_tuple(line);
            if (!s.keys.insert(line).second) continue;
            for (const auto& [name, value] : t.attributes) {
                auto& k = s.kinds[name];
                (as_number(value) ? k.first : k.second)++;
            }
            s.tuples.push_back(std::move(t));
        }
        s.next_segment = std::max(s.next_segment, index + 1);
    }
    std::stable_sort(s.tuples.begin(), s.tuples.end(), by_ts);
    ++s.version;
}

void HistoricStore::register_series(const SeriesRef& ref) {
    if (ref.provider.empty() || ref.database.empty() || ref.series.empty()) {
        throw ContractError("series reference has an empty component: " + ref.to_string());
    }
    std::unique_lock lock(mutex_);
    if (series_.contains(ref)) {
        return;
    }
    auto s = std::make_unique<Series>();
    s->dir = series_dir(ref);
    std::filesystem::create_directories(s->dir);
    series_.emplace(ref, std::move(s));
}

bool HistoricStore::is_registered(const SeriesRef& ref) const {
    std::shared_lock lock(mutex_);
    return series_.contains(ref);
}

std::vector<SeriesRef> HistoricStore::series() const {
    std::shared_lock lock(mutex_);
    std::vector<SeriesRef> out;
    for (const auto& [ref, _] : series_) {
        out.push_back(ref);
    }
    return out;
}

HistoricStore::Series& HistoricStore::get(const SeriesRef& ref) const {
    std::shared_lock lock(mutex_);
    auto it = series_.find(ref);
    if (it == series_.end()) {
        throw UnknownSeriesError("unknown series: " + ref.to_string());
    }
    return *it->second;
}

std::set<std::string> HistoricStore::non_numeric_attributes(const SeriesRef& ref) const {
    const Series& s = get(ref);
    std::shared_lock lock(s.mutex);
    std::set<std::string> out;
    for (const auto& [name, k] : s.kinds) {
        if (k.first == 0) out.insert(name);
    }
    return out;
}

std::set<std::string> HistoricStore::attributes(const SeriesRef& ref) const {
    const Series& s = get(ref);
    std::shared_lock lock(s.mutex);
    std::set<std::string> out;
    for (const auto& [name, _] : s.kinds) {
        out.insert(name);
    }
    return out;
}

std::size_t HistoricStore::size(const SeriesRef& ref) const {
    const Series& s = get(ref);
    std::shared_lock lock(s.mutex);
    return s.tuples.size();
}

std::optional<Timestamp> HistoricStore::max_timestamp(const SeriesRef& ref) const {
    const Series& s = get(ref);
    std::shared_lock lock(s.mutex);
    if (s.tuples.empty()) {
        return std::nullopt;
    }
    return s.tuples.back().ts;
}

std::uint64_t HistoricStore::skipped_non_numeric(const SeriesRef& ref) const { return get(ref).skipped.load(); }

IngestResult HistoricStore::ingest(const SeriesRef& ref, std::span<const Tuple> tuples) {
    Series& s = get(ref);
    std::unique_lock lock(s.mutex);

    IngestResult result;
    std::vector<Tuple> fresh;
    std::vector<std::string> lines;
    for (const auto& t : tuples) {
        t.validate();
        std::string line = encode_tuple(t);
        if (!s.keys.insert(line).second) {
            ++result.duplicates;
            continue;
        }
        lines.push_back(std::move(line));
        fresh.push_back(t);
    }
    if (fresh.empty()) {
        return result;
    }

    const auto path = s.dir / segment_name(s.next_segment);
    {
        std::ofstream out(path, std::ios::out | std::ios::trunc);
        for (const auto& line : lines) {
            out << line << '\n';
        }
        out.flush();
        if (!out) {
            for (const auto& line : lines) {
                s.keys.erase(line);
            }
            throw Error("failed to write segment " + path.string());
        }
    }
    ++s.next_segment;

    for (const auto& t : fresh) {
        for (const auto& [name, value] : t.attributes) {
            auto& k = s.kinds[name];
            (as_number(value) ? k.first : k.second)++;
        }
    }
    std::stable_sort(fresh.begin(), fresh.end(), by_ts);
    const auto mid = static_cast<std::ptrdiff_t>(s.tuples.size());
    s.tuples.insert(s.tuples.end(), std::make_move_iterator(fresh.begin()), std::make_move_iterator(fresh.end()));
    std::inplace_merge(s.tuples.begin(), s.tuples.begin() + mid, s.tuples.end(), by_ts);
    ++s.version;

    result.ingested = fresh.size();
    return result;
}

// Caller holds a shared lock on s.mutex.
std::shared_ptr<const HistoricStore::Column> HistoricStore::column(const Series& s, const std::string& attr) const {
    std::lock_guard cache_lock(s.cache_mutex);
    auto it = s.columns.find(attr);
    if (it != s.columns.end() && it->second.first == s.version) {
        return it->second.second;
    }
    auto col = std::make_shared<Column>();
    for (const auto& t : s.tuples) {
        auto a = t.attributes.find(attr);
        if (a == t.attributes.end()) continue;
        if (auto v = as_number(a->second)) {
            col->ts.push_back(t.ts.millis);
            col->values.push_back(*v);
        } else {
            col->other_ts.push_back(t.ts.millis);
        }
    }
    s.columns[attr] = {s.version, col};
    return col;
}

std::vector<AggregateRow> HistoricStore::query_to_historic(const SeriesRef& ref, const HistoricQuery& q) const {
    if (q.end < q.start) {
        throw ContractError("historic query ends before it starts");
    }
    if (q.group_by_number < 1) {
        throw ContractError("group-by quantity must be at least 1");
    }
    const Millis width = to_millis(q.group_by_number, q.group_by_unit);
    const Series& s = get(ref);
    std::shared_lock lock(s.mutex);

    if (auto k = s.kinds.find(q.value); k != s.kinds.end() && k->second.first == 0) {
        throw TypeMismatchError("attribute '" + q.value + "' is never numeric in " + ref.to_string());
    }

    const Millis span = q.end - q.start;
    const std::size_t buckets = span == 0 ? 0 : static_cast<std::size_t>((span - 1) / width + 1);
    std::vector<AggregateRow> rows(buckets);
    std::vector<double> acc(buckets, 0.0);
    std::vector<std::uint64_t> counts(buckets, 0);
    for (std::size_t i = 0; i < buckets; ++i) {
        rows[i].bucket_start = q.start + static_cast<Millis>(i) * width;
    }
    if (buckets == 0) {
        return rows;
    }

    const auto col = column(s, q.value);
    auto lo = std::lower_bound(col->ts.begin(), col->ts.end(), q.start.millis);
    auto hi = std::lower_bound(lo, col->ts.end(), q.end.millis);
    for (auto it = lo; it != hi; ++it) {
        const auto idx = static_cast<std::size_t>(it - col->ts.begin());
        const auto b = static_cast<std::size_t>((*it - q.start.millis) / width);
        const double v = col->values[idx];
        if (counts[b] == 0) {
            acc[b] = v;
        } else {
            switch (q.function) {
                case AggregationFunction::mean: acc[b] += v; break;
                case AggregationFunction::min: acc[b] = std::min(acc[b], v); break;
                case AggregationFunction::max: acc[b] = std::max(acc[b], v); break;
            }
        }
        ++counts[b];
    }
    const auto olo = std::lower_bound(col->other_ts.begin(), col->other_ts.end(), q.start.millis);
    const auto ohi = std::lower_bound(olo, col->other_ts.end(), q.end.millis);
    if (olo != ohi) {
        s.skipped.fetch_add(static_cast<std::uint64_t>(ohi - olo), std::memory_order_relaxed);
    }
    for (std::size_t i = 0; i < buckets; ++i) {
        rows[i].count = static_cast<double>(counts[i]);
        if (counts[i] > 0) {
            rows[i].result =
                q.function == AggregationFunction::mean ? acc[i] / static_cast<double>(counts[i]) : acc[i];
        }
    }
    return rows;
}

std::unique_ptr<Connection> HistoricStore::open_connection(const SeriesRef& ref) {
    (void) get(ref);
    return std::make_unique<EmbeddedConnection>(*this, ref);
}

std::unique_ptr<Connection> EmbeddedProvider::open_connection(const SeriesRef& ref) {
    if (ref.provider != name_) {
        throw UnknownSeriesError("provider '" + name_ + "' does not serve " + ref.to_string());
    }
    return store_.open_connection(ref);
}

void ProviderRegistry::add(std::shared_ptr<HistoricProvider> provider) {
    const auto name = provider->name();
    providers_[name] = std::move(provider);
}

std::shared_ptr<HistoricProvider> ProviderRegistry::get(const std::string& name) const {
    auto it = providers_.find(name);
    return it == providers_.end() ? nullptr : it->second;
}

std::set<std::string> ProviderRegistry::names() const {
    std::set<std::string> out;
    for (const auto& [name, _] : providers_) {
        out.insert(name);
    }
    return out;
}

ProviderRegistry make_default_registry(HistoricStore& store) {
    ProviderRegistry registry;
    registry.add(std::make_shared<EmbeddedProvider>("influxdb", store));
    registry.add(std::make_shared<EmbeddedProvider>("cassandra", store));
    return registry;
}

}// namespace hstream
