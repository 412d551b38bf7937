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

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace hstream {

/// Durations are plain signed milliseconds.
using Millis = std::int64_t;

/// Milliseconds since the UTC Unix epoch.
struct Timestamp {
    Millis millis = 0;

    constexpr auto operator<=>(const Timestamp&) const = default;
};

constexpr Timestamp operator+(Timestamp t, Millis d) { return Timestamp{t.millis + d}; }
constexpr Timestamp operator-(Timestamp t, Millis d) { return Timestamp{t.millis - d}; }
constexpr Millis operator-(Timestamp a, Timestamp b) { return a.millis - b.millis; }

/// t - d, clamped at the epoch so extents never leave the timestamp domain.
constexpr Timestamp saturating_sub(Timestamp t, Millis d) {
    return t.millis > d ? Timestamp{t.millis - d} : Timestamp{0};
}

/// Atomic attribute value. Aggregations only accept the numeric alternatives.
using Value = std::variant<std::int64_t, double, std::string, char>;

/// Numeric view of a value, or nullopt for string/char.
std::optional<double> as_number(const Value& v);

using AttributeMap = std::map<std::string, Value, std::less<>>;

/// Timestamped attribute/value record produced by a thing.
struct Tuple {
    Timestamp ts;
    AttributeMap attributes;
    std::string source_id;

    /// Throws ContractError when the tuple has no attributes or a negative timestamp.
    void validate() const;

    friend bool operator==(const Tuple&, const Tuple&) = default;
};

enum class TimeUnit { seconds, minutes, hours, days };

std::string_view unit_name(TimeUnit unit);
Millis unit_millis(TimeUnit unit);

/// n * unit in milliseconds. Negative n is a ContractError, overflow a RangeError.
Millis to_millis(std::int64_t n, TimeUnit unit);

/// "250ms", "10s", "2m", "1h", "3d", "2 minutes" or a bare millisecond count. Throws ContractError.
Millis parse_duration(std::string_view text);

/// Half-open interval [start, end).
struct Interval {
    Timestamp start;
    Timestamp end;

    constexpr bool contains(Timestamp t) const { return start <= t && t < end; }
    constexpr Millis length() const { return end - start; }
    constexpr bool empty() const { return end <= start; }

    friend constexpr bool operator==(const Interval&, const Interval&) = default;
};

/// The bucket [origin + k*width, origin + (k+1)*width) holding t.
Interval bucket_of(Timestamp t, Millis width, Timestamp origin);

/// One grouped result of a historic query: tuples grouped into the bucket and their aggregate.
struct AggregateRow {
    Timestamp bucket_start;
    double count = 0.0;
    std::optional<double> result;

    friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

/// Identifies a stored series: provider name, database and series.
struct SeriesRef {
    std::string provider;
    std::string database;
    std::string series;

    std::string to_string() const { return provider + "/" + database + "/" + series; }

    friend auto operator<=>(const SeriesRef&, const SeriesRef&) = default;
};

}// namespace hstream
