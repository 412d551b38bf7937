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

#include <hstream/errors.hpp>
#include <hstream/model.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace hstream {

enum class AggregationFunction { min, max, mean };

std::string_view function_name(AggregationFunction fn);
/// Case-insensitive; nullopt for anything but min/max/mean.
std::optional<AggregationFunction> parse_function(std::string_view name);

/// Recurrence of the EVERY clause.
struct Frequency {
    std::int64_t number = 1;
    TimeUnit unit = TimeUnit::seconds;

    Millis millis() const { return to_millis(number, unit); }
    friend bool operator==(const Frequency&, const Frequency&) = default;
};

enum class WindowKind { sliding, landmark };

/// `of the last N unit` (sliding) or `starting N unit ago` (landmark).
struct WindowSpec {
    WindowKind kind = WindowKind::sliding;
    std::int64_t number = 1;
    TimeUnit unit = TimeUnit::seconds;

    Millis duration() const { return to_millis(number, unit); }
    friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct SourceSpec {
    std::optional<SeriesRef> historic;
    std::optional<std::string> stream;

    friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

struct QuerySpec {
    Frequency frequency;
    AggregationFunction aggregation = AggregationFunction::mean;
    std::string attribute;
    WindowSpec window;
    SourceSpec sources;

    friend bool operator==(const QuerySpec&, const QuerySpec&) = default;
};

class ParseError : public Error {
  public:
    enum class Kind { lexical, syntax, semantic };

    ParseError(Kind kind, std::size_t line, std::size_t column, std::size_t offset, std::string token,
               std::vector<std::string> expected, std::string detail);

    Kind kind() const { return kind_; }
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }
    std::size_t offset() const { return offset_; }
    const std::string& token() const { return token_; }
    const std::vector<std::string>& expected() const { return expected_; }

  private:
    Kind kind_;
    std::size_t line_;
    std::size_t column_;
    std::size_t offset_;
    std::string token_;
    std::vector<std::string> expected_;
};

/// Parses one query. Keywords are case-insensitive, identifiers keep their case.
///
///   query   := EVERY INT UNIT compute the AGG [value] of [the] IDENT window [FROM sources]
///   window  := of the last INT UNIT | starting INT UNIT ago
///   sources := historic [and streaming rabbitmq queue IDENT]
///            | streaming rabbitmq queue IDENT
///   historic:= PROVIDER database IDENT series IDENT
///   UNIT    := second[s] | minute[s] | hour[s] | day[s]
///   AGG     := min | max | mean
QuerySpec parse_query(std::string_view text);

/// Canonical single-line, lowercase-keyword rendering; parse_query inverts it.
std::string render_query(const QuerySpec& spec);

/// Splits query text into blocks separated by blank lines.
std::vector<std::string> split_query_blocks(std::string_view text);

/// True when `word` cannot be used as an identifier.
bool is_reserved_word(std::string_view word);

/// What the engine can resolve a query against.
struct Catalog {
    std::set<std::string> providers;
    /// Known series and their attribute names. An empty set means the attributes are not known yet.
    std::map<SeriesRef, std::set<std::string>> series;
    /// Known stream queues and the attributes their producers emit (empty = unknown).
    std::map<std::string, std::set<std::string>> queues;
    /// Attributes known to carry only non-numeric values, per series and per stream queue.
    std::map<SeriesRef, std::set<std::string>> non_numeric_series;
    std::map<std::string, std::set<std::string>> non_numeric_queues;
    /// How far before the query start a live stream alone can serve a window.
    Millis live_retention = 3'600'000;
};

struct Diagnostic {
    std::string message;
    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

/// Empty iff the query can run against the catalog.
std::vector<Diagnostic> validate(const QuerySpec& spec, const Catalog& catalog);

}// namespace hstream
