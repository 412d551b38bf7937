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

#include <cstdint>
#include <optional>

namespace hstream {

/// Mergeable accumulator: count plus running sum (mean) or extremum (min/max).
/// Partials of the same function form a commutative monoid under partial_merge with the
/// empty partial as identity, which is what lets stored history and live tuples be combined.
class PartialAggregate {
  public:
    explicit PartialAggregate(AggregationFunction fn) : fn_(fn) {}
    PartialAggregate(AggregationFunction fn, std::int64_t count, double payload);

    AggregationFunction function() const { return fn_; }
    std::int64_t count() const { return count_; }
    bool empty() const { return count_ == 0; }
    /// Sum for mean, extremum for min/max; absent iff count == 0.
    std::optional<double> payload() const;

    friend bool operator==(const PartialAggregate&, const PartialAggregate&) = default;

  private:
    friend PartialAggregate partial_update(PartialAggregate p, double v);
    friend PartialAggregate partial_merge(const PartialAggregate& a, const PartialAggregate& b);

    AggregationFunction fn_;
    std::int64_t count_ = 0;
    double payload_ = 0.0;
};

/// Adds one value. Non-finite values are a ContractError.
PartialAggregate partial_update(PartialAggregate p, double v);

/// Combines two partials of the same function; mismatched functions are a ContractError.
PartialAggregate partial_merge(const PartialAggregate& a, const PartialAggregate& b);

/// Reconstructs the partial a grouped store row stands for (mean rows carry result * count).
PartialAggregate from_aggregate_row(const AggregateRow& row, AggregationFunction fn);

/// Final value; nullopt for the empty partial.
std::optional<double> finalize(const PartialAggregate& p);

}// namespace hstream
