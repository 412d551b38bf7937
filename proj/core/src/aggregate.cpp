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

#include <hstream/aggregate.hpp>
#include <hstream/errors.hpp>

#include <algorithm>
#include <cmath>

namespace hstream {

PartialAggregate::PartialAggregate(AggregationFunction fn, std::int64_t count, double payload)
    : fn_(fn), count_(count), payload_(count == 0 ? 0.0 : payload) {
    if (count < 0) {
        throw ContractError("partial aggregate count must be non-negative");
    }
}

std::optional<double> PartialAggregate::payload() const {
    if (count_ == 0) {
        return std::nullopt;
    }
    return payload_;
}

PartialAggregate partial_update(PartialAggregate p, double v) {
    if (!std::isfinite(v)) {
        throw ContractError("non-finite value rejected by " + std::string(function_name(p.fn_)) + " aggregate");
    }
    if (p.count_ == 0) {
        p.payload_ = v;
    } else {
        switch (p.fn_) {
            case AggregationFunction::mean: p.payload_ += v; break;
            case AggregationFunction::min: p.payload_ = std::min(p.payload_, v); break;
            case AggregationFunction::max: p.payload_ = std::max(p.payload_, v); break;
        }
    }
    ++p.count_;
    return p;
}

PartialAggregate partial_merge(const PartialAggregate& a, const PartialAggregate& b) {
    if (a.fn_ != b.fn_) {
        throw ContractError("cannot merge " + std::string(function_name(a.fn_)) + " and "
                            + std::string(function_name(b.fn_)) + " partials");
    }
    if (a.count_ == 0) return b;
    if (b.count_ == 0) return a;
    PartialAggregate out(a.fn_);
    out.count_ = a.count_ + b.count_;
    switch (a.fn_) {
        case AggregationFunction::mean: out.payload_ = a.payload_ + b.payload_; break;
        case AggregationFunction::min: out.payload_ = std::min(a.payload_, b.payload_); break;
        case AggregationFunction::max: out.payload_ = std::max(a.payload_, b.payload_); break;
    }
    return out;
}

PartialAggregate from_aggregate_row(const AggregateRow& row, AggregationFunction fn) {
    const auto count = static_cast<std::int64_t>(std::llround(row.count));
    if (count == 0 || !row.result) {
        return PartialAggregate(fn);
    }
    const double payload = fn == AggregationFunction::mean ? *row.result * row.count : *row.result;
    return PartialAggregate(fn, count, payload);
}

std::optional<double> finalize(const PartialAggregate& p) {
    auto payload = p.payload();
    if (!payload) {
        return std::nullopt;
    }
    if (p.function() == AggregationFunction::mean) {
        return *payload / static_cast<double>(p.count());
    }
    return payload;
}

}// namespace hstream
