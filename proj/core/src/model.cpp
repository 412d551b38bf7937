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
#include <hstream/model.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>

namespace hstream {

std::optional<double> as_number(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) {
        return static_cast<double>(*i);
    }
    if (const auto* d = std::get_if<double>(&v)) {
        return *d;
    }
    return std::nullopt;
}

void Tuple::validate() const {
    if (attributes.empty()) {
        throw ContractError("tuple has no attributes");
    }
    if (ts.millis < 0) {
        throw ContractError("tuple timestamp is negative");
    }
}

std::string_view unit_name(TimeUnit unit) {
    switch (unit) {
        case TimeUnit::seconds: return "seconds";
        case TimeUnit::minutes: return "minutes";
        case TimeUnit::hours: return "hours";
        case TimeUnit::days: return "days";
    }
    return "seconds";
}

Millis unit_millis(TimeUnit unit) {
    switch (unit) {
        case TimeUnit::seconds: return 1000;
        case TimeUnit::minutes: return 60'000;
        case TimeUnit::hours: return 3'600'000;
        case TimeUnit::days: return 86'400'000;
    }
    return 1000;
}

Millis to_millis(std::int64_t n, TimeUnit unit) {
    if (n < 0) {
        throw ContractError("negative time quantity");
    }
    Millis out = 0;
    if (__builtin_mul_overflow(n, unit_millis(unit), &out)) {
        throw RangeError("time quantity overflows milliseconds: " + std::to_string(n) + " "
                         + std::string(unit_name(unit)));
    }
    return out;
}

Millis parse_duration(std::string_view text) {
    std::int64_t n = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc{} || p == text.data() || n < 0) {
        throw ContractError("invalid duration: '" + std::string(text) + "'");
    }
    std::string suffix(p, static_cast<std::size_t>(text.data() + text.size() - p));
    suffix.erase(0, suffix.find_first_not_of(" \t"));
    for (auto& c : suffix) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    static const std::map<std::string, Millis> factors = {
        {"", 1},
        {"ms", 1},
        {"s", 1000},
        {"second", 1000},
        {"seconds", 1000},
        {"m", 60'000},
        {"min", 60'000},
        {"minute", 60'000},
        {"minutes", 60'000},
        {"h", 3'600'000},
        {"hour", 3'600'000},
        {"hours", 3'600'000},
        {"d", 86'400'000},
        {"day", 86'400'000},
        {"days", 86'400'000},
    };
    const auto it = factors.find(suffix);
    if (it == factors.end()) {
        throw ContractError("invalid duration unit in '" + std::string(text) + "'");
    }
    const Millis factor = it->second;
    Millis out = 0;
    if (__builtin_mul_overflow(n, factor, &out)) {
        throw RangeError("duration overflows: '" + std::string(text) + "'");
    }
    return out;
}

Interval bucket_of(Timestamp t, Millis width, Timestamp origin) {
    if (width <= 0) {
        throw ContractError("bucket width must be positive");
    }
    if (t < origin) {
        throw ContractError("timestamp precedes bucket origin");
    }
    const Millis k = (t - origin) / width;
    const Timestamp start = origin + k * width;
    return Interval{start, start + width};
}

}// namespace hstream
