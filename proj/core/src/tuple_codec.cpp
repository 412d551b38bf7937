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
#include <hstream/tuple_codec.hpp>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>

namespace hstream {

namespace {

using ordered_json = nlohmann::ordered_json;

Value value_from_json(const std::string& key, const nlohmann::json& j) {
    if (j.is_number_integer()) {
        if (j.is_number_unsigned() && j.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
            throw DecodeError("integer out of range for attribute '" + key + "'");
        }
        return j.get<std::int64_t>();
    }
    if (j.is_number_float()) {
        return j.get<double>();
    }
    if (j.is_string()) {
        auto s = j.get<std::string>();
        if (s.size() == 1) {
            return s[0];
        }
        return s;
    }
    throw DecodeError("unsupported value type for attribute '" + key + "'");
}

Value infer_cell(std::string_view cell) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    std::int64_t i = 0;
    if (auto [p, ec] = std::from_chars(first, last, i); ec == std::errc{} && p == last) {
        return i;
    }
    double d = 0.0;
    if (auto [p, ec] = std::from_chars(first, last, d); ec == std::errc{} && p == last && std::isfinite(d)) {
        return d;
    }
    if (cell.size() == 1) {
        return cell[0];
    }
    return std::string(cell);
}

// RFC 4180-ish: commas separate, double quotes wrap, "" escapes a quote.
std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) {
        throw DecodeError("unterminated quoted field");
    }
    out.push_back(std::move(cur));
    return out;
}

std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') {
        s.remove_suffix(1);
    }
    return s;
}

}// namespace

std::string encode_tuple(const Tuple& tuple) {
    ordered_json j;
    j["ts"] = tuple.ts.millis;
    j["src"] = tuple.source_id;
    for (const auto& [name, value] : tuple.attributes) {
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, char>) {
                    j[name] = std::string(1, v);
                } else if constexpr (std::is_same_v<T, double>) {
                    if (!std::isfinite(v)) {
                        throw DecodeError("non-finite value for attribute '" + name + "'");
                    }
                    j[name] = v;
                } else {
                    j[name] = v;
                }
            },
            value);
    }
    return j.dump();
}

Tuple decode_tuple(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw DecodeError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw DecodeError("tuple must be a JSON object");
    }
    Tuple t;
    auto ts = j.find("ts");
    if (ts == j.end() || !ts->is_number_integer()) {
        throw DecodeError("missing or non-integer 'ts'");
    }
    t.ts = Timestamp{ts->get<std::int64_t>()};
    if (t.ts.millis < 0) {
        throw DecodeError("negative 'ts'");
    }
    if (auto src = j.find("src"); src != j.end()) {
        if (!src->is_string()) {
            throw DecodeError("'src' must be a string");
        }
        t.source_id = src->get<std::string>();
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "ts" || key == "src") {
            continue;
        }
        t.attributes.emplace(key, value_from_json(key, value));
    }
    if (t.attributes.empty()) {
        throw DecodeError("tuple has no attributes");
    }
    return t;
}

TupleFile read_ndjson(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    TupleFile out;
    std::string line;
    while (std::getline(in, line)) {
        auto view = trim_cr(line);
        if (view.find_first_not_of(" \t") == std::string_view::npos) {
            continue;
        }
        try {
            out.tuples.push_back(decode_tuple(view));
        } catch (const DecodeError&) {
            ++out.malformed;
        }
    }
    return out;
}

TupleFile read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DecodeError("empty CSV file: " + path.string());
    }
    const auto header = split_csv(trim_cr(line));
    std::ptrdiff_t ts_col = -1;
    std::ptrdiff_t src_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "ts") {
            ts_col = static_cast<std::ptrdiff_t>(i);
        } else if (header[i] == "src") {
            src_col = static_cast<std::ptrdiff_t>(i);
        }
    }
    if (ts_col < 0) {
        throw DecodeError("CSV header lacks a 'ts' column");
    }

    TupleFile out;
    while (std::getline(in, line)) {
        auto view = trim_cr(line);
        if (view.empty()) {
            continue;
        }
        try {
            auto cells = split_csv(view);
            if (cells.size() != header.size()) {
                throw DecodeError("column count mismatch");
            }
            Tuple t;
            const auto& ts_cell = cells[static_cast<std::size_t>(ts_col)];
            std::int64_t ts = 0;
            auto [p, ec] = std::from_chars(ts_cell.data(), ts_cell.data() + ts_cell.size(), ts);
            if (ec != std::errc{} || p != ts_cell.data() + ts_cell.size() || ts < 0) {
                throw DecodeError("bad ts cell");
            }
            t.ts = Timestamp{ts};
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (static_cast<std::ptrdiff_t>(i) == ts_col || cells[i].empty()) {
                    continue;
                }
                if (static_cast<std::ptrdiff_t>(i) == src_col) {
                    t.source_id = cells[i];
                    continue;
                }
                t.attributes.emplace(header[i], infer_cell(cells[i]));
            }
            if (t.attributes.empty()) {
                throw DecodeError("row has no attributes");
            }
            out.tuples.push_back(std::move(t));
        } catch (const DecodeError&) {
            ++out.malformed;
        }
    }
    return out;
}

TupleFile read_tuple_file(const std::filesystem::path& path) {
    if (path.extension() == ".csv") {
        return read_csv(path);
    }
    return read_ndjson(path);
}

}// namespace hstream
