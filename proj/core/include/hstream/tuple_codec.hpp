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

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hstream {

/// NDJSON line for a tuple: `ts`, `src`, then one key per attribute in name order.
/// Single-character strings decode as char; everything else keeps its JSON type.
std::string encode_tuple(const Tuple& tuple);

/// Throws DecodeError on malformed input.
Tuple decode_tuple(std::string_view line);

struct TupleFile {
    std::vector<Tuple> tuples;
    std::size_t malformed = 0;
};

/// Reads an NDJSON tuple file, skipping blank lines and counting malformed ones.
TupleFile read_ndjson(const std::filesystem::path& path);

/// Reads a CSV file whose header names the attributes. A `ts` column (milliseconds) is
/// required; an optional `src` column sets the source id. Empty cells are omitted.
TupleFile read_csv(const std::filesystem::path& path);

/// Dispatches on extension: `.csv` -> read_csv, otherwise read_ndjson.
TupleFile read_tuple_file(const std::filesystem::path& path);

}// namespace hstream
