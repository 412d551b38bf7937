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

#include <hstream/query.hpp>

#include <benchmark/benchmark.h>

namespace {

const char* kQuery = "EVERY 20 seconds compute the mean value of download_speed of the last 10 minutes "
                     "FROM influxdb database neubot series speedtest and streaming rabbitmq queue neubotspeed";

void BM_ParseQuery(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(hstream::parse_query(kQuery));
}
BENCHMARK(BM_ParseQuery);

void BM_RenderQuery(benchmark::State& state) {
    const auto spec = hstream::parse_query(kQuery);
    for (auto _ : state) benchmark::DoNotOptimize(hstream::render_query(spec));
}
BENCHMARK(BM_RenderQuery);

}// namespace
