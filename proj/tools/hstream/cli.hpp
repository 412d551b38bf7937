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

#include <atomic>
#include <iosfwd>

namespace hstream::cli {

enum ExitCode : int { ok = 0, usage_error = 1, runtime_failure = 2 };

/// Set from a signal handler; long-running commands drain and stop when it flips.
std::atomic<bool>& interrupt_flag();

/// Entry point shared by the executable and the tests. `in` feeds queries read from stdin.
int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}// namespace hstream::cli
