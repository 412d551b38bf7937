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

#include <hstream/clock.hpp>
#include <hstream/errors.hpp>

#include <chrono>

namespace hstream {

Timestamp SystemClock::now() const {
    using namespace std::chrono;
    return Timestamp{duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count()};
}

void VirtualClock::set(Timestamp t) {
    Millis current = now_.load(std::memory_order_acquire);
    if (t.millis < current) {
        throw ContractError("virtual clock cannot move backwards");
    }
    now_.store(t.millis, std::memory_order_release);
}

}// namespace hstream
