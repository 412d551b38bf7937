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

#include <atomic>

namespace hstream {

/// Time source injected into operators, launchers and the simulator.
class Clock {
  public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
    virtual bool is_virtual() const = 0;
};

/// Wall clock, UTC milliseconds since the Unix epoch.
class SystemClock final : public Clock {
  public:
    Timestamp now() const override;
    bool is_virtual() const override { return false; }
};

/// Manually driven clock. Time never moves backwards.
class VirtualClock final : public Clock {
  public:
    explicit VirtualClock(Timestamp start = {}) : now_(start.millis) {}

    Timestamp now() const override { return Timestamp{now_.load(std::memory_order_acquire)}; }
    bool is_virtual() const override { return true; }

    /// ContractError when t is earlier than now().
    void set(Timestamp t);
    void advance(Millis d) { set(now() + d); }

  private:
    std::atomic<Millis> now_;
};

}// namespace hstream
