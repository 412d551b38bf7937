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

#include <stdexcept>
#include <string>

namespace hstream {

/// Base of every exception raised by the engine.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Arithmetic that would leave the representable range (e.g. time unit overflow).
class RangeError : public Error {
  public:
    using Error::Error;
};

/// Malformed tuple or record encoding.
class DecodeError : public Error {
  public:
    using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
  public:
    using Error::Error;
};

class ConfigConflictError : public Error {
  public:
    using Error::Error;
};

class QueueClosedError : public Error {
  public:
    using Error::Error;
};

class UnknownSeriesError : public Error {
  public:
    using Error::Error;
};

class ConnectionClosedError : public Error {
  public:
    using Error::Error;
};

/// An aggregation targets an attribute that never holds numeric values.
class TypeMismatchError : public Error {
  public:
    using Error::Error;
};

class PlanError : public Error {
  public:
    using Error::Error;
};

}// namespace hstream
