/* Copyright 2026 The onesided Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ONESIDED_ERRORS_H_
#define ONESIDED_ERRORS_H_

#include <stdexcept>
#include <string>

namespace onesided {

// Root of every error raised by the runtime.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid world geometry, topology, scenario or partition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Symmetric heap or signal pad exhausted.
class AllocError : public Error {
 public:
  using Error::Error;
};

// Bad rank, signal index, element width or shape.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Byte range outside a symmetric or local region.
class RangeError : public Error {
 public:
  using Error::Error;
};

// A blocking wait timed out, a deadlock was detected, or the world was
// cancelled by another task's fault.
class SyncFault : public Error {
 public:
  using Error::Error;
};

// API misuse: double token consumption, cross-rank stream waits, role
// mismatches, signal reset while operations are in flight.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Worst-case receive buffers are too small for the request.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Every configuration failed during tuning, or the space is empty.
class TuningError : public Error {
 public:
  using Error::Error;
};

// Scatter time does not exceed point-to-point time, so no reduction
// bandwidth can hide the reduction.
class OverlapImpossible : public Error {
 public:
  using Error::Error;
};

}  // namespace onesided

#endif  // ONESIDED_ERRORS_H_
