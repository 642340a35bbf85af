// Copyright 2026 The muse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace muse {

// Base of every error the library throws. The CLI maps UsageError and
// ConfigError to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes or invalid settings detected while wiring a computation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed data handed to an otherwise valid computation.
class InputError : public Error {
 public:
  using Error::Error;
};

// An API called in a state where the call makes no sense.
class UsageError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace muse
