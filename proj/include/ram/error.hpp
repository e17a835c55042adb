// ram/error.hpp

// Copyright 2026 The ram Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RAM_ERROR_HPP_
#define RAM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace ram {

/// A caller broke a documented precondition (shape mismatch, bad label, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure inside an algorithm (singular system, non-finite result).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const char* what) {
  if (!condition) throw ContractError(what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractError(what);
}

}  // namespace ram

#endif  // RAM_ERROR_HPP_
