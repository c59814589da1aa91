// Copyright 2026 The elmrace Authors
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

namespace elmrace {

// Malformed input files (bad rows, missing keys). Carries a message with
// file/line context where available.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid input that violates a domain invariant
// (open centerline, non-positive width, inconsistent shapes).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered inside a numerical integration step.
class IntegrationError : public std::runtime_error {
 public:
  explicit IntegrationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Optimizer failed to produce a usable iterate.
class SolveError : public std::runtime_error {
 public:
  explicit SolveError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace elmrace
