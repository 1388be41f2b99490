// Copyright 2026 the lstmamp authors
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

namespace lstmamp {

// Shape/dimension contract violations.
struct dim_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Filesystem and OS-level failures.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed model or audio files. Each failure mode carries its own code so
// callers can tell a wrong file apart from a damaged one.
class format_error : public std::runtime_error {
public:
  enum class kind {
    bad_magic,
    bad_version,
    bad_header,
    unsupported_codec,
    truncated,
    non_finite,
  };

  format_error(kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  kind code() const noexcept { return kind_; }

private:
  kind kind_;
};

// Non-finite values where finite ones are required.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace lstmamp
