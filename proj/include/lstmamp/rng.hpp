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

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace lstmamp {

// Deterministic random source. The engine is mt19937_64 (seedable, portable);
// the uniform/gaussian transforms are spelled out here instead of using
// std::*_distribution, whose output is implementation-defined and would break
// cross-platform stream equality. Changing either the engine or a transform
// changes every seeded experiment, so both are frozen.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1), 53-bit resolution
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // [lo, hi)
  double uniform(double lo, double hi) {
    if (!(lo < hi))
      throw std::invalid_argument("Rng::uniform: lo must be < hi");
    return lo + (hi - lo) * unit();
  }

  double gaussian(double mean, double stddev) {
    if (stddev < 0.0)
      throw std::invalid_argument("Rng::gaussian: stddev must be >= 0");
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    // Box-Muller; u1 in (0,1]
    const double u1 = 1.0 - unit();
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * (r * std::cos(theta));
  }

  // [0, n), unbiased via rejection
  std::size_t index(std::size_t n) {
    if (n == 0)
      throw std::invalid_argument("Rng::index: n must be > 0");
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw;
    do {
      draw = eng_();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % bound);
  }

  // Fisher-Yates with the portable index() above (std::shuffle is
  // implementation-defined).
  template <typename V>
  void shuffle(V& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[index(i)]);
  }

private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

} // namespace lstmamp
