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
#include <span>
#include <stdexcept>
#include <vector>

#include "error.hpp"

namespace lstmamp {

// Reference tube-amp stand-in: a Wiener-Hammerstein cascade (pre-emphasis ->
// static waveshaper -> one-pole low-pass). Deterministic and cheap, so it
// doubles as the ground-truth oracle for every training and acceptance run.
// The coefficients are frozen; changing them changes every reference number.
struct AmpParams {
  double pre_coeff = 0.5;  // pre-emphasis zero
  double post_coeff = 0.6; // one-pole low-pass beta

  void validate() const {
    if (pre_coeff < 0.0 || pre_coeff >= 1.0)
      throw std::invalid_argument("AmpParams: pre_coeff must be in [0,1)");
    if (post_coeff <= 0.0 || post_coeff > 1.0)
      throw std::invalid_argument("AmpParams: post_coeff must be in (0,1]");
  }
};

// Odd, monotone waveshaper: v = tanh(g*u)/tanh(g) with g = 1 + gain_knob.
// Normalized so v(1) = 1 at every knob setting; more knob, more curvature.
inline double amp_static_nl(double u, double gain_knob) {
  if (gain_knob < 0.0 || gain_knob > 10.0)
    throw std::invalid_argument("amp_static_nl: gain_knob must be in [0,10]");
  const double g = 1.0 + gain_knob;
  return std::tanh(g * u) / std::tanh(g);
}

// Full cascade, causal, state starts at zero:
//   u[n] = x[n] - pre * x[n-1]
//   v[n] = tanh(g*u[n]) / tanh(g)
//   y[n] = beta * v[n] + (1 - beta) * y[n-1]
inline std::vector<double> amp_process(std::span<const double> x, double gain_knob,
                                       const AmpParams& amp = {}) {
  amp.validate();
  if (gain_knob < 0.0 || gain_knob > 10.0)
    throw std::invalid_argument("amp_process: gain_knob must be in [0,10]");

  const double g = 1.0 + gain_knob;
  const double nl_scale = 1.0 / std::tanh(g);
  std::vector<double> y(x.size());
  double x_prev = 0.0;
  double y_prev = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (!std::isfinite(x[n]))
      throw numeric_error("amp_process: non-finite input at sample " + std::to_string(n));
    const double u = x[n] - amp.pre_coeff * x_prev;
    const double v = std::tanh(g * u) * nl_scale;
    y[n] = amp.post_coeff * v + (1.0 - amp.post_coeff) * y_prev;
    x_prev = x[n];
    y_prev = y[n];
  }
  return y;
}

} // namespace lstmamp
