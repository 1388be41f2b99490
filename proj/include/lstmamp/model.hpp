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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace lstmamp {

struct ModelConfig {
  std::size_t num_step = 100;    // window length: chained cell steps per prediction
  std::size_t num_hidden = 24;   // hidden units per layer
  std::size_t num_layer = 1;     // stacked layers, 1 or 2
  std::size_t num_feature = 1;   // 1 = audio only, 2 = audio + gain
  std::uint32_t sample_rate = 44100;

  std::size_t layer_input_dim(std::size_t layer) const {
    return layer == 0 ? num_feature : num_hidden;
  }

  std::size_t window_len() const { return num_step * num_feature; }

  void validate() const {
    if (num_step < 1 || num_hidden < 1 || sample_rate < 1)
      throw dim_error("ModelConfig: counts must be >= 1");
    if (num_layer < 1 || num_layer > 2)
      throw dim_error("ModelConfig: num_layer must be 1 or 2");
    if (num_feature < 1 || num_feature > 2)
      throw dim_error("ModelConfig: num_feature must be 1 or 2");
  }

  bool operator==(const ModelConfig&) const = default;
};

// One stacked layer: the four gate blocks of the cell. W_* act on the step
// input, U_* on the recurrent h, b_* are biases. f = forget, i = input,
// o = output, g = candidate.
template <typename T>
struct LstmLayerParams {
  Mat<T> W_f, W_i, W_o, W_g; // [num_hidden x input_dim]
  Mat<T> U_f, U_i, U_o, U_g; // [num_hidden x num_hidden]
  Vec<T> b_f, b_i, b_o, b_g; // [num_hidden]

  static LstmLayerParams zeros(std::size_t hidden, std::size_t input_dim) {
    LstmLayerParams p;
    p.W_f = p.W_i = p.W_o = p.W_g = Mat<T>(hidden, input_dim);
    p.U_f = p.U_i = p.U_o = p.U_g = Mat<T>(hidden, hidden);
    p.b_f = p.b_i = p.b_o = p.b_g = Vec<T>(hidden, T(0));
    return p;
  }
};

// Affine projection of the last h down to one sample.
template <typename T>
struct OutputParams {
  Mat<T> W_out; // [1 x num_hidden]
  Vec<T> b_out; // [1]
};

template <typename T>
struct LstmParams {
  using scalar = T;

  std::vector<LstmLayerParams<T>> layers;
  OutputParams<T> output;

  static LstmParams zeros(const ModelConfig& cfg) {
    cfg.validate();
    LstmParams p;
    for (std::size_t l = 0; l < cfg.num_layer; ++l)
      p.layers.push_back(LstmLayerParams<T>::zeros(cfg.num_hidden, cfg.layer_input_dim(l)));
    p.output.W_out = Mat<T>(1, cfg.num_hidden);
    p.output.b_out = Vec<T>(1, T(0));
    return p;
  }
};

// Recurrent state of one layer: c is the long-term cell state, h the
// short-term output state.
template <typename T>
struct CellState {
  Vec<T> c;
  Vec<T> h;

  static CellState zeros(std::size_t hidden) { return {Vec<T>(hidden, T(0)), Vec<T>(hidden, T(0))}; }

  void reset() {
    std::fill(c.begin(), c.end(), T(0));
    std::fill(h.begin(), h.end(), T(0));
  }
};

// Activated gate values of one step. Doubles as preactivation scratch, so a
// caller that keeps one of these alive makes the step allocation-free.
template <typename T>
struct GateActs {
  Vec<T> f, i, o, g;

  explicit GateActs(std::size_t hidden = 0)
      : f(hidden, T(0)), i(hidden, T(0)), o(hidden, T(0)), g(hidden, T(0)) {}

  void resize(std::size_t hidden) {
    f.assign(hidden, T(0));
    i.assign(hidden, T(0));
    o.assign(hidden, T(0));
    g.assign(hidden, T(0));
  }
};

// One cell step:
//   f = sigm(W_f x + U_f h + b_f)    keeps part of the old cell state
//   i = sigm(W_i x + U_i h + b_i)    admits part of the candidate
//   o = sigm(W_o x + U_o h + b_o)    releases part of the state
//   g = tanh(W_g x + U_g h + b_g)    candidate
//   c <- f*c + i*g,  h <- o*tanh(c)
// Updates `state` in place; gate values stay in `gates` for callers that
// need them (backprop, property tests).
template <typename T>
void lstm_cell_step(const LstmLayerParams<T>& p, std::span<const T> x, CellState<T>& state,
                    GateActs<T>& gates) {
  const std::size_t hidden = p.b_f.size();
  if (x.size() != p.W_f.cols)
    throw dim_error("lstm_cell_step: input has " + std::to_string(x.size()) +
                    " entries, layer expects " + std::to_string(p.W_f.cols));
  if (state.c.size() != hidden || state.h.size() != hidden)
    throw dim_error("lstm_cell_step: state size mismatch");

  auto preact = [&](const Mat<T>& w, const Mat<T>& u, const Vec<T>& b, Vec<T>& out) {
    for (std::size_t r = 0; r < hidden; ++r) {
      const T* wrow = w.data.data() + r * w.cols;
      const T* urow = u.data.data() + r * u.cols;
      T acc = b[r];
      for (std::size_t j = 0; j < x.size(); ++j)
        acc += wrow[j] * x[j];
      for (std::size_t j = 0; j < hidden; ++j)
        acc += urow[j] * state.h[j];
      out[r] = acc;
    }
  };

  preact(p.W_f, p.U_f, p.b_f, gates.f);
  preact(p.W_i, p.U_i, p.b_i, gates.i);
  preact(p.W_o, p.U_o, p.b_o, gates.o);
  preact(p.W_g, p.U_g, p.b_g, gates.g);

  for (std::size_t r = 0; r < hidden; ++r) {
    gates.f[r] = sigmoid(gates.f[r]);
    gates.i[r] = sigmoid(gates.i[r]);
    gates.o[r] = sigmoid(gates.o[r]);
    gates.g[r] = tanh_act(gates.g[r]);
    state.c[r] = gates.f[r] * state.c[r] + gates.i[r] * gates.g[r];
    state.h[r] = gates.o[r] * tanh_act(state.c[r]);
  }
}

// Per-layer states plus shared gate scratch for a full window pass. Reusable
// across windows; reset() zeroes the states (the per-window convention).
template <typename T>
struct ForwardScratch {
  std::vector<CellState<T>> states;
  GateActs<T> gates;

  ForwardScratch() = default;
  explicit ForwardScratch(const ModelConfig& cfg) { configure(cfg); }

  void configure(const ModelConfig& cfg) {
    states.assign(cfg.num_layer, CellState<T>::zeros(cfg.num_hidden));
    gates.resize(cfg.num_hidden);
  }

  void reset() {
    for (auto& s : states)
      s.reset();
  }
};

// Unrolls the window: every layer starts from zero state, layer k feeds its h
// to layer k+1, and the last h of the top layer goes through the output
// projection. `window` is row-major [num_step x num_feature].
template <typename T>
T forward_window_with(const ModelConfig& cfg, const LstmParams<T>& params,
                      std::span<const T> window, ForwardScratch<T>& scratch) {
  if (window.size() != cfg.window_len())
    throw dim_error("forward_window: window has " + std::to_string(window.size()) +
                    " values, expected " + std::to_string(cfg.window_len()));
  if (params.layers.size() != cfg.num_layer)
    throw dim_error("forward_window: params/config layer count mismatch");

  scratch.reset();
  for (std::size_t s = 0; s < cfg.num_step; ++s) {
    std::span<const T> input = window.subspan(s * cfg.num_feature, cfg.num_feature);
    for (std::size_t l = 0; l < cfg.num_layer; ++l) {
      lstm_cell_step(params.layers[l], input, scratch.states[l], scratch.gates);
      input = std::span<const T>(scratch.states[l].h);
    }
  }
  const auto& h_last = scratch.states[cfg.num_layer - 1].h;
  return dot(std::span<const T>(params.output.W_out.data), std::span<const T>(h_last)) +
         params.output.b_out[0];
}

template <typename T>
T forward_window(const ModelConfig& cfg, const LstmParams<T>& params, std::span<const T> window) {
  ForwardScratch<T> scratch(cfg);
  return forward_window_with(cfg, params, window, scratch);
}

// One prediction per row of a [batch x num_step x num_feature] tensor.
template <typename T>
Vec<T> forward_batch(const ModelConfig& cfg, const LstmParams<T>& params,
                     std::span<const T> tensor, std::size_t batch_size) {
  if (tensor.size() != batch_size * cfg.window_len())
    throw dim_error("forward_batch: tensor size does not match batch layout");
  ForwardScratch<T> scratch(cfg);
  Vec<T> preds(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b)
    preds[b] = forward_window_with(cfg, params, tensor.subspan(b * cfg.window_len(), cfg.window_len()),
                                   scratch);
  return preds;
}

// --- parameter traversal ------------------------------------------------
//
// Canonical block order, also the persistence order: per layer
// W_f W_i W_o W_g U_f U_i U_o U_g b_f b_i b_o b_g, then W_out, b_out.

template <typename T, typename F>
void for_each_block(LstmParams<T>& p, F&& f) {
  for (auto& l : p.layers) {
    f(l.W_f.data); f(l.W_i.data); f(l.W_o.data); f(l.W_g.data);
    f(l.U_f.data); f(l.U_i.data); f(l.U_o.data); f(l.U_g.data);
    f(l.b_f); f(l.b_i); f(l.b_o); f(l.b_g);
  }
  f(p.output.W_out.data);
  f(p.output.b_out);
}

template <typename T, typename F>
void for_each_block(const LstmParams<T>& p, F&& f) {
  for (const auto& l : p.layers) {
    f(l.W_f.data); f(l.W_i.data); f(l.W_o.data); f(l.W_g.data);
    f(l.U_f.data); f(l.U_i.data); f(l.U_o.data); f(l.U_g.data);
    f(l.b_f); f(l.b_i); f(l.b_o); f(l.b_g);
  }
  f(p.output.W_out.data);
  f(p.output.b_out);
}

template <typename P>
std::size_t param_count(const P& p) {
  std::size_t n = 0;
  for_each_block(p, [&](const auto& block) { n += block.size(); });
  return n;
}

template <typename P, typename F>
void for_each_param(P& p, F&& f) {
  for_each_block(p, [&](auto& block) {
    for (auto& w : block)
      f(w);
  });
}

// Lockstep walk of two same-shaped parameter sets (weights and gradients).
template <typename P, typename F>
void for_each_param2(P& a, const P& b, F&& f) {
  using T = typename P::scalar;
  std::vector<std::vector<T>*> av;
  std::vector<const std::vector<T>*> bv;
  for_each_block(a, [&](std::vector<T>& blk) { av.push_back(&blk); });
  for_each_block(b, [&](const std::vector<T>& blk) { bv.push_back(&blk); });
  for (std::size_t k = 0; k < av.size(); ++k) {
    auto& x = *av[k];
    const auto& y = *bv[k];
    if (x.size() != y.size())
      throw dim_error("for_each_param2: shape mismatch");
    for (std::size_t j = 0; j < x.size(); ++j)
      f(x[j], y[j]);
  }
}

// Flat index access, test/tooling convenience (O(blocks) per call).
template <typename P>
double& param_at(P& p, std::size_t idx) {
  double* found = nullptr;
  std::size_t seen = 0;
  for_each_block(p, [&](std::vector<double>& blk) {
    if (found)
      return;
    if (idx < seen + blk.size())
      found = &blk[idx - seen];
    seen += blk.size();
  });
  if (!found)
    throw dim_error("param_at: index out of range");
  return *found;
}

template <typename To, typename From>
LstmParams<To> cast_params(const LstmParams<From>& src) {
  LstmParams<To> dst;
  auto cast_mat = [](const Mat<From>& m) {
    Mat<To> r(m.rows, m.cols);
    for (std::size_t k = 0; k < m.data.size(); ++k)
      r.data[k] = static_cast<To>(m.data[k]);
    return r;
  };
  auto cast_vec = [](const Vec<From>& v) {
    Vec<To> r(v.size());
    for (std::size_t k = 0; k < v.size(); ++k)
      r[k] = static_cast<To>(v[k]);
    return r;
  };
  for (const auto& l : src.layers) {
    LstmLayerParams<To> d;
    d.W_f = cast_mat(l.W_f); d.W_i = cast_mat(l.W_i); d.W_o = cast_mat(l.W_o); d.W_g = cast_mat(l.W_g);
    d.U_f = cast_mat(l.U_f); d.U_i = cast_mat(l.U_i); d.U_o = cast_mat(l.U_o); d.U_g = cast_mat(l.U_g);
    d.b_f = cast_vec(l.b_f); d.b_i = cast_vec(l.b_i); d.b_o = cast_vec(l.b_o); d.b_g = cast_vec(l.b_g);
    dst.layers.push_back(std::move(d));
  }
  dst.output.W_out = cast_mat(src.output.W_out);
  dst.output.b_out = cast_vec(src.output.b_out);
  return dst;
}

template <typename P>
bool params_finite(const P& p) {
  bool ok = true;
  for_each_block(p, [&](const auto& blk) {
    for (auto w : blk)
      if (!std::isfinite(static_cast<double>(w)))
        ok = false;
  });
  return ok;
}

} // namespace lstmamp
