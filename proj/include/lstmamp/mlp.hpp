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

#include <vector>

#include "training.hpp"

namespace lstmamp {

// Feed-forward comparison model: tanh hidden layers on the flattened
// [num_step x num_feature] window, affine scalar head. Exists to show what
// the recurrent model buys on the same data.

struct MlpLayer {
  Mat<double> W;
  Vec<double> b;
};

struct MlpParams {
  using scalar = double;

  std::vector<MlpLayer> layers; // last layer has a single output row

  static MlpParams zeros(std::size_t input_dim, const std::vector<std::size_t>& hidden) {
    MlpParams p;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
      p.layers.push_back({Mat<double>(h, in), Vec<double>(h, 0.0)});
      in = h;
    }
    p.layers.push_back({Mat<double>(1, in), Vec<double>(1, 0.0)});
    return p;
  }

  std::size_t input_dim() const { return layers.front().W.cols; }
};

template <typename F>
void for_each_block(MlpParams& p, F&& f) {
  for (auto& l : p.layers) {
    f(l.W.data);
    f(l.b);
  }
}

template <typename F>
void for_each_block(const MlpParams& p, F&& f) {
  for (const auto& l : p.layers) {
    f(l.W.data);
    f(l.b);
  }
}

inline MlpParams init_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                          InitScheme scheme, Rng& rng) {
  auto p = MlpParams::zeros(input_dim, hidden);
  for (auto& l : p.layers) {
    const std::size_t fan_in = l.W.cols;
    const std::size_t fan_out = l.W.rows;
    if (scheme == InitScheme::xavier) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (double& w : l.W.data)
        w = rng.uniform(-bound, bound);
    } else {
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& w : l.W.data)
        w = rng.gaussian(0.0, stddev);
    }
  }
  return p;
}

struct MlpWorkspace {
  std::vector<std::vector<double>> acts; // acts[k] = output of layer k (post-tanh)
  std::vector<std::vector<double>> dz;   // preactivation gradients

  void configure(const MlpParams& p) {
    acts.clear();
    dz.clear();
    for (const auto& l : p.layers) {
      acts.emplace_back(l.W.rows, 0.0);
      dz.emplace_back(l.W.rows, 0.0);
    }
  }
};

inline double mlp_forward(const MlpParams& p, std::span<const double> input, MlpWorkspace& ws) {
  std::span<const double> a = input;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& l = p.layers[k];
    matvec_into(l.W, a, std::span<double>(ws.acts[k]));
    const bool last = k + 1 == p.layers.size();
    for (std::size_t r = 0; r < ws.acts[k].size(); ++r) {
      ws.acts[k][r] += l.b[r];
      if (!last)
        ws.acts[k][r] = std::tanh(ws.acts[k][r]);
    }
    a = std::span<const double>(ws.acts[k]);
  }
  return ws.acts.back()[0];
}

inline double mlp_forward(const MlpParams& p, std::span<const double> input) {
  MlpWorkspace ws;
  ws.configure(p);
  return mlp_forward(p, input, ws);
}

// Adds d((pred-target)^2)/dw of one flattened window into grads, returns the
// squared error.
inline double mlp_backprop_window(const MlpParams& p, std::span<const double> input, double target,
                                  MlpParams& grads, MlpWorkspace& ws) {
  const double pred = mlp_forward(p, input, ws);
  if (!std::isfinite(pred))
    throw numeric_error("mlp_backprop: non-finite prediction");
  const double err = pred - target;

  const std::size_t last = p.layers.size() - 1;
  ws.dz[last][0] = 2.0 * err;
  for (std::size_t k = last + 1; k-- > 0;) {
    const auto& l = p.layers[k];
    auto& gl = grads.layers[k];
    std::span<const double> below =
        k == 0 ? input : std::span<const double>(ws.acts[k - 1]);
    add_outer(gl.W, std::span<const double>(ws.dz[k]), below);
    for (std::size_t r = 0; r < l.b.size(); ++r)
      gl.b[r] += ws.dz[k][r];
    if (k == 0)
      break;
    std::fill(ws.dz[k - 1].begin(), ws.dz[k - 1].end(), 0.0);
    matvec_t_accum(l.W, std::span<const double>(ws.dz[k]), std::span<double>(ws.dz[k - 1]));
    for (std::size_t r = 0; r < ws.dz[k - 1].size(); ++r) {
      const double a = ws.acts[k - 1][r];
      ws.dz[k - 1][r] *= 1.0 - a * a; // tanh'
    }
  }
  return err * err;
}

// grads <- d(mean squared error)/dw over the batch; returns the batch MSE.
inline double mlp_backprop_batch(const MlpParams& p, const WindowBatch<double>& batch,
                                 MlpParams& grads, MlpWorkspace& ws) {
  if (batch.batch_size == 0)
    throw dim_error("mlp_backprop_batch: empty batch");
  for_each_param(grads, [](double& w) { w = 0.0; });
  double err_sq = 0.0;
  for (std::size_t b = 0; b < batch.batch_size; ++b)
    err_sq += mlp_backprop_window(p, batch.window(b), batch.targets[b], grads, ws);
  const double inv_b = 1.0 / static_cast<double>(batch.batch_size);
  for_each_param(grads, [&](double& w) { w *= inv_b; });
  return err_sq * inv_b;
}

struct MlpTrainOps {
  using Params = MlpParams;

  Params params;
  MlpWorkspace ws;
  std::size_t num_step, num_feature;

  MlpTrainOps(Params p, std::size_t steps, std::size_t features)
      : params(std::move(p)), num_step(steps), num_feature(features) {
    ws.configure(params);
  }

  Params zero_grads() const {
    Params z = params;
    for_each_param(z, [](double& w) { w = 0.0; });
    return z;
  }

  double backward(const WindowBatch<double>& batch, Rng&, Params& grads) {
    return mlp_backprop_batch(params, batch, grads, ws);
  }

  EvalSums evaluate(const Dataset& ds, const std::vector<SplitRange>& ranges, std::size_t stride) {
    EvalSums sums;
    std::vector<double> window(num_step * num_feature);
    for (const auto& r : ranges)
      for (std::size_t n = r.begin; n < r.end; n += stride) {
        fill_window(ds, n, num_step, num_feature, std::span<double>(window));
        const double pred = mlp_forward(params, std::span<const double>(window), ws);
        const double tgt = ds.target.samples[n];
        sums.err_sq += (pred - tgt) * (pred - tgt);
        sums.tgt_sq += tgt * tgt;
        sums.count += 1;
      }
    return sums;
  }
};

struct MlpBaselineResult {
  MlpParams params;
  double validation_rmse_percent = 0.0;
  TrainHistory history;
};

// Trains the baseline with the same epoch loop and reports its validation
// relative RMSE for comparison against the recurrent model.
inline MlpBaselineResult mlp_baseline(const ModelConfig& cfg, const TrainConfig& tcfg,
                                      const Dataset& ds,
                                      const std::vector<std::size_t>& hidden = {64, 64, 64},
                                      Deadline deadline = {}) {
  cfg.validate();
  Rng rng(tcfg.seed);
  MlpTrainOps ops(init_mlp(cfg.window_len(), hidden, tcfg.init_scheme, rng), cfg.num_step,
                  cfg.num_feature);
  auto outcome = run_train_loop(ops, tcfg, ds, cfg.num_step, cfg.num_feature, rng, deadline);

  MlpTrainOps best(std::move(outcome.params), cfg.num_step, cfg.num_feature);
  const auto sums = best.evaluate(ds, ds.validation_split, 1);
  if (sums.tgt_sq == 0.0)
    throw numeric_error("mlp_baseline: zero-energy validation target");
  MlpBaselineResult res;
  res.params = std::move(best.params);
  res.validation_rmse_percent = 100.0 * std::sqrt(sums.err_sq / sums.tgt_sq);
  res.history = std::move(outcome.history);
  return res;
}

} // namespace lstmamp
