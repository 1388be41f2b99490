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

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <thread>
#include <vector>

#include "dataset.hpp"
#include "error.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace lstmamp {

enum class Optimizer { sgd, adagrad, rmsprop, adam };
enum class InitScheme { xavier, he };

struct TrainConfig {
  std::size_t batch_size = 512;  // windows per gradient step
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  InitScheme init_scheme = InitScheme::xavier;
  double dropout_keep_prob = 1.0; // masks h between stacked layers only
  std::size_t max_epochs = 30;
  std::size_t patience = 5;      // epochs without test improvement before stop
  std::uint64_t seed = 1;
  std::size_t stride = 1;        // window advance for training and per-epoch test eval
  std::size_t n_threads = 0;     // 0 = hardware_concurrency
  double clip_norm = 5.0;        // global gradient norm safeguard

  std::size_t threads() const {
    if (n_threads != 0)
      return n_threads;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
  }

  void validate() const {
    if (batch_size < 1)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (!(dropout_keep_prob > 0.0 && dropout_keep_prob <= 1.0))
      throw std::invalid_argument("TrainConfig: keep_prob must be in (0,1]");
    if (max_epochs < 1)
      throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (stride < 1)
      throw std::invalid_argument("TrainConfig: stride must be >= 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0; // 1-based
  double train_mse = 0.0;
  double test_mse = 0.0;
  double wall_seconds = 0.0; // cumulative since training start
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  void write_csv(std::ostream& os) const {
    os << "epoch,train_mse,test_mse,wall_seconds\n";
    for (const auto& e : epochs) {
      os.precision(17);
      os << e.epoch << "," << e.train_mse << "," << e.test_mse << "," << e.wall_seconds << "\n";
    }
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os)
      throw io_error("TrainHistory: cannot write " + path.string());
    write_csv(os);
  }
};

struct train_divergence_error : numeric_error {
  TrainHistory history;

  train_divergence_error(const std::string& msg, TrainHistory h)
      : numeric_error(msg), history(std::move(h)) {}
};

// --- losses -----------------------------------------------------------------

inline double mse_loss(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size())
    throw dim_error("mse_loss: length mismatch");
  if (preds.empty())
    throw dim_error("mse_loss: empty inputs");
  double acc = 0.0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const double e = preds[k] - targets[k];
    acc += e * e;
  }
  return acc / static_cast<double>(preds.size());
}

// 100 * ||pred - target||_2 / ||target||_2. Scale-covariant, so the paper's
// "percent RMSE" is comparable across signals of different loudness.
inline double relative_rmse_percent(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw dim_error("relative_rmse_percent: length mismatch");
  if (pred.empty())
    throw dim_error("relative_rmse_percent: empty inputs");
  double err_sq = 0.0, tgt_sq = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double e = pred[k] - target[k];
    err_sq += e * e;
    tgt_sq += target[k] * target[k];
  }
  if (tgt_sq == 0.0)
    throw numeric_error("relative_rmse_percent: zero-energy target");
  return 100.0 * std::sqrt(err_sq / tgt_sq);
}

// --- initialization -----------------------------------------------------------

// Xavier: U(+-sqrt(6/(fan_in+fan_out))); He: N(0, sqrt(2/fan_in)). Biases stay
// zero except the forget-gate bias, which starts at 1 so early training does
// not wipe the long-term state.
inline LstmParams<double> init_params(const ModelConfig& cfg, InitScheme scheme, Rng& rng) {
  auto p = LstmParams<double>::zeros(cfg);
  auto fill = [&](Mat<double>& m, std::size_t fan_in, std::size_t fan_out) {
    if (scheme == InitScheme::xavier) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (double& w : m.data)
        w = rng.uniform(-bound, bound);
    } else {
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& w : m.data)
        w = rng.gaussian(0.0, stddev);
    }
  };
  for (std::size_t l = 0; l < cfg.num_layer; ++l) {
    auto& lay = p.layers[l];
    const std::size_t in = cfg.layer_input_dim(l);
    fill(lay.W_f, in, cfg.num_hidden);
    fill(lay.W_i, in, cfg.num_hidden);
    fill(lay.W_o, in, cfg.num_hidden);
    fill(lay.W_g, in, cfg.num_hidden);
    fill(lay.U_f, cfg.num_hidden, cfg.num_hidden);
    fill(lay.U_i, cfg.num_hidden, cfg.num_hidden);
    fill(lay.U_o, cfg.num_hidden, cfg.num_hidden);
    fill(lay.U_g, cfg.num_hidden, cfg.num_hidden);
    std::fill(lay.b_f.begin(), lay.b_f.end(), 1.0);
  }
  fill(p.output.W_out, cfg.num_hidden, 1);
  return p;
}

// --- truncated BPTT -----------------------------------------------------------

// Per-window caches for one unrolled pass. Sized once, reused across windows;
// each worker thread owns one.
struct BpttWorkspace {
  ModelConfig cfg;
  // forward caches, per layer, flattened [num_step * num_hidden]
  std::vector<std::vector<double>> f, i, o, g, c, h, tanh_c;
  std::vector<std::vector<double>> layer_in; // inputs of layers >= 1 when dropout rewrites them
  std::vector<std::vector<double>> mask;     // dropout mask per layer boundary
  // backward scratch
  std::vector<double> dh_in, dx_out;                     // [num_step * num_hidden]
  std::vector<double> dh, dc, dzf, dzi, dzo, dzg;        // [num_hidden]
  std::vector<double> dh_rec, dc_rec, zeros;             // [num_hidden]
  std::vector<CellState<double>> states;
  GateActs<double> gates;

  void configure(const ModelConfig& c_) {
    cfg = c_;
    const std::size_t sh = cfg.num_step * cfg.num_hidden;
    auto layers_of = [&](std::vector<std::vector<double>>& v) {
      v.assign(cfg.num_layer, std::vector<double>(sh, 0.0));
    };
    layers_of(f); layers_of(i); layers_of(o); layers_of(g);
    layers_of(c); layers_of(h); layers_of(tanh_c);
    layer_in.assign(cfg.num_layer, {});
    for (std::size_t l = 1; l < cfg.num_layer; ++l)
      layer_in[l].assign(sh, 0.0);
    mask.assign(cfg.num_layer > 1 ? cfg.num_layer - 1 : 0, std::vector<double>(cfg.num_hidden, 1.0));
    dh_in.assign(sh, 0.0);
    dx_out.assign(sh, 0.0);
    dh.assign(cfg.num_hidden, 0.0);
    dc.assign(cfg.num_hidden, 0.0);
    dzf.assign(cfg.num_hidden, 0.0);
    dzi.assign(cfg.num_hidden, 0.0);
    dzo.assign(cfg.num_hidden, 0.0);
    dzg.assign(cfg.num_hidden, 0.0);
    dh_rec.assign(cfg.num_hidden, 0.0);
    dc_rec.assign(cfg.num_hidden, 0.0);
    zeros.assign(cfg.num_hidden, 0.0);
    states.assign(cfg.num_layer, CellState<double>::zeros(cfg.num_hidden));
    gates.resize(cfg.num_hidden);
  }
};

namespace detail {

inline void find_non_finite(const BpttWorkspace& ws, std::size_t& layer, std::size_t& step) {
  for (std::size_t l = 0; l < ws.cfg.num_layer; ++l)
    for (std::size_t t = 0; t < ws.cfg.num_step; ++t)
      for (std::size_t r = 0; r < ws.cfg.num_hidden; ++r)
        if (!std::isfinite(ws.h[l][t * ws.cfg.num_hidden + r]) ||
            !std::isfinite(ws.c[l][t * ws.cfg.num_hidden + r])) {
          layer = l;
          step = t;
          return;
        }
  layer = ws.cfg.num_layer;
  step = ws.cfg.num_step;
}

} // namespace detail

// Adds d((pred-target)^2)/dw of one window into `grads` and returns the
// squared error. Dropout, when active, masks the h handed between stacked
// layers (same mask at every step of the window), scaled by 1/keep_prob; the
// recurrent path inside a layer is never masked.
inline double backprop_window(const ModelConfig& cfg, const LstmParams<double>& params,
                              std::span<const double> window, double target, double keep_prob,
                              std::uint64_t mask_seed, LstmParams<double>& grads,
                              BpttWorkspace& ws) {
  const std::size_t S = cfg.num_step;
  const std::size_t H = cfg.num_hidden;
  const std::size_t L = cfg.num_layer;
  const bool dropout = keep_prob < 1.0;

  if (dropout) {
    Rng mask_rng(mask_seed);
    for (std::size_t l = 0; l + 1 < L; ++l)
      for (std::size_t r = 0; r < H; ++r)
        ws.mask[l][r] = mask_rng.unit() < keep_prob ? 1.0 : 0.0;
  }

  // forward, caching gate activations and states
  for (auto& st : ws.states)
    st.reset();
  for (std::size_t t = 0; t < S; ++t) {
    std::span<const double> x = window.subspan(t * cfg.num_feature, cfg.num_feature);
    for (std::size_t l = 0; l < L; ++l) {
      lstm_cell_step(params.layers[l], x, ws.states[l], ws.gates);
      double* frow = ws.f[l].data() + t * H;
      double* irow = ws.i[l].data() + t * H;
      double* orow = ws.o[l].data() + t * H;
      double* grow = ws.g[l].data() + t * H;
      double* crow = ws.c[l].data() + t * H;
      double* hrow = ws.h[l].data() + t * H;
      double* tcrow = ws.tanh_c[l].data() + t * H;
      for (std::size_t r = 0; r < H; ++r) {
        frow[r] = ws.gates.f[r];
        irow[r] = ws.gates.i[r];
        orow[r] = ws.gates.o[r];
        grow[r] = ws.gates.g[r];
        crow[r] = ws.states[l].c[r];
        hrow[r] = ws.states[l].h[r];
        tcrow[r] = std::tanh(crow[r]);
      }
      if (l + 1 < L) {
        if (dropout) {
          double* in_row = ws.layer_in[l + 1].data() + t * H;
          for (std::size_t r = 0; r < H; ++r)
            in_row[r] = hrow[r] * ws.mask[l][r] / keep_prob;
          x = {in_row, H};
        } else {
          x = {hrow, H};
        }
      }
    }
  }

  const double* h_top_last = ws.h[L - 1].data() + (S - 1) * H;
  double pred = params.output.b_out[0];
  for (std::size_t r = 0; r < H; ++r)
    pred += params.output.W_out.data[r] * h_top_last[r];

  if (!std::isfinite(pred)) {
    std::size_t bad_layer = 0, bad_step = 0;
    detail::find_non_finite(ws, bad_layer, bad_step);
    throw numeric_error("backprop: non-finite activation at layer " + std::to_string(bad_layer) +
                        ", step " + std::to_string(bad_step));
  }

  const double err = pred - target;
  const double dpred = 2.0 * err;

  // output projection
  for (std::size_t r = 0; r < H; ++r)
    grads.output.W_out.data[r] += dpred * h_top_last[r];
  grads.output.b_out[0] += dpred;

  // incoming dL/dh for the top layer: projection feeds only the last step
  std::fill(ws.dh_in.begin(), ws.dh_in.end(), 0.0);
  for (std::size_t r = 0; r < H; ++r)
    ws.dh_in[(S - 1) * H + r] = params.output.W_out.data[r] * dpred;

  for (std::size_t l = L; l-- > 0;) {
    const auto& lp = params.layers[l];
    auto& lg = grads.layers[l];
    std::fill(ws.dh_rec.begin(), ws.dh_rec.end(), 0.0);
    std::fill(ws.dc_rec.begin(), ws.dc_rec.end(), 0.0);
    if (l > 0)
      std::fill(ws.dx_out.begin(), ws.dx_out.end(), 0.0);

    for (std::size_t t = S; t-- > 0;) {
      const double* frow = ws.f[l].data() + t * H;
      const double* irow = ws.i[l].data() + t * H;
      const double* orow = ws.o[l].data() + t * H;
      const double* grow = ws.g[l].data() + t * H;
      const double* tcrow = ws.tanh_c[l].data() + t * H;
      const double* c_prev = t > 0 ? ws.c[l].data() + (t - 1) * H : ws.zeros.data();
      const double* h_prev = t > 0 ? ws.h[l].data() + (t - 1) * H : ws.zeros.data();

      for (std::size_t r = 0; r < H; ++r) {
        const double dh_r = ws.dh_in[t * H + r] + ws.dh_rec[r];
        const double dc_r = ws.dc_rec[r] + dh_r * orow[r] * (1.0 - tcrow[r] * tcrow[r]);
        ws.dzo[r] = dh_r * tcrow[r] * orow[r] * (1.0 - orow[r]);
        ws.dzf[r] = dc_r * c_prev[r] * frow[r] * (1.0 - frow[r]);
        ws.dzi[r] = dc_r * grow[r] * irow[r] * (1.0 - irow[r]);
        ws.dzg[r] = dc_r * irow[r] * (1.0 - grow[r] * grow[r]);
        ws.dc_rec[r] = dc_r * frow[r];
      }

      std::span<const double> x_t =
          l == 0 ? window.subspan(t * cfg.num_feature, cfg.num_feature)
                 : (dropout ? std::span<const double>(ws.layer_in[l].data() + t * H, H)
                            : std::span<const double>(ws.h[l - 1].data() + t * H, H));

      add_outer(lg.W_f, std::span<const double>(ws.dzf), x_t);
      add_outer(lg.W_i, std::span<const double>(ws.dzi), x_t);
      add_outer(lg.W_o, std::span<const double>(ws.dzo), x_t);
      add_outer(lg.W_g, std::span<const double>(ws.dzg), x_t);
      if (t > 0) {
        std::span<const double> hp(h_prev, H);
        add_outer(lg.U_f, std::span<const double>(ws.dzf), hp);
        add_outer(lg.U_i, std::span<const double>(ws.dzi), hp);
        add_outer(lg.U_o, std::span<const double>(ws.dzo), hp);
        add_outer(lg.U_g, std::span<const double>(ws.dzg), hp);
      }
      for (std::size_t r = 0; r < H; ++r) {
        lg.b_f[r] += ws.dzf[r];
        lg.b_i[r] += ws.dzi[r];
        lg.b_o[r] += ws.dzo[r];
        lg.b_g[r] += ws.dzg[r];
      }

      std::fill(ws.dh_rec.begin(), ws.dh_rec.end(), 0.0);
      matvec_t_accum(lp.U_f, std::span<const double>(ws.dzf), std::span<double>(ws.dh_rec));
      matvec_t_accum(lp.U_i, std::span<const double>(ws.dzi), std::span<double>(ws.dh_rec));
      matvec_t_accum(lp.U_o, std::span<const double>(ws.dzo), std::span<double>(ws.dh_rec));
      matvec_t_accum(lp.U_g, std::span<const double>(ws.dzg), std::span<double>(ws.dh_rec));

      if (l > 0) {
        std::span<double> dx(ws.dx_out.data() + t * H, H);
        matvec_t_accum(lp.W_f, std::span<const double>(ws.dzf), dx);
        matvec_t_accum(lp.W_i, std::span<const double>(ws.dzi), dx);
        matvec_t_accum(lp.W_o, std::span<const double>(ws.dzo), dx);
        matvec_t_accum(lp.W_g, std::span<const double>(ws.dzg), dx);
      }
    }

    if (l > 0) {
      // hand dx down through the dropout boundary
      for (std::size_t t = 0; t < S; ++t)
        for (std::size_t r = 0; r < H; ++r) {
          const double scale = dropout ? ws.mask[l - 1][r] / keep_prob : 1.0;
          ws.dh_in[t * H + r] = ws.dx_out[t * H + r] * scale;
        }
    }
  }

  return err * err;
}

// Gradient accumulation is chunked into a fixed number of groups merged in
// index order, so the result is bitwise identical for any worker count.
inline constexpr std::size_t kAccumChunks = 16;

// Batch gradient runner that owns per-chunk accumulators and per-thread
// workspaces, so repeated batches do not reallocate.
class BatchGradienter {
public:
  BatchGradienter(const ModelConfig& cfg, std::size_t n_threads)
      : cfg_(cfg), n_threads_(std::max<std::size_t>(1, n_threads)) {
    for (std::size_t k = 0; k < kAccumChunks; ++k)
      chunk_grads_.push_back(LstmParams<double>::zeros(cfg));
    workspaces_.resize(std::min(n_threads_, kAccumChunks));
    for (auto& ws : workspaces_)
      ws.configure(cfg);
  }

  // grads <- d(mean squared error)/dw over the batch; returns the batch MSE.
  double run(const LstmParams<double>& params, const WindowBatch<double>& batch, double keep_prob,
             Rng& rng, LstmParams<double>& grads) {
    const std::size_t B = batch.batch_size;
    if (B == 0)
      throw dim_error("backprop_batch: empty batch");
    if (batch.num_step != cfg_.num_step || batch.num_feature != cfg_.num_feature)
      throw dim_error("backprop_batch: batch shape does not match config");

    const std::uint64_t mask_base = keep_prob < 1.0 ? rng.next_u64() : 0;

    const std::size_t used_chunks = std::min(kAccumChunks, B);
    for (std::size_t k = 0; k < used_chunks; ++k)
      for_each_param(chunk_grads_[k], [](double& w) { w = 0.0; });
    chunk_loss_.assign(used_chunks, 0.0);

    auto chunk_bounds = [&](std::size_t k) {
      const std::size_t lo = k * B / used_chunks;
      const std::size_t hi = (k + 1) * B / used_chunks;
      return std::pair{lo, hi};
    };

    auto work = [&](std::size_t worker) {
      std::exception_ptr* slot = &errors_[worker];
      try {
        while (true) {
          const std::size_t k = next_chunk_.fetch_add(1);
          if (k >= used_chunks)
            break;
          auto [lo, hi] = chunk_bounds(k);
          for (std::size_t b = lo; b < hi; ++b)
            chunk_loss_[k] += backprop_window(cfg_, params, batch.window(b), batch.targets[b],
                                              keep_prob, mask_base + b, chunk_grads_[k],
                                              workspaces_[worker]);
        }
      } catch (...) {
        *slot = std::current_exception();
      }
    };

    next_chunk_.store(0);
    const std::size_t nw = std::min(workspaces_.size(), used_chunks);
    errors_.assign(nw, nullptr);
    if (nw <= 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 1; w < nw; ++w)
        pool.emplace_back(work, w);
      work(0);
      for (auto& th : pool)
        th.join();
    }
    for (auto& e : errors_)
      if (e)
        std::rethrow_exception(e);

    // ordered merge keeps the sum deterministic
    for_each_param(grads, [](double& w) { w = 0.0; });
    for (std::size_t k = 0; k < used_chunks; ++k)
      for_each_param2(grads, chunk_grads_[k], [](double& acc, double gk) { acc += gk; });
    const double inv_b = 1.0 / static_cast<double>(B);
    for_each_param(grads, [&](double& w) { w *= inv_b; });

    double loss = 0.0;
    for (std::size_t k = 0; k < used_chunks; ++k)
      loss += chunk_loss_[k];
    return loss * inv_b;
  }

private:
  ModelConfig cfg_;
  std::size_t n_threads_;
  std::vector<LstmParams<double>> chunk_grads_;
  std::vector<BpttWorkspace> workspaces_;
  std::vector<double> chunk_loss_;
  std::vector<std::exception_ptr> errors_;
  std::atomic<std::size_t> next_chunk_{0};
};

// One-shot convenience matching the module contract.
inline std::pair<double, LstmParams<double>> backprop_batch(const ModelConfig& cfg,
                                                            const LstmParams<double>& params,
                                                            const WindowBatch<double>& batch,
                                                            double keep_prob, Rng& rng) {
  BatchGradienter runner(cfg, 1);
  auto grads = LstmParams<double>::zeros(cfg);
  const double loss = runner.run(params, batch, keep_prob, rng, grads);
  return {loss, std::move(grads)};
}

// --- optimizers ----------------------------------------------------------------

struct OptimizerState {
  std::vector<double> m; // first moment / squared-gradient accumulator
  std::vector<double> v; // second moment
  std::uint64_t t = 0;   // completed steps

  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kRmsDecay = 0.9;
inline constexpr double kRmsEps = 1e-8;
inline constexpr double kAdagradEps = 1e-8;

template <typename Params>
void optimizer_step(Optimizer kind, OptimizerState& st, Params& params, const Params& grads,
                    double lr) {
  switch (kind) {
  case Optimizer::sgd: {
    for_each_param2(params, grads, [&](double& w, double g) { w -= lr * g; });
    break;
  }
  case Optimizer::adagrad: {
    std::size_t k = 0;
    for_each_param2(params, grads, [&](double& w, double g) {
      st.v[k] += g * g;
      w -= lr * g / (std::sqrt(st.v[k]) + kAdagradEps);
      ++k;
    });
    ++st.t;
    break;
  }
  case Optimizer::rmsprop: {
    std::size_t k = 0;
    for_each_param2(params, grads, [&](double& w, double g) {
      st.v[k] = kRmsDecay * st.v[k] + (1.0 - kRmsDecay) * g * g;
      w -= lr * g / (std::sqrt(st.v[k]) + kRmsEps);
      ++k;
    });
    ++st.t;
    break;
  }
  case Optimizer::adam: {
    ++st.t;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.t));
    std::size_t k = 0;
    for_each_param2(params, grads, [&](double& w, double g) {
      st.m[k] = kAdamBeta1 * st.m[k] + (1.0 - kAdamBeta1) * g;
      st.v[k] = kAdamBeta2 * st.v[k] + (1.0 - kAdamBeta2) * g * g;
      w -= lr * (st.m[k] / c1) / (std::sqrt(st.v[k] / c2) + kAdamEps);
      ++k;
    });
    break;
  }
  }
}

template <typename Params>
double clip_global_norm(Params& grads, double max_norm) {
  double sq = 0.0;
  for_each_param(grads, [&](double& g) { sq += g * g; });
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for_each_param(grads, [&](double& g) { g *= scale; });
  }
  return norm;
}

// --- evaluation -------------------------------------------------------------------

struct EvalSums {
  double err_sq = 0.0;
  double tgt_sq = 0.0;
  std::size_t count = 0;
};

// Forward-only sweep over the windows of the given ranges; chunked like the
// gradient pass so parallel results stay deterministic.
inline EvalSums evaluate_windows(const ModelConfig& cfg, const LstmParams<double>& params,
                                 const Dataset& ds, const std::vector<SplitRange>& ranges,
                                 std::size_t stride = 1, std::size_t n_threads = 1) {
  std::vector<std::size_t> idx;
  for (const auto& r : ranges)
    for (std::size_t n = r.begin; n < r.end; n += stride)
      idx.push_back(n);
  if (idx.empty())
    throw dim_error("evaluate_windows: empty range set");

  const std::size_t used_chunks = std::min(kAccumChunks, idx.size());
  std::vector<EvalSums> chunk_sums(used_chunks);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(std::max<std::size_t>(1, std::min(n_threads, used_chunks)),
                                         nullptr);

  auto work = [&](std::size_t worker) {
    try {
      ForwardScratch<double> scratch(cfg);
      std::vector<double> window(cfg.window_len());
      while (true) {
        const std::size_t k = next.fetch_add(1);
        if (k >= used_chunks)
          break;
        const std::size_t lo = k * idx.size() / used_chunks;
        const std::size_t hi = (k + 1) * idx.size() / used_chunks;
        for (std::size_t j = lo; j < hi; ++j) {
          const std::size_t n = idx[j];
          fill_window(ds, n, cfg.num_step, cfg.num_feature, std::span<double>(window));
          const double pred = forward_window_with(cfg, params, std::span<const double>(window), scratch);
          const double tgt = ds.target.samples[n];
          const double e = pred - tgt;
          chunk_sums[k].err_sq += e * e;
          chunk_sums[k].tgt_sq += tgt * tgt;
          chunk_sums[k].count += 1;
        }
      }
    } catch (...) {
      errors[worker] = std::current_exception();
    }
  };

  const std::size_t nw = errors.size();
  if (nw <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < nw; ++w)
      pool.emplace_back(work, w);
    work(0);
    for (auto& th : pool)
      th.join();
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);

  EvalSums total;
  for (const auto& s : chunk_sums) {
    total.err_sq += s.err_sq;
    total.tgt_sq += s.tgt_sq;
    total.count += s.count;
  }
  return total;
}

inline double eval_mse(const ModelConfig& cfg, const LstmParams<double>& params, const Dataset& ds,
                       const std::vector<SplitRange>& ranges, std::size_t stride = 1,
                       std::size_t n_threads = 1) {
  const auto s = evaluate_windows(cfg, params, ds, ranges, stride, n_threads);
  return s.err_sq / static_cast<double>(s.count);
}

inline double eval_rmse_percent(const ModelConfig& cfg, const LstmParams<double>& params,
                                const Dataset& ds, const std::vector<SplitRange>& ranges,
                                std::size_t stride = 1, std::size_t n_threads = 1) {
  const auto s = evaluate_windows(cfg, params, ds, ranges, stride, n_threads);
  if (s.tgt_sq == 0.0)
    throw numeric_error("eval_rmse_percent: zero-energy target");
  return 100.0 * std::sqrt(s.err_sq / s.tgt_sq);
}

// --- epoch loop -------------------------------------------------------------------

template <typename P>
struct TrainOutcome {
  P params; // best test-MSE snapshot
  TrainHistory history;
  double best_test_mse = 0.0;
  std::size_t best_epoch = 0;
};

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

// Shared epoch engine: shuffled batches, clip + optimizer step, per-epoch test
// MSE, early stopping on `patience`, optional wall-clock deadline checked at
// epoch boundaries (at least one epoch always runs). `Ops` supplies the model
// specifics: backward(batch, rng, grads) -> batch MSE, and
// evaluate(ds, ranges, stride) -> EvalSums.
template <typename Ops>
TrainOutcome<typename Ops::Params> run_train_loop(Ops& ops, const TrainConfig& tcfg,
                                                  const Dataset& ds, std::size_t num_step,
                                                  std::size_t num_feature, Rng& rng,
                                                  Deadline deadline = {}) {
  tcfg.validate();
  if (!ds.has_splits())
    throw dim_error("train: dataset has no splits");
  for (const auto& r : ds.train_split)
    if (r.size() < num_step + 1)
      throw dim_error("train: a training split is shorter than num_step+1");

  std::vector<std::size_t> indices;
  for (const auto& r : ds.train_split)
    for (std::size_t n = r.begin; n < r.end; n += tcfg.stride)
      indices.push_back(n);

  auto grads = ops.zero_grads();
  OptimizerState opt;
  opt.init(param_count(ops.params));

  TrainOutcome<typename Ops::Params> out;
  out.params = ops.params;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  const auto t0 = std::chrono::steady_clock::now();

  WindowBatch<double> batch;
  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    rng.shuffle(indices);

    double err_sum = 0.0;
    std::size_t err_count = 0;
    for (std::size_t start = 0; start < indices.size(); start += tcfg.batch_size) {
      const std::size_t count = std::min(tcfg.batch_size, indices.size() - start);
      batch.resize(count, num_step, num_feature);
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t n = indices[start + b];
        fill_window(ds, n, num_step, num_feature,
                    std::span<double>(batch.tensor.data() + b * batch.window_len(),
                                      batch.window_len()));
        batch.targets[b] = ds.target.samples[n];
      }

      const double batch_mse = ops.backward(batch, rng, grads);
      if (!std::isfinite(batch_mse))
        throw train_divergence_error("train: non-finite batch loss at epoch " +
                                         std::to_string(epoch),
                                     out.history);
      err_sum += batch_mse * static_cast<double>(count);
      err_count += count;

      clip_global_norm(grads, tcfg.clip_norm);
      optimizer_step(tcfg.optimizer, opt, ops.params, grads, tcfg.learning_rate);
    }

    const auto test_sums = ops.evaluate(ds, ds.test_split, tcfg.stride);
    const double test_mse = test_sums.err_sq / static_cast<double>(test_sums.count);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.history.epochs.push_back(
        {epoch, err_sum / static_cast<double>(err_count), test_mse, wall});

    if (!std::isfinite(test_mse))
      throw train_divergence_error("train: non-finite test MSE at epoch " + std::to_string(epoch),
                                   out.history);

    if (test_mse < best) {
      best = test_mse;
      out.params = ops.params;
      out.best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
    }
    if (bad_epochs >= tcfg.patience)
      break;
    if (deadline && std::chrono::steady_clock::now() >= *deadline)
      break;
  }

  out.best_test_mse = best;
  return out;
}

struct LstmTrainOps {
  using Params = LstmParams<double>;

  const ModelConfig& cfg;
  Params params;
  BatchGradienter runner;
  double keep_prob;
  std::size_t n_threads;

  LstmTrainOps(const ModelConfig& c, Params p, const TrainConfig& tcfg)
      : cfg(c), params(std::move(p)), runner(c, tcfg.threads()),
        keep_prob(tcfg.dropout_keep_prob), n_threads(tcfg.threads()) {}

  Params zero_grads() const { return Params::zeros(cfg); }

  double backward(const WindowBatch<double>& batch, Rng& rng, Params& grads) {
    return runner.run(params, batch, keep_prob, rng, grads);
  }

  EvalSums evaluate(const Dataset& ds, const std::vector<SplitRange>& ranges,
                    std::size_t stride) const {
    return evaluate_windows(cfg, params, ds, ranges, stride, n_threads);
  }
};

struct TrainResult {
  LstmParams<double> params;
  TrainHistory history;
  double best_test_mse = 0.0;
  std::size_t best_epoch = 0;
};

// Full training run: init, epochs with early stopping, best-snapshot return.
inline TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg, const Dataset& ds,
                         Deadline deadline = {}) {
  cfg.validate();
  tcfg.validate();
  Rng rng(tcfg.seed);
  LstmTrainOps ops(cfg, init_params(cfg, tcfg.init_scheme, rng), tcfg);
  auto outcome = run_train_loop(ops, tcfg, ds, cfg.num_step, cfg.num_feature, rng, deadline);
  return {std::move(outcome.params), std::move(outcome.history), outcome.best_test_mse,
          outcome.best_epoch};
}

} // namespace lstmamp
