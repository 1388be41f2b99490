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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "audio.hpp"
#include "error.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "surrogate.hpp"

namespace lstmamp {

// One contiguous stretch recorded at a fixed knob setting. Passes are
// independent signals: the amp state starts at zero for each, so windows
// never read across a pass boundary.
struct GainPass {
  std::size_t begin = 0;
  std::size_t end = 0; // exclusive
  double gain_knob = 0.0;
};

struct SplitRange {
  std::size_t begin = 0;
  std::size_t end = 0; // exclusive

  std::size_t size() const { return end - begin; }
};

enum class Split { train, test, validation };

// Aligned columns [x, g, target] plus the three-way split. g is the knob
// value normalized to [0,1].
struct Dataset {
  AudioSignal x;
  std::vector<double> g;
  AudioSignal target;
  std::vector<GainPass> passes;
  std::vector<SplitRange> train_split, test_split, validation_split;

  std::size_t size() const { return x.samples.size(); }

  bool has_splits() const { return !train_split.empty(); }

  const std::vector<SplitRange>& ranges(Split s) const {
    switch (s) {
    case Split::train: return train_split;
    case Split::test: return test_split;
    default: return validation_split;
    }
  }

  std::size_t pass_begin_of(std::size_t n) const {
    for (const auto& p : passes)
      if (n >= p.begin && n < p.end)
        return p.begin;
    return 0;
  }
};

// --- excitation synthesis -------------------------------------------------

// Plucked-string-like note: six decaying harmonics, 1/k amplitude, faster
// decay up the series. Harmonics near Nyquist are dropped.
inline void synth_note(std::vector<double>& buf, std::size_t offset, double f0, double dur_s,
                       std::uint32_t sample_rate) {
  const auto n = static_cast<std::size_t>(dur_s * sample_rate);
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int k = 1; k <= 6; ++k) {
    const double fk = k * f0;
    if (fk > 0.45 * sample_rate)
      break;
    const double tau = dur_s / (2.0 + 0.5 * k);
    const double amp = 1.0 / k;
    for (std::size_t idx = 0; idx < n && offset + idx < buf.size(); ++idx) {
      const double t = static_cast<double>(idx) / sample_rate;
      buf[offset + idx] += amp * std::exp(-t / tau) * std::sin(two_pi * fk * t);
    }
  }
}

// Guitar-like test signal: single notes and three-note chords tiling the
// duration, fundamentals drawn from [82, 660] Hz, peak-normalized to 0.9.
inline AudioSignal generate_excitation(double duration_s, std::uint32_t sample_rate, Rng& rng) {
  if (duration_s <= 0.0)
    throw std::invalid_argument("generate_excitation: duration must be > 0");

  AudioSignal sig;
  sig.sample_rate = sample_rate;
  sig.samples.assign(static_cast<std::size_t>(duration_s * sample_rate), 0.0);

  std::size_t offset = 0;
  while (offset < sig.samples.size()) {
    const double event_dur = rng.uniform(0.25, 0.45);
    const bool chord = rng.unit() < 0.4;
    const double f0 = rng.uniform(82.0, 660.0);
    synth_note(sig.samples, offset, f0, event_dur, sample_rate);
    if (chord) {
      synth_note(sig.samples, offset, f0 * 1.25, event_dur, sample_rate); // major third
      synth_note(sig.samples, offset, f0 * 1.5, event_dur, sample_rate);  // fifth
    }
    offset += static_cast<std::size_t>(event_dur * sample_rate);
  }

  double peak = 0.0;
  for (double s : sig.samples)
    peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    const double scale = 0.9 / peak;
    for (double& s : sig.samples)
      s *= scale;
  }
  return sig;
}

// --- dataset construction --------------------------------------------------

// One pass of the excitation per knob value; targets come from the surrogate,
// g holds knob/10.
inline Dataset build_dataset(const AudioSignal& excitation, const std::vector<double>& gain_knobs,
                             const AmpParams& amp = {}) {
  if (gain_knobs.empty())
    throw std::invalid_argument("build_dataset: need at least one gain value");

  Dataset ds;
  ds.x.sample_rate = excitation.sample_rate;
  ds.target.sample_rate = excitation.sample_rate;
  const std::size_t n = excitation.samples.size();
  for (double knob : gain_knobs) {
    const auto y = amp_process(excitation.samples, knob, amp);
    const std::size_t begin = ds.x.samples.size();
    ds.x.samples.insert(ds.x.samples.end(), excitation.samples.begin(), excitation.samples.end());
    ds.target.samples.insert(ds.target.samples.end(), y.begin(), y.end());
    ds.g.insert(ds.g.end(), n, knob / 10.0);
    ds.passes.push_back({begin, begin + n, knob});
  }
  return ds;
}

// Contiguous train/test/validation ranges per pass, same ratios in each pass
// so every split sees every gain.
inline void split_dataset(Dataset& ds, std::array<double, 3> ratios = {0.70, 0.15, 0.15},
                          std::size_t min_len = 1) {
  for (double r : ratios)
    if (r <= 0.0)
      throw std::invalid_argument("split_dataset: ratios must be positive");
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: ratios must sum to 1");

  ds.train_split.clear();
  ds.test_split.clear();
  ds.validation_split.clear();
  for (const auto& p : ds.passes) {
    const std::size_t len = p.end - p.begin;
    const auto n_train = static_cast<std::size_t>(ratios[0] * len);
    const auto n_test = static_cast<std::size_t>(ratios[1] * len);
    const std::size_t n_val = len - n_train - n_test;
    if (n_train < min_len || n_test < min_len || n_val < min_len)
      throw dim_error("split_dataset: a split is shorter than " + std::to_string(min_len) +
                      " samples");
    ds.train_split.push_back({p.begin, p.begin + n_train});
    ds.test_split.push_back({p.begin + n_train, p.begin + n_train + n_test});
    ds.validation_split.push_back({p.begin + n_train + n_test, p.end});
  }
}

// --- tensorization ----------------------------------------------------------

template <typename T>
struct WindowBatch {
  std::size_t batch_size = 0;
  std::size_t num_step = 0;
  std::size_t num_feature = 0;
  std::vector<T> tensor;  // [batch, step, feature] row-major
  std::vector<T> targets; // [batch]

  std::size_t window_len() const { return num_step * num_feature; }

  std::span<const T> window(std::size_t b) const {
    return {tensor.data() + b * window_len(), window_len()};
  }

  void resize(std::size_t batch, std::size_t steps, std::size_t features) {
    batch_size = batch;
    num_step = steps;
    num_feature = features;
    tensor.assign(batch * steps * features, T(0));
    targets.assign(batch, T(0));
  }
};

// Fills the window ending at sample n: rows are [x] or [x, g] for samples
// n-num_step+1 .. n, zero rows before the start of n's pass.
template <typename T>
void fill_window(const Dataset& ds, std::size_t n, std::size_t num_step, std::size_t num_feature,
                 std::span<T> out) {
  const std::size_t pass_begin = ds.pass_begin_of(n);
  for (std::size_t s = 0; s < num_step; ++s) {
    T* row = out.data() + s * num_feature;
    const std::size_t back = num_step - 1 - s;
    if (n >= pass_begin + back) {
      const std::size_t idx = n - back;
      row[0] = static_cast<T>(ds.x.samples[idx]);
      if (num_feature == 2)
        row[1] = static_cast<T>(ds.g[idx]);
    } else {
      for (std::size_t fgrp = 0; fgrp < num_feature; ++fgrp)
        row[fgrp] = T(0);
    }
  }
}

// Sequential stream of WindowBatch over one range. Windows advance by
// `stride`; the final partial batch is emitted with its true size.
template <typename T>
class Tensorizer {
public:
  Tensorizer(const Dataset& ds, SplitRange range, std::size_t num_step, std::size_t num_feature,
             std::size_t batch_size, std::size_t stride = 1)
      : ds_(&ds), range_(range), num_step_(num_step), num_feature_(num_feature),
        batch_size_(batch_size), stride_(stride), next_(range.begin) {
    if (range.size() < num_step)
      throw dim_error("Tensorizer: range shorter than num_step");
    if (batch_size == 0 || stride == 0)
      throw std::invalid_argument("Tensorizer: batch_size and stride must be >= 1");
  }

  bool next(WindowBatch<T>& out) {
    if (next_ >= range_.end)
      return false;
    std::size_t count = 0;
    const std::size_t first = next_;
    for (std::size_t n = first; n < range_.end && count < batch_size_; n += stride_)
      ++count;
    out.resize(count, num_step_, num_feature_);
    std::size_t b = 0;
    for (std::size_t n = first; b < count; n += stride_, ++b) {
      fill_window(*ds_, n, num_step_, num_feature_,
                  std::span<T>(out.tensor.data() + b * out.window_len(), out.window_len()));
      out.targets[b] = static_cast<T>(ds_->target.samples[n]);
    }
    next_ = first + count * stride_;
    return true;
  }

  void reset() { next_ = range_.begin; }

private:
  const Dataset* ds_;
  SplitRange range_;
  std::size_t num_step_, num_feature_, batch_size_, stride_;
  std::size_t next_;
};

// --- disk format -------------------------------------------------------------
//
// A dataset directory holds x.wav, target.wav and gains.txt with one
// `start_sample,end_sample,gain_knob` line per pass (end exclusive).

inline void export_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_wav(dir / "x.wav", ds.x);
  write_wav(dir / "target.wav", ds.target);
  std::ofstream os(dir / "gains.txt");
  if (!os)
    throw io_error("export_dataset: cannot write gains.txt");
  for (const auto& p : ds.passes)
    os << p.begin << "," << p.end << "," << p.gain_knob << "\n";
}

inline Dataset import_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.x = read_wav(dir / "x.wav");
  ds.target = read_wav(dir / "target.wav");
  if (ds.x.samples.size() != ds.target.samples.size())
    throw format_error(format_error::kind::bad_header,
                       "import_dataset: x.wav and target.wav lengths differ");

  std::ifstream is(dir / "gains.txt");
  if (!is)
    throw io_error("import_dataset: cannot open gains.txt");
  ds.g.assign(ds.x.samples.size(), 0.0);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty())
      continue;
    std::istringstream ls(line);
    GainPass p;
    char c1 = 0, c2 = 0;
    if (!(ls >> p.begin >> c1 >> p.end >> c2 >> p.gain_knob) || c1 != ',' || c2 != ',')
      throw format_error(format_error::kind::bad_header, "import_dataset: bad gains.txt line: " + line);
    if (p.end > ds.x.samples.size() || p.begin >= p.end)
      throw format_error(format_error::kind::bad_header, "import_dataset: pass range out of bounds");
    for (std::size_t n = p.begin; n < p.end; ++n)
      ds.g[n] = p.gain_knob / 10.0;
    ds.passes.push_back(p);
  }
  if (ds.passes.empty())
    throw format_error(format_error::kind::bad_header, "import_dataset: gains.txt has no passes");
  return ds;
}

} // namespace lstmamp
