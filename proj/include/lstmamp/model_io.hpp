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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>

#include "error.hpp"
#include "model.hpp"

namespace lstmamp {

// Model file, format version 1:
//   "LSTMAMP1"                                   8 bytes
//   version, num_layer, num_hidden, num_step,
//   num_feature, sample_rate                     little-endian u32 each
//   weights in canonical block order             little-endian f64, row-major
// The payload is exact: a load after save reproduces bit-identical
// predictions.

inline constexpr char kModelMagic[8] = {'L', 'S', 'T', 'M', 'A', 'M', 'P', '1'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int k = 0; k < 8; ++k)
    b[k] = static_cast<unsigned char>(bits >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline bool get_f64(std::istream& is, double& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    return false;
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k)
    bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  v = std::bit_cast<double>(bits);
  return true;
}

} // namespace detail

inline void save_model(const ModelConfig& cfg, const LstmParams<double>& params,
                       const std::filesystem::path& path) {
  cfg.validate();
  if (!params_finite(params))
    throw numeric_error("save_model: refusing to write non-finite weights");
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw io_error("save_model: cannot open " + path.string());

  os.write(kModelMagic, sizeof(kModelMagic));
  detail::put_u32(os, kModelFormatVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.num_layer));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.num_hidden));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.num_step));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg.num_feature));
  detail::put_u32(os, cfg.sample_rate);
  for_each_block(params, [&](const std::vector<double>& blk) {
    for (double w : blk)
      detail::put_f64(os, w);
  });
  os.flush();
  if (!os)
    throw io_error("save_model: write failed for " + path.string());
}

inline std::pair<ModelConfig, LstmParams<double>> load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw io_error("load_model: cannot open " + path.string());

  char magic[8];
  if (!is.read(magic, sizeof(magic)))
    throw format_error(format_error::kind::truncated, "load_model: file shorter than header");
  if (std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw format_error(format_error::kind::bad_magic, "load_model: not a model file");

  std::uint32_t version = 0;
  if (!detail::get_u32(is, version))
    throw format_error(format_error::kind::truncated, "load_model: truncated header");
  if (version != kModelFormatVersion)
    throw format_error(format_error::kind::bad_version,
                       "load_model: unsupported format version " + std::to_string(version));

  std::uint32_t num_layer = 0, num_hidden = 0, num_step = 0, num_feature = 0, sample_rate = 0;
  if (!detail::get_u32(is, num_layer) || !detail::get_u32(is, num_hidden) ||
      !detail::get_u32(is, num_step) || !detail::get_u32(is, num_feature) ||
      !detail::get_u32(is, sample_rate))
    throw format_error(format_error::kind::truncated, "load_model: truncated header");

  ModelConfig cfg;
  cfg.num_layer = num_layer;
  cfg.num_hidden = num_hidden;
  cfg.num_step = num_step;
  cfg.num_feature = num_feature;
  cfg.sample_rate = sample_rate;
  try {
    cfg.validate();
  } catch (const dim_error& e) {
    throw format_error(format_error::kind::bad_header, std::string("load_model: ") + e.what());
  }

  auto params = LstmParams<double>::zeros(cfg);
  bool short_read = false;
  for_each_block(params, [&](std::vector<double>& blk) {
    if (short_read)
      return;
    for (double& w : blk)
      if (!detail::get_f64(is, w)) {
        short_read = true;
        return;
      }
  });
  if (short_read)
    throw format_error(format_error::kind::truncated, "load_model: weight payload truncated");
  if (is.peek() != std::ifstream::traits_type::eof())
    throw format_error(format_error::kind::bad_header, "load_model: trailing bytes after payload");
  if (!params_finite(params))
    throw format_error(format_error::kind::non_finite, "load_model: non-finite weight in file");

  return {cfg, std::move(params)};
}

} // namespace lstmamp
