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
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace lstmamp {

struct AudioSignal {
  std::vector<double> samples; // nominal range [-1, 1]
  std::uint32_t sample_rate = 44100;
};

// Mono WAV I/O. Reads PCM16 (decoded as s/32768) and IEEE float32; multichannel
// files contribute their first channel. Writes PCM16 with saturation. No
// resampling, no streaming - whole file in memory.

namespace wav_detail {

inline std::uint32_t rd_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t rd_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void wr_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void wr_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

} // namespace wav_detail

inline AudioSignal read_wav(const std::filesystem::path& path) {
  using namespace wav_detail;

  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw io_error("read_wav: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw format_error(format_error::kind::bad_header, "read_wav: not a RIFF/WAVE file");

  std::uint16_t codec = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = rd_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + len > bytes.size())
      throw format_error(format_error::kind::truncated, "read_wav: chunk exceeds file size");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16)
        throw format_error(format_error::kind::bad_header, "read_wav: fmt chunk too small");
      codec = rd_u16(bytes.data() + pos);
      channels = rd_u16(bytes.data() + pos + 2);
      rate = rd_u32(bytes.data() + pos + 4);
      bits = rd_u16(bytes.data() + pos + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + pos;
      data_len = len;
      have_data = true;
    }
    pos += len + (len & 1); // chunks are word-aligned
  }

  if (!have_fmt || !have_data)
    throw format_error(format_error::kind::bad_header, "read_wav: missing fmt or data chunk");
  if (channels == 0)
    throw format_error(format_error::kind::bad_header, "read_wav: zero channels");

  AudioSignal out;
  out.sample_rate = rate;
  if (codec == 1 && bits == 16) {
    const std::size_t frame = 2u * channels;
    const std::size_t n = data_len / frame;
    out.samples.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto u = rd_u16(data + k * frame);
      out.samples[k] = static_cast<std::int16_t>(u) / 32768.0;
    }
  } else if (codec == 3 && bits == 32) {
    const std::size_t frame = 4u * channels;
    const std::size_t n = data_len / frame;
    out.samples.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t u = rd_u32(data + k * frame);
      float f;
      std::memcpy(&f, &u, 4);
      out.samples[k] = static_cast<double>(f);
    }
  } else {
    throw format_error(format_error::kind::unsupported_codec,
                       "read_wav: only PCM16 and float32 are supported (codec " +
                           std::to_string(codec) + ", " + std::to_string(bits) + " bits)");
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioSignal& sig) {
  using namespace wav_detail;

  for (double s : sig.samples)
    if (!std::isfinite(s))
      throw numeric_error("write_wav: non-finite sample");

  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw io_error("write_wav: cannot open " + path.string());

  const std::uint32_t data_len = static_cast<std::uint32_t>(sig.samples.size() * 2);
  os.write("RIFF", 4);
  wr_u32(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, 1); // PCM
  wr_u16(os, 1); // mono
  wr_u32(os, sig.sample_rate);
  wr_u32(os, sig.sample_rate * 2); // byte rate
  wr_u16(os, 2);                   // block align
  wr_u16(os, 16);                  // bits
  os.write("data", 4);
  wr_u32(os, data_len);
  for (double s : sig.samples) {
    const double scaled = std::floor(s * 32768.0 + 0.5);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    wr_u16(os, static_cast<std::uint16_t>(q));
  }
  os.flush();
  if (!os)
    throw io_error("write_wav: write failed for " + path.string());
}

} // namespace lstmamp
