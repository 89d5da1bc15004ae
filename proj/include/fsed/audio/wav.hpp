// Copyright 2026 The fsed Authors.
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
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "fsed/error.hpp"

namespace fsed::audio {

/// Mono waveform with samples in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}
inline void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u16(std::ofstream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace detail

/// Reads a RIFF/WAVE file holding linear PCM (8/16/24/32-bit) or IEEE float
/// (32/64-bit) samples. Multi-channel audio is averaged to mono.
inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError("not a RIFF/WAVE file: " + path);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0) {
      throw ParseError("truncated WAV chunk in " + path);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw ParseError("short fmt chunk in " + path);
      format = detail::read_u16(chunk + 8);
      channels = detail::read_u16(chunk + 10);
      rate = detail::read_u32(chunk + 12);
      bits = detail::read_u16(chunk + 22);
      if (format == 0xFFFE && size >= 40) {
        format = detail::read_u16(chunk + 32);  // extensible subformat
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0 || data == nullptr) {
    throw ParseError("WAV file missing fmt or data chunk: " + path);
  }
  const std::size_t width = bits / 8;
  if (width == 0 || !((format == 1 && width <= 4) ||
                      (format == 3 && (width == 4 || width == 8)))) {
    throw ParseError("unsupported WAV encoding (format " +
                     std::to_string(format) + ", " + std::to_string(bits) +
                     " bits): " + path);
  }
  const std::size_t frames = data_size / (width * channels);
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.assign(frames, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (f * channels + c) * width;
      double v = 0.0;
      if (format == 3 && width == 4) {
        float x;
        std::memcpy(&x, p, 4);
        v = x;
      } else if (format == 3) {
        std::memcpy(&v, p, 8);
      } else if (width == 1) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (width == 2) {
        v = static_cast<std::int16_t>(detail::read_u16(p)) / 32768.0;
      } else if (width == 3) {
        std::int32_t x = (p[0] << 8) | (p[1] << 16) | (p[2] << 24);
        v = (x >> 8) / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(detail::read_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    w.samples[f] = acc / channels;
  }
  return w;
}

/// Writes mono 32-bit IEEE float WAV.
inline void write_wav(const std::string& path, std::span<const double> samples,
                      int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write WAV file: " + path);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
  out.write("RIFF", 4);
  detail::put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  detail::put_u32(out, 16);
  detail::put_u16(out, 3);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(sample_rate) * 4);
  detail::put_u16(out, 4);
  detail::put_u16(out, 32);
  out.write("data", 4);
  detail::put_u32(out, data_bytes);
  for (double s : samples) {
    const float f = static_cast<float>(s);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!out) throw IoError("failed writing WAV file: " + path);
}

}  // namespace fsed::audio
