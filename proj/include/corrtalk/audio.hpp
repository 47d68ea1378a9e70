// Copyright 2026 The CorrTalk Authors
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
#include <fstream>
#include <string>
#include <vector>

#include "corrtalk/common.hpp"

namespace corrtalk {

struct AudioClip {
  std::vector<double> samples;  // mono, in [-1, 1]
  std::uint32_t sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads a PCM 16-bit mono WAV. Samples are scaled by 1/32768.
inline AudioClip load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), msg("cannot open '", path, "'"));
  auto read_n = [&](void* p, std::size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
      throw WavMalformedError(msg("malformed WAV '", path, "': short ", what));
  };
  char tag[4];
  read_n(tag, 4, "RIFF header");
  if (std::memcmp(tag, "RIFF", 4) != 0)
    throw WavMalformedError(msg("malformed WAV '", path, "': not RIFF"));
  std::uint32_t riff_size;
  read_n(&riff_size, 4, "RIFF size");
  read_n(tag, 4, "WAVE tag");
  if (std::memcmp(tag, "WAVE", 4) != 0)
    throw WavMalformedError(msg("malformed WAV '", path, "': not WAVE"));

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  AudioClip clip;
  bool have_data = false;
  while (is.peek() != EOF) {
    read_n(tag, 4, "chunk id");
    std::uint32_t size;
    read_n(&size, 4, "chunk size");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16)
        throw WavMalformedError(msg("malformed WAV '", path, "': fmt chunk"));
      std::uint8_t buf[16];
      read_n(buf, 16, "fmt payload");
      std::memcpy(&format, buf + 0, 2);
      std::memcpy(&channels, buf + 2, 2);
      std::memcpy(&rate, buf + 4, 4);
      std::memcpy(&bits, buf + 14, 2);
      is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt)
        throw WavMalformedError(
            msg("malformed WAV '", path, "': data before fmt"));
      if (format != 1)
        throw WavCodecError(
            msg("unsupported WAV codec in '", path, "': format tag ", format,
                " (PCM required)"));
      if (channels != 1)
        throw WavChannelError(
            msg("unsupported WAV '", path, "': ", channels,
                " channels (mono required)"));
      if (bits != 16)
        throw WavCodecError(msg("unsupported WAV '", path, "': ", bits,
                                " bits per sample (16 required)"));
      const std::size_t n = size / 2;
      std::vector<std::int16_t> raw(n);
      read_n(raw.data(), n * 2, "data payload");
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        clip.samples[i] = static_cast<double>(raw[i]) / 32768.0;
      clip.sample_rate = rate;
      have_data = true;
      if (size % 2) is.seekg(1, std::ios::cur);  // chunk padding
    } else {
      is.seekg(size + (size % 2), std::ios::cur);
    }
  }
  if (!have_data)
    throw WavMalformedError(msg("malformed WAV '", path, "': no data chunk"));
  return clip;
}

inline void save_wav(const AudioClip& clip, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), msg("cannot open '", path, "' for writing"));
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_size = n * 2;
  auto put32 = [&](std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
  os.write("RIFF", 4);
  put32(36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put32(16);
  put16(1);  // PCM
  put16(1);  // mono
  put32(clip.sample_rate);
  put32(clip.sample_rate * 2);
  put16(2);
  put16(16);
  os.write("data", 4);
  put32(data_size);
  for (double x : clip.samples) {
    const double scaled = std::round(x * 32768.0);
    const std::int16_t s = static_cast<std::int16_t>(
        std::clamp(scaled, -32768.0, 32767.0));
    os.write(reinterpret_cast<const char*>(&s), 2);
  }
  require(os.good(), msg("write failed for '", path, "'"));
}

}  // namespace corrtalk
