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

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "corrtalk/common.hpp"
#include "corrtalk/motion.hpp"
#include "corrtalk/tensor.hpp"

// Facial activity intensity: per-vertex displacement signals are decomposed
// with a short-time Fourier transform, and the amplitude of the lowest
// non-DC band quantifies how strongly a vertex moves. Strong (mouth-like)
// and weak (forehead-like) vertices separate cleanly in that band.

namespace corrtalk {

// Per-frame Euclidean distance of each vertex from its neutral position,
// {T, V}, in millimeters.
struct DisplacementField {
  Tensor values;

  std::size_t frames() const { return values.shape.at(0); }
  std::size_t vertex_count() const { return values.shape.at(1); }
};

// One-sided STFT amplitudes over displacement signals, {b, T, V}; the time
// axis is resampled to frame resolution so it aligns with the sequence.
struct IntensityMap {
  Tensor amplitudes;
  std::size_t window_len = 0;
  std::size_t hop = 1;
  std::size_t fundamental_band_index = 1;

  std::size_t bands() const { return amplitudes.shape.at(0); }
  std::size_t frames() const { return amplitudes.shape.at(1); }
  std::size_t vertex_count() const { return amplitudes.shape.at(2); }
};

// Normalized per-vertex activity in [0, 1]; seeds the learnable branch mask.
struct MaskInit {
  std::vector<double> m0;
};

enum class StftWindow { kHann, kRect };

inline DisplacementField compute_displacements(const MotionSequence& seq,
                                               const NeutralGeometry& neutral) {
  if (seq.vertex_count() != neutral.vertex_count())
    throw Error(msg("compute_displacements: V mismatch, sequence has ",
                    seq.vertex_count(), " vertices, neutral has ",
                    neutral.vertex_count()));
  const std::size_t T = seq.frames(), V = seq.vertex_count();
  DisplacementField f;
  f.values = Tensor::zeros({T, V});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t v = 0; v < V; ++v) {
      double d2 = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = seq.vertices.at(t, v, c) - neutral.vertices.at(v, c);
        d2 += d * d;
      }
      f.values.at(t, v) = std::sqrt(d2);
    }
  return f;
}

inline std::vector<double> stft_window(std::size_t len, StftWindow w) {
  std::vector<double> win(len, 1.0);
  if (w == StftWindow::kHann && len > 1) {
    for (std::size_t i = 0; i < len; ++i)
      win[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                    static_cast<double>(i) /
                                    static_cast<double>(len - 1));
  }
  return win;
}

// Windowed one-sided DFT magnitudes of a length-T series. Output is
// {b, T} with b = floor(window_len/2)+1; the window slides with the given
// hop and the window-time axis is mapped back to frame resolution by
// nearest-center assignment.
inline Tensor stft(const std::vector<double>& signal, std::size_t window_len,
                   std::size_t hop, StftWindow window = StftWindow::kHann) {
  const std::size_t T = signal.size();
  require(hop >= 1, "stft: hop must be >= 1");
  require(window_len >= 1, "stft: window must be >= 1");
  if (window_len > T)
    throw Error(msg("stft: window (", window_len, ") longer than signal (", T,
                    ")"));
  const std::size_t b = window_len / 2 + 1;
  const std::size_t n_win = (T - window_len) / hop + 1;
  const auto win = stft_window(window_len, window);

  // DFT twiddle tables
  std::vector<double> cos_t(b * window_len), sin_t(b * window_len);
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t i = 0; i < window_len; ++i) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(k * i) /
                         static_cast<double>(window_len);
      cos_t[k * window_len + i] = std::cos(ang);
      sin_t[k * window_len + i] = std::sin(ang);
    }

  Tensor frames = Tensor::zeros({b, n_win});
  std::vector<double> buf(window_len);
  for (std::size_t f = 0; f < n_win; ++f) {
    const std::size_t off = f * hop;
    for (std::size_t i = 0; i < window_len; ++i)
      buf[i] = signal[off + i] * win[i];
    for (std::size_t k = 0; k < b; ++k) {
      double re = 0, im = 0;
      const double* ct = cos_t.data() + k * window_len;
      const double* st = sin_t.data() + k * window_len;
      for (std::size_t i = 0; i < window_len; ++i) {
        re += buf[i] * ct[i];
        im -= buf[i] * st[i];
      }
      frames.at(k, f) = std::sqrt(re * re + im * im);
    }
  }

  // Resample window index to frame index: frame t reads the window whose
  // center is nearest to t.
  Tensor out = Tensor::zeros({b, T});
  const double half = static_cast<double>(window_len - 1) / 2.0;
  for (std::size_t t = 0; t < T; ++t) {
    const double pos = (static_cast<double>(t) - half) / static_cast<double>(hop);
    long f = std::lround(pos);
    f = std::max(0l, std::min(static_cast<long>(n_win) - 1, f));
    for (std::size_t k = 0; k < b; ++k)
      out.at(k, t) = frames.at(k, static_cast<std::size_t>(f));
  }
  return out;
}

inline IntensityMap compute_intensity(const DisplacementField& disp,
                                      std::size_t window_len, std::size_t hop,
                                      StftWindow window = StftWindow::kHann) {
  const std::size_t T = disp.frames(), V = disp.vertex_count();
  IntensityMap map;
  map.window_len = window_len;
  map.hop = hop;
  map.fundamental_band_index = 1;
  const std::size_t b = window_len / 2 + 1;
  require(map.fundamental_band_index < b,
          "compute_intensity: window too short for a non-DC band");
  map.amplitudes = Tensor::zeros({b, T, V});
  std::vector<double> column(T);
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t t = 0; t < T; ++t) column[t] = disp.values.at(t, v);
    Tensor s = stft(column, window_len, hop, window);
    for (std::size_t k = 0; k < b; ++k)
      for (std::size_t t = 0; t < T; ++t)
        map.amplitudes.at(k, t, v) = s.at(k, t);
  }
  return map;
}

// Per-vertex time-mean of the fundamental-band amplitude, before
// normalization.
inline std::vector<double> raw_band_means(const IntensityMap& map) {
  const std::size_t T = map.frames(), V = map.vertex_count();
  const std::size_t k = map.fundamental_band_index;
  std::vector<double> means(V, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t v = 0; v < V; ++v)
      means[v] += map.amplitudes.at(k, t, v);
  for (double& m : means) m /= static_cast<double>(T);
  return means;
}

// Min-max normalization to [0, 1]. A degenerate map (all vertices equally
// active) yields 0.5 everywhere so neither branch is starved.
inline MaskInit normalize_mask(const std::vector<double>& raw) {
  require(!raw.empty(), "normalize_mask: empty input");
  double lo = raw[0], hi = raw[0];
  for (double v : raw) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  MaskInit m;
  m.m0.resize(raw.size());
  if (hi == lo) {
    std::fill(m.m0.begin(), m.m0.end(), 0.5);
    return m;
  }
  for (std::size_t i = 0; i < raw.size(); ++i)
    m.m0[i] = (raw[i] - lo) / (hi - lo);
  return m;
}

inline MaskInit init_mask(const IntensityMap& map) {
  return normalize_mask(raw_band_means(map));
}

struct IntensityClasses {
  std::vector<std::uint32_t> strong;
  std::vector<std::uint32_t> weak;
};

// strong = {v : m0[v] >= threshold}, weak = complement.
inline IntensityClasses classify_intensity(const MaskInit& m,
                                           double threshold = 0.5) {
  require(threshold > 0.0 && threshold < 1.0,
          "classify_intensity: threshold must be in (0,1)");
  IntensityClasses c;
  for (std::size_t v = 0; v < m.m0.size(); ++v) {
    if (m.m0[v] >= threshold)
      c.strong.push_back(static_cast<std::uint32_t>(v));
    else
      c.weak.push_back(static_cast<std::uint32_t>(v));
  }
  return c;
}

}  // namespace corrtalk
