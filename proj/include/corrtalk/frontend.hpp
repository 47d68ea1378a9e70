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
#include <numbers>
#include <vector>

#include "corrtalk/audio.hpp"
#include "corrtalk/common.hpp"
#include "corrtalk/tensor.hpp"

namespace corrtalk {

// Acoustic feature matrix {T_a, d0} at frame_rate Hz.
struct AcousticFeatures {
  Tensor values;
  double frame_rate = 0;

  std::size_t frames() const { return values.shape.at(0); }
  std::size_t dims() const { return values.shape.at(1); }
};

constexpr double kLogFloor = 1e-10;

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangular mel filterbank over one-sided DFT bins of an n_fft transform.
// Returns {n_mels, n_bins} weights.
inline Tensor mel_filterbank(std::size_t n_mels, std::size_t n_fft,
                             double sample_rate) {
  const std::size_t n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  Tensor fb = Tensor::zeros({n_mels, n_bins});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double fk = static_cast<double>(k) * sample_rate /
                        static_cast<double>(n_fft);
      if (fk > f0 && fk < f1)
        fb.at(m, k) = (fk - f0) / (f1 - f0);
      else if (fk >= f1 && fk < f2)
        fb.at(m, k) = (f2 - fk) / (f2 - f1);
    }
  }
  return fb;
}

// Center frequency (Hz) of mel filter m; used by tests to locate tones.
inline double mel_filter_center_hz(std::size_t m, std::size_t n_mels,
                                   double sample_rate) {
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  return mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m + 1) /
                                static_cast<double>(n_mels + 1));
}

namespace detail {

// Hann-windowed one-sided power spectra of the framed signal, {n_frames, n_bins}.
inline Tensor framed_power_spectra(const AudioClip& clip, std::size_t win,
                                   std::size_t hop) {
  const std::size_t n = clip.samples.size();
  if (n < win)
    throw Error(msg("audio clip too short: ", n, " samples, window ", win));
  const std::size_t n_frames = (n - win) / hop + 1;
  const std::size_t n_bins = win / 2 + 1;
  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                     static_cast<double>(i) /
                                     static_cast<double>(win - 1));
  std::vector<double> cos_t(n_bins * win), sin_t(n_bins * win);
  for (std::size_t k = 0; k < n_bins; ++k)
    for (std::size_t i = 0; i < win; ++i) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(k * i) /
                         static_cast<double>(win);
      cos_t[k * win + i] = std::cos(ang);
      sin_t[k * win + i] = std::sin(ang);
    }
  Tensor power = Tensor::zeros({n_frames, n_bins});
  std::vector<double> buf(win);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double* src = clip.samples.data() + f * hop;
    for (std::size_t i = 0; i < win; ++i) buf[i] = src[i] * window[i];
    for (std::size_t k = 0; k < n_bins; ++k) {
      double re = 0, im = 0;
      const double* ct = cos_t.data() + k * win;
      const double* st = sin_t.data() + k * win;
      for (std::size_t i = 0; i < win; ++i) {
        re += buf[i] * ct[i];
        im -= buf[i] * st[i];
      }
      power.at(f, k) = re * re + im * im;
    }
  }
  return power;
}

}  // namespace detail

// Log mel-filterbank energies: log(filterbank(|DFT|^2) + 1e-10).
inline AcousticFeatures melspectrogram(const AudioClip& clip,
                                       std::size_t n_mels = 80,
                                       double win_ms = 25.0,
                                       double hop_ms = 10.0) {
  require(clip.sample_rate > 0, "melspectrogram: bad sample rate");
  const std::size_t win = static_cast<std::size_t>(
      std::llround(win_ms / 1000.0 * clip.sample_rate));
  const std::size_t hop = static_cast<std::size_t>(
      std::llround(hop_ms / 1000.0 * clip.sample_rate));
  require(win > 1 && hop >= 1, "melspectrogram: window/hop too small");
  Tensor power = detail::framed_power_spectra(clip, win, hop);
  const std::size_t n_frames = power.shape[0], n_bins = power.shape[1];
  Tensor fb = mel_filterbank(n_mels, win, clip.sample_rate);
  AcousticFeatures feats;
  feats.frame_rate = static_cast<double>(clip.sample_rate) / hop;
  feats.values = Tensor::zeros({n_frames, n_mels});
  for (std::size_t f = 0; f < n_frames; ++f)
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0;
      for (std::size_t k = 0; k < n_bins; ++k)
        e += fb.at(m, k) * power.at(f, k);
      feats.values.at(f, m) = std::log(e + kLogFloor);
    }
  return feats;
}

// Plain log-spectrogram variant (frontend ablation): the one-sided power
// spectrum averaged into n_bands equal-width linear bands.
inline AcousticFeatures spectrogram_features(const AudioClip& clip,
                                             std::size_t n_bands = 80,
                                             double win_ms = 25.0,
                                             double hop_ms = 10.0) {
  require(clip.sample_rate > 0, "spectrogram_features: bad sample rate");
  const std::size_t win = static_cast<std::size_t>(
      std::llround(win_ms / 1000.0 * clip.sample_rate));
  const std::size_t hop = static_cast<std::size_t>(
      std::llround(hop_ms / 1000.0 * clip.sample_rate));
  require(win > 1 && hop >= 1, "spectrogram_features: window/hop too small");
  Tensor power = detail::framed_power_spectra(clip, win, hop);
  const std::size_t n_frames = power.shape[0], n_bins = power.shape[1];
  AcousticFeatures feats;
  feats.frame_rate = static_cast<double>(clip.sample_rate) / hop;
  feats.values = Tensor::zeros({n_frames, n_bands});
  for (std::size_t f = 0; f < n_frames; ++f)
    for (std::size_t b = 0; b < n_bands; ++b) {
      const std::size_t k0 = b * n_bins / n_bands;
      const std::size_t k1 = std::max(k0 + 1, (b + 1) * n_bins / n_bands);
      double e = 0;
      for (std::size_t k = k0; k < k1 && k < n_bins; ++k) e += power.at(f, k);
      e /= static_cast<double>(k1 - k0);
      feats.values.at(f, b) = std::log(e + kLogFloor);
    }
  return feats;
}

// Per-dimension linear interpolation of the feature time axis onto
// target_rate = n * motion_fps, n a positive integer; endpoints clamped, so
// constants are preserved and values never leave the per-dimension range.
inline AcousticFeatures interpolate_features(const AcousticFeatures& feats,
                                             double target_rate,
                                             double motion_fps) {
  require(motion_fps > 0, "interpolate_features: motion fps must be positive");
  const double ratio = target_rate / motion_fps;
  const double n = std::round(ratio);
  if (!(target_rate > 0) || n < 1.0 || std::abs(ratio - n) > 1e-9)
    throw Error(msg("interpolate_features: target rate ", target_rate,
                    " is not a positive integer multiple of motion fps ",
                    motion_fps));
  const std::size_t src_n = feats.frames();
  const std::size_t d = feats.dims();
  require(src_n >= 1, "interpolate_features: empty features");
  if (target_rate == feats.frame_rate) return feats;  // bit-identical

  const std::size_t dst_n = static_cast<std::size_t>(std::llround(
      static_cast<double>(src_n) * target_rate / feats.frame_rate));
  AcousticFeatures out;
  out.frame_rate = target_rate;
  out.values = Tensor::zeros({std::max<std::size_t>(dst_n, 1), d});
  for (std::size_t j = 0; j < out.frames(); ++j) {
    double pos = static_cast<double>(j) * feats.frame_rate / target_rate;
    pos = std::min(pos, static_cast<double>(src_n - 1));
    const std::size_t i0 = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i0);
    if (frac == 0.0) {
      for (std::size_t c = 0; c < d; ++c)
        out.values.at(j, c) = feats.values.at(i0, c);
    } else {
      const std::size_t i1 = std::min(i0 + 1, src_n - 1);
      for (std::size_t c = 0; c < d; ++c)
        out.values.at(j, c) = (1.0 - frac) * feats.values.at(i0, c) +
                              frac * feats.values.at(i1, c);
    }
  }
  return out;
}

// Truncate or zero-pad the feature rows to exactly n_frames.
inline Tensor align_to_frames(const AcousticFeatures& feats,
                              std::size_t n_frames) {
  const std::size_t d = feats.dims();
  Tensor out = Tensor::zeros({n_frames, d});
  const std::size_t copy_n = std::min(n_frames, feats.frames());
  std::copy_n(feats.values.data.data(), copy_n * d, out.data.data());
  return out;
}

}  // namespace corrtalk
