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

#include "corrtalk/audio.hpp"
#include "corrtalk/motion.hpp"
#include "corrtalk/rng.hpp"

namespace corrtalk {

struct SyntheticPair {
  AudioClip audio;
  MotionSequence motion;
  NeutralGeometry neutral;
  RegionMask regions;
};

struct SyntheticConfig {
  std::uint64_t seed = 0;
  std::size_t n_sequences = 8;
  std::size_t T = 60;
  std::size_t V = 100;
  double fps = 30.0;
  std::uint32_t sample_rate = 16000;
  // Global output scale; 0 produces silent audio and a motionless face.
  double amplitude = 1.0;
  std::uint32_t n_subjects = 8;
};

// Audio is a sum of amplitude-modulated sinusoids; the designated mouth
// vertices are driven by the same envelope with mm-scale motion around
// 1 Hz (the fundamental band of a one-second analysis window), while the
// remaining vertices drift slowly at low amplitude. The strong/weak split
// is therefore present by construction, and the region mask labels the
// driven subset as lips.
inline std::vector<SyntheticPair> generate_synthetic_dataset(
    const SyntheticConfig& cfg) {
  require(cfg.n_sequences > 0 && cfg.T > 0 && cfg.V > 0 && cfg.fps > 0 &&
              cfg.sample_rate > 0 && cfg.n_subjects > 0,
          "generate_synthetic_dataset: all sizes must be positive");
  constexpr double kTau = 2.0 * std::numbers::pi;

  // Shared rest-pose face and regions.
  StreamRng face_rng(mix64(cfg.seed) ^ fnv1a64("face"));
  NeutralGeometry neutral;
  neutral.vertices = Tensor::zeros({cfg.V, 3});
  for (double& c : neutral.vertices.data) c = face_rng.uniform(-50.0, 50.0);

  const std::size_t n_mouth = std::max<std::size_t>(1, cfg.V / 5);
  const std::size_t n_upper =
      std::max<std::size_t>(1, std::min(cfg.V - n_mouth, cfg.V / 5));
  RegionMask regions;
  for (std::size_t v = 0; v < n_mouth; ++v)
    regions.lip.push_back(static_cast<std::uint32_t>(v));
  for (std::size_t v = n_mouth; v < n_mouth + n_upper; ++v)
    regions.upper.push_back(static_cast<std::uint32_t>(v));

  std::vector<SyntheticPair> out;
  out.reserve(cfg.n_sequences);
  for (std::size_t i = 0; i < cfg.n_sequences; ++i) {
    StreamRng rng(mix64(cfg.seed) ^ mix64(i + 1));
    SyntheticPair pair;
    pair.neutral = neutral;
    pair.regions = regions;

    // Envelope shared by audio and mouth motion. Kept slow and shallow: the
    // waveform's DC leaks into the fundamental band under a Hann window with
    // a per-vertex phase, so the oscillatory terms must stay small relative
    // to the DC for every mouth vertex to clear the strong/weak threshold.
    const double f_env = rng.uniform(0.2, 0.3);
    const double ph_env = rng.uniform(0.0, kTau);
    auto envelope = [&](double seconds) {
      return cfg.amplitude * (0.9 + 0.1 * std::sin(kTau * f_env * seconds + ph_env));
    };

    // Audio: three carriers under the envelope.
    const std::size_t n_samples = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg.T) / cfg.fps * cfg.sample_rate));
    double carrier_f[3], carrier_a[3], carrier_ph[3], a_sum = 0;
    for (int j = 0; j < 3; ++j) {
      carrier_f[j] = rng.uniform(300.0, 3000.0);
      carrier_a[j] = rng.uniform(0.2, 0.4);
      carrier_ph[j] = rng.uniform(0.0, kTau);
      a_sum += carrier_a[j];
    }
    pair.audio.sample_rate = cfg.sample_rate;
    pair.audio.samples.resize(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
      const double sec = static_cast<double>(s) / cfg.sample_rate;
      double x = 0;
      for (int j = 0; j < 3; ++j)
        x += carrier_a[j] * std::sin(kTau * carrier_f[j] * sec + carrier_ph[j]);
      pair.audio.samples[s] = envelope(sec) * x / a_sum * 0.9;
    }

    // Motion: per-vertex unit direction and displacement waveform.
    pair.motion = MotionSequence::zeros(cfg.T, cfg.V, static_cast<float>(cfg.fps),
                                        static_cast<std::uint32_t>(i) %
                                            cfg.n_subjects);
    constexpr double kMouthAmpMm = 3.0;
    constexpr double kWeakAmpMm = 0.08;
    for (std::size_t v = 0; v < cfg.V; ++v) {
      // random unit direction
      double ux = rng.uniform(-1.0, 1.0), uy = rng.uniform(-1.0, 1.0),
             uz = rng.uniform(-1.0, 1.0);
      const double norm = std::sqrt(ux * ux + uy * uy + uz * uz) + 1e-9;
      ux /= norm; uy /= norm; uz /= norm;
      const bool mouth = v < n_mouth;
      const double f1 = mouth ? rng.uniform(0.98, 1.02) : rng.uniform(0.05, 0.2);
      const double f2 = rng.uniform(2.9, 3.1);
      const double ph1 = rng.uniform(0.0, kTau);
      const double ph2 = rng.uniform(0.0, kTau);
      for (std::size_t t = 0; t < cfg.T; ++t) {
        const double sec = static_cast<double>(t) / cfg.fps;
        double d;
        if (mouth) {
          const double pulse = (1.0 + 0.2 * std::sin(kTau * f1 * sec + ph1) +
                                0.08 * std::sin(kTau * f2 * sec + ph2)) /
                               1.28;
          d = kMouthAmpMm * envelope(sec) * pulse;
        } else {
          d = cfg.amplitude * kWeakAmpMm *
              (0.55 + 0.45 * std::sin(kTau * f1 * sec + ph1));
        }
        pair.motion.vertices.at(t, v, 0) = neutral.vertices.at(v, 0) + d * ux;
        pair.motion.vertices.at(t, v, 1) = neutral.vertices.at(v, 1) + d * uy;
        pair.motion.vertices.at(t, v, 2) = neutral.vertices.at(v, 2) + d * uz;
      }
    }
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace corrtalk
