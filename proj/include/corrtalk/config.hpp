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

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "corrtalk/common.hpp"
#include "corrtalk/encoder.hpp"
#include "corrtalk/rng.hpp"

namespace corrtalk {

// Plain key=value configuration. The canonical serialization doubles as the
// checkpoint compatibility hash.
struct Config {
  // model dimensions
  std::size_t d = 64;
  std::size_t d0 = 80;
  std::size_t d1 = 32;
  std::size_t encoder_heads = 2;
  std::size_t decoder_heads = 4;
  std::size_t n = 1;  // acoustic feature rate as a multiple of fps
  double fps = 30.0;
  DurationConfig durations;
  // optimization
  std::size_t epochs = 100;
  std::size_t max_steps = 0;  // 0: bounded by epochs only
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool teacher_forcing = true;  // false: decode own history during training
  // ablation switches
  bool single_branch = false;
  bool random_mask_init = false;
  bool disable_hierarchy = false;
  std::string frontend_variant = "mel";  // mel | spectrogram
  // data
  std::string data_dir;  // when set, load pairs from this directory
  std::size_t synth_sequences = 8;
  std::size_t synth_T = 60;
  std::size_t synth_V = 100;
  std::uint32_t synth_sample_rate = 16000;
  double synth_amplitude = 1.0;
  std::size_t n_subjects = 8;
  double mel_win_ms = 25.0;
  double mel_hop_ms = 10.0;
  double mask_threshold = 0.5;

  void validate() const {
    require(d > 0 && d0 > 0 && d1 > 0, "config: dimensions must be positive");
    require(d % decoder_heads == 0,
            msg("config: d=", d, " not divisible by decoder_heads=",
                decoder_heads));
    require(d0 % encoder_heads == 0,
            msg("config: d0=", d0, " not divisible by encoder_heads=",
                encoder_heads));
    require(n >= 1, "config: n must be a positive integer");
    require(fps > 0, "config: fps must be positive");
    durations.validate();
    require(base_lr > 0, "config: base_lr must be positive");
    require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1,
            "config: betas must be in (0,1)");
    require(frontend_variant == "mel" || frontend_variant == "spectrogram",
            msg("config: unknown frontend_variant '", frontend_variant, "'"));
    require(n_subjects > 0, "config: n_subjects must be positive");
    require(mask_threshold > 0 && mask_threshold < 1,
            "config: mask_threshold must be in (0,1)");
  }

  // include_run_control=false yields the model-identity serialization used
  // for the checkpoint compatibility hash; epochs and max_steps are run
  // control and may differ across a resume.
  std::string serialize(bool include_run_control) const {
    auto num = [](double v) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      return std::string(buf);
    };
    std::string s;
    auto kv = [&](const std::string& k, const std::string& v) {
      s += k;
      s += "=";
      s += v;
      s += "\n";
    };
    kv("d", std::to_string(d));
    kv("d0", std::to_string(d0));
    kv("d1", std::to_string(d1));
    kv("encoder_heads", std::to_string(encoder_heads));
    kv("decoder_heads", std::to_string(decoder_heads));
    kv("n", std::to_string(n));
    kv("fps", num(fps));
    kv("phoneme_ms_lo", num(durations.phoneme_ms_lo));
    kv("phoneme_ms_hi", num(durations.phoneme_ms_hi));
    kv("word_ms_lo", num(durations.word_ms_lo));
    kv("word_ms_hi", num(durations.word_ms_hi));
    if (include_run_control) {
      kv("epochs", std::to_string(epochs));
      kv("max_steps", std::to_string(max_steps));
    }
    kv("base_lr", num(base_lr));
    kv("beta1", num(beta1));
    kv("beta2", num(beta2));
    kv("adam_eps", num(adam_eps));
    kv("seed", std::to_string(seed));
    kv("teacher_forcing", teacher_forcing ? "true" : "false");
    kv("single_branch", single_branch ? "true" : "false");
    kv("random_mask_init", random_mask_init ? "true" : "false");
    kv("disable_hierarchy", disable_hierarchy ? "true" : "false");
    kv("frontend_variant", frontend_variant);
    kv("data_dir", data_dir);
    kv("synth_sequences", std::to_string(synth_sequences));
    kv("synth_T", std::to_string(synth_T));
    kv("synth_V", std::to_string(synth_V));
    kv("synth_sample_rate", std::to_string(synth_sample_rate));
    kv("synth_amplitude", num(synth_amplitude));
    kv("n_subjects", std::to_string(n_subjects));
    kv("mel_win_ms", num(mel_win_ms));
    kv("mel_hop_ms", num(mel_hop_ms));
    kv("mask_threshold", num(mask_threshold));
    return s;
  }

  std::string canonical() const { return serialize(false); }

  std::uint64_t hash() const { return fnv1a64(canonical()); }

  void set(const std::string& key, const std::string& value) {
    auto to_u = [&](const std::string& v) -> std::uint64_t {
      return std::stoull(v);
    };
    auto to_d = [&](const std::string& v) { return std::stod(v); };
    auto to_b = [&](const std::string& v) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw Error(msg("config: bad boolean '", v, "' for key '", key, "'"));
    };
    if (key == "d") d = to_u(value);
    else if (key == "d0") d0 = to_u(value);
    else if (key == "d1") d1 = to_u(value);
    else if (key == "encoder_heads") encoder_heads = to_u(value);
    else if (key == "decoder_heads") decoder_heads = to_u(value);
    else if (key == "n") n = to_u(value);
    else if (key == "fps") fps = to_d(value);
    else if (key == "phoneme_ms_lo") durations.phoneme_ms_lo = to_d(value);
    else if (key == "phoneme_ms_hi") durations.phoneme_ms_hi = to_d(value);
    else if (key == "word_ms_lo") durations.word_ms_lo = to_d(value);
    else if (key == "word_ms_hi") durations.word_ms_hi = to_d(value);
    else if (key == "epochs") epochs = to_u(value);
    else if (key == "max_steps") max_steps = to_u(value);
    else if (key == "base_lr") base_lr = to_d(value);
    else if (key == "beta1") beta1 = to_d(value);
    else if (key == "beta2") beta2 = to_d(value);
    else if (key == "adam_eps") adam_eps = to_d(value);
    else if (key == "seed") seed = to_u(value);
    else if (key == "teacher_forcing") teacher_forcing = to_b(value);
    else if (key == "single_branch") single_branch = to_b(value);
    else if (key == "random_mask_init") random_mask_init = to_b(value);
    else if (key == "disable_hierarchy") disable_hierarchy = to_b(value);
    else if (key == "frontend_variant") frontend_variant = value;
    else if (key == "data_dir") data_dir = value;
    else if (key == "synth_sequences") synth_sequences = to_u(value);
    else if (key == "synth_T") synth_T = to_u(value);
    else if (key == "synth_V") synth_V = to_u(value);
    else if (key == "synth_sample_rate")
      synth_sample_rate = static_cast<std::uint32_t>(to_u(value));
    else if (key == "synth_amplitude") synth_amplitude = to_d(value);
    else if (key == "n_subjects") n_subjects = to_u(value);
    else if (key == "mel_win_ms") mel_win_ms = to_d(value);
    else if (key == "mel_hop_ms") mel_hop_ms = to_d(value);
    else if (key == "mask_threshold") mask_threshold = to_d(value);
    else
      throw Error(msg("config: unknown key '", key, "'"));
  }

  static Config from_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), msg("cannot open config '", path, "'"));
    Config cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      const auto hash_pos = line.find('#');
      if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(msg("config '", path, "' line ", line_no,
                        ": expected key=value"));
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t");
        return s.substr(a, b - a + 1);
      };
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    require(os.good(), msg("cannot open '", path, "' for writing"));
    os << serialize(true);
  }
};

}  // namespace corrtalk
