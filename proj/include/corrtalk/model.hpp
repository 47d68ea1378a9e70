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
#include <utility>
#include <vector>

#include "corrtalk/config.hpp"
#include "corrtalk/decoder.hpp"
#include "corrtalk/encoder.hpp"
#include "corrtalk/fai.hpp"
#include "corrtalk/frontend.hpp"
#include "corrtalk/losses.hpp"
#include "corrtalk/motion.hpp"
#include "corrtalk/optim.hpp"
#include "corrtalk/synthetic.hpp"

namespace corrtalk {

// All trainable state plus training progress counters. Move-only (parameters
// are owned by the store).
struct CorrTalkModel {
  Config cfg;
  ad::ParamStore params;
  EncoderParams encoder;
  DecoderBranchParams strong_branch;
  DecoderBranchParams weak_branch;  // absent in single-branch ablation
  BranchMask mask;
  AdamState adam;
  StreamRng train_rng;
  std::int64_t epoch = 0;  // next epoch to run
  std::int64_t step = 0;   // optimizer steps taken

  std::size_t vertex_count() const { return mask.logits->t.data.size(); }
};

// FAI window: one second of frames, clamped to the sequence length.
inline std::size_t fai_window_frames(double fps, std::size_t T) {
  const std::size_t one_second = static_cast<std::size_t>(
      std::max<long long>(4, std::llround(fps)));
  return std::min<std::size_t>(std::max<std::size_t>(4, T), one_second);
}

// Mask initializer over the whole training set: per-sequence fundamental-band
// time-means are averaged across sequences, then min-max normalized.
inline MaskInit mask_init_from_dataset(const std::vector<SyntheticPair>& data,
                                       double fps) {
  require(!data.empty(), "mask init: empty dataset");
  const std::size_t V = data[0].motion.vertex_count();
  std::vector<double> acc(V, 0.0);
  for (const auto& pair : data) {
    auto disp = compute_displacements(pair.motion, pair.neutral);
    auto intensity = compute_intensity(
        disp, fai_window_frames(fps, pair.motion.frames()), 1);
    auto means = raw_band_means(intensity);
    require(means.size() == V, "mask init: inconsistent vertex counts");
    for (std::size_t v = 0; v < V; ++v) acc[v] += means[v];
  }
  for (double& v : acc) v /= static_cast<double>(data.size());
  return normalize_mask(acc);
}

inline CorrTalkModel create_model(const Config& cfg, std::size_t v_count,
                                  const MaskInit& mask_init) {
  cfg.validate();
  require(mask_init.m0.size() == v_count, "create_model: mask size mismatch");
  CorrTalkModel m;
  m.cfg = cfg;
  m.encoder = make_encoder_params(
      m.params, EncoderDims{cfg.d0, cfg.d, cfg.d1, cfg.encoder_heads},
      cfg.seed);
  m.strong_branch = make_decoder_branch(m.params, "dec.strong", v_count, cfg.d,
                                        cfg.decoder_heads, cfg.n_subjects,
                                        cfg.seed);
  if (!cfg.single_branch)
    m.weak_branch = make_decoder_branch(m.params, "dec.weak", v_count, cfg.d,
                                        cfg.decoder_heads, cfg.n_subjects,
                                        cfg.seed);
  std::vector<double> logits;
  if (cfg.random_mask_init) {
    CounterRng rng(cfg.seed, "mask.random");
    MaskInit random_init;
    random_init.m0.resize(v_count);
    for (std::size_t v = 0; v < v_count; ++v)
      random_init.m0[v] = rng.uniform(v);
    logits = mask_logits_from_init(random_init);
  } else {
    logits = mask_logits_from_init(mask_init);
  }
  m.mask.logits = &m.params.create_values("dec.mask_logits", {v_count},
                                          std::move(logits));
  m.adam.init(m.params.all(), cfg.base_lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  m.train_rng = StreamRng(mix64(cfg.seed) ^ fnv1a64("train"));
  return m;
}

inline CorrTalkModel create_model(const Config& cfg,
                                  const std::vector<SyntheticPair>& data) {
  require(!data.empty(), "create_model: empty dataset");
  return create_model(cfg, data[0].motion.vertex_count(),
                      mask_init_from_dataset(data, cfg.fps));
}

// Frontend features for one clip, interpolated to n*fps and fitted to
// exactly n*T rows.
inline Tensor prepare_acoustic(const Config& cfg, const AudioClip& clip,
                               std::size_t T) {
  AcousticFeatures feats =
      cfg.frontend_variant == "spectrogram"
          ? spectrogram_features(clip, cfg.d0, cfg.mel_win_ms, cfg.mel_hop_ms)
          : melspectrogram(clip, cfg.d0, cfg.mel_win_ms, cfg.mel_hop_ms);
  const double target_rate = static_cast<double>(cfg.n) * cfg.fps;
  AcousticFeatures interp = interpolate_features(feats, target_rate, cfg.fps);
  return align_to_frames(interp, cfg.n * T);
}

// One training example with everything flattened for the graph.
struct SequenceInputs {
  Tensor acoustic;     // {n*T, d0}
  Tensor gt_flat;      // {T, 3V} absolute positions
  Tensor neutral_row;  // {1, 3V}
  StyleVector style;
  std::size_t T = 0;
  std::size_t V = 0;
};

inline Tensor flatten_motion(const MotionSequence& seq) {
  Tensor flat = seq.vertices;
  flat.shape = {seq.frames(), 3 * seq.vertex_count()};
  return flat;
}

inline MotionSequence unflatten_motion(const Tensor& flat, std::size_t V,
                                       float fps, std::uint32_t subject) {
  MotionSequence seq;
  seq.vertices = flat;
  seq.vertices.shape = {flat.shape.at(0) , V, 3};
  require(flat.numel() == flat.shape.at(0) * V * 3,
          "unflatten_motion: size mismatch");
  seq.fps = fps;
  seq.subject_id = subject;
  return seq;
}

inline SequenceInputs make_sequence_inputs(const Config& cfg,
                                           const SyntheticPair& pair) {
  SequenceInputs in;
  in.T = pair.motion.frames();
  in.V = pair.motion.vertex_count();
  in.acoustic = prepare_acoustic(cfg, pair.audio, in.T);
  in.gt_flat = flatten_motion(pair.motion);
  Tensor neutral = pair.neutral.vertices;
  neutral.shape = {1, 3 * in.V};
  in.neutral_row = std::move(neutral);
  in.style = StyleVector::subject(pair.motion.subject_id, cfg.n_subjects);
  return in;
}

// Weighted feature nodes for both branches (or H1 twice when the hierarchy
// is disabled).
struct EncoderForward {
  HierarchyNodes hierarchy{};
  BranchWeightNodes weights_strong{}, weights_weak{};
  NodeId f_strong = 0, f_weak = 0;
  bool has_hierarchy = false;
};

inline EncoderForward build_encoder(Graph& g, CorrTalkModel& m,
                                    NodeId acoustic) {
  EncoderForward out;
  if (m.cfg.disable_hierarchy) {
    out.f_strong = nn::linear(g, acoustic, m.encoder.frame_proj);
    out.f_weak = out.f_strong;
    return out;
  }
  out.has_hierarchy = true;
  const double feature_rate = static_cast<double>(m.cfg.n) * m.cfg.fps;
  out.hierarchy = extract_hierarchy(g, acoustic, m.encoder, m.cfg.durations,
                                    feature_rate);
  out.weights_strong = branch_weights(g, out.hierarchy, m.encoder.strong_gen);
  out.weights_weak = branch_weights(g, out.hierarchy, m.encoder.weak_gen);
  out.f_strong = weighted_combine(g, out.hierarchy, out.weights_strong);
  out.f_weak = weighted_combine(g, out.hierarchy, out.weights_weak);
  return out;
}

struct TrainForward {
  EncoderForward enc;
  NodeId off_strong = 0, off_weak = 0;  // {T, 3V} offsets from neutral
  NodeId pred = 0;                      // {T, 3V} absolute positions
  NodeId l_rec = 0, l_vel = 0, l_total = 0;
};

// Full teacher-forced training graph for one sequence. The decoder history
// is the ground truth (or a caller-supplied rollout when history_override is
// given), gated per branch by the mask.
inline TrainForward build_training_graph(Graph& g, CorrTalkModel& m,
                                         const SequenceInputs& in,
                                         const Tensor* history_override =
                                             nullptr) {
  require(in.T >= 2, "training needs sequences with at least 2 frames");
  TrainForward out;
  NodeId acoustic = g.constant(in.acoustic, "acoustic");
  out.enc = build_encoder(g, m, acoustic);

  Tensor history_rows;  // {T-1, 3V} absolute positions fed as history
  if (history_override) {
    history_rows = *history_override;
  } else {
    history_rows = in.gt_flat;
    history_rows.data.resize((in.T - 1) * 3 * in.V);
    history_rows.shape = {in.T - 1, 3 * in.V};
  }
  NodeId history = g.constant(std::move(history_rows), "history");
  NodeId neutral = g.constant(in.neutral_row, "neutral");
  NodeId gt = g.constant(in.gt_flat, "gt");

  if (m.cfg.single_branch) {
    NodeId ones = g.constant(Tensor::full({1, 3 * in.V}, 1.0), "mask_ones");
    out.off_strong = branch_decode_rows(g, out.enc.f_strong, history, true,
                                        in.T, in.style, ones, m.strong_branch,
                                        m.cfg.n);
    out.pred = g.add(out.off_strong, neutral);
    out.l_rec = reconstruction_loss_node(g, out.pred, gt);
    out.l_vel = velocity_loss_node(g, out.pred, gt, ones);
  } else {
    NodeId mask_strong = mask_side_node(g, *m.mask.logits, false);
    NodeId mask_weak = mask_side_node(g, *m.mask.logits, true);
    out.off_strong = branch_decode_rows(g, out.enc.f_strong, history, true,
                                        in.T, in.style, mask_strong,
                                        m.strong_branch, m.cfg.n);
    out.off_weak = branch_decode_rows(g, out.enc.f_weak, history, true, in.T,
                                      in.style, mask_weak, m.weak_branch,
                                      m.cfg.n);
    NodeId combined =
        combine_node(g, out.off_strong, out.off_weak, mask_strong, mask_weak);
    out.pred = g.add(combined, neutral);
    out.l_rec = reconstruction_loss_node(g, out.pred, gt);
    out.l_vel = velocity_loss_node(g, out.pred, gt, mask_strong);
  }
  out.l_total = g.add(out.l_rec, out.l_vel);
  return out;
}

// Weighted features evaluated to host tensors, for inspection and decoding.
struct EncodedFeatures {
  Tensor h1, h2, h3, h4;
  Tensor weights_strong, weights_weak;  // {T, 4}; empty without hierarchy
  Tensor f_strong, f_weak;
  bool has_hierarchy = false;
};

inline EncodedFeatures encode_features(CorrTalkModel& m,
                                       const Tensor& acoustic) {
  Graph g;
  NodeId a = g.constant(acoustic, "acoustic");
  EncoderForward enc = build_encoder(g, m, a);
  g.forward();
  EncodedFeatures out;
  out.has_hierarchy = enc.has_hierarchy;
  out.f_strong = g.value(enc.f_strong);
  out.f_weak = g.value(enc.f_weak);
  if (enc.has_hierarchy) {
    out.h1 = g.value(enc.hierarchy.h1);
    out.h2 = g.value(enc.hierarchy.h2);
    out.h3 = g.value(enc.hierarchy.h3);
    out.h4 = g.value(enc.hierarchy.h4);
    out.weights_strong = g.value(enc.weights_strong.weights);
    out.weights_weak = g.value(enc.weights_weak.weights);
  } else {
    out.h1 = out.f_strong;
  }
  return out;
}

struct DecodeResult {
  MotionSequence combined;
  MotionSequence strong;
  MotionSequence weak;  // equals strong in single-branch mode
};

// Autoregressive rollout: one frame per step, each step re-reading only the
// first n*t feature rows, with the shared combined history gated per branch.
inline DecodeResult decode_sequence(CorrTalkModel& m, const Tensor& f_strong,
                                    const Tensor& f_weak,
                                    const Tensor& neutral_row,
                                    const StyleVector& style, std::size_t T,
                                    float fps, std::uint32_t subject = 0) {
  style.validate();
  const std::size_t V = m.vertex_count();
  const std::size_t dv = 3 * V;
  require(neutral_row.shape == (std::vector<std::size_t>{1, dv}),
          "decode_sequence: neutral shape mismatch");
  require(f_strong.shape.at(0) >= m.cfg.n * T,
          "decode_sequence: features shorter than n*T");
  const std::vector<double> mask_values = m.mask.values();

  Tensor history = Tensor::zeros({0, dv});
  history.shape = {0, dv};
  Tensor strong_rows = Tensor::zeros({T, dv});
  Tensor weak_rows = Tensor::zeros({T, dv});
  Tensor combined_rows = Tensor::zeros({T, dv});

  for (std::size_t t = 1; t <= T; ++t) {
    Graph g;
    const std::size_t fa_rows = m.cfg.n * t;
    auto take_rows = [&](const Tensor& f) {
      Tensor cut = Tensor::zeros({fa_rows, f.shape[1]});
      std::copy_n(f.data.data(), fa_rows * f.shape[1], cut.data.data());
      return cut;
    };
    NodeId fs = g.constant(take_rows(f_strong), "f_strong");
    NodeId hist = 0;
    bool has_hist = t > 1;
    if (has_hist) hist = g.constant(history, "history");

    NodeId off_s, off_w = 0;
    if (m.cfg.single_branch) {
      NodeId ones = g.constant(Tensor::full({1, dv}, 1.0), "mask_ones");
      off_s = branch_decode_rows(g, fs, hist, has_hist, t, style, ones,
                                 m.strong_branch, m.cfg.n);
    } else {
      NodeId fw = g.constant(take_rows(f_weak), "f_weak");
      NodeId mask_strong = mask_side_node(g, *m.mask.logits, false);
      NodeId mask_weak = mask_side_node(g, *m.mask.logits, true);
      off_s = branch_decode_rows(g, fs, hist, has_hist, t, style, mask_strong,
                                 m.strong_branch, m.cfg.n);
      off_w = branch_decode_rows(g, fw, hist, has_hist, t, style, mask_weak,
                                 m.weak_branch, m.cfg.n);
    }
    g.forward();

    const Tensor& off_s_val = g.value(off_s);
    for (std::size_t c = 0; c < dv; ++c) {
      strong_rows.data[(t - 1) * dv + c] =
          off_s_val.data[(t - 1) * dv + c] + neutral_row.data[c];
    }
    if (m.cfg.single_branch) {
      std::copy_n(strong_rows.data.data() + (t - 1) * dv, dv,
                  weak_rows.data.data() + (t - 1) * dv);
      std::copy_n(strong_rows.data.data() + (t - 1) * dv, dv,
                  combined_rows.data.data() + (t - 1) * dv);
    } else {
      const Tensor& off_w_val = g.value(off_w);
      for (std::size_t c = 0; c < dv; ++c)
        weak_rows.data[(t - 1) * dv + c] =
            off_w_val.data[(t - 1) * dv + c] + neutral_row.data[c];
      for (std::size_t v = 0; v < V; ++v)
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t idx = (t - 1) * dv + v * 3 + c;
          combined_rows.data[idx] =
              mask_values[v] * strong_rows.data[idx] +
              (1.0 - mask_values[v]) * weak_rows.data[idx];
        }
    }
    // grow the shared history by the newly combined frame
    Tensor next = Tensor::zeros({t, dv});
    std::copy_n(combined_rows.data.data(), t * dv, next.data.data());
    history = std::move(next);
  }

  DecodeResult out;
  out.combined = unflatten_motion(combined_rows, V, fps, subject);
  out.strong = unflatten_motion(strong_rows, V, fps, subject);
  out.weak = unflatten_motion(weak_rows, V, fps, subject);
  return out;
}

inline DecodeResult decode_from_inputs(CorrTalkModel& m,
                                       const SequenceInputs& in) {
  EncodedFeatures enc = encode_features(m, in.acoustic);
  std::uint32_t subject = 0;
  for (std::size_t i = 0; i < in.style.onehot.data.size(); ++i)
    if (in.style.onehot.data[i] == 1.0)
      subject = static_cast<std::uint32_t>(i);
  return decode_sequence(m, enc.f_strong, enc.f_weak, in.neutral_row, in.style,
                         in.T, static_cast<float>(m.cfg.fps), subject);
}

}  // namespace corrtalk
