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
#include <string>
#include <vector>

#include "corrtalk/encoder.hpp"
#include "corrtalk/fai.hpp"
#include "corrtalk/graph.hpp"

// FAI-based dual-branch decoder: two causal transformer branches map the
// strong/weak weighted speech features to vertex offsets from the neutral
// geometry; a learnable per-vertex mask gates each branch's view of the
// motion history and blends the two outputs per frame.

namespace corrtalk {

// One-hot talking-style conditioning.
struct StyleVector {
  Tensor onehot;  // {1, n_subjects}

  static StyleVector subject(std::size_t id, std::size_t n_subjects) {
    require(id < n_subjects,
            msg("style subject ", id, " out of range (", n_subjects, ")"));
    StyleVector s;
    s.onehot = Tensor::zeros({1, n_subjects});
    s.onehot.data[id] = 1.0;
    return s;
  }
  void validate() const {
    std::size_t ones = 0;
    for (double v : onehot.data) {
      require(v == 0.0 || v == 1.0, "style vector entries must be 0 or 1");
      if (v == 1.0) ++ones;
    }
    require(ones == 1, "style vector must have exactly one active entry");
  }
};

// Trainable per-vertex mask in logit space; sigmoid keeps the mapped mask
// inside (0, 1) for any parameter value.
struct BranchMask {
  Param* logits = nullptr;  // {V}

  std::vector<double> values() const {
    std::vector<double> out(logits->t.data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = 1.0 / (1.0 + std::exp(-logits->t.data[i]));
    return out;
  }
};

constexpr double kMaskClip = 1e-4;

// logits = logit(clip(m0, 1e-4, 1-1e-4)); sigmoid recovers the clipped m0.
inline std::vector<double> mask_logits_from_init(const MaskInit& init) {
  std::vector<double> logits(init.m0.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = std::min(1.0 - kMaskClip, std::max(kMaskClip, init.m0[i]));
    logits[i] = std::log(p / (1.0 - p));
  }
  return logits;
}

struct DecoderBranchParams {
  LinearParams embed;      // 3V -> d
  Param* start = nullptr;  // learned start token, {1, d}
  Param* style = nullptr;  // {n_subjects, d}
  AttentionParams self_attn;
  AttentionParams cross_attn;
  LinearParams ffn1, ffn2;
  Param* ln1_gain = nullptr;
  Param* ln1_bias = nullptr;
  Param* ln2_gain = nullptr;
  Param* ln2_bias = nullptr;
  Param* ln3_gain = nullptr;
  Param* ln3_bias = nullptr;
  LinearParams out_proj;   // d -> 3V
};

inline DecoderBranchParams make_decoder_branch(ad::ParamStore& ps,
                                               const std::string& name,
                                               std::size_t v_count,
                                               std::size_t d,
                                               std::size_t heads,
                                               std::size_t n_subjects,
                                               std::uint64_t seed) {
  DecoderBranchParams p;
  const std::size_t dv = 3 * v_count;
  p.embed = nn::make_linear(ps, name + ".embed", dv, d, seed);
  p.start = &ps.create_uniform(name + ".start", {1, d}, seed, d);
  p.style = &ps.create_uniform(name + ".style", {n_subjects, d}, seed, d);
  p.self_attn = nn::make_attention(ps, name + ".self", d, heads, seed);
  p.cross_attn = nn::make_attention(ps, name + ".cross", d, heads, seed);
  p.ffn1 = nn::make_linear(ps, name + ".ffn1", d, 2 * d, seed);
  p.ffn2 = nn::make_linear(ps, name + ".ffn2", 2 * d, d, seed);
  p.ln1_gain = &ps.create_full(name + ".ln1.gain", {d}, 1.0);
  p.ln1_bias = &ps.create_full(name + ".ln1.bias", {d}, 0.0);
  p.ln2_gain = &ps.create_full(name + ".ln2.gain", {d}, 1.0);
  p.ln2_bias = &ps.create_full(name + ".ln2.bias", {d}, 0.0);
  p.ln3_gain = &ps.create_full(name + ".ln3.gain", {d}, 1.0);
  p.ln3_bias = &ps.create_full(name + ".ln3.bias", {d}, 0.0);
  p.out_proj = nn::make_linear(ps, name + ".out", d, dv, seed);
  return p;
}

inline Tensor sinusoidal_positions(std::size_t T, std::size_t d) {
  Tensor pe = Tensor::zeros({T, d});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i) {
      const double exponent =
          static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, exponent);
      pe.at(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

// Per-vertex mask expanded over xyz as a {1, 3V} graph node:
// sigmoid(logits) for the strong side, 1 - sigmoid(logits) for the weak side.
inline NodeId mask_side_node(Graph& g, Param& logits, bool weak_side) {
  const std::size_t v_count = logits.t.data.size();
  NodeId m = g.sigmoid(g.param(logits));                      // {V}
  m = g.reshape(m, {v_count, 1});
  m = g.broadcast_to(m, {v_count, 3});
  m = g.reshape(m, {1, 3 * v_count});
  if (weak_side)
    m = g.sub(g.constant(Tensor::full({1, 3 * v_count}, 1.0), "ones"), m);
  return m;
}

// One decoding branch over T output frames. `history` holds the previous
// motion frames as a {T-1, 3V} node (absolute positions), or is absent for
// T = 1. The history is gated by mask_side, embedded, prefixed with the
// learned start token, conditioned on style and position, passed through
// causal self-attention and cross-attention into the speech features, and
// projected to per-frame vertex offsets {T, 3V} relative to neutral.
inline NodeId branch_decode_rows(Graph& g, NodeId features, NodeId history,
                                 bool has_history, std::size_t T,
                                 const StyleVector& style, NodeId mask_side,
                                 const DecoderBranchParams& p,
                                 std::size_t rate_multiple) {
  const std::size_t d = p.start->t.shape[1];
  const std::size_t Ta = g.shape(features).at(0);
  require(rate_multiple >= 1, "branch_decode_rows: rate multiple must be >= 1");
  if (has_history) {
    const std::size_t hist_T = g.shape(history).at(0);
    if (hist_T + 1 != T)
      throw Error(msg("branch_decode_rows: history has ", hist_T,
                      " frames, expected ", T - 1));
  } else {
    require(T == 1, "branch_decode_rows: missing history for T > 1");
  }
  require(Ta >= rate_multiple * T,
          msg("branch_decode_rows: features too short (", Ta, " rows for T=",
              T, ")"));

  NodeId rows = g.param(*p.start);
  if (has_history) {
    NodeId gated = g.mul(history, mask_side);
    rows = g.concat({rows, nn::linear(g, gated, p.embed)}, 0);
  }
  NodeId style_row = g.matmul(g.constant(style.onehot, "style"),
                              g.param(*p.style));
  NodeId x = g.add(g.add(rows, style_row),
                   g.constant(sinusoidal_positions(T, d), "positions"));

  NodeId sa = nn::multihead_attention(g, x, x, p.self_attn,
                                      nn::causal_allow_mask(T));
  x = g.layer_norm(g.add(x, sa), g.param(*p.ln1_gain), g.param(*p.ln1_bias));
  NodeId ca = nn::multihead_attention(
      g, x, features, p.cross_attn,
      nn::alignment_allow_mask(T, Ta, rate_multiple));
  x = g.layer_norm(g.add(x, ca), g.param(*p.ln2_gain), g.param(*p.ln2_bias));
  NodeId ffn = nn::linear(g, g.tanh(nn::linear(g, x, p.ffn1)), p.ffn2);
  x = g.layer_norm(g.add(x, ffn), g.param(*p.ln3_gain), g.param(*p.ln3_bias));
  return nn::linear(g, x, p.out_proj);
}

// y_hat = m * y_strong + (1 - m) * y_weak, per vertex, broadcast over xyz.
inline NodeId combine_node(Graph& g, NodeId strong_rows, NodeId weak_rows,
                           NodeId mask_side_strong, NodeId mask_side_weak) {
  return g.add(g.mul(mask_side_strong, strong_rows),
               g.mul(mask_side_weak, weak_rows));
}

// Host-side recombination of one frame.
inline Tensor combine(const Tensor& y_strong, const Tensor& y_weak,
                      const std::vector<double>& mask) {
  require(y_strong.shape == y_weak.shape && y_strong.rank() == 2 &&
              y_strong.shape[1] == 3 && y_strong.shape[0] == mask.size(),
          "combine: shape mismatch");
  Tensor out = Tensor::zeros(y_strong.shape);
  for (std::size_t v = 0; v < mask.size(); ++v)
    for (std::size_t c = 0; c < 3; ++c)
      out.at(v, c) =
          mask[v] * y_strong.at(v, c) + (1.0 - mask[v]) * y_weak.at(v, c);
  return out;
}

}  // namespace corrtalk
