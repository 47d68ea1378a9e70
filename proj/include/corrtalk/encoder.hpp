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

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "corrtalk/graph.hpp"

// Weighted hierarchical feature encoder: frame-, phoneme-, word- and
// utterance-level representations extracted with duration-bounded local
// self-attention, then blended per branch by learned importance weights.

namespace corrtalk {

using ad::Graph;
using ad::NodeId;
using ad::Param;

struct LinearParams {
  Param* w = nullptr;
  Param* b = nullptr;
};

struct AttentionParams {
  LinearParams q, k, v, out;
  std::size_t heads = 1;
};

struct BlockParams {
  AttentionParams attn;
  LinearParams ffn1, ffn2;
  Param* ln1_gain = nullptr;
  Param* ln1_bias = nullptr;
  Param* ln2_gain = nullptr;
  Param* ln2_bias = nullptr;
};

// One importance-weight generator (Phi/Psi/Theta); each level of each branch
// owns its own, so the two branches share no parameters.
struct WeightGenParams {
  LinearParams phi, psi, theta;
};

struct EncoderDims {
  std::size_t d0 = 80;  // acoustic feature width; blocks run at this width
  std::size_t d = 64;   // hierarchical feature width
  std::size_t d1 = 32;  // weight-generator hidden width
  std::size_t heads = 2;
};

struct EncoderParams {
  EncoderDims dims;
  LinearParams frame_proj;                 // d0 -> d, yields H1
  BlockParams block_phoneme, block_word, block_utterance;
  LinearParams proj2, proj3, proj4;        // d0 -> d after each block
  std::array<WeightGenParams, 4> strong_gen;
  std::array<WeightGenParams, 4> weak_gen;
};

// Statistical pronunciation-unit durations; the attention window of each
// level is the midpoint of its range, converted to frames. The utterance
// level always spans the whole sequence.
struct DurationConfig {
  double phoneme_ms_lo = 50.0;
  double phoneme_ms_hi = 200.0;
  double word_ms_lo = 250.0;
  double word_ms_hi = 1000.0;

  void validate() const {
    require(phoneme_ms_lo > 0 && phoneme_ms_hi > phoneme_ms_lo,
            "durations: phoneme range must be positive and ordered");
    require(word_ms_lo > 0 && word_ms_hi > word_ms_lo,
            "durations: word range must be positive and ordered");
    require(phoneme_ms_hi <= word_ms_lo,
            "durations: phoneme durations must be shorter than word durations");
  }
  std::size_t phoneme_frames(double feature_rate) const {
    return frames_for((phoneme_ms_lo + phoneme_ms_hi) / 2.0, feature_rate);
  }
  std::size_t word_frames(double feature_rate) const {
    return frames_for((word_ms_lo + word_ms_hi) / 2.0, feature_rate);
  }

 private:
  static std::size_t frames_for(double ms, double rate) {
    return static_cast<std::size_t>(
        std::max<long long>(1, std::llround(ms / 1000.0 * rate)));
  }
};

namespace nn {

inline LinearParams make_linear(ad::ParamStore& ps, const std::string& name,
                                std::size_t in, std::size_t out,
                                std::uint64_t seed) {
  LinearParams p;
  p.w = &ps.create_uniform(name + ".w", {in, out}, seed, in);
  p.b = &ps.create_uniform(name + ".b", {out}, seed, in);
  return p;
}

inline AttentionParams make_attention(ad::ParamStore& ps,
                                      const std::string& name, std::size_t dm,
                                      std::size_t heads, std::uint64_t seed) {
  require(dm % heads == 0, msg("attention width ", dm,
                               " not divisible by ", heads, " heads"));
  AttentionParams p;
  p.q = make_linear(ps, name + ".q", dm, dm, seed);
  p.k = make_linear(ps, name + ".k", dm, dm, seed);
  p.v = make_linear(ps, name + ".v", dm, dm, seed);
  p.out = make_linear(ps, name + ".out", dm, dm, seed);
  p.heads = heads;
  return p;
}

inline BlockParams make_block(ad::ParamStore& ps, const std::string& name,
                              std::size_t dm, std::size_t heads,
                              std::uint64_t seed) {
  BlockParams p;
  p.attn = make_attention(ps, name + ".attn", dm, heads, seed);
  p.ffn1 = make_linear(ps, name + ".ffn1", dm, 2 * dm, seed);
  p.ffn2 = make_linear(ps, name + ".ffn2", 2 * dm, dm, seed);
  // layer-norm affine: identity at init
  p.ln1_gain = &ps.create_full(name + ".ln1.gain", {dm}, 1.0);
  p.ln1_bias = &ps.create_full(name + ".ln1.bias", {dm}, 0.0);
  p.ln2_gain = &ps.create_full(name + ".ln2.gain", {dm}, 1.0);
  p.ln2_bias = &ps.create_full(name + ".ln2.bias", {dm}, 0.0);
  return p;
}

inline WeightGenParams make_weight_gen(ad::ParamStore& ps,
                                       const std::string& name, std::size_t d,
                                       std::size_t d1, std::uint64_t seed) {
  WeightGenParams p;
  p.phi = make_linear(ps, name + ".phi", d, d1, seed);
  p.psi = make_linear(ps, name + ".psi", d, d1, seed);
  p.theta = make_linear(ps, name + ".theta", d1, 1, seed);
  return p;
}

inline NodeId linear(Graph& g, NodeId x, const LinearParams& p) {
  return g.add(g.matmul(x, g.param(*p.w)), g.param(*p.b));
}

// Allow map for local self-attention: token i may attend to j iff
// |i - j| <= floor(window_frames / 2).
inline Tensor window_allow_mask(std::size_t T, std::size_t window_frames) {
  const long radius = static_cast<long>(window_frames / 2);
  Tensor allow = Tensor::zeros({T, T});
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      if (std::labs(static_cast<long>(i) - static_cast<long>(j)) <= radius)
        allow.at(i, j) = 1.0;
  return allow;
}

inline Tensor causal_allow_mask(std::size_t T) {
  Tensor allow = Tensor::zeros({T, T});
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j <= i; ++j) allow.at(i, j) = 1.0;
  return allow;
}

// Decoder step t may read speech frames [0, rate_multiple*(t+1)).
inline Tensor alignment_allow_mask(std::size_t T, std::size_t Ta,
                                   std::size_t rate_multiple) {
  Tensor allow = Tensor::zeros({T, Ta});
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t hi = std::min(Ta, rate_multiple * (t + 1));
    for (std::size_t j = 0; j < hi; ++j) allow.at(t, j) = 1.0;
  }
  return allow;
}

// Multi-head scaled dot-product attention with an explicit allow map.
// Excluded positions receive probability exactly zero.
inline NodeId multihead_attention(Graph& g, NodeId q_in, NodeId kv_in,
                                  const AttentionParams& p, Tensor allow,
                                  std::vector<NodeId>* probs_out = nullptr) {
  const std::size_t dm = g.shape(q_in).at(1);
  const std::size_t dh = dm / p.heads;
  NodeId q = linear(g, q_in, p.q);
  NodeId k = linear(g, kv_in, p.k);
  NodeId v = linear(g, kv_in, p.v);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<NodeId> ctx;
  for (std::size_t h = 0; h < p.heads; ++h) {
    NodeId qh = g.slice(q, 1, h * dh, dh);
    NodeId kh = g.slice(k, 1, h * dh, dh);
    NodeId vh = g.slice(v, 1, h * dh, dh);
    NodeId scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_scale);
    NodeId probs = g.masked_softmax(scores, 1, allow);
    if (probs_out) probs_out->push_back(probs);
    ctx.push_back(g.matmul(probs, vh));
  }
  NodeId merged = ctx.size() == 1 ? ctx[0] : g.concat(ctx, 1);
  return linear(g, merged, p.out);
}

// Duration-bounded self-attention block: local MHA + residual + layer norm,
// then a position-wise feed-forward (tanh) + residual + layer norm. Token
// count is preserved (stride-one overlapping windows).
inline NodeId speechformer_block(Graph& g, NodeId h, const BlockParams& p,
                                 std::size_t window_frames,
                                 std::vector<NodeId>* probs_out = nullptr) {
  require(window_frames >= 1, "speechformer_block: window must be >= 1");
  const std::size_t T = g.shape(h).at(0);
  NodeId attn = multihead_attention(g, h, h, p.attn,
                                    window_allow_mask(T, window_frames),
                                    probs_out);
  NodeId x1 = g.layer_norm(g.add(h, attn), g.param(*p.ln1_gain),
                           g.param(*p.ln1_bias));
  NodeId ffn = linear(g, g.tanh(linear(g, x1, p.ffn1)), p.ffn2);
  return g.layer_norm(g.add(x1, ffn), g.param(*p.ln2_gain),
                      g.param(*p.ln2_bias));
}

}  // namespace nn

inline EncoderParams make_encoder_params(ad::ParamStore& ps,
                                         const EncoderDims& dims,
                                         std::uint64_t seed) {
  EncoderParams e;
  e.dims = dims;
  e.frame_proj = nn::make_linear(ps, "enc.frame_proj", dims.d0, dims.d, seed);
  e.block_phoneme = nn::make_block(ps, "enc.block_phoneme", dims.d0, dims.heads, seed);
  e.block_word = nn::make_block(ps, "enc.block_word", dims.d0, dims.heads, seed);
  e.block_utterance =
      nn::make_block(ps, "enc.block_utterance", dims.d0, dims.heads, seed);
  e.proj2 = nn::make_linear(ps, "enc.proj2", dims.d0, dims.d, seed);
  e.proj3 = nn::make_linear(ps, "enc.proj3", dims.d0, dims.d, seed);
  e.proj4 = nn::make_linear(ps, "enc.proj4", dims.d0, dims.d, seed);
  static const char* kLevels[4] = {"frame", "phoneme", "word", "utterance"};
  for (std::size_t l = 0; l < 4; ++l) {
    e.strong_gen[l] = nn::make_weight_gen(
        ps, msg("enc.wgen.strong.", kLevels[l]), dims.d, dims.d1, seed);
    e.weak_gen[l] = nn::make_weight_gen(
        ps, msg("enc.wgen.weak.", kLevels[l]), dims.d, dims.d1, seed);
  }
  return e;
}

struct HierarchyNodes {
  NodeId h1, h2, h3, h4;           // T x d
  NodeId hhat2, hhat3, hhat4;      // T x d0, pre-projection block outputs
};

// A -> H1 (linear); the SpeechFormer chain runs at width d0 with the
// phoneme, word and utterance windows, each level projected to width d.
// Every level keeps T tokens.
inline HierarchyNodes extract_hierarchy(Graph& g, NodeId acoustic,
                                        const EncoderParams& p,
                                        const DurationConfig& durations,
                                        double feature_rate) {
  durations.validate();
  const std::size_t T = g.shape(acoustic).at(0);
  HierarchyNodes h;
  h.h1 = nn::linear(g, acoustic, p.frame_proj);
  h.hhat2 = nn::speechformer_block(g, acoustic, p.block_phoneme,
                                   durations.phoneme_frames(feature_rate));
  h.h2 = nn::linear(g, h.hhat2, p.proj2);
  h.hhat3 = nn::speechformer_block(g, h.hhat2, p.block_word,
                                   durations.word_frames(feature_rate));
  h.h3 = nn::linear(g, h.hhat3, p.proj3);
  h.hhat4 = nn::speechformer_block(g, h.hhat3, p.block_utterance,
                                   2 * T - 1);  // spans the whole sequence
  h.h4 = nn::linear(g, h.hhat4, p.proj4);
  return h;
}

struct BranchWeightNodes {
  NodeId weights;                     // T x 4, softmax-normalized per step
  NodeId alpha, beta, gamma, delta;   // T x 1 slices
};

// Per level: Q = Phi(H), K = Psi(H), Z = tanh(Q + K), logit = Theta(Z);
// the four per-step logits are normalized with a softmax.
inline BranchWeightNodes branch_weights(
    Graph& g, const HierarchyNodes& h,
    const std::array<WeightGenParams, 4>& gens) {
  const NodeId levels[4] = {h.h1, h.h2, h.h3, h.h4};
  std::vector<NodeId> logits;
  for (std::size_t l = 0; l < 4; ++l) {
    NodeId q = nn::linear(g, levels[l], gens[l].phi);
    NodeId k = nn::linear(g, levels[l], gens[l].psi);
    NodeId z = g.tanh(g.add(q, k));
    logits.push_back(nn::linear(g, z, gens[l].theta));
  }
  BranchWeightNodes w;
  w.weights = g.softmax(g.concat(logits, 1), 1);
  w.alpha = g.slice(w.weights, 1, 0, 1);
  w.beta = g.slice(w.weights, 1, 1, 1);
  w.gamma = g.slice(w.weights, 1, 2, 1);
  w.delta = g.slice(w.weights, 1, 3, 1);
  return w;
}

// F[t] = alpha[t] H1[t] + beta[t] H2[t] + gamma[t] H3[t] + delta[t] H4[t]
inline NodeId weighted_combine(Graph& g, const HierarchyNodes& h,
                               const BranchWeightNodes& w) {
  NodeId f = g.add(g.mul(w.alpha, h.h1), g.mul(w.beta, h.h2));
  f = g.add(f, g.mul(w.gamma, h.h3));
  return g.add(f, g.mul(w.delta, h.h4));
}

}  // namespace corrtalk
