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
#include <vector>

#include "corrtalk/graph.hpp"
#include "corrtalk/motion.hpp"

namespace corrtalk {

struct LossReport {
  double l_rec = 0;
  double l_vel = 0;
  double l_total = 0;
};

struct MetricReport {
  double lip_vertex_error = 0;  // mm
  double fdd = 0;               // mm, signed
};

// --- graph builders (used by the training step) ---

// sum_t sum_v ||y - y_hat||^2, over {T, 3V} rows of absolute positions.
inline ad::NodeId reconstruction_loss_node(ad::Graph& g, ad::NodeId pred,
                                           ad::NodeId gt) {
  ad::NodeId diff = g.sub(pred, gt);
  return g.sum_all(g.mul(diff, diff));
}

// sum_{t>=2} || m (y_t - y_{t-1}) - m (y_hat_t - y_hat_{t-1}) ||^2 with the
// per-vertex mask broadcast over xyz ({1, 3V} node).
inline ad::NodeId velocity_loss_node(ad::Graph& g, ad::NodeId pred,
                                     ad::NodeId gt, ad::NodeId mask_row) {
  const std::size_t T = g.shape(pred).at(0);
  if (T < 2) throw Error("velocity_loss: needs at least 2 frames");
  auto vel = [&](ad::NodeId x) {
    return g.sub(g.slice(x, 0, 1, T - 1), g.slice(x, 0, 0, T - 1));
  };
  ad::NodeId diff = g.sub(g.mul(mask_row, vel(gt)), g.mul(mask_row, vel(pred)));
  return g.sum_all(g.mul(diff, diff));
}

// --- host-side evaluation on motion sequences ---

inline void check_same_shape(const MotionSequence& a, const MotionSequence& b,
                             const char* op) {
  if (a.vertices.shape != b.vertices.shape)
    throw Error(msg(op, ": shape mismatch ", shape_str(a.vertices.shape),
                    " vs ", shape_str(b.vertices.shape)));
}

inline double reconstruction_loss(const MotionSequence& pred,
                                  const MotionSequence& gt) {
  check_same_shape(pred, gt, "reconstruction_loss");
  double acc = 0;
  for (std::size_t i = 0; i < pred.vertices.data.size(); ++i) {
    const double d = gt.vertices.data[i] - pred.vertices.data[i];
    acc += d * d;
  }
  return acc;
}

inline double velocity_loss(const MotionSequence& pred,
                            const MotionSequence& gt,
                            const std::vector<double>& mask) {
  check_same_shape(pred, gt, "velocity_loss");
  const std::size_t T = pred.frames(), V = pred.vertex_count();
  if (T < 2) throw Error("velocity_loss: needs at least 2 frames");
  require(mask.size() == V, "velocity_loss: mask size mismatch");
  double acc = 0;
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t v = 0; v < V; ++v)
      for (std::size_t c = 0; c < 3; ++c) {
        const double gv =
            gt.vertices.at(t, v, c) - gt.vertices.at(t - 1, v, c);
        const double pv =
            pred.vertices.at(t, v, c) - pred.vertices.at(t - 1, v, c);
        const double d = mask[v] * gv - mask[v] * pv;
        acc += d * d;
      }
  return acc;
}

inline LossReport make_loss_report(double l_rec, double l_vel) {
  return LossReport{l_rec, l_vel, l_rec + l_vel};
}

// Max per-frame Euclidean error over the lip vertices, averaged over frames.
inline double lip_vertex_error(const MotionSequence& pred,
                               const MotionSequence& gt,
                               const RegionMask& regions) {
  check_same_shape(pred, gt, "lip_vertex_error");
  if (regions.lip.empty()) throw Error("lip_vertex_error: empty lip set");
  regions.validate(pred.vertex_count());
  const std::size_t T = pred.frames();
  double acc = 0;
  for (std::size_t t = 0; t < T; ++t) {
    double worst = 0;
    for (std::uint32_t v : regions.lip) {
      double d2 = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = pred.vertices.at(t, v, c) - gt.vertices.at(t, v, c);
        d2 += d * d;
      }
      worst = std::max(worst, std::sqrt(d2));
    }
    acc += worst;
  }
  return acc / static_cast<double>(T);
}

// Upper-face dynamics deviation: for each upper-face vertex, the standard
// deviation over time (population) of its displacement from neutral; FDD is
// the mean over those vertices of dyn(pred) - dyn(gt). Negative values mean
// the prediction is under-animated.
inline double fdd(const MotionSequence& pred, const MotionSequence& gt,
                  const NeutralGeometry& neutral, const RegionMask& regions) {
  check_same_shape(pred, gt, "fdd");
  require(pred.vertex_count() == neutral.vertex_count(),
          "fdd: neutral V mismatch");
  if (regions.upper.empty()) throw Error("fdd: empty upper-face set");
  regions.validate(pred.vertex_count());
  const std::size_t T = pred.frames();
  auto dyn = [&](const MotionSequence& seq, std::uint32_t v) {
    double mean = 0;
    std::vector<double> disp(T);
    for (std::size_t t = 0; t < T; ++t) {
      double d2 = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = seq.vertices.at(t, v, c) - neutral.vertices.at(v, c);
        d2 += d * d;
      }
      disp[t] = std::sqrt(d2);
      mean += disp[t];
    }
    mean /= static_cast<double>(T);
    double var = 0;
    for (double d : disp) var += (d - mean) * (d - mean);
    return std::sqrt(var / static_cast<double>(T));
  };
  double acc = 0;
  for (std::uint32_t v : regions.upper) acc += dyn(pred, v) - dyn(gt, v);
  return acc / static_cast<double>(regions.upper.size());
}

}  // namespace corrtalk
