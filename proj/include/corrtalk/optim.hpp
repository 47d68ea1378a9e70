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
#include <vector>

#include "corrtalk/graph.hpp"
#include "corrtalk/tensor.hpp"

namespace corrtalk {

// Adam with bias correction. Moment buffers are kept in the same order as
// the parameter list handed to init().
struct AdamState {
  double lr = 1e-4;
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  void init(const std::vector<ad::Param*>& params, double base_learning_rate,
            double b1 = 0.9, double b2 = 0.999, double epsilon = 1e-8) {
    base_lr = lr = base_learning_rate;
    beta1 = b1;
    beta2 = b2;
    eps = epsilon;
    step = 0;
    m.clear();
    v.clear();
    for (const ad::Param* p : params) {
      m.push_back(Tensor::zeros(p->t.shape));
      v.push_back(Tensor::zeros(p->t.shape));
    }
  }
};

// One bias-corrected Adam update over all parameters; gradients are zeroed
// afterwards.
inline void adam_step(const std::vector<ad::Param*>& params, AdamState& s) {
  require(params.size() == s.m.size() && params.size() == s.v.size(),
          "adam_step: state does not match parameter list");
  s.step += 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ad::Param& p = *params[pi];
    if (p.t.grad.size() != p.t.data.size())
      throw Error(msg("adam_step: missing grad for param '", p.name, "'"));
    require(s.m[pi].shape == p.t.shape,
            msg("adam_step: moment shape mismatch for '", p.name, "'"));
    double* m = s.m[pi].data.data();
    double* v = s.v[pi].data.data();
    for (std::size_t i = 0; i < p.t.data.size(); ++i) {
      const double g = p.t.grad[i];
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.t.data[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
    p.t.zero_grad();
  }
}

constexpr std::int64_t kLrDecayEpochs = 80;

// lr = base_lr * 0.5^floor(epoch / 80)
inline void decay_lr(AdamState& s, std::int64_t epoch) {
  require(epoch >= 0, "decay_lr: negative epoch");
  s.lr = s.base_lr * std::pow(0.5, static_cast<double>(epoch / kLrDecayEpochs));
}

}  // namespace corrtalk
