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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "corrtalk/common.hpp"
#include "corrtalk/rng.hpp"
#include "corrtalk/tensor.hpp"

namespace corrtalk {
namespace ad {

// Trainable leaf. Values persist across graphs; gradients accumulate here
// during backward and are consumed by the optimizer.
struct Param {
  std::string name;
  Tensor t;
};

// Owns parameters in creation order. Initialization draws from a
// counter-based stream keyed by (seed, name), so values do not depend on
// the order in which parameters are created.
class ParamStore {
 public:
  // uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
  Param& create_uniform(const std::string& name,
                        std::vector<std::size_t> shape, std::uint64_t seed,
                        std::size_t fan_in) {
    Param& p = emplace(name, std::move(shape));
    CounterRng rng(seed, name);
    const double half = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < p.t.data.size(); ++i)
      p.t.data[i] = rng.uniform_sym(i, half);
    return p;
  }

  Param& create_full(const std::string& name, std::vector<std::size_t> shape,
                     double value) {
    Param& p = emplace(name, std::move(shape));
    std::fill(p.t.data.begin(), p.t.data.end(), value);
    return p;
  }

  Param& create_values(const std::string& name, std::vector<std::size_t> shape,
                       std::vector<double> values) {
    Param& p = emplace(name, std::move(shape));
    require(values.size() == p.t.data.size(),
            msg("param '", name, "': value count mismatch"));
    p.t.data = std::move(values);
    return p;
  }

  Param* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : owned_[it->second].get();
  }
  Param& at(const std::string& name) {
    Param* p = find(name);
    require(p != nullptr, msg("unknown param '", name, "'"));
    return *p;
  }

  std::vector<Param*> all() {
    std::vector<Param*> out;
    out.reserve(owned_.size());
    for (auto& p : owned_) out.push_back(p.get());
    return out;
  }
  std::size_t size() const { return owned_.size(); }

  void zero_grads() {
    for (auto& p : owned_) p->t.zero_grad();
  }

 private:
  Param& emplace(const std::string& name, std::vector<std::size_t> shape) {
    require(index_.find(name) == index_.end(),
            msg("duplicate param '", name, "'"));
    auto p = std::make_unique<Param>();
    p->name = name;
    p->t = Tensor::zeros(std::move(shape));
    p->t.requires_grad = true;
    p->t.ensure_grad();
    index_[name] = owned_.size();
    owned_.push_back(std::move(p));
    return *owned_.back();
  }

  std::vector<std::unique_ptr<Param>> owned_;
  std::unordered_map<std::string, std::size_t> index_;
};

using NodeId = std::size_t;
using NamedTensors = std::map<std::string, Tensor>;

enum class Op {
  kInput,
  kConst,
  kParam,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kTanh,
  kSigmoid,
  kSoftmax,
  kLayerNorm,
  kConcat,
  kSlice,
  kTranspose,
  kBroadcast,
  kReshape,
  kSumAll,
};

// Computation graph over fp64 tensors with reverse-mode differentiation.
// Nodes are stored in creation order, which is a topological order by
// construction; forward evaluates in that order and backward accumulates in
// the exact reverse, so results are deterministic in single-threaded mode.
// The graph is re-evaluable: forward() may be called repeatedly (with new
// input bindings or updated parameter values), which is what the
// finite-difference gradient checker relies on.
class Graph {
 public:
  NodeId input(const std::string& name, std::vector<std::size_t> shape,
               bool requires_grad = false) {
    Node n;
    n.op = Op::kInput;
    n.label = name;
    n.val.shape = std::move(shape);
    n.req = requires_grad;
    return push(std::move(n));
  }

  NodeId constant(Tensor value, const std::string& label = "const") {
    require(value.all_finite(), msg("non-finite constant '", label, "'"));
    Node n;
    n.op = Op::kConst;
    n.label = label;
    n.val = std::move(value);
    return push(std::move(n));
  }

  NodeId param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Node n;
    n.op = Op::kParam;
    n.label = p.name;
    n.bound = &p;
    n.val.shape = p.t.shape;
    n.req = p.t.requires_grad;
    NodeId id = push(std::move(n));
    param_nodes_[&p] = id;
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    const auto& sa = nodes_[a].val.shape;
    const auto& sb = nodes_[b].val.shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw Error(msg("shape mismatch in op 'matmul': ", shape_str(sa), " x ",
                      shape_str(sb)));
    Node n = binary(Op::kMatMul, "matmul", a, b);
    n.val.shape = {sa[0], sb[1]};
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) { return broadcast_binary(Op::kAdd, "add", a, b); }
  NodeId sub(NodeId a, NodeId b) { return broadcast_binary(Op::kSub, "sub", a, b); }
  NodeId mul(NodeId a, NodeId b) { return broadcast_binary(Op::kMul, "mul", a, b); }

  NodeId scale(NodeId a, double c) {
    return mul(a, constant(Tensor::scalar(c), "scale"));
  }

  NodeId tanh(NodeId a) { return push(unary(Op::kTanh, "tanh", a)); }
  NodeId sigmoid(NodeId a) { return push(unary(Op::kSigmoid, "sigmoid", a)); }

  NodeId softmax(NodeId a, std::size_t axis) {
    Node n = unary(Op::kSoftmax, "softmax", a);
    require(axis < n.val.shape.size(), "softmax: axis out of range");
    n.axis = axis;
    return push(std::move(n));
  }

  // Softmax restricted to entries where allow != 0; excluded entries get
  // probability exactly 0 and never contribute to max or sum, which makes
  // windowed attention independent of out-of-window tokens bit-for-bit.
  NodeId masked_softmax(NodeId a, std::size_t axis, Tensor allow) {
    Node n = unary(Op::kSoftmax, "masked_softmax", a);
    require(axis < n.val.shape.size(), "masked_softmax: axis out of range");
    require(allow.shape == n.val.shape,
            msg("shape mismatch in op 'masked_softmax': mask ",
                shape_str(allow.shape), " vs input ", shape_str(n.val.shape)));
    n.axis = axis;
    n.mask = std::move(allow);
    return push(std::move(n));
  }

  // Normalizes over the last axis: y = gain * (x - mean) / sqrt(var + eps) + bias.
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias) {
    const auto& sx = nodes_[x].val.shape;
    require(!sx.empty(), "layer_norm: rank-0 input");
    const std::size_t d = sx.back();
    const auto& sg = nodes_[gain].val.shape;
    const auto& sb = nodes_[bias].val.shape;
    if (sg != std::vector<std::size_t>{d} || sb != std::vector<std::size_t>{d})
      throw Error(msg("shape mismatch in op 'layer_norm': input ",
                      shape_str(sx), ", gain ", shape_str(sg), ", bias ",
                      shape_str(sb)));
    Node n;
    n.op = Op::kLayerNorm;
    n.label = "layer_norm";
    n.in = {x, gain, bias};
    n.req = nodes_[x].req || nodes_[gain].req || nodes_[bias].req;
    n.val.shape = sx;
    return push(std::move(n));
  }

  NodeId concat(const std::vector<NodeId>& xs, std::size_t axis) {
    require(!xs.empty(), "concat: no inputs");
    auto shape = nodes_[xs[0]].val.shape;
    require(axis < shape.size(), "concat: axis out of range");
    std::size_t total = 0;
    for (NodeId x : xs) {
      const auto& s = nodes_[x].val.shape;
      if (s.size() != shape.size())
        throw Error(msg("shape mismatch in op 'concat': rank ", s.size(),
                        " vs ", shape.size()));
      for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis && s[i] != shape[i])
          throw Error(msg("shape mismatch in op 'concat': ", shape_str(s),
                          " vs ", shape_str(shape)));
      total += s[axis];
    }
    Node n;
    n.op = Op::kConcat;
    n.label = "concat";
    n.in = xs;
    n.axis = axis;
    for (NodeId x : xs) n.req = n.req || nodes_[x].req;
    shape[axis] = total;
    n.val.shape = std::move(shape);
    return push(std::move(n));
  }

  NodeId slice(NodeId x, std::size_t axis, std::size_t start, std::size_t len) {
    auto shape = nodes_[x].val.shape;
    require(axis < shape.size(), "slice: axis out of range");
    require(start + len <= shape[axis] && len > 0,
            msg("slice: range [", start, ",", start + len, ") out of bounds ",
                shape_str(shape), " axis ", axis));
    Node n = unary(Op::kSlice, "slice", x);
    n.axis = axis;
    n.start = start;
    n.len = len;
    shape[axis] = len;
    n.val.shape = std::move(shape);
    return push(std::move(n));
  }

  NodeId transpose(NodeId x) {
    const auto& s = nodes_[x].val.shape;
    require(s.size() == 2, "transpose: 2-D only");
    Node n = unary(Op::kTranspose, "transpose", x);
    n.val.shape = {s[1], s[0]};
    return push(std::move(n));
  }

  NodeId broadcast_to(NodeId x, std::vector<std::size_t> shape) {
    const auto& s = nodes_[x].val.shape;
    require(s.size() <= shape.size(), "broadcast_to: cannot reduce rank");
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::size_t si = s[s.size() - 1 - i];
      std::size_t ti = shape[shape.size() - 1 - i];
      if (si != ti && si != 1)
        throw Error(msg("shape mismatch in op 'broadcast': ", shape_str(s),
                        " to ", shape_str(shape)));
    }
    Node n = unary(Op::kBroadcast, "broadcast", x);
    n.val.shape = std::move(shape);
    return push(std::move(n));
  }

  NodeId reshape(NodeId x, std::vector<std::size_t> shape) {
    require(Tensor::numel_of(shape) == nodes_[x].val_numel(),
            msg("shape mismatch in op 'reshape': ",
                shape_str(nodes_[x].val.shape), " to ", shape_str(shape)));
    Node n = unary(Op::kReshape, "reshape", x);
    n.val.shape = std::move(shape);
    return push(std::move(n));
  }

  NodeId sum_all(NodeId x) {
    Node n = unary(Op::kSumAll, "sum", x);
    n.val.shape = {1};
    return push(std::move(n));
  }

  void mark_output(const std::string& name, NodeId id) {
    outputs_.emplace_back(name, id);
  }

  // Evaluates every node in topological order. Named inputs bind Input
  // nodes; parameters are read from their stores. Any non-finite kernel
  // output raises an error naming the op.
  NamedTensors forward(const NamedTensors& inputs = {}) {
    for (Node& n : nodes_) {
      eval(n, inputs);
      if (!n.val.all_finite())
        throw Error(msg("non-finite output in op '", n.label, "'"));
    }
    forwarded_ = true;
    NamedTensors out;
    for (auto& [name, id] : outputs_) out[name] = nodes_[id].val;
    return out;
  }

  // Reverse-mode sweep from a scalar loss. Gradients accumulate additively
  // across fan-out, in reverse creation order; parameter leaves accumulate
  // into their Param storage.
  void backward(NodeId loss) {
    require(forwarded_, "backward before forward");
    Node& ln = nodes_[loss];
    if (ln.val.numel() != 1)
      throw Error(msg("loss is not scalar: shape ", shape_str(ln.val.shape)));
    for (Node& n : nodes_) n.grd.data.clear();
    ln.grd.shape = ln.val.shape;
    ln.grd.data.assign(1, 1.0);
    for (std::size_t i = loss + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grd.data.empty()) continue;  // not reachable from loss
      if (n.op == Op::kParam) {
        if (n.bound->t.requires_grad) {
          n.bound->t.ensure_grad();
          for (std::size_t k = 0; k < n.grd.data.size(); ++k)
            n.bound->t.grad[k] += n.grd.data[k];
        }
        continue;
      }
      if (!n.req || n.op == Op::kInput || n.op == Op::kConst) continue;
      backprop(n);
    }
  }

  const Tensor& value(NodeId id) const { return nodes_[id].val; }
  // Gradient buffer of a node (empty if the last backward never reached it).
  const Tensor& grad(NodeId id) const { return nodes_[id].grd; }
  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<std::size_t>& shape(NodeId id) const {
    return nodes_[id].val.shape;
  }

 private:
  struct Node {
    Op op;
    std::string label;
    std::vector<NodeId> in;
    Tensor val;
    Tensor grd;
    bool req = false;
    // op attributes
    std::size_t axis = 0, start = 0, len = 0;
    Tensor mask;            // masked softmax
    Param* bound = nullptr; // param leaf
    // layer_norm caches
    std::vector<double> aux_xhat;
    std::vector<double> aux_inv;

    std::size_t val_numel() const { return Tensor::numel_of(val.shape); }
  };

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Node unary(Op op, const char* label, NodeId a) {
    Node n;
    n.op = op;
    n.label = label;
    n.in = {a};
    n.req = nodes_[a].req;
    n.val.shape = nodes_[a].val.shape;
    return n;
  }

  Node binary(Op op, const char* label, NodeId a, NodeId b) {
    Node n;
    n.op = op;
    n.label = label;
    n.in = {a, b};
    n.req = nodes_[a].req || nodes_[b].req;
    return n;
  }

  NodeId broadcast_binary(Op op, const char* label, NodeId a, NodeId b) {
    Node n = binary(op, label, a, b);
    n.val.shape =
        broadcast_shapes(nodes_[a].val.shape, nodes_[b].val.shape, label);
    return push(std::move(n));
  }

  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapMat = Eigen::Map<RowMat>;
  using MapConst = Eigen::Map<const RowMat>;

  static void resize_val(Tensor& t) { t.data.resize(Tensor::numel_of(t.shape)); }

  // Strides for iterating `shape` positions of a tensor broadcast to `out`;
  // broadcast axes get stride 0.
  static std::vector<std::size_t> bcast_strides(
      const std::vector<std::size_t>& shape,
      const std::vector<std::size_t>& out) {
    std::vector<std::size_t> full(out.size(), 1);
    std::size_t off = out.size() - shape.size();
    for (std::size_t i = 0; i < shape.size(); ++i) full[off + i] = shape[i];
    auto st = row_major_strides(full);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (full[i] == 1 && out[i] != 1) st[i] = 0;
    return st;
  }

  template <typename F>
  static void for_broadcast(const std::vector<std::size_t>& out_shape,
                            const std::vector<std::size_t>& sa,
                            const std::vector<std::size_t>& sb, F&& f) {
    const std::size_t n = Tensor::numel_of(out_shape);
    const auto ost = row_major_strides(out_shape);
    const auto ast = bcast_strides(sa, out_shape);
    const auto bst = bcast_strides(sb, out_shape);
    const std::size_t rank = out_shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < n; ++o) {
      f(o, ia, ib);
      for (std::size_t ax = rank; ax-- > 0;) {
        idx[ax]++;
        ia += ast[ax];
        ib += bst[ax];
        if (idx[ax] < out_shape[ax]) break;
        idx[ax] = 0;
        ia -= ast[ax] * out_shape[ax];
        ib -= bst[ax] * out_shape[ax];
      }
    }
  }

  void eval(Node& n, const NamedTensors& inputs) {
    switch (n.op) {
      case Op::kInput: {
        auto it = inputs.find(n.label);
        if (it == inputs.end())
          throw Error(msg("unbound input '", n.label, "'"));
        if (it->second.shape != n.val.shape)
          throw Error(msg("shape mismatch binding input '", n.label, "': ",
                          shape_str(it->second.shape), " vs declared ",
                          shape_str(n.val.shape)));
        n.val.data = it->second.data;
        break;
      }
      case Op::kConst:
        break;
      case Op::kParam:
        n.val.data = n.bound->t.data;
        if (n.val.shape != n.bound->t.shape)
          throw Error(msg("param '", n.label, "' shape changed"));
        break;
      case Op::kMatMul: {
        const Tensor& a = nodes_[n.in[0]].val;
        const Tensor& b = nodes_[n.in[1]].val;
        resize_val(n.val);
        MapConst A(a.data.data(), a.shape[0], a.shape[1]);
        MapConst B(b.data.data(), b.shape[0], b.shape[1]);
        MapMat C(n.val.data.data(), a.shape[0], b.shape[1]);
        C.noalias() = A * B;
        break;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul: {
        const Tensor& a = nodes_[n.in[0]].val;
        const Tensor& b = nodes_[n.in[1]].val;
        resize_val(n.val);
        double* out = n.val.data.data();
        const double* pa = a.data.data();
        const double* pb = b.data.data();
        if (a.shape == b.shape) {  // fast path
          const std::size_t m = a.data.size();
          switch (n.op) {
            case Op::kAdd:
              for (std::size_t i = 0; i < m; ++i) out[i] = pa[i] + pb[i];
              break;
            case Op::kSub:
              for (std::size_t i = 0; i < m; ++i) out[i] = pa[i] - pb[i];
              break;
            default:
              for (std::size_t i = 0; i < m; ++i) out[i] = pa[i] * pb[i];
          }
        } else {
          const Op op = n.op;
          for_broadcast(n.val.shape, a.shape, b.shape,
                        [&](std::size_t o, std::size_t ia, std::size_t ib) {
                          double x = pa[ia], y = pb[ib];
                          out[o] = op == Op::kAdd   ? x + y
                                   : op == Op::kSub ? x - y
                                                    : x * y;
                        });
        }
        break;
      }
      case Op::kTanh: {
        const Tensor& a = nodes_[n.in[0]].val;
        resize_val(n.val);
        for (std::size_t i = 0; i < a.data.size(); ++i)
          n.val.data[i] = std::tanh(a.data[i]);
        break;
      }
      case Op::kSigmoid: {
        const Tensor& a = nodes_[n.in[0]].val;
        resize_val(n.val);
        for (std::size_t i = 0; i < a.data.size(); ++i)
          n.val.data[i] = 1.0 / (1.0 + std::exp(-a.data[i]));
        break;
      }
      case Op::kSoftmax:
        eval_softmax(n);
        break;
      case Op::kLayerNorm:
        eval_layer_norm(n);
        break;
      case Op::kConcat: {
        resize_val(n.val);
        const std::size_t axis = n.axis;
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= n.val.shape[i];
        for (std::size_t i = axis + 1; i < n.val.shape.size(); ++i)
          inner *= n.val.shape[i];
        std::size_t offset = 0;
        for (NodeId x : n.in) {
          const Tensor& a = nodes_[x].val;
          const std::size_t len = a.shape[axis];
          for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(a.data.data() + o * len * inner, len * inner,
                        n.val.data.data() +
                            (o * n.val.shape[axis] + offset) * inner);
          offset += len;
        }
        break;
      }
      case Op::kSlice: {
        const Tensor& a = nodes_[n.in[0]].val;
        resize_val(n.val);
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < n.axis; ++i) outer *= a.shape[i];
        for (std::size_t i = n.axis + 1; i < a.shape.size(); ++i)
          inner *= a.shape[i];
        for (std::size_t o = 0; o < outer; ++o)
          std::copy_n(a.data.data() + (o * a.shape[n.axis] + n.start) * inner,
                      n.len * inner, n.val.data.data() + o * n.len * inner);
        break;
      }
      case Op::kTranspose: {
        const Tensor& a = nodes_[n.in[0]].val;
        resize_val(n.val);
        const std::size_t r = a.shape[0], c = a.shape[1];
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            n.val.data[j * r + i] = a.data[i * c + j];
        break;
      }
      case Op::kBroadcast: {
        const Tensor& a = nodes_[n.in[0]].val;
        resize_val(n.val);
        const double* pa = a.data.data();
        double* out = n.val.data.data();
        for_broadcast(n.val.shape, a.shape, a.shape,
                      [&](std::size_t o, std::size_t ia, std::size_t) {
                        out[o] = pa[ia];
                      });
        break;
      }
      case Op::kReshape:
        n.val.data = nodes_[n.in[0]].val.data;
        break;
      case Op::kSumAll: {
        const Tensor& a = nodes_[n.in[0]].val;
        double s = 0.0;
        for (double v : a.data) s += v;
        n.val.data.assign(1, s);
        break;
      }
    }
  }

  void eval_softmax(Node& n) {
    const Tensor& a = nodes_[n.in[0]].val;
    resize_val(n.val);
    const bool masked = !n.mask.data.empty();
    std::size_t outer = 1, m = a.shape[n.axis], inner = 1;
    for (std::size_t i = 0; i < n.axis; ++i) outer *= a.shape[i];
    for (std::size_t i = n.axis + 1; i < a.shape.size(); ++i)
      inner *= a.shape[i];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * m * inner + in;
        double mx = -std::numeric_limits<double>::infinity();
        std::size_t allowed = 0;
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t k = base + i * inner;
          if (masked && n.mask.data[k] == 0.0) continue;
          ++allowed;
          mx = std::max(mx, a.data[k]);
        }
        if (allowed == 0)
          throw Error("masked_softmax: lane with no allowed entries");
        double sum = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t k = base + i * inner;
          if (masked && n.mask.data[k] == 0.0) {
            n.val.data[k] = 0.0;
            continue;
          }
          const double e = std::exp(a.data[k] - mx);
          n.val.data[k] = e;
          sum += e;
        }
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t k = base + i * inner;
          n.val.data[k] /= sum;
        }
      }
    }
  }

  static constexpr double kLayerNormEps = 1e-8;

  void eval_layer_norm(Node& n) {
    const Tensor& x = nodes_[n.in[0]].val;
    const Tensor& g = nodes_[n.in[1]].val;
    const Tensor& b = nodes_[n.in[2]].val;
    resize_val(n.val);
    const std::size_t d = x.shape.back();
    const std::size_t rows = x.data.size() / d;
    n.aux_xhat.resize(x.data.size());
    n.aux_inv.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x.data.data() + r * d;
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += xr[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double c = xr[j] - mean;
        var += c * c;
      }
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      n.aux_inv[r] = inv;
      for (std::size_t j = 0; j < d; ++j) {
        const double xh = (xr[j] - mean) * inv;
        n.aux_xhat[r * d + j] = xh;
        n.val.data[r * d + j] = g.data[j] * xh + b.data[j];
      }
    }
  }

  Tensor& grad_buf(NodeId id) {
    Node& n = nodes_[id];
    if (n.grd.data.empty()) {
      n.grd.shape = n.val.shape;
      n.grd.data.assign(n.val.data.size(), 0.0);
    }
    return n.grd;
  }

  void backprop(Node& n) {
    const std::vector<double>& gy = n.grd.data;
    switch (n.op) {
      case Op::kMatMul: {
        const Tensor& a = nodes_[n.in[0]].val;
        const Tensor& b = nodes_[n.in[1]].val;
        MapConst A(a.data.data(), a.shape[0], a.shape[1]);
        MapConst B(b.data.data(), b.shape[0], b.shape[1]);
        MapConst G(gy.data(), a.shape[0], b.shape[1]);
        if (nodes_[n.in[0]].req) {
          Tensor& da = grad_buf(n.in[0]);
          MapMat(da.data.data(), a.shape[0], a.shape[1]).noalias() +=
              G * B.transpose();
        }
        if (nodes_[n.in[1]].req) {
          Tensor& db = grad_buf(n.in[1]);
          MapMat(db.data.data(), b.shape[0], b.shape[1]).noalias() +=
              A.transpose() * G;
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul: {
        const Tensor& a = nodes_[n.in[0]].val;
        const Tensor& b = nodes_[n.in[1]].val;
        const bool ra = nodes_[n.in[0]].req, rb = nodes_[n.in[1]].req;
        double* da = ra ? grad_buf(n.in[0]).data.data() : nullptr;
        double* db = rb ? grad_buf(n.in[1]).data.data() : nullptr;
        const double* pa = a.data.data();
        const double* pb = b.data.data();
        const Op op = n.op;
        if (a.shape == b.shape) {
          const std::size_t m = a.data.size();
          for (std::size_t i = 0; i < m; ++i) {
            const double g = gy[i];
            if (ra) da[i] += op == Op::kMul ? g * pb[i] : g;
            if (rb)
              db[i] += op == Op::kMul ? g * pa[i] : (op == Op::kSub ? -g : g);
          }
        } else {
          for_broadcast(n.val.shape, a.shape, b.shape,
                        [&](std::size_t o, std::size_t ia, std::size_t ib) {
                          const double g = gy[o];
                          if (ra)
                            da[ia] += op == Op::kMul ? g * pb[ib] : g;
                          if (rb)
                            db[ib] += op == Op::kMul
                                          ? g * pa[ia]
                                          : (op == Op::kSub ? -g : g);
                        });
        }
        break;
      }
      case Op::kTanh: {
        double* dx = grad_buf(n.in[0]).data.data();
        for (std::size_t i = 0; i < gy.size(); ++i) {
          const double y = n.val.data[i];
          dx[i] += gy[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kSigmoid: {
        double* dx = grad_buf(n.in[0]).data.data();
        for (std::size_t i = 0; i < gy.size(); ++i) {
          const double y = n.val.data[i];
          dx[i] += gy[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kSoftmax: {
        double* dx = grad_buf(n.in[0]).data.data();
        std::size_t outer = 1, m = n.val.shape[n.axis], inner = 1;
        for (std::size_t i = 0; i < n.axis; ++i) outer *= n.val.shape[i];
        for (std::size_t i = n.axis + 1; i < n.val.shape.size(); ++i)
          inner *= n.val.shape[i];
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * m * inner + in;
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              const std::size_t k = base + i * inner;
              dot += gy[k] * n.val.data[k];
            }
            for (std::size_t i = 0; i < m; ++i) {
              const std::size_t k = base + i * inner;
              dx[k] += n.val.data[k] * (gy[k] - dot);
            }
          }
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& x = nodes_[n.in[0]].val;
        const Tensor& g = nodes_[n.in[1]].val;
        const std::size_t d = x.shape.back();
        const std::size_t rows = x.data.size() / d;
        const bool rx = nodes_[n.in[0]].req;
        const bool rg = nodes_[n.in[1]].req;
        const bool rb = nodes_[n.in[2]].req;
        double* dx = rx ? grad_buf(n.in[0]).data.data() : nullptr;
        double* dg = rg ? grad_buf(n.in[1]).data.data() : nullptr;
        double* db = rb ? grad_buf(n.in[2]).data.data() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          const double inv = n.aux_inv[r];
          const double* xh = n.aux_xhat.data() + r * d;
          const double* gyr = gy.data() + r * d;
          if (rg || rb)
            for (std::size_t j = 0; j < d; ++j) {
              if (rg) dg[j] += gyr[j] * xh[j];
              if (rb) db[j] += gyr[j];
            }
          if (rx) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gyr[j] * g.data[j];
              m1 += dxh;
              m2 += dxh * xh[j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gyr[j] * g.data[j];
              dx[r * d + j] += inv * (dxh - m1 - xh[j] * m2);
            }
          }
        }
        break;
      }
      case Op::kConcat: {
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < n.axis; ++i) outer *= n.val.shape[i];
        for (std::size_t i = n.axis + 1; i < n.val.shape.size(); ++i)
          inner *= n.val.shape[i];
        std::size_t offset = 0;
        for (NodeId x : n.in) {
          const std::size_t len = nodes_[x].val.shape[n.axis];
          if (nodes_[x].req) {
            double* dx = grad_buf(x).data.data();
            for (std::size_t o = 0; o < outer; ++o) {
              const double* src =
                  gy.data() + (o * n.val.shape[n.axis] + offset) * inner;
              double* dst = dx + o * len * inner;
              for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
          }
          offset += len;
        }
        break;
      }
      case Op::kSlice: {
        const Tensor& a = nodes_[n.in[0]].val;
        double* dx = grad_buf(n.in[0]).data.data();
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < n.axis; ++i) outer *= a.shape[i];
        for (std::size_t i = n.axis + 1; i < a.shape.size(); ++i)
          inner *= a.shape[i];
        for (std::size_t o = 0; o < outer; ++o) {
          double* dst = dx + (o * a.shape[n.axis] + n.start) * inner;
          const double* src = gy.data() + o * n.len * inner;
          for (std::size_t i = 0; i < n.len * inner; ++i) dst[i] += src[i];
        }
        break;
      }
      case Op::kTranspose: {
        const Tensor& a = nodes_[n.in[0]].val;
        double* dx = grad_buf(n.in[0]).data.data();
        const std::size_t r = a.shape[0], c = a.shape[1];
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            dx[i * c + j] += gy[j * r + i];
        break;
      }
      case Op::kBroadcast: {
        const Tensor& a = nodes_[n.in[0]].val;
        double* dx = grad_buf(n.in[0]).data.data();
        for_broadcast(n.val.shape, a.shape, a.shape,
                      [&](std::size_t o, std::size_t ia, std::size_t) {
                        dx[ia] += gy[o];
                      });
        break;
      }
      case Op::kReshape: {
        double* dx = grad_buf(n.in[0]).data.data();
        for (std::size_t i = 0; i < gy.size(); ++i) dx[i] += gy[i];
        break;
      }
      case Op::kSumAll: {
        double* dx = grad_buf(n.in[0]).data.data();
        const double g = gy[0];
        for (std::size_t i = 0; i < nodes_[n.in[0]].val.data.size(); ++i)
          dx[i] += g;
        break;
      }
      default:
        break;
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, NodeId> param_nodes_;
  std::vector<std::pair<std::string, NodeId>> outputs_;
  bool forwarded_ = false;
};

// Central-difference check of d(loss)/d(leaf). Returns
//   max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|).
// Re-runs the graph forward twice per leaf element; the leaf value is
// restored afterwards. Accumulated gradients in parameter stores are
// clobbered.
inline double gradient_check(Graph& g, NodeId loss, Param& leaf,
                             double epsilon = 1e-5,
                             const NamedTensors& inputs = {}) {
  require(epsilon > 0, "gradient_check: epsilon must be positive");
  leaf.t.ensure_grad();
  leaf.t.zero_grad();
  g.forward(inputs);
  g.backward(loss);
  const std::vector<double> analytic = leaf.t.grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < leaf.t.data.size(); ++i) {
    const double saved = leaf.t.data[i];
    leaf.t.data[i] = saved + epsilon;
    g.forward(inputs);
    const double lp = g.value(loss).data[0];
    leaf.t.data[i] = saved - epsilon;
    g.forward(inputs);
    const double lm = g.value(loss).data[0];
    leaf.t.data[i] = saved;
    const double numeric = (lp - lm) / (2.0 * epsilon);
    const double denom =
        std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  g.forward(inputs);  // restore activations to the unperturbed point
  return worst;
}

}  // namespace ad
}  // namespace corrtalk
