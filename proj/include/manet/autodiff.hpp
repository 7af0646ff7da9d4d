// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "manet/common.hpp"

namespace manet::ad {

inline double sigmoid_value(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Overflow-safe ln(1 + e^x).
inline double softplus_value(double x) {
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
}

class Tape;

// Lightweight handle into a Tape. Copying a Tensor never copies data.
class Tensor {
 public:
  Tensor() = default;

  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  std::size_t size() const;
  std::span<const int> shape() const;
  std::span<const double> values() const;
  std::span<const double> grad() const;
  bool requires_grad() const;
  double value() const;  // scalar tensors only

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode differentiation over a flat operation record. Values and
// gradients for all nodes live in two shared arenas, so building a graph
// does one allocation amortized per op. Tapes are single threaded; run one
// tape per worker and sum parameter gradients afterwards.
class Tape {
  enum class Op : std::uint8_t {
    kLeaf,
    kConstant,
    kFc,
    kSigmoid,
    kSoftplus,
    kRelu,
    kLog,
    kExp,
    kSqrt,
    kAffine,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kConcat,
    kSum,
    kIndex,
    kSlice,
    kReshape,
    kLayerNorm,
  };

  struct Node {
    Op op;
    bool requires_grad;
    int in0 = -1, in1 = -1, in2 = -1;
    std::uint32_t off = 0;        // into vals_ / grads_
    std::uint32_t size = 0;
    std::uint32_t shape_off = 0;  // into shapes_
    std::uint32_t rank = 0;
    std::uint32_t extra = 0;      // into extra_, op specific
    double a = 0.0, b = 0.0;      // op specific scalars
  };

 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Drops all nodes but keeps arena capacity for reuse.
  void reset() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    shapes_.clear();
    extra_.clear();
  }

  std::size_t node_count() const { return nodes_.size(); }

  // Every node only references earlier nodes; holds by construction and is
  // exposed so tests can assert it structurally.
  bool topologically_ordered() const {
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.in0 >= i || n.in1 >= i || n.in2 >= i) return false;
      if (n.op == Op::kConcat) {
        const std::uint32_t count = extra_[n.extra];
        for (std::uint32_t k = 0; k < count; ++k) {
          if (static_cast<int>(extra_[n.extra + 1 + k]) >= i) return false;
        }
      }
    }
    return true;
  }

  Tensor leaf(std::span<const double> values, std::vector<int> shape,
              bool requires_grad = true) {
    check_shape(values.size(), shape, "leaf");
    Tensor t = alloc(requires_grad ? Op::kLeaf : Op::kConstant,
                     static_cast<std::uint32_t>(values.size()), shape,
                     requires_grad);
    std::copy(values.begin(), values.end(), vals_.begin() + node(t).off);
    return t;
  }

  Tensor leaf(const std::vector<double>& values, std::vector<int> shape,
              bool requires_grad = true) {
    return leaf(std::span<const double>(values), std::move(shape), requires_grad);
  }

  Tensor constant(std::span<const double> values, std::vector<int> shape) {
    return leaf(values, std::move(shape), false);
  }

  Tensor constant(const std::vector<double>& values) {
    return leaf(std::span<const double>(values),
                {static_cast<int>(values.size())}, false);
  }

  Tensor scalar(double v) {
    const double buf[1] = {v};
    return leaf(std::span<const double>(buf, 1), {1}, false);
  }

  // y[o] = sum_k W[o,k] x[k] + b[o]
  Tensor fc(Tensor weights, Tensor bias, Tensor input) {
    const Node& w = node(weights);
    if (w.rank != 2) throw DimensionError("fc: weights must be rank 2");
    const int out = shapes_[w.shape_off];
    const int in = shapes_[w.shape_off + 1];
    if (static_cast<std::size_t>(in) != node(input).size)
      throw DimensionError("fc: input length " + std::to_string(node(input).size) +
                           " does not match weight columns " + std::to_string(in));
    if (static_cast<std::size_t>(out) != node(bias).size)
      throw DimensionError("fc: bias length does not match weight rows");
    Tensor t = alloc(Op::kFc, static_cast<std::uint32_t>(out), {out},
                     any_grad({weights, bias, input}));
    Node& n = node(t);
    n.in0 = weights.id();
    n.in1 = bias.id();
    n.in2 = input.id();
    const double* wv = ptr(weights);
    const double* bv = ptr(bias);
    const double* xv = ptr(input);
    double* yv = ptr(t);
    for (int o = 0; o < out; ++o) {
      double acc = bv[o];
      const double* row = wv + static_cast<std::size_t>(o) * in;
      for (int k = 0; k < in; ++k) acc += row[k] * xv[k];
      yv[o] = acc;
    }
    return t;
  }

  Tensor sigmoid(Tensor x) {
    Tensor t = unary(Op::kSigmoid, x);
    const double* xv = ptr(x);
    double* yv = ptr(t);
    for (std::uint32_t i = 0; i < node(t).size; ++i)
      yv[i] = sigmoid_value(xv[i]);
    return t;
  }

  Tensor softplus(Tensor x) {
    Tensor t = unary(Op::kSoftplus, x);
    const double* xv = ptr(x);
    double* yv = ptr(t);
    for (std::uint32_t i = 0; i < node(t).size; ++i)
      yv[i] = softplus_value(xv[i]);
    return t;
  }

  Tensor relu(Tensor x) {
    Tensor t = unary(Op::kRelu, x);
    const double* xv = ptr(x);
    double* yv = ptr(t);
    for (std::uint32_t i = 0; i < node(t).size; ++i)
      yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return t;
  }

  Tensor log(Tensor x) {
    Tensor t = unary(Op::kLog, x);
    const double* xv = ptr(x);
    double* yv = ptr(t);
    for (std::uint32_t i = 0; i < node(t).size; ++i) {
      if (!(xv[i] > 0.0))
        throw DomainError("log: non-positive input " + std::to_string(xv[i]));
      yv[i] = std::log(xv[i]);
    }
    return t;
  }

  Tensor exp(Tensor x) {
    Tensor t = unary(Op::kExp, x);
    const double* xv = ptr(x);
    double* yv = ptr(t);
    for (std::uint32_t i = 0; i < node(t).size; ++i) yv[i] = std::exp(xv[i]);
    return t;
  }

  Tensor sqrt(Tensor x) {
    Tensor t = unary(Op::kSqrt, x);
    const double* xv = ptr(x);
    double* yv = ptr(t);
    for (std::uint32_t i = 0; i < node(t).size; ++i) {
      if (xv[i] < 0.0)
        throw DomainError("sqrt: negative input " + std::to_string(xv[i]));
      yv[i] = std::sqrt(xv[i]);
    }
    return t;
  }

  // y = a*x + b elementwise with compile-time constants.
  Tensor affine(Tensor x, double a, double b) {
    Tensor t = unary(Op::kAffine, x);
    Node& n = node(t);
    n.a = a;
    n.b = b;
    const double* xv = ptr(x);
    double* yv = ptr(t);
    for (std::uint32_t i = 0; i < n.size; ++i) yv[i] = a * xv[i] + b;
    return t;
  }

  Tensor add(Tensor x, Tensor y) { return binary(Op::kAdd, x, y); }
  Tensor sub(Tensor x, Tensor y) { return binary(Op::kSub, x, y); }
  Tensor mul(Tensor x, Tensor y) { return binary(Op::kMul, x, y); }
  Tensor div(Tensor x, Tensor y) { return binary(Op::kDiv, x, y); }

  Tensor concat(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    std::size_t total = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
      total += node(p).size;
      rg = rg || node(p).requires_grad;
    }
    Tensor t = alloc(Op::kConcat, static_cast<std::uint32_t>(total),
                     {static_cast<int>(total)}, rg);
    Node& n = node(t);
    n.extra = static_cast<std::uint32_t>(extra_.size());
    extra_.push_back(static_cast<std::uint32_t>(parts.size()));
    for (const Tensor& p : parts)
      extra_.push_back(static_cast<std::uint32_t>(p.id()));
    double* yv = ptr(t);
    for (const Tensor& p : parts) {
      const double* pv = ptr(p);
      yv = std::copy(pv, pv + node(p).size, yv);
    }
    return t;
  }

  Tensor concat(std::initializer_list<Tensor> parts) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()));
  }

  // Left-fold sum to a scalar; evaluation order is part of the contract so
  // replays are bit-identical.
  Tensor sum(Tensor x) {
    Tensor t = alloc(Op::kSum, 1, {1}, node(x).requires_grad);
    node(t).in0 = x.id();
    const double* xv = ptr(x);
    double acc = 0.0;
    for (std::uint32_t i = 0; i < node(x).size; ++i) acc += xv[i];
    *ptr(t) = acc;
    return t;
  }

  Tensor index(Tensor x, int pos) {
    if (pos < 0 || static_cast<std::uint32_t>(pos) >= node(x).size)
      throw DimensionError("index: position out of range");
    Tensor t = alloc(Op::kIndex, 1, {1}, node(x).requires_grad);
    Node& n = node(t);
    n.in0 = x.id();
    n.extra = static_cast<std::uint32_t>(extra_.size());
    extra_.push_back(static_cast<std::uint32_t>(pos));
    *ptr(t) = ptr(x)[pos];
    return t;
  }

  Tensor slice(Tensor x, int offset, int length) {
    if (offset < 0 || length <= 0 ||
        static_cast<std::uint32_t>(offset + length) > node(x).size)
      throw DimensionError("slice: range out of bounds");
    Tensor t = alloc(Op::kSlice, static_cast<std::uint32_t>(length), {length},
                     node(x).requires_grad);
    Node& n = node(t);
    n.in0 = x.id();
    n.extra = static_cast<std::uint32_t>(extra_.size());
    extra_.push_back(static_cast<std::uint32_t>(offset));
    const double* xv = ptr(x) + offset;
    std::copy(xv, xv + length, ptr(t));
    return t;
  }

  // Same values under a new shape; gradients pass straight through.
  Tensor reshape(Tensor x, std::vector<int> shape) {
    check_shape(node(x).size, shape, "reshape");
    Tensor t = alloc(Op::kReshape, node(x).size, std::move(shape),
                     node(x).requires_grad);
    node(t).in0 = x.id();
    const double* xv = ptr(x);
    std::copy(xv, xv + node(t).size, ptr(t));
    return t;
  }

  // y = gain * (x - mean) / sqrt(var + eps) + shift, statistics over all
  // entries, biased variance.
  Tensor layer_norm(Tensor x, Tensor gain, Tensor shift, double eps = 1e-5) {
    const std::uint32_t k = node(x).size;
    if (k < 1) throw DimensionError("layer_norm: empty input");
    if (node(gain).size != k || node(shift).size != k)
      throw DimensionError("layer_norm: gain/shift length mismatch");
    Tensor t = alloc(Op::kLayerNorm, k, {static_cast<int>(k)},
                     any_grad({x, gain, shift}));
    Node& n = node(t);
    n.in0 = x.id();
    n.in1 = gain.id();
    n.in2 = shift.id();
    n.a = eps;
    const double* xv = ptr(x);
    const double* gv = ptr(gain);
    const double* sv = ptr(shift);
    double* yv = ptr(t);
    double mean = 0.0, var = 0.0;
    norm_stats(xv, k, eps, &mean, &var);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::uint32_t i = 0; i < k; ++i)
      yv[i] = gv[i] * ((xv[i] - mean) * inv) + sv[i];
    return t;
  }

  // Populates gradient slots for every requires-grad tensor reachable from
  // loss. Clears previous gradients first.
  void backward(Tensor loss) {
    if (node(loss).size != 1)
      throw ContractError("backward: loss must be scalar");
    grads_.assign(vals_.size(), 0.0);
    if (!node(loss).requires_grad) return;
    grads_[node(loss).off] = 1.0;
    for (int i = loss.id(); i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad) continue;
      backprop(n);
    }
  }

 private:
  friend class Tensor;

  static void norm_stats(const double* xv, std::uint32_t k, double /*eps*/,
                         double* mean, double* var) {
    double m = 0.0;
    for (std::uint32_t i = 0; i < k; ++i) m += xv[i];
    m /= k;
    double v = 0.0;
    for (std::uint32_t i = 0; i < k; ++i) {
      const double d = xv[i] - m;
      v += d * d;
    }
    v /= k;
    *mean = m;
    *var = v;
  }

  static void check_shape(std::size_t count, const std::vector<int>& shape,
                          const char* where) {
    std::size_t prod = 1;
    for (int d : shape) {
      if (d <= 0) throw DimensionError(std::string(where) + ": bad dimension");
      prod *= static_cast<std::size_t>(d);
    }
    if (prod != count)
      throw DimensionError(std::string(where) +
                           ": shape does not match value count");
  }

  Node& node(Tensor t) { return nodes_[static_cast<std::size_t>(t.id())]; }
  const Node& node(Tensor t) const {
    return nodes_[static_cast<std::size_t>(t.id())];
  }
  double* ptr(Tensor t) { return vals_.data() + node(t).off; }
  const double* ptr(Tensor t) const { return vals_.data() + node(t).off; }
  double* gptr(const Node& n) { return grads_.data() + n.off; }
  const double* val(const Node& n) const { return vals_.data() + n.off; }
  const Node& input(int id) const {
    return nodes_[static_cast<std::size_t>(id)];
  }

  bool any_grad(std::initializer_list<Tensor> ts) const {
    for (const Tensor& t : ts)
      if (node(t).requires_grad) return true;
    return false;
  }

  Tensor alloc(Op op, std::uint32_t size, std::vector<int> shape, bool rg) {
    Node n;
    n.op = op;
    n.requires_grad = rg;
    n.off = static_cast<std::uint32_t>(vals_.size());
    n.size = size;
    n.shape_off = static_cast<std::uint32_t>(shapes_.size());
    n.rank = static_cast<std::uint32_t>(shape.size());
    vals_.resize(vals_.size() + size, 0.0);
    shapes_.insert(shapes_.end(), shape.begin(), shape.end());
    nodes_.push_back(n);
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
  }

  Tensor unary(Op op, Tensor x) {
    Tensor t = alloc(op, node(x).size,
                     {static_cast<int>(node(x).size)}, node(x).requires_grad);
    node(t).in0 = x.id();
    return t;
  }

  Tensor binary(Op op, Tensor x, Tensor y) {
    const std::uint32_t sx = node(x).size;
    const std::uint32_t sy = node(y).size;
    if (sx != sy && sx != 1 && sy != 1)
      throw DimensionError("binary op: sizes " + std::to_string(sx) + " and " +
                           std::to_string(sy) + " do not conform");
    const std::uint32_t sz = sx > sy ? sx : sy;
    Tensor t =
        alloc(op, sz, {static_cast<int>(sz)}, any_grad({x, y}));
    Node& n = node(t);
    n.in0 = x.id();
    n.in1 = y.id();
    const double* xv = ptr(x);
    const double* yv = ptr(y);
    double* zv = ptr(t);
    const std::uint32_t ix = sx == 1 ? 0 : 1;
    const std::uint32_t iy = sy == 1 ? 0 : 1;
    switch (op) {
      case Op::kAdd:
        for (std::uint32_t i = 0; i < sz; ++i) zv[i] = xv[i * ix] + yv[i * iy];
        break;
      case Op::kSub:
        for (std::uint32_t i = 0; i < sz; ++i) zv[i] = xv[i * ix] - yv[i * iy];
        break;
      case Op::kMul:
        for (std::uint32_t i = 0; i < sz; ++i) zv[i] = xv[i * ix] * yv[i * iy];
        break;
      case Op::kDiv:
        for (std::uint32_t i = 0; i < sz; ++i) zv[i] = xv[i * ix] / yv[i * iy];
        break;
      default:
        throw ContractError("binary: unexpected op");
    }
    return t;
  }

  void backprop(const Node& n) {
    const double* g = grads_.data() + n.off;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kFc: {
        const Node& w = input(n.in0);
        const Node& b = input(n.in1);
        const Node& x = input(n.in2);
        const int out = static_cast<int>(n.size);
        const int in = static_cast<int>(x.size);
        const double* wv = val(w);
        const double* xv = val(x);
        double* gw = gptr(w);
        double* gb = gptr(b);
        double* gx = gptr(x);
        for (int o = 0; o < out; ++o) {
          const double go = g[o];
          if (b.requires_grad) gb[o] += go;
          const std::size_t row = static_cast<std::size_t>(o) * in;
          if (w.requires_grad)
            for (int k = 0; k < in; ++k) gw[row + k] += go * xv[k];
          if (x.requires_grad)
            for (int k = 0; k < in; ++k) gx[k] += go * wv[row + k];
        }
        break;
      }
      case Op::kSigmoid: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        const double* yv = val(n);
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < n.size; ++i)
          gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
        break;
      }
      case Op::kSoftplus: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        const double* xv = val(x);
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < n.size; ++i)
          gx[i] += g[i] / (1.0 + std::exp(-xv[i]));
        break;
      }
      case Op::kRelu: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        const double* xv = val(x);
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < n.size; ++i)
          if (xv[i] > 0.0) gx[i] += g[i];
        break;
      }
      case Op::kLog: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        const double* xv = val(x);
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < n.size; ++i) gx[i] += g[i] / xv[i];
        break;
      }
      case Op::kExp: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        const double* yv = val(n);
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < n.size; ++i) gx[i] += g[i] * yv[i];
        break;
      }
      case Op::kSqrt: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        const double* yv = val(n);
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < n.size; ++i)
          gx[i] += g[i] * 0.5 / yv[i];
        break;
      }
      case Op::kAffine: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < n.size; ++i) gx[i] += g[i] * n.a;
        break;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv: {
        const Node& x = input(n.in0);
        const Node& y = input(n.in1);
        const double* xv = val(x);
        const double* yv = val(y);
        double* gx = gptr(x);
        double* gy = gptr(y);
        const std::uint32_t ix = x.size == 1 ? 0 : 1;
        const std::uint32_t iy = y.size == 1 ? 0 : 1;
        for (std::uint32_t i = 0; i < n.size; ++i) {
          double dx = 0.0, dy = 0.0;
          switch (n.op) {
            case Op::kAdd:
              dx = g[i];
              dy = g[i];
              break;
            case Op::kSub:
              dx = g[i];
              dy = -g[i];
              break;
            case Op::kMul:
              dx = g[i] * yv[i * iy];
              dy = g[i] * xv[i * ix];
              break;
            case Op::kDiv: {
              const double inv = 1.0 / yv[i * iy];
              dx = g[i] * inv;
              dy = -g[i] * xv[i * ix] * inv * inv;
              break;
            }
            default:
              break;
          }
          if (x.requires_grad) gx[i * ix] += dx;
          if (y.requires_grad) gy[i * iy] += dy;
        }
        break;
      }
      case Op::kConcat: {
        const std::uint32_t count = extra_[n.extra];
        std::uint32_t pos = 0;
        for (std::uint32_t k = 0; k < count; ++k) {
          const Node& p = input(static_cast<int>(extra_[n.extra + 1 + k]));
          if (p.requires_grad) {
            double* gp = gptr(p);
            for (std::uint32_t i = 0; i < p.size; ++i) gp[i] += g[pos + i];
          }
          pos += p.size;
        }
        break;
      }
      case Op::kSum: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < x.size; ++i) gx[i] += g[0];
        break;
      }
      case Op::kIndex: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        gptr(x)[extra_[n.extra]] += g[0];
        break;
      }
      case Op::kSlice: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        double* gx = gptr(x) + extra_[n.extra];
        for (std::uint32_t i = 0; i < n.size; ++i) gx[i] += g[i];
        break;
      }
      case Op::kReshape: {
        const Node& x = input(n.in0);
        if (!x.requires_grad) break;
        double* gx = gptr(x);
        for (std::uint32_t i = 0; i < n.size; ++i) gx[i] += g[i];
        break;
      }
      case Op::kLayerNorm: {
        const Node& x = input(n.in0);
        const Node& gain = input(n.in1);
        const Node& shift = input(n.in2);
        const std::uint32_t k = n.size;
        const double* xv = val(x);
        const double* gv = val(gain);
        double mean = 0.0, var = 0.0;
        norm_stats(xv, k, n.a, &mean, &var);
        const double inv = 1.0 / std::sqrt(var + n.a);
        if (shift.requires_grad) {
          double* gs = gptr(shift);
          for (std::uint32_t i = 0; i < k; ++i) gs[i] += g[i];
        }
        if (gain.requires_grad) {
          double* gg = gptr(gain);
          for (std::uint32_t i = 0; i < k; ++i)
            gg[i] += g[i] * ((xv[i] - mean) * inv);
        }
        if (x.requires_grad) {
          // dx = inv * (gh - mean(gh) - xhat * mean(gh . xhat)),
          // where gh = g * gain.
          double gh_mean = 0.0, ghx_mean = 0.0;
          for (std::uint32_t i = 0; i < k; ++i) {
            const double gh = g[i] * gv[i];
            const double xh = (xv[i] - mean) * inv;
            gh_mean += gh;
            ghx_mean += gh * xh;
          }
          gh_mean /= k;
          ghx_mean /= k;
          double* gx = gptr(x);
          for (std::uint32_t i = 0; i < k; ++i) {
            const double gh = g[i] * gv[i];
            const double xh = (xv[i] - mean) * inv;
            gx[i] += inv * (gh - gh_mean - xh * ghx_mean);
          }
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<int> shapes_;
  std::vector<std::uint32_t> extra_;
};

inline std::size_t Tensor::size() const {
  return tape_->node(*this).size;
}
inline std::span<const int> Tensor::shape() const {
  const auto& n = tape_->node(*this);
  return {tape_->shapes_.data() + n.shape_off, n.rank};
}
inline std::span<const double> Tensor::values() const {
  const auto& n = tape_->node(*this);
  return {tape_->vals_.data() + n.off, n.size};
}
inline std::span<const double> Tensor::grad() const {
  const auto& n = tape_->node(*this);
  if (tape_->grads_.size() < tape_->vals_.size())
    throw ContractError("grad: backward has not run on this tape");
  return {tape_->grads_.data() + n.off, n.size};
}
inline bool Tensor::requires_grad() const {
  return tape_->node(*this).requires_grad;
}
inline double Tensor::value() const {
  if (size() != 1) throw ContractError("value: tensor is not scalar");
  return values()[0];
}

}  // namespace manet::ad
