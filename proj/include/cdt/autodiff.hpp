#pragma once

// Scalar reverse-mode automatic differentiation.
//
// A Tape records every operation as a node holding its forward value and the
// local partial derivatives with respect to its parents. Nodes are appended in
// evaluation order, so the tape is always topologically sorted and a single
// reverse sweep yields all adjoints.
//
// A Var with a null tape is a constant: it carries a value but no node, and
// operations on constants fold without touching any tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdt/errors.hpp"

namespace cdt {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t index = 0;
  double value = 0.0;

  Var() = default;
  Var(double v) : value(v) {}  // NOLINT: implicit constant lift
  Var(Tape* t, std::uint32_t i, double v) : tape(t), index(i), value(v) {}

  bool is_constant() const { return tape == nullptr; }
};

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  neg,
  scale,
  sum,
  affine,
  mul,
  div,
  div_const,
  const_div,
  exp,
  log,
  sigmoid,
  tanh,
  max,
  min,
  max_const,
  min_const,
  dot,
};

/// Numerically stable logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<double> adjoints, std::size_t visited)
      : adjoints_(std::move(adjoints)), visited_(visited) {}

  double operator[](const Var& v) const {
    if (v.is_constant() || v.index >= adjoints_.size()) return 0.0;
    return adjoints_[v.index];
  }
  double at(std::size_t node) const {
    return node < adjoints_.size() ? adjoints_[node] : 0.0;
  }
  std::size_t size() const { return adjoints_.size(); }
  // Number of nodes whose edges were propagated during the reverse sweep.
  std::size_t visited() const { return visited_; }

 private:
  std::vector<double> adjoints_;
  std::size_t visited_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(double value) {
    return push(Op::leaf, value, 0.0);
  }

  void clear() {
    nodes_.clear();
    parents_.clear();
    partials_.clear();
  }

  void reserve(std::size_t nodes, std::size_t edges) {
    nodes_.reserve(nodes);
    parents_.reserve(edges);
    partials_.reserve(edges);
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t edge_count() const { return parents_.size(); }
  double value(std::size_t node) const { return nodes_[node].value; }
  Op op(std::size_t node) const { return nodes_[node].op; }

  /// Parent node ids of `node`, in recording order.
  std::vector<std::uint32_t> parents(std::size_t node) const {
    const Node& n = nodes_[node];
    return {parents_.begin() + n.edge_begin,
            parents_.begin() + n.edge_begin + n.edge_count};
  }

  /// Reverse sweep from `root`. Nodes after root and nodes that root does not
  /// depend on receive a zero adjoint.
  Gradients backward(const Var& root) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (root.is_constant()) return Gradients(std::move(adj), 0);
    check_owner(root);
    adj[root.index] = 1.0;
    std::size_t visited = 0;
    for (std::size_t i = root.index + 1; i-- > 0;) {
      const double g = adj[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      ++visited;
      const std::uint32_t end = n.edge_begin + n.edge_count;
      for (std::uint32_t e = n.edge_begin; e < end; ++e) {
        adj[parents_[e]] += g * partials_[e];
      }
    }
    return Gradients(std::move(adj), visited);
  }

  /// Recomputes every non-leaf value from its parents and returns the number
  /// of nodes whose stored value differs from the recomputation.
  std::size_t replay_mismatches() const {
    std::size_t bad = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op == Op::leaf) continue;
      if (evaluate(i) != nodes_[i].value) ++bad;
    }
    return bad;
  }

  // Low-level recording used by the operator overloads below.
  Var push(Op op, double value, double aux) {
    nodes_.push_back(Node{value, aux, static_cast<std::uint32_t>(parents_.size()), 0, op});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1), value);
  }
  void edge(std::uint32_t parent, double partial) {
    parents_.push_back(parent);
    partials_.push_back(partial);
    ++nodes_.back().edge_count;
  }
  Var unary(Op op, double value, double aux, const Var& a, double da) {
    Var out = push(op, value, aux);
    edge(a.index, da);
    return out;
  }
  Var binary(Op op, double value, const Var& a, double da, const Var& b, double db) {
    Var out = push(op, value, 0.0);
    edge(a.index, da);
    edge(b.index, db);
    return out;
  }

  void check_owner(const Var& v) const {
    if (v.tape != this) {
      throw std::invalid_argument("autodiff: variable belongs to a different tape");
    }
  }

 private:
  struct Node {
    double value;
    double aux;
    std::uint32_t edge_begin;
    std::uint32_t edge_count;
    Op op;
  };

  double evaluate(std::size_t i) const {
    const Node& n = nodes_[i];
    const std::uint32_t b = n.edge_begin;
    auto pv = [&](std::uint32_t k) { return nodes_[parents_[b + k]].value; };
    switch (n.op) {
      case Op::leaf:
        return n.value;
      case Op::add:
      case Op::sub:
      case Op::neg:
      case Op::scale:
      case Op::sum:
      case Op::affine: {
        double s = n.aux;
        for (std::uint32_t k = 0; k < n.edge_count; ++k) s += partials_[b + k] * pv(k);
        return s;
      }
      case Op::dot: {
        double s = n.aux;
        for (std::uint32_t k = 0; k + 1 < n.edge_count; k += 2) s += pv(k) * pv(k + 1);
        return s;
      }
      case Op::mul:
        return pv(0) * pv(1);
      case Op::div:
        return pv(0) / pv(1);
      case Op::div_const:
        return pv(0) / n.aux;
      case Op::const_div:
        return n.aux / pv(0);
      case Op::exp:
        return std::exp(pv(0));
      case Op::log:
        return std::log(pv(0));
      case Op::sigmoid:
        return cdt::sigmoid(pv(0));
      case Op::tanh:
        return std::tanh(pv(0));
      case Op::max:
        return pv(0) >= pv(1) ? pv(0) : pv(1);
      case Op::min:
        return pv(0) <= pv(1) ? pv(0) : pv(1);
      case Op::max_const:
        return pv(0) >= n.aux ? pv(0) : n.aux;
      case Op::min_const:
        return pv(0) <= n.aux ? pv(0) : n.aux;
    }
    return n.value;
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
};

namespace detail {

inline Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape && b.tape && a.tape != b.tape) {
    throw std::invalid_argument("autodiff: operands live on different tapes");
  }
  return a.tape ? a.tape : b.tape;
}

// Materializes a constant as a leaf so it can take part in a pairwise node.
inline Var on_tape(Tape* tape, const Var& v) {
  return v.is_constant() ? tape->variable(v.value) : v;
}

}  // namespace detail

// ---- elementary operations -------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(a.value + b.value);
  if (a.is_constant()) return t->unary(Op::add, b.value + a.value, a.value, b, 1.0);
  if (b.is_constant()) return t->unary(Op::add, a.value + b.value, b.value, a, 1.0);
  return t->binary(Op::add, a.value + b.value, a, 1.0, b, 1.0);
}

inline Var operator-(const Var& a) {
  if (a.is_constant()) return Var(-a.value);
  return a.tape->unary(Op::neg, -a.value, 0.0, a, -1.0);
}

inline Var operator-(const Var& a, const Var& b) {
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(a.value - b.value);
  if (a.is_constant()) return t->unary(Op::sub, a.value + (-1.0 * b.value), a.value, b, -1.0);
  if (b.is_constant()) return t->unary(Op::sub, -b.value + a.value, -b.value, a, 1.0);
  return t->binary(Op::sub, a.value + (-1.0 * b.value), a, 1.0, b, -1.0);
}

inline Var operator*(const Var& a, const Var& b) {
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(a.value * b.value);
  if (a.is_constant()) return t->unary(Op::scale, 0.0 + a.value * b.value, 0.0, b, a.value);
  if (b.is_constant()) return t->unary(Op::scale, 0.0 + b.value * a.value, 0.0, a, b.value);
  return t->binary(Op::mul, a.value * b.value, a, b.value, b, a.value);
}

inline Var operator/(const Var& a, const Var& b) {
  if (b.value == 0.0) throw NumericDomainError("autodiff: division by zero");
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(a.value / b.value);
  const double q = a.value / b.value;
  if (b.is_constant()) return t->unary(Op::div_const, q, b.value, a, 1.0 / b.value);
  if (a.is_constant()) {
    return t->unary(Op::const_div, q, a.value, b, -a.value / (b.value * b.value));
  }
  return t->binary(Op::div, q, a, 1.0 / b.value, b, -a.value / (b.value * b.value));
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

inline Var exp(const Var& a) {
  const double v = std::exp(a.value);
  if (a.is_constant()) return Var(v);
  return a.tape->unary(Op::exp, v, 0.0, a, v);
}

inline Var log(const Var& a) {
  if (!(a.value > 0.0)) {
    throw NumericDomainError("autodiff: log of non-positive value " + std::to_string(a.value));
  }
  const double v = std::log(a.value);
  if (a.is_constant()) return Var(v);
  return a.tape->unary(Op::log, v, 0.0, a, 1.0 / a.value);
}

inline Var sigmoid(const Var& a) {
  const double s = sigmoid(a.value);
  if (a.is_constant()) return Var(s);
  return a.tape->unary(Op::sigmoid, s, 0.0, a, s * (1.0 - s));
}

inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value);
  if (a.is_constant()) return Var(t);
  return a.tape->unary(Op::tanh, t, 0.0, a, 1.0 - t * t);
}

// Ties route the gradient to the first operand.
inline Var max(const Var& a, const Var& b) {
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(a.value >= b.value ? a.value : b.value);
  const bool first = a.value >= b.value;
  if (b.is_constant()) return t->unary(Op::max_const, first ? a.value : b.value, b.value, a, first ? 1.0 : 0.0);
  if (a.is_constant()) return t->unary(Op::max_const, b.value >= a.value ? b.value : a.value, a.value, b, b.value >= a.value ? 1.0 : 0.0);
  return t->binary(Op::max, first ? a.value : b.value, a, first ? 1.0 : 0.0, b, first ? 0.0 : 1.0);
}

inline Var min(const Var& a, const Var& b) {
  Tape* t = detail::common_tape(a, b);
  if (!t) return Var(a.value <= b.value ? a.value : b.value);
  const bool first = a.value <= b.value;
  if (b.is_constant()) return t->unary(Op::min_const, first ? a.value : b.value, b.value, a, first ? 1.0 : 0.0);
  if (a.is_constant()) return t->unary(Op::min_const, b.value <= a.value ? b.value : a.value, a.value, b, b.value <= a.value ? 1.0 : 0.0);
  return t->binary(Op::min, first ? a.value : b.value, a, first ? 1.0 : 0.0, b, first ? 0.0 : 1.0);
}

// ---- fused n-ary operations ------------------------------------------------
// Each records one node regardless of arity. The double overloads let model
// code be written once over a scalar type.

inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

inline Var sum(std::span<const Var> xs) {
  Tape* t = nullptr;
  double c = 0.0;
  for (const Var& x : xs) {
    if (x.is_constant()) {
      c += x.value;
    } else {
      t = detail::common_tape(x, t ? Var(t, 0, 0.0) : Var());
    }
  }
  if (!t) return Var(c);
  double s = c;
  for (const Var& x : xs) {
    if (!x.is_constant()) s += 1.0 * x.value;
  }
  Var out = t->push(Op::sum, s, c);
  for (const Var& x : xs) {
    if (!x.is_constant()) t->edge(x.index, 1.0);
  }
  return out;
}

/// bias + weights . x with constant inputs x.
inline double affine(double bias, std::span<const double> weights, std::span<const double> x) {
  double s = bias;
  for (std::size_t k = 0; k < weights.size(); ++k) s += weights[k] * x[k];
  return s;
}

inline Var affine(const Var& bias, std::span<const Var> weights, std::span<const double> x) {
  Tape* t = bias.tape;
  double c = bias.is_constant() ? bias.value : 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k].is_constant()) {
      c += weights[k].value * x[k];
    } else {
      t = detail::common_tape(weights[k], t ? Var(t, 0, 0.0) : Var());
    }
  }
  if (!t) return Var(c);
  double s = c;
  if (!bias.is_constant()) s += 1.0 * bias.value;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].is_constant()) s += x[k] * weights[k].value;
  }
  Var out = t->push(Op::affine, s, c);
  if (!bias.is_constant()) t->edge(bias.index, 1.0);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].is_constant()) t->edge(weights[k].index, x[k]);
  }
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline Var dot(std::span<const Var> a, std::span<const Var> b) {
  Tape* t = nullptr;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a[k].is_constant() || !b[k].is_constant()) {
      t = detail::common_tape(a[k], b[k]);
      break;
    }
  }
  if (!t) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k].value * b[k].value;
    return Var(s);
  }
  // Constant pairs fold into the offset; mixed pairs materialize the constant.
  double c = 0.0;
  std::vector<Var> lhs;
  std::vector<Var> rhs;
  lhs.reserve(a.size());
  rhs.reserve(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].is_constant() && b[k].is_constant()) {
      c += a[k].value * b[k].value;
    } else {
      detail::common_tape(a[k], Var(t, 0, 0.0));
      detail::common_tape(b[k], Var(t, 0, 0.0));
      lhs.push_back(detail::on_tape(t, a[k]));
      rhs.push_back(detail::on_tape(t, b[k]));
    }
  }
  double s = c;
  for (std::size_t k = 0; k < lhs.size(); ++k) s += lhs[k].value * rhs[k].value;
  Var out = t->push(Op::dot, s, c);
  for (std::size_t k = 0; k < lhs.size(); ++k) {
    t->edge(lhs[k].index, rhs[k].value);
    t->edge(rhs[k].index, lhs[k].value);
  }
  return out;
}

inline Var affine(const Var& bias, std::span<const Var> weights, std::span<const Var> x) {
  return bias + dot(weights, x);
}

// ---- scalar helpers for code templated over double and Var ------------------

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value; }

template <class T>
std::vector<double> values_of(std::span<const T> xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = value_of(xs[i]);
  return out;
}

/// Softmax with a detached max shift. The shift cancels analytically, so
/// gradients are exact.
template <class T>
std::vector<T> softmax(std::span<const T> logits) {
  using std::exp;
  double shift = value_of(logits[0]);
  for (const T& l : logits) shift = std::max(shift, value_of(l));
  std::vector<T> e;
  e.reserve(logits.size());
  for (const T& l : logits) e.push_back(exp(l - T(shift)));
  const T total = sum(std::span<const T>(e));
  for (T& v : e) v = v / total;
  return e;
}

}  // namespace cdt
