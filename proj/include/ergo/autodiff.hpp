// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ergo/errors.hpp"

namespace ergo::ad {

/**
 * Reverse-mode differentiation of scalar expressions built from a fixed
 * set of elementary operations (arithmetic, exp, log, sqrt, power,
 * comparison-gated select, stop-gradient).
 *
 * A Tape records operations in execution order; Var is a lightweight
 * handle into the tape.  Vars holding plain constants are not recorded,
 * so mixed constant/variable arithmetic keeps the record small.
 * Adjoints are accumulated by one sweep in exact reverse recording
 * order with plain summation, which makes gradients deterministic for
 * identical inputs.
 *
 * A Tape is confined to one execution context: build and differentiate
 * on the same thread.  Distinct tapes are fully independent.
 */
enum class Op : std::uint8_t {
  kInput,
  kAdd,    // node[a] + node[b]
  kAddC,   // node[a] + aux
  kSub,    // node[a] - node[b]
  kSubC,   // node[a] - aux
  kCSub,   // aux - node[a]
  kMul,    // node[a] * node[b]
  kMulC,   // node[a] * aux
  kDiv,    // node[a] / node[b]
  kDivC,   // node[a] / aux
  kCDiv,   // aux / node[a]
  kNeg,
  kExp,
  kLog,
  kSqrt,
  kPowC,   // node[a] ^ aux
  kPow,    // node[a] ^ node[b]
  kSelect, // passes node[a] (the taken branch); node[b] is the other
  kStop,   // passes node[a]; blocks all adjoint flow
};

struct Node {
  Op op;
  std::int32_t a;
  std::int32_t b;
  double val;
  double aux;
};

class Tape;

/**
 * Differentiable scalar.  Either a recorded tape node or a free
 * constant (tape() == nullptr).  Copyable, passed by value.
 */
class Var {
 public:
  Var() = default;
  /*implicit*/ Var(double v) : val_(v) {}

  double value() const { return val_; }
  bool tracked() const { return tape_ != nullptr; }
  std::int32_t index() const { return idx_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(double v, std::int32_t idx, Tape* tape)
      : val_(v), idx_(idx), tape_(tape) {}

  double val_ = 0.0;
  std::int32_t idx_ = -1;
  Tape* tape_ = nullptr;
};

class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers an input variable.
  Var input(double v) { return record(Op::kInput, -1, -1, v, 0.0); }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }

  /// Drops all recorded nodes but keeps capacity, so a tape can be
  /// reused across many small gradient evaluations.
  void clear() { nodes_.clear(); }

  Var record(Op op, std::int32_t a, std::int32_t b, double val, double aux) {
    nodes_.push_back(Node{op, a, b, val, aux});
    return Var(val, static_cast<std::int32_t>(nodes_.size() - 1), this);
  }

  /**
   * Accumulates adjoints of every node with respect to `head` and
   * returns them indexed by node.  Throws NumericalError carrying the
   * operation index if any recorded value or adjoint is non-finite.
   */
  std::vector<double> backward(const Var& head) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!std::isfinite(nodes_[i].val)) {
        throw NumericalError(
            "non-finite value at tape operation " + std::to_string(i),
            static_cast<long>(i));
      }
    }
    if (!head.tracked()) return adj;
    adj[static_cast<std::size_t>(head.index())] = 1.0;
    for (std::size_t k = nodes_.size(); k-- > 0;) {
      const Node& n = nodes_[k];
      const double g = adj[k];
      if (g == 0.0) continue;
      if (!std::isfinite(g)) {
        throw NumericalError(
            "non-finite adjoint at tape operation " + std::to_string(k),
            static_cast<long>(k));
      }
      switch (n.op) {
        case Op::kInput:
          break;
        case Op::kAdd:
          adj[n.a] += g;
          adj[n.b] += g;
          break;
        case Op::kAddC:
          adj[n.a] += g;
          break;
        case Op::kSub:
          adj[n.a] += g;
          adj[n.b] -= g;
          break;
        case Op::kSubC:
          adj[n.a] += g;
          break;
        case Op::kCSub:
          adj[n.a] -= g;
          break;
        case Op::kMul:
          adj[n.a] += g * nodes_[n.b].val;
          adj[n.b] += g * nodes_[n.a].val;
          break;
        case Op::kMulC:
          adj[n.a] += g * n.aux;
          break;
        case Op::kDiv:
          adj[n.a] += g / nodes_[n.b].val;
          adj[n.b] -= g * n.val / nodes_[n.b].val;
          break;
        case Op::kDivC:
          adj[n.a] += g / n.aux;
          break;
        case Op::kCDiv:
          adj[n.a] -= g * n.val / nodes_[n.a].val;
          break;
        case Op::kNeg:
          adj[n.a] -= g;
          break;
        case Op::kExp:
          adj[n.a] += g * n.val;
          break;
        case Op::kLog:
          adj[n.a] += g / nodes_[n.a].val;
          break;
        case Op::kSqrt:
          adj[n.a] += g * 0.5 / n.val;
          break;
        case Op::kPowC:
          adj[n.a] += g * n.aux * std::pow(nodes_[n.a].val, n.aux - 1.0);
          break;
        case Op::kPow:
          adj[n.a] += g * nodes_[n.b].val * n.val / nodes_[n.a].val;
          adj[n.b] += g * n.val * std::log(nodes_[n.a].val);
          break;
        case Op::kSelect:
          adj[n.a] += g;
          break;
        case Op::kStop:
          break;
      }
    }
    return adj;
  }

  /// Adjoint of a single var after backward(); zero for constants.
  static double adjoint(const std::vector<double>& adj, const Var& v) {
    return v.tracked() ? adj[static_cast<std::size_t>(v.index())] : 0.0;
  }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

inline Tape* common_tape(const Var& x, const Var& y) {
  Tape* t = x.tape();
  if (t == nullptr) return y.tape();
  return t;
}

}  // namespace detail

// Binary arithmetic.  Constant-only operands fold without recording.

inline Var operator+(const Var& x, const Var& y) {
  Tape* t = detail::common_tape(x, y);
  if (t == nullptr) return Var(x.value() + y.value());
  if (!x.tracked()) return t->record(Op::kAddC, y.index(), -1, x.value() + y.value(), x.value());
  if (!y.tracked()) return t->record(Op::kAddC, x.index(), -1, x.value() + y.value(), y.value());
  return t->record(Op::kAdd, x.index(), y.index(), x.value() + y.value(), 0.0);
}

inline Var operator-(const Var& x, const Var& y) {
  Tape* t = detail::common_tape(x, y);
  if (t == nullptr) return Var(x.value() - y.value());
  if (!x.tracked()) return t->record(Op::kCSub, y.index(), -1, x.value() - y.value(), x.value());
  if (!y.tracked()) return t->record(Op::kSubC, x.index(), -1, x.value() - y.value(), y.value());
  return t->record(Op::kSub, x.index(), y.index(), x.value() - y.value(), 0.0);
}

inline Var operator*(const Var& x, const Var& y) {
  Tape* t = detail::common_tape(x, y);
  if (t == nullptr) return Var(x.value() * y.value());
  if (!x.tracked()) return t->record(Op::kMulC, y.index(), -1, x.value() * y.value(), x.value());
  if (!y.tracked()) return t->record(Op::kMulC, x.index(), -1, x.value() * y.value(), y.value());
  return t->record(Op::kMul, x.index(), y.index(), x.value() * y.value(), 0.0);
}

inline Var operator/(const Var& x, const Var& y) {
  Tape* t = detail::common_tape(x, y);
  if (t == nullptr) return Var(x.value() / y.value());
  if (!x.tracked()) return t->record(Op::kCDiv, y.index(), -1, x.value() / y.value(), x.value());
  if (!y.tracked()) return t->record(Op::kDivC, x.index(), -1, x.value() / y.value(), y.value());
  return t->record(Op::kDiv, x.index(), y.index(), x.value() / y.value(), 0.0);
}

inline Var operator-(const Var& x) {
  if (!x.tracked()) return Var(-x.value());
  return x.tape()->record(Op::kNeg, x.index(), -1, -x.value(), 0.0);
}

inline Var operator+(const Var& x) { return x; }

inline Var exp(const Var& x) {
  if (!x.tracked()) return Var(std::exp(x.value()));
  return x.tape()->record(Op::kExp, x.index(), -1, std::exp(x.value()), 0.0);
}

inline Var log(const Var& x) {
  if (!x.tracked()) return Var(std::log(x.value()));
  return x.tape()->record(Op::kLog, x.index(), -1, std::log(x.value()), 0.0);
}

inline Var sqrt(const Var& x) {
  if (!x.tracked()) return Var(std::sqrt(x.value()));
  return x.tape()->record(Op::kSqrt, x.index(), -1, std::sqrt(x.value()), 0.0);
}

inline Var pow(const Var& x, double e) {
  if (!x.tracked()) return Var(std::pow(x.value(), e));
  return x.tape()->record(Op::kPowC, x.index(), -1, std::pow(x.value(), e), e);
}

inline Var pow(const Var& x, const Var& y) {
  if (!y.tracked()) return pow(x, y.value());
  Tape* t = y.tape();
  const double v = std::pow(x.value(), y.value());
  if (!x.tracked()) {
    // c^y = exp(y log c)
    return exp(y * std::log(x.value()));
  }
  return t->record(Op::kPow, x.index(), y.index(), v, 0.0);
}

// Comparisons act on values only; gates built from them are treated as
// locally constant by the differentiation.
inline bool operator<(const Var& x, const Var& y) { return x.value() < y.value(); }
inline bool operator>(const Var& x, const Var& y) { return x.value() > y.value(); }
inline bool operator<=(const Var& x, const Var& y) { return x.value() <= y.value(); }
inline bool operator>=(const Var& x, const Var& y) { return x.value() >= y.value(); }

/**
 * Comparison-gated select: returns `a` when the condition holds, else
 * `b`.  The gradient flows only through the returned branch; the
 * condition itself never carries gradient.
 */
inline Var gated_select(bool condition, const Var& a, const Var& b) {
  const Var& taken = condition ? a : b;
  const Var& other = condition ? b : a;
  if (!taken.tracked()) return Var(taken.value());
  return taken.tape()->record(Op::kSelect, taken.index(),
                              other.tracked() ? other.index() : -1,
                              taken.value(), 0.0);
}

/// Returns a node with the same value through which no adjoint flows.
inline Var stop_gradient(const Var& x) {
  if (!x.tracked()) return x;
  return x.tape()->record(Op::kStop, x.index(), -1, x.value(), 0.0);
}

// double overloads so scalar-generic code instantiates cleanly.
inline double gated_select(bool condition, double a, double b) {
  return condition ? a : b;
}
inline double stop_gradient(double x) { return x; }

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

/**
 * Evaluates a scalar expression and its gradient with respect to the
 * inputs.  `build` receives one tracked Var per input and must combine
 * them with the supported elementary operations.  Deterministic:
 * identical inputs and expression give bit-identical results.
 */
template <class Builder>
std::pair<double, std::vector<double>> evaluate_with_gradient(
    Builder&& build, std::span<const double> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (double v : inputs) vars.push_back(tape.input(v));
  const Var head = build(std::span<const Var>(vars));
  const auto adj = tape.backward(head);
  std::vector<double> grad(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    grad[i] = Tape::adjoint(adj, vars[i]);
  }
  if (!std::isfinite(head.value())) {
    throw NumericalError("non-finite expression value",
                         head.tracked() ? head.index() : -1);
  }
  return {head.value(), std::move(grad)};
}

/**
 * Forward-mode scalar carrying K tangents.  Used where a gradient with
 * respect to a handful of parameters is needed without building a
 * record, e.g. the per-transition gradients of the detached training
 * path.  Mirrors the elementary-operation set of Var.
 */
template <std::size_t K>
struct Dual {
  double v = 0.0;
  std::array<double, K> d{};

  Dual() = default;
  /*implicit*/ Dual(double value) : v(value) {}

  static Dual seeded(double value, std::size_t slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }
};

template <std::size_t K>
inline Dual<K> operator+(const Dual<K>& x, const Dual<K>& y) {
  Dual<K> r(x.v + y.v);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = x.d[i] + y.d[i];
  return r;
}

template <std::size_t K>
inline Dual<K> operator-(const Dual<K>& x, const Dual<K>& y) {
  Dual<K> r(x.v - y.v);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = x.d[i] - y.d[i];
  return r;
}

template <std::size_t K>
inline Dual<K> operator*(const Dual<K>& x, const Dual<K>& y) {
  Dual<K> r(x.v * y.v);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = x.d[i] * y.v + x.v * y.d[i];
  return r;
}

template <std::size_t K>
inline Dual<K> operator/(const Dual<K>& x, const Dual<K>& y) {
  Dual<K> r(x.v / y.v);
  for (std::size_t i = 0; i < K; ++i) {
    r.d[i] = (x.d[i] - r.v * y.d[i]) / y.v;
  }
  return r;
}

template <std::size_t K>
inline Dual<K> operator-(const Dual<K>& x) {
  Dual<K> r(-x.v);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = -x.d[i];
  return r;
}

template <std::size_t K>
inline Dual<K> exp(const Dual<K>& x) {
  const double e = std::exp(x.v);
  Dual<K> r(e);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = x.d[i] * e;
  return r;
}

template <std::size_t K>
inline Dual<K> log(const Dual<K>& x) {
  Dual<K> r(std::log(x.v));
  for (std::size_t i = 0; i < K; ++i) r.d[i] = x.d[i] / x.v;
  return r;
}

template <std::size_t K>
inline Dual<K> sqrt(const Dual<K>& x) {
  const double s = std::sqrt(x.v);
  Dual<K> r(s);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = x.d[i] * 0.5 / s;
  return r;
}

template <std::size_t K>
inline Dual<K> pow(const Dual<K>& x, double e) {
  Dual<K> r(std::pow(x.v, e));
  const double f = e * std::pow(x.v, e - 1.0);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = x.d[i] * f;
  return r;
}

// Mixed scalar/dual arithmetic (template deduction does not go through
// the implicit double constructor).

template <std::size_t K>
inline Dual<K> operator+(const Dual<K>& x, double c) {
  Dual<K> r = x;
  r.v += c;
  return r;
}
template <std::size_t K>
inline Dual<K> operator+(double c, const Dual<K>& x) { return x + c; }

template <std::size_t K>
inline Dual<K> operator-(const Dual<K>& x, double c) { return x + (-c); }
template <std::size_t K>
inline Dual<K> operator-(double c, const Dual<K>& x) {
  Dual<K> r(c - x.v);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = -x.d[i];
  return r;
}

template <std::size_t K>
inline Dual<K> operator*(const Dual<K>& x, double c) {
  Dual<K> r(x.v * c);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = x.d[i] * c;
  return r;
}
template <std::size_t K>
inline Dual<K> operator*(double c, const Dual<K>& x) { return x * c; }

template <std::size_t K>
inline Dual<K> operator/(const Dual<K>& x, double c) { return x * (1.0 / c); }
template <std::size_t K>
inline Dual<K> operator/(double c, const Dual<K>& x) {
  Dual<K> r(c / x.v);
  for (std::size_t i = 0; i < K; ++i) r.d[i] = -r.v * x.d[i] / x.v;
  return r;
}

template <std::size_t K>
inline bool operator<(const Dual<K>& x, const Dual<K>& y) { return x.v < y.v; }
template <std::size_t K>
inline bool operator>(const Dual<K>& x, const Dual<K>& y) { return x.v > y.v; }
template <std::size_t K>
inline bool operator<(const Dual<K>& x, double y) { return x.v < y; }
template <std::size_t K>
inline bool operator>(const Dual<K>& x, double y) { return x.v > y; }

template <std::size_t K>
inline Dual<K> gated_select(bool condition, const Dual<K>& a, const Dual<K>& b) {
  return condition ? a : b;
}

template <std::size_t K>
inline Dual<K> stop_gradient(const Dual<K>& x) {
  return Dual<K>(x.v);
}

template <std::size_t K>
inline double value_of(const Dual<K>& x) {
  return x.v;
}

}  // namespace ergo::ad
