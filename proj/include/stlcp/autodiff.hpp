#pragma once

// Scalar reverse-mode automatic differentiation.
//
// A Tape records every intermediate value of a computation together with the
// local partial derivatives onto its inputs. Var is a lightweight handle into
// a tape. A Var without a tape is a constant and never creates a record, so
// mixing constants and variables only costs nodes where derivatives flow.
//
// The free functions below (exp, log, sigmoid, softplus, softmin, ...) are
// overloaded for both double and Var, so numerical code can be written once
// as a template over the scalar type and run either plainly or on a tape.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace stlcp::ad {

class Var;

class Tape {
 public:
  using Index = std::uint32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Index push_leaf() {
    nodes_.push_back({static_cast<Index>(edges_.size()), static_cast<Index>(edges_.size())});
    return static_cast<Index>(nodes_.size() - 1);
  }

  Index push(std::initializer_list<std::pair<Index, double>> parents) {
    const auto begin = static_cast<Index>(edges_.size());
    for (const auto& [p, d] : parents) edges_.push_back({p, d});
    nodes_.push_back({begin, static_cast<Index>(edges_.size())});
    return static_cast<Index>(nodes_.size() - 1);
  }

  Index push(std::span<const Index> parents, std::span<const double> partials) {
    assert(parents.size() == partials.size());
    const auto begin = static_cast<Index>(edges_.size());
    for (std::size_t i = 0; i < parents.size(); ++i) edges_.push_back({parents[i], partials[i]});
    nodes_.push_back({begin, static_cast<Index>(edges_.size())});
    return static_cast<Index>(nodes_.size() - 1);
  }

  // Adjoint of every recorded node with respect to `output`.
  std::vector<double> adjoints(Index output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[output] = 1.0;
    for (std::size_t k = output + 1; k-- > 0;) {
      const double a = adj[k];
      if (a == 0.0) continue;
      const Node& n = nodes_[k];
      for (Index e = n.edge_begin; e < n.edge_end; ++e) adj[edges_[e].parent] += a * edges_[e].partial;
    }
    return adj;
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    edges_.clear();
  }

  // Fresh leaf variables holding `values`.
  std::vector<Var> variables(std::span<const double> values);

 private:
  struct Node {
    Index edge_begin;
    Index edge_end;
  };
  struct Edge {
    Index parent;
    double partial;
  };

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
};

// A differentiable scalar: value plus a handle into the tape that produced it.
class Var {
 public:
  Var() = default;
  Var(double constant) : value_(constant) {}  // NOLINT(google-explicit-constructor)
  Var(Tape* tape, Tape::Index index, double value) : tape_(tape), index_(index), value_(value) {}

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  Tape::Index index() const { return index_; }

 private:
  Tape* tape_ = nullptr;
  Tape::Index index_ = 0;
  double value_ = 0.0;
};

inline std::vector<Var> Tape::variables(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.emplace_back(this, push_leaf(), v);
  return out;
}

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

namespace detail {

inline Var unary(const Var& x, double value, double dx) {
  if (x.is_constant()) return Var(value);
  Tape* t = x.tape();
  return Var(t, t->push({{x.index(), dx}}), value);
}

inline Var binary(const Var& a, const Var& b, double value, double da, double db) {
  if (a.is_constant() && b.is_constant()) return Var(value);
  if (a.is_constant()) return unary(b, value, db);
  if (b.is_constant()) return unary(a, value, da);
  assert(a.tape() == b.tape());
  Tape* t = a.tape();
  return Var(t, t->push({{a.index(), da}, {b.index(), db}}), value);
}

// Node for an n-ary function of `xs` with partials `dx`.
inline Var nary(std::span<const Var> xs, double value, std::span<const double> dx) {
  Tape* tape = nullptr;
  for (const Var& x : xs) {
    if (!x.is_constant()) {
      tape = x.tape();
      break;
    }
  }
  if (tape == nullptr) return Var(value);
  std::vector<Tape::Index> parents;
  std::vector<double> partials;
  parents.reserve(xs.size());
  partials.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].is_constant() || dx[i] == 0.0) continue;
    parents.push_back(xs[i].index());
    partials.push_back(dx[i]);
  }
  return Var(tape, tape->push(parents, partials), value);
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a, b, a.value() + b.value(), 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a, b, a.value() - b.value(), 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) {
  return detail::binary(a, b, a.value() * b.value(), b.value(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  return detail::binary(a, b, q, 1.0 / b.value(), -q / b.value());
}
inline Var operator-(const Var& a) { return detail::unary(a, -a.value(), -1.0); }

inline Var operator+(const Var& a, double b) { return detail::unary(a, a.value() + b, 1.0); }
inline Var operator+(double a, const Var& b) { return detail::unary(b, a + b.value(), 1.0); }
inline Var operator-(const Var& a, double b) { return detail::unary(a, a.value() - b, 1.0); }
inline Var operator-(double a, const Var& b) { return detail::unary(b, a - b.value(), -1.0); }
inline Var operator*(const Var& a, double b) { return detail::unary(a, a.value() * b, b); }
inline Var operator*(double a, const Var& b) { return detail::unary(b, a * b.value(), a); }
inline Var operator/(const Var& a, double b) { return detail::unary(a, a.value() / b, 1.0 / b); }
inline Var operator/(double a, const Var& b) {
  const double q = a / b.value();
  return detail::unary(b, q, -q / b.value());
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

// Scalar functions, double versions.

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ln(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }

// -T ln sum_i exp(-v_i / T), shifted by the minimum for stability.
inline double softmin(std::span<const double> v, double temperature) {
  const double lo = *std::min_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(-(x - lo) / temperature);
  return lo - temperature * std::log(sum);
}

inline double softmax(std::span<const double> v, double temperature) {
  const double hi = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp((x - hi) / temperature);
  return hi + temperature * std::log(sum);
}

// Var versions.

inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return detail::unary(x, e, e);
}

inline Var log(const Var& x) { return detail::unary(x, std::log(x.value()), 1.0 / x.value()); }

inline Var sigmoid(const Var& x) {
  const double s = sigmoid(x.value());
  return detail::unary(x, s, s * (1.0 - s));
}

inline Var softplus(const Var& x) { return detail::unary(x, softplus(x.value()), sigmoid(x.value())); }

// Subgradient 0 at the kink.
inline Var relu(const Var& x) { return x.value() > 0.0 ? x : Var(0.0); }

inline Var softmin(std::span<const Var> v, double temperature) {
  double lo = std::numeric_limits<double>::infinity();
  for (const Var& x : v) lo = std::min(lo, x.value());
  std::vector<double> w(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = std::exp(-(v[i].value() - lo) / temperature);
    sum += w[i];
  }
  for (double& wi : w) wi /= sum;
  return detail::nary(v, lo - temperature * std::log(sum), w);
}

inline Var softmax(std::span<const Var> v, double temperature) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const Var& x : v) hi = std::max(hi, x.value());
  std::vector<double> w(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = std::exp((v[i].value() - hi) / temperature);
    sum += w[i];
  }
  for (double& wi : w) wi /= sum;
  return detail::nary(v, hi + temperature * std::log(sum), w);
}

// Sum as a single node.
inline Var sum(std::span<const Var> v) {
  double total = 0.0;
  for (const Var& x : v) total += x.value();
  std::vector<double> ones(v.size(), 1.0);
  return detail::nary(v, total, ones);
}

inline double sum(std::span<const double> v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total;
}

// Derivatives of `output` with respect to each of `wrt`. Entries of `wrt`
// that are constants, or live on another tape, get 0.
inline std::vector<double> gradient(const Var& output, std::span<const Var> wrt) {
  std::vector<double> g(wrt.size(), 0.0);
  if (output.is_constant()) return g;
  const std::vector<double> adj = output.tape()->adjoints(output.index());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    if (wrt[i].tape() == output.tape() && wrt[i].index() <= output.index()) g[i] = adj[wrt[i].index()];
  }
  return g;
}

}  // namespace stlcp::ad

namespace stlcp {
using DualScalar = ad::Var;
}  // namespace stlcp
