#pragma once

// Parametric STL formulas over discrete signals.
//
//   phi ::= mu | !phi | phi & ... & phi | phi | ... | phi
//         | F_I phi | G_I phi | phi U_I phi,      mu := a^T x_t >= b
//
// Predicate coefficients, offsets, and interval endpoints are Terms: either a
// fixed value or a reference into a flat ParameterSet. hard robustness runs on
// fixed values only; bind() substitutes a ParameterSet into a formula.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "stlcp/error.hpp"
#include "stlcp/signal.hpp"

namespace stlcp {

enum class Op { predicate, negation, conjunction, disjunction, eventually, always, until };

// A scalar slot of a formula: fixed, or the parameter at `param`.
struct Term {
  double value = 0.0;
  int param = -1;

  bool learned() const { return param >= 0; }
  bool operator==(const Term&) const = default;
};

struct Interval {
  int lo = 0;
  int hi = 0;
  // Soft window endpoints (parameter indices), -1 when the window is fixed.
  int lo_param = -1;
  int hi_param = -1;

  bool learned() const { return lo_param >= 0 || hi_param >= 0; }
  bool operator==(const Interval&) const = default;
};

struct FormulaNode {
  Op op = Op::predicate;
  std::vector<Term> coefficients;  // predicate a
  Term offset;                     // predicate b
  Interval interval;               // temporal operators
  std::vector<FormulaNode> children;

  bool operator==(const FormulaNode&) const = default;
};

// --- construction ----------------------------------------------------------

inline FormulaNode predicate(const std::vector<double>& a, double b) {
  FormulaNode n;
  n.op = Op::predicate;
  for (double c : a) n.coefficients.push_back({c, -1});
  n.offset = {b, -1};
  return n;
}

// x_j >= b  (sign = +1)  or  x_j <= -b  (sign = -1), i.e. sign * x_j >= b.
inline FormulaNode axis_predicate(std::size_t dim, std::size_t axis, double sign, double b) {
  std::vector<double> a(dim, 0.0);
  a.at(axis) = sign;
  return predicate(a, b);
}

inline FormulaNode negation(FormulaNode child) {
  FormulaNode n;
  n.op = Op::negation;
  n.children.push_back(std::move(child));
  return n;
}

inline FormulaNode conjunction(std::vector<FormulaNode> children) {
  if (children.empty()) throw TemplateError("conjunction needs at least one child");
  FormulaNode n;
  n.op = Op::conjunction;
  n.children = std::move(children);
  return n;
}

inline FormulaNode disjunction(std::vector<FormulaNode> children) {
  if (children.empty()) throw TemplateError("disjunction needs at least one child");
  FormulaNode n;
  n.op = Op::disjunction;
  n.children = std::move(children);
  return n;
}

namespace detail {
inline FormulaNode temporal(Op op, int lo, int hi, std::vector<FormulaNode> children) {
  if (lo < 0 || hi < lo) {
    throw TemplateError("invalid interval [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
  }
  FormulaNode n;
  n.op = op;
  n.interval = {lo, hi, -1, -1};
  n.children = std::move(children);
  return n;
}
}  // namespace detail

inline FormulaNode eventually(int lo, int hi, FormulaNode child) {
  return detail::temporal(Op::eventually, lo, hi, {std::move(child)});
}
inline FormulaNode always(int lo, int hi, FormulaNode child) {
  return detail::temporal(Op::always, lo, hi, {std::move(child)});
}
inline FormulaNode until(int lo, int hi, FormulaNode left, FormulaNode right) {
  return detail::temporal(Op::until, lo, hi, {std::move(left), std::move(right)});
}

inline bool is_temporal(Op op) { return op == Op::eventually || op == Op::always || op == Op::until; }

// --- parameters -------------------------------------------------------------

enum class SlotKind { coefficient, offset, window_lo, window_hi };

// Where a parameter lives: the preorder index of its node, and for
// coefficients the component of a.
struct ParamSlot {
  SlotKind kind = SlotKind::offset;
  std::size_t node = 0;
  std::size_t component = 0;

  bool operator==(const ParamSlot&) const = default;
};

struct ParameterSet {
  std::vector<double> values;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<ParamSlot> slots;

  std::size_t size() const { return values.size(); }

  int add(double value, ParamSlot slot, double lo = -std::numeric_limits<double>::infinity(),
          double hi = std::numeric_limits<double>::infinity()) {
    values.push_back(std::clamp(value, lo, hi));
    lower.push_back(lo);
    upper.push_back(hi);
    slots.push_back(slot);
    return static_cast<int>(values.size() - 1);
  }

  void clamp() {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::clamp(values[i], lower[i], upper[i]);
  }

  bool operator==(const ParameterSet&) const = default;
};

// --- traversal helpers ------------------------------------------------------

template <class Fn>
void for_each_node(const FormulaNode& f, Fn&& fn, std::size_t& counter) {
  fn(f, counter++);
  for (const auto& c : f.children) for_each_node(c, fn, counter);
}

template <class Fn>
void for_each_node(const FormulaNode& f, Fn&& fn) {
  std::size_t counter = 0;
  for_each_node(f, fn, counter);
}

template <class Fn>
void for_each_node_mut(FormulaNode& f, Fn&& fn, std::size_t& counter) {
  fn(f, counter++);
  for (auto& c : f.children) for_each_node_mut(c, fn, counter);
}

inline std::size_t node_count(const FormulaNode& f) {
  std::size_t n = 0;
  for_each_node(f, [&](const FormulaNode&, std::size_t) { ++n; });
  return n;
}

inline std::size_t predicate_count(const FormulaNode& f) {
  std::size_t n = 0;
  for_each_node(f, [&](const FormulaNode& node, std::size_t) { n += node.op == Op::predicate ? 1 : 0; });
  return n;
}

// Nesting depth counting only min/max operators (predicates and negations add 0).
inline std::size_t minmax_depth(const FormulaNode& f) {
  std::size_t child = 0;
  for (const auto& c : f.children) child = std::max(child, minmax_depth(c));
  switch (f.op) {
    case Op::predicate:
    case Op::negation:
      return child;
    case Op::until:
      return child + 3;
    default:
      return child + 1;
  }
}

// Number of future steps a formula needs beyond the evaluation time.
inline int horizon(const FormulaNode& f) {
  int child = 0;
  for (const auto& c : f.children) child = std::max(child, horizon(c));
  return is_temporal(f.op) ? f.interval.hi + child : child;
}

inline void check_horizon(const FormulaNode& f, const Signal& x, std::size_t t) {
  const int h = horizon(f);
  if (t + static_cast<std::size_t>(h) > x.horizon()) {
    throw HorizonError("formula horizon " + std::to_string(h) + " at t=" + std::to_string(t) +
                       " exceeds signal horizon " + std::to_string(x.horizon()));
  }
}

inline void check_dimension(const FormulaNode& f, std::size_t d) {
  for_each_node(f, [&](const FormulaNode& n, std::size_t) {
    if (n.op == Op::predicate && n.coefficients.size() != d) {
      throw ShapeError("predicate has " + std::to_string(n.coefficients.size()) + " coefficients but signal dimension is " +
                       std::to_string(d));
    }
  });
}

// Every parameter reference resolved against `params`. Learned windows are
// rounded to the nearest integer and kept ordered.
inline FormulaNode bind(const FormulaNode& f, const ParameterSet& params) {
  FormulaNode out = f;
  auto take = [&](int idx) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= params.size()) throw ParameterError("parameter index out of range");
    return params.values[static_cast<std::size_t>(idx)];
  };
  std::size_t counter = 0;
  for_each_node_mut(
      out,
      [&](FormulaNode& n, std::size_t) {
        for (auto& c : n.coefficients) {
          if (c.learned()) c = {take(c.param), -1};
        }
        if (n.offset.learned()) n.offset = {take(n.offset.param), -1};
        if (n.interval.lo_param >= 0) n.interval.lo = static_cast<int>(std::lround(take(n.interval.lo_param)));
        if (n.interval.hi_param >= 0) n.interval.hi = static_cast<int>(std::lround(take(n.interval.hi_param)));
        n.interval.lo = std::max(0, n.interval.lo);
        n.interval.hi = std::max(n.interval.lo, n.interval.hi);
        n.interval.lo_param = n.interval.hi_param = -1;
      },
      counter);
  return out;
}

// --- hard quantitative semantics -------------------------------------------

namespace detail {

inline double robustness_unchecked(const FormulaNode& f, const Signal& x, std::size_t t) {
  switch (f.op) {
    case Op::predicate: {
      double acc = 0.0;
      const auto s = x.state(t);
      for (std::size_t j = 0; j < f.coefficients.size(); ++j) acc += f.coefficients[j].value * s[j];
      return acc - f.offset.value;
    }
    case Op::negation:
      return -robustness_unchecked(f.children[0], x, t);
    case Op::conjunction: {
      double r = std::numeric_limits<double>::infinity();
      for (const auto& c : f.children) r = std::min(r, robustness_unchecked(c, x, t));
      return r;
    }
    case Op::disjunction: {
      double r = -std::numeric_limits<double>::infinity();
      for (const auto& c : f.children) r = std::max(r, robustness_unchecked(c, x, t));
      return r;
    }
    case Op::always: {
      double r = std::numeric_limits<double>::infinity();
      for (int k = f.interval.lo; k <= f.interval.hi; ++k) r = std::min(r, robustness_unchecked(f.children[0], x, t + k));
      return r;
    }
    case Op::eventually: {
      double r = -std::numeric_limits<double>::infinity();
      for (int k = f.interval.lo; k <= f.interval.hi; ++k) r = std::max(r, robustness_unchecked(f.children[0], x, t + k));
      return r;
    }
    case Op::until: {
      // max over t' in t+I of min(rho2(t'), min_{t'' in [t, t']} rho1(t''))
      double best = -std::numeric_limits<double>::infinity();
      double left_min = std::numeric_limits<double>::infinity();
      const auto hi = static_cast<std::size_t>(f.interval.hi);
      const auto lo = static_cast<std::size_t>(f.interval.lo);
      for (std::size_t k = 0; k <= hi; ++k) {
        left_min = std::min(left_min, robustness_unchecked(f.children[0], x, t + k));
        if (k >= lo) best = std::max(best, std::min(robustness_unchecked(f.children[1], x, t + k), left_min));
      }
      return best;
    }
  }
  return 0.0;
}

inline bool satisfied_unchecked(const FormulaNode& f, const Signal& x, std::size_t t) {
  switch (f.op) {
    case Op::predicate: {
      double acc = 0.0;
      for (std::size_t j = 0; j < f.coefficients.size(); ++j) acc += f.coefficients[j].value * x.at(t, j);
      return acc >= f.offset.value;
    }
    case Op::negation:
      return !satisfied_unchecked(f.children[0], x, t);
    case Op::conjunction:
      return std::all_of(f.children.begin(), f.children.end(),
                         [&](const FormulaNode& c) { return satisfied_unchecked(c, x, t); });
    case Op::disjunction:
      return std::any_of(f.children.begin(), f.children.end(),
                         [&](const FormulaNode& c) { return satisfied_unchecked(c, x, t); });
    case Op::always:
      for (int k = f.interval.lo; k <= f.interval.hi; ++k) {
        if (!satisfied_unchecked(f.children[0], x, t + k)) return false;
      }
      return true;
    case Op::eventually:
      for (int k = f.interval.lo; k <= f.interval.hi; ++k) {
        if (satisfied_unchecked(f.children[0], x, t + k)) return true;
      }
      return false;
    case Op::until:
      for (int k = f.interval.lo; k <= f.interval.hi; ++k) {
        if (!satisfied_unchecked(f.children[1], x, t + k)) continue;
        bool held = true;
        for (int j = 0; j <= k && held; ++j) held = satisfied_unchecked(f.children[0], x, t + j);
        if (held) return true;
      }
      return false;
  }
  return false;
}

inline void require_bound(const FormulaNode& f) {
  for_each_node(f, [](const FormulaNode& n, std::size_t) {
    bool learned = n.offset.learned() || n.interval.learned();
    for (const auto& c : n.coefficients) learned = learned || c.learned();
    if (learned) throw ParameterError("formula has unbound parameters; call bind() first");
  });
}

}  // namespace detail

// Quantitative robustness of `f` on `x` at time `t`.
inline double robustness(const FormulaNode& f, const Signal& x, std::size_t t = 0) {
  detail::require_bound(f);
  check_dimension(f, x.dimension());
  check_horizon(f, x, t);
  return detail::robustness_unchecked(f, x, t);
}

// Boolean satisfaction, evaluated directly (predicates as a^T x >= b).
inline bool satisfies(const FormulaNode& f, const Signal& x, std::size_t t = 0) {
  detail::require_bound(f);
  check_dimension(f, x.dimension());
  check_horizon(f, x, t);
  return detail::satisfied_unchecked(f, x, t);
}

// rho > 0 predicts +1; rho == 0 predicts -1.
inline int classify(double rho) { return rho > 0.0 ? 1 : -1; }

}  // namespace stlcp
