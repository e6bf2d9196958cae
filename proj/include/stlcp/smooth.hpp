#pragma once

// Smooth robustness: the quantitative semantics with every min/max replaced
// by log-sum-exp at temperature T_s. Written once over the scalar type, so
// the same traversal runs on doubles (plain evaluation, finite differences)
// and on ad::Var (gradients with respect to the parameter vector).
//
// softmin_T(v) = -T ln sum_i exp(-v_i / T) satisfies
//   min(v) - T ln n <= softmin_T(v) <= min(v).
//
// Learned windows use a soft indicator over the support [lo, hi] stored in the
// interval: w_k = sigmoid((k - l + 1/2) / T_w) * sigmoid((u + 1/2 - k) / T_w)
// with l, u the window parameters, and a weight-normalised log-sum-exp.

#include <span>
#include <vector>

#include "stlcp/autodiff.hpp"
#include "stlcp/error.hpp"
#include "stlcp/formula.hpp"

namespace stlcp {

struct SmoothOptions {
  double temperature = 1.0;         // T_s, robustness units
  double window_temperature = 0.5;  // T_w, time steps

  void validate() const {
    if (!(temperature > 0.0)) throw ParameterError("smooth temperature must be positive");
    if (!(window_temperature > 0.0)) throw ParameterError("window temperature must be positive");
  }
};

namespace detail {

template <class Scalar>
Scalar term_value(const Term& term, std::span<const Scalar> theta) {
  if (!term.learned()) return Scalar(term.value);
  if (static_cast<std::size_t>(term.param) >= theta.size()) throw ParameterError("parameter index out of range");
  return theta[static_cast<std::size_t>(term.param)];
}

// Weighted log-sum-exp: sign = -1 gives a soft min, +1 a soft max.
template <class Scalar>
Scalar weighted_soft_extremum(const std::vector<Scalar>& v, const std::vector<Scalar>& w, double temperature,
                              double sign) {
  double shift = ad::value_of(v.front());
  for (const auto& x : v) shift = sign < 0 ? std::min(shift, ad::value_of(x)) : std::max(shift, ad::value_of(x));
  Scalar num(0.0), den(0.0);
  for (std::size_t k = 0; k < v.size(); ++k) {
    num = num + w[k] * ad::exp(sign * (v[k] - shift) / temperature);
    den = den + w[k];
  }
  return shift + sign * temperature * ad::log(num / den);
}

template <class Scalar>
Scalar smooth_eval(const FormulaNode& f, std::span<const Scalar> theta, const Signal& x, std::size_t t,
                   const SmoothOptions& opt) {
  switch (f.op) {
    case Op::predicate: {
      double fixed = 0.0;
      Scalar learned(0.0);
      const auto s = x.state(t);
      for (std::size_t j = 0; j < f.coefficients.size(); ++j) {
        const Term& c = f.coefficients[j];
        if (c.learned()) {
          learned = learned + term_value(c, theta) * s[j];
        } else {
          fixed += c.value * s[j];
        }
      }
      return learned + fixed - term_value(f.offset, theta);
    }
    case Op::negation:
      return -smooth_eval(f.children[0], theta, x, t, opt);
    case Op::conjunction:
    case Op::disjunction: {
      std::vector<Scalar> v;
      v.reserve(f.children.size());
      for (const auto& c : f.children) v.push_back(smooth_eval(c, theta, x, t, opt));
      if (v.size() == 1) return v.front();
      return f.op == Op::conjunction ? ad::softmin(std::span<const Scalar>(v), opt.temperature)
                                     : ad::softmax(std::span<const Scalar>(v), opt.temperature);
    }
    case Op::always:
    case Op::eventually: {
      std::vector<Scalar> v;
      for (int k = f.interval.lo; k <= f.interval.hi; ++k) v.push_back(smooth_eval(f.children[0], theta, x, t + k, opt));
      if (f.interval.learned()) {
        const Scalar lo = f.interval.lo_param >= 0 ? theta[static_cast<std::size_t>(f.interval.lo_param)]
                                                   : Scalar(static_cast<double>(f.interval.lo));
        const Scalar hi = f.interval.hi_param >= 0 ? theta[static_cast<std::size_t>(f.interval.hi_param)]
                                                   : Scalar(static_cast<double>(f.interval.hi));
        std::vector<Scalar> w;
        w.reserve(v.size());
        for (int k = f.interval.lo; k <= f.interval.hi; ++k) {
          const double kk = static_cast<double>(k);
          w.push_back(ad::sigmoid((kk - lo + 0.5) / opt.window_temperature) *
                      ad::sigmoid((hi + 0.5 - kk) / opt.window_temperature));
        }
        return weighted_soft_extremum(v, w, opt.temperature, f.op == Op::always ? -1.0 : 1.0);
      }
      if (v.size() == 1) return v.front();
      return f.op == Op::always ? ad::softmin(std::span<const Scalar>(v), opt.temperature)
                                : ad::softmax(std::span<const Scalar>(v), opt.temperature);
    }
    case Op::until: {
      if (f.interval.learned()) throw TemplateError("learned windows are not supported for until");
      std::vector<Scalar> left_prefix;
      std::vector<Scalar> candidates;
      for (int k = 0; k <= f.interval.hi; ++k) {
        left_prefix.push_back(smooth_eval(f.children[0], theta, x, t + k, opt));
        if (k < f.interval.lo) continue;
        const Scalar left = left_prefix.size() == 1
                                ? left_prefix.front()
                                : ad::softmin(std::span<const Scalar>(left_prefix), opt.temperature);
        const Scalar right = smooth_eval(f.children[1], theta, x, t + k, opt);
        const std::vector<Scalar> pair{right, left};
        candidates.push_back(ad::softmin(std::span<const Scalar>(pair), opt.temperature));
      }
      if (candidates.size() == 1) return candidates.front();
      return ad::softmax(std::span<const Scalar>(candidates), opt.temperature);
    }
  }
  return Scalar(0.0);
}

}  // namespace detail

// Smooth robustness of `f` with parameters `theta` on `x` at time `t`.
template <class Scalar>
Scalar smooth_robustness(const FormulaNode& f, std::span<const Scalar> theta, const Signal& x, std::size_t t,
                         const SmoothOptions& opt) {
  opt.validate();
  check_dimension(f, x.dimension());
  check_horizon(f, x, t);
  return detail::smooth_eval(f, theta, x, t, opt);
}

inline double smooth_robustness(const FormulaNode& f, const ParameterSet& params, const Signal& x, std::size_t t,
                                const SmoothOptions& opt) {
  return smooth_robustness<double>(f, std::span<const double>(params.values), x, t, opt);
}

}  // namespace stlcp
