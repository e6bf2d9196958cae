#pragma once

// Margin-based nonconformity for robustness classifiers.
//
// The margin of a classifier on a labelled set is min_i ReLU(rho_i * y_i).
// Scores are piecewise constant by region relative to +-m:
//
//   y = -1:  rho > m -> M,   -m < rho <= m -> 1,   rho <= -m -> 0
//   y = +1:  rho < -m -> M,  -m <= rho < m -> 1,   rho >= m -> 0
//
// Only the ordering 0 < 1 < M matters for prediction sets. The smooth score
// replaces the region indicators with sigmoids of x = rho * y:
//
//   E~ = s(-(x - m)/T1) * s((x + m)/T2) + M * s(-(x + m)/T3)

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stlcp/autodiff.hpp"
#include "stlcp/error.hpp"

namespace stlcp {

struct MarginEstimate {
  double m = 0.0;
  std::string source;
  bool soft = false;
  double floor = 0.0;
};

struct ScoreParams {
  double M = 5.0;
  double T1 = 0.5;
  double T2 = 0.5;
  double T3 = 0.5;

  void validate() const {
    if (!(M > 1.0)) throw ParameterError("score level M must exceed 1");
    if (!(T1 > 0.0 && T2 > 0.0 && T3 > 0.0)) throw ParameterError("score temperatures must be positive");
  }
};

inline MarginEstimate margin(std::span<const std::pair<double, int>> pairs, std::string source = {}) {
  if (pairs.empty()) throw InputError("margin needs at least one (robustness, label) pair");
  double m = std::numeric_limits<double>::infinity();
  for (const auto& [rho, y] : pairs) m = std::min(m, ad::relu(rho * static_cast<double>(y)));
  return {m, std::move(source), false, 0.0};
}

inline MarginEstimate margin(std::span<const double> robustness, std::span<const int> labels, std::string source = {}) {
  if (robustness.size() != labels.size()) throw InputError("robustness and label lists differ in length");
  std::vector<std::pair<double, int>> pairs;
  pairs.reserve(robustness.size());
  for (std::size_t i = 0; i < robustness.size(); ++i) pairs.emplace_back(robustness[i], labels[i]);
  return margin(std::span<const std::pair<double, int>>(pairs), std::move(source));
}

// Differentiable margin: softmin over T * softplus(rho*y / T), floored at eps.
// The floor is a constant, so its gradient is zero.
template <class Scalar>
Scalar soft_margin(std::span<const std::pair<Scalar, int>> pairs, double temperature, double floor) {
  if (pairs.empty()) throw InputError("soft margin needs at least one pair");
  if (!(temperature > 0.0) || !(floor > 0.0)) throw ParameterError("soft margin temperature and floor must be positive");
  std::vector<Scalar> smoothed;
  smoothed.reserve(pairs.size());
  for (const auto& [rho, y] : pairs) {
    smoothed.push_back(temperature * ad::softplus(rho * static_cast<double>(y) / temperature));
  }
  Scalar m = smoothed.size() == 1 ? smoothed.front() : ad::softmin(std::span<const Scalar>(smoothed), temperature);
  if (ad::value_of(m) < floor) return Scalar(floor);
  return m;
}

inline double hard_score(double rho, int label, double m, double M) {
  if (label == -1) {
    if (rho > m) return M;
    if (rho > -m) return 1.0;
    return 0.0;
  }
  if (rho < -m) return M;
  if (rho < m) return 1.0;
  return 0.0;
}

template <class Scalar>
Scalar smooth_score(const Scalar& rho, int label, const Scalar& m, const ScoreParams& p) {
  const Scalar x = rho * static_cast<double>(label);
  const Scalar f1 = ad::sigmoid(-(x - m) / p.T1);
  const Scalar f2 = ad::sigmoid((x + m) / p.T2);
  const Scalar f3 = ad::sigmoid(-(x + m) / p.T3);
  return f1 * f2 + p.M * f3;
}

}  // namespace stlcp
