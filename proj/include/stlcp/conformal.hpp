#pragma once

// Inductive conformal prediction for binary labels {+1, -1}.
//
// Exact forms (used after training):
//   threshold: tau = k-th smallest calibration score, k = ceil((1-alpha)(n+1));
//              C(X) = {k : E(X,k) <= tau}. When k > n, tau = +inf.
//   p-value:   p_k = (#{i : E_i >= E(X,k)} + 1) / (n + 1);  C(X) = {k : p_k > alpha}.
//
// Smooth forms (used inside training):
//   smooth_calibrate  soft-rank quantile, r_i = sum_j s((E_i - E_j)/T_r),
//                     tau~ = sum_i w_i E_i, w_i ~ exp(-(r_i - k + 1/2)^2 / T_q)
//   smooth_pred       s((tau~ - E~)/T_c)
//   diff_p            (sum_i s((E_i - E~)/T_p) + 1) / (n + 1)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "stlcp/autodiff.hpp"
#include "stlcp/error.hpp"

namespace stlcp {

enum class CpMethod { threshold, p_value };

inline std::string to_string(CpMethod m) { return m == CpMethod::threshold ? "threshold" : "p_value"; }

inline CpMethod cp_method_from_string(const std::string& s) {
  if (s == "threshold") return CpMethod::threshold;
  if (s == "p_value" || s == "pvalue") return CpMethod::p_value;
  throw InputError("unknown CP method '" + s + "' (expected threshold or p_value)");
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
}

// k = ceil((1 - alpha)(n + 1)), with a small tolerance so that products such
// as 0.95 * 200 do not round up past an exact integer.
inline std::size_t quantile_rank(std::size_t n, double alpha) {
  check_alpha(alpha);
  const double x = (1.0 - alpha) * static_cast<double>(n + 1);
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

inline double calibrate_threshold(std::span<const double> cal_scores, double alpha) {
  if (cal_scores.empty()) throw InputError("calibration set is empty");
  const std::size_t k = quantile_rank(cal_scores.size(), alpha);
  if (k > cal_scores.size()) return std::numeric_limits<double>::infinity();
  std::vector<double> sorted(cal_scores.begin(), cal_scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  return sorted[k - 1];
}

inline double p_value(std::span<const double> cal_scores, double test_score) {
  if (cal_scores.empty()) throw InputError("calibration set is empty");
  std::size_t at_least = 0;
  for (double e : cal_scores) at_least += e >= test_score ? 1 : 0;
  return static_cast<double>(at_least + 1) / static_cast<double>(cal_scores.size() + 1);
}

// Everything exact CP needs at test time.
struct CalibrationArtifacts {
  std::vector<double> scores;  // sorted ascending
  std::size_t n = 0;
  double margin = 0.0;
  double tau = 0.0;
  double alpha = 0.1;
  double M = 5.0;
  bool unbounded = false;  // rank exceeded n; tau = +inf

  static CalibrationArtifacts build(std::vector<double> cal_scores, double margin, double alpha, double M) {
    if (cal_scores.empty()) throw InputError("calibration set is empty");
    CalibrationArtifacts a;
    std::sort(cal_scores.begin(), cal_scores.end());
    a.tau = calibrate_threshold(cal_scores, alpha);
    a.unbounded = std::isinf(a.tau);
    a.scores = std::move(cal_scores);
    a.n = a.scores.size();
    a.margin = margin;
    a.alpha = alpha;
    a.M = M;
    return a;
  }

  // Same scores at another alpha.
  CalibrationArtifacts at_alpha(double new_alpha) const {
    CalibrationArtifacts a = *this;
    a.alpha = new_alpha;
    a.tau = calibrate_threshold(scores, new_alpha);
    a.unbounded = std::isinf(a.tau);
    return a;
  }

  // p-value via binary search on the sorted scores.
  double p_value(double test_score) const {
    const auto first = std::lower_bound(scores.begin(), scores.end(), test_score);
    const auto at_least = static_cast<std::size_t>(scores.end() - first);
    return static_cast<double>(at_least + 1) / static_cast<double>(n + 1);
  }
};

inline nlohmann::json to_json(const CalibrationArtifacts& a) {
  return {{"scores", a.scores},
          {"n", a.n},
          {"margin", a.margin},
          {"tau", a.unbounded ? nlohmann::json("inf") : nlohmann::json(a.tau)},
          {"alpha", a.alpha},
          {"M", a.M},
          {"unbounded", a.unbounded}};
}

inline CalibrationArtifacts calibration_from_json(const nlohmann::json& j) {
  try {
    CalibrationArtifacts a;
    a.scores = j.at("scores").get<std::vector<double>>();
    std::sort(a.scores.begin(), a.scores.end());
    a.n = j.at("n").get<std::size_t>();
    a.margin = j.at("margin").get<double>();
    a.alpha = j.at("alpha").get<double>();
    a.M = j.value("M", 5.0);
    a.unbounded = j.value("unbounded", false);
    a.tau = a.unbounded ? std::numeric_limits<double>::infinity() : j.at("tau").get<double>();
    if (a.n != a.scores.size()) throw ParseError("calibration n does not match the number of scores");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid calibration JSON: ") + e.what());
  }
}

struct LabelScores {
  double positive = 0.0;  // E(X, +1)
  double negative = 0.0;  // E(X, -1)
};

struct PredictionSet {
  bool positive = false;
  bool negative = false;
  CpMethod method = CpMethod::threshold;
  double alpha = 0.1;
  std::optional<double> p_positive;
  std::optional<double> p_negative;

  std::size_t size() const { return (positive ? 1 : 0) + (negative ? 1 : 0); }
  bool contains(int label) const { return label == 1 ? positive : negative; }
  bool operator==(const PredictionSet&) const = default;
};

inline PredictionSet predict_set(const LabelScores& scores, const CalibrationArtifacts& arts, CpMethod method) {
  PredictionSet s;
  s.method = method;
  s.alpha = arts.alpha;
  if (method == CpMethod::threshold) {
    s.positive = scores.positive <= arts.tau;
    s.negative = scores.negative <= arts.tau;
  } else {
    s.p_positive = arts.p_value(scores.positive);
    s.p_negative = arts.p_value(scores.negative);
    s.positive = *s.p_positive > arts.alpha;
    s.negative = *s.p_negative > arts.alpha;
  }
  return s;
}

// --- smooth counterparts ----------------------------------------------------

template <class Scalar>
Scalar smooth_calibrate(std::span<const Scalar> cal_scores, double alpha, double rank_temperature,
                        double kernel_width) {
  if (cal_scores.empty()) throw InputError("calibration set is empty");
  if (!(rank_temperature > 0.0) || !(kernel_width > 0.0)) {
    throw ParameterError("smooth calibration temperatures must be positive");
  }
  const std::size_t n = cal_scores.size();
  const std::size_t k = quantile_rank(n, alpha);
  if (k > n) return Scalar(std::numeric_limits<double>::infinity());
  const double target = static_cast<double>(k) - 0.5;

  std::vector<Scalar> logits;
  logits.reserve(n);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Scalar> terms;
    terms.reserve(n);
    for (std::size_t j = 0; j < n; ++j) terms.push_back(ad::sigmoid((cal_scores[i] - cal_scores[j]) / rank_temperature));
    const Scalar rank = ad::sum(std::span<const Scalar>(terms));
    const Scalar d = rank - target;
    logits.push_back(-(d * d) / kernel_width);
    max_logit = std::max(max_logit, ad::value_of(logits.back()));
  }
  std::vector<Scalar> weights;
  weights.reserve(n);
  for (const auto& l : logits) weights.push_back(ad::exp(l - max_logit));
  const Scalar total = ad::sum(std::span<const Scalar>(weights));
  std::vector<Scalar> weighted;
  weighted.reserve(n);
  for (std::size_t i = 0; i < n; ++i) weighted.push_back(weights[i] * cal_scores[i]);
  return ad::sum(std::span<const Scalar>(weighted)) / total;
}

template <class Scalar>
Scalar smooth_pred(const Scalar& test_score, const Scalar& tau, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("prediction temperature must be positive");
  if (std::isinf(ad::value_of(tau))) return Scalar(ad::value_of(tau) > 0 ? 1.0 : 0.0);
  return ad::sigmoid((tau - test_score) / temperature);
}

template <class Scalar>
Scalar diff_p(const Scalar& test_score, std::span<const Scalar> cal_scores, double temperature) {
  if (cal_scores.empty()) throw InputError("calibration set is empty");
  if (!(temperature > 0.0)) throw ParameterError("p-value temperature must be positive");
  std::vector<Scalar> terms;
  terms.reserve(cal_scores.size());
  for (const auto& e : cal_scores) terms.push_back(ad::sigmoid((e - test_score) / temperature));
  const double denom = static_cast<double>(cal_scores.size() + 1);
  return (ad::sum(std::span<const Scalar>(terms)) + 1.0) / denom;
}

}  // namespace stlcp
