#pragma once

// Losses, the optimizer, and the three training loops (baseline, ConfTr,
// TLICP). Every loop shares the same batching: a per-epoch seeded shuffle,
// fixed-size batches with the trailing partial batch dropped, and for the
// conformal methods an equal split of each batch into B_cal and B_test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stlcp/autodiff.hpp"
#include "stlcp/conformal.hpp"
#include "stlcp/error.hpp"
#include "stlcp/formula.hpp"
#include "stlcp/formula_io.hpp"
#include "stlcp/nonconformity.hpp"
#include "stlcp/rng.hpp"
#include "stlcp/signal.hpp"
#include "stlcp/smooth.hpp"
#include "stlcp/templates.hpp"

namespace stlcp {

// --- configuration ----------------------------------------------------------

enum class Method { baseline, conftr, tlicp, tlicp_alpha };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::conftr: return "conftr";
    case Method::tlicp: return "tlicp";
    case Method::tlicp_alpha: return "tlicp_alpha";
  }
  return "baseline";
}

inline Method method_from_string(const std::string& s) {
  for (auto m : {Method::baseline, Method::conftr, Method::tlicp, Method::tlicp_alpha}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + s + "' (expected baseline, conftr, tlicp or tlicp_alpha)");
}

inline bool method_uses_alpha(Method m) { return m == Method::conftr || m == Method::tlicp_alpha; }

struct TrainConfig {
  Method method = Method::baseline;
  std::optional<double> alpha;
  double lambda = 1.0;

  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 10.0;

  double T1 = 0.5;
  double T2 = 0.5;
  double T3 = 0.5;
  double T_c = 0.1;
  double T_p = 1.0;
  double T_r = 0.1;
  double T_q = 1.0;
  double T_m = 0.5;
  double T_s = 1.0;
  double T_w = 0.5;
  double scale = 1.0;
  double M = 5.0;
  double margin_floor = 1e-3;

  std::uint64_t seed = 0;
  // "task" selects the template matched to the dataset's task; otherwise a
  // template kind name.
  std::string template_name = "task";
  WindowMode window_mode = WindowMode::fixed;
  bool init_from_data = true;
  SplitSpec split;

  ScoreParams score_params() const { return {M, T1, T2, T3}; }
  SmoothOptions smooth_options() const { return {T_s, T_w}; }

  void validate() const {
    if (method_uses_alpha(method)) {
      if (!alpha) throw ConfigError("alpha required for method " + to_string(method));
    }
    if (alpha && !(*alpha > 0.0 && *alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and at least 2");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    for (auto [name, v] : {std::pair{"T1", T1}, std::pair{"T2", T2}, std::pair{"T3", T3}, std::pair{"T_c", T_c},
                           std::pair{"T_p", T_p}, std::pair{"T_r", T_r}, std::pair{"T_q", T_q}, std::pair{"T_m", T_m},
                           std::pair{"T_s", T_s}, std::pair{"T_w", T_w}, std::pair{"scale", scale},
                           std::pair{"margin_floor", margin_floor}}) {
      if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
    }
    if (!(M > 1.0)) throw ConfigError("M must exceed 1");
    try {
      split.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (template_name != "task") {
      try {
        template_kind_from_string(template_name);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
  }
};

inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["method"] = to_string(c.method);
  j["alpha"] = c.alpha ? nlohmann::json(*c.alpha) : nlohmann::json(nullptr);
  j["lambda"] = c.lambda;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  j["clip_norm"] = c.clip_norm;
  j["T1"] = c.T1;
  j["T2"] = c.T2;
  j["T3"] = c.T3;
  j["T_c"] = c.T_c;
  j["T_p"] = c.T_p;
  j["T_r"] = c.T_r;
  j["T_q"] = c.T_q;
  j["T_m"] = c.T_m;
  j["T_s"] = c.T_s;
  j["T_w"] = c.T_w;
  j["scale"] = c.scale;
  j["M"] = c.M;
  j["margin_floor"] = c.margin_floor;
  j["seed"] = c.seed;
  j["template"] = c.template_name;
  j["window_mode"] = to_string(c.window_mode);
  j["init_from_data"] = c.init_from_data;
  j["train_fraction"] = c.split.train;
  j["cal_fraction"] = c.split.cal;
  j["test_fraction"] = c.split.test;
  j["cal_margin_fraction"] = c.split.cal_margin;
  return nlohmann::json(j);
}

struct ResolvedConfig {
  TrainConfig config;
  std::vector<std::string> warnings;
};

// Reads a flat JSON object, fills defaults, and checks every invariant.
// Unknown keys are errors; keys the chosen method ignores are warnings.
inline ResolvedConfig resolve_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ResolvedConfig out;
  TrainConfig& c = out.config;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config field '") + key + "' has the wrong type");
    }
  };
  static const char* const kKnown[] = {
      "method", "alpha", "lambda", "batch_size", "epochs", "learning_rate", "beta1", "beta2", "adam_epsilon",
      "clip_norm", "T1", "T2", "T3", "T_c", "T_p", "T_r", "T_q", "T_m", "T_s", "T_w", "scale", "M",
      "margin_floor", "seed", "template", "window_mode", "init_from_data", "train_fraction", "cal_fraction",
      "test_fraction", "cal_margin_fraction"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return key == k; }) ==
        std::end(kKnown)) {
      throw ConfigError("unknown config field '" + key + "'");
    }
  }

  std::string method = to_string(c.method);
  get("method", method);
  c.method = method_from_string(method);
  if (j.contains("alpha") && !j.at("alpha").is_null()) {
    double a = 0.0;
    get("alpha", a);
    c.alpha = a;
  }
  get("lambda", c.lambda);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("learning_rate", c.learning_rate);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_epsilon", c.adam_epsilon);
  get("clip_norm", c.clip_norm);
  get("T1", c.T1);
  get("T2", c.T2);
  get("T3", c.T3);
  get("T_c", c.T_c);
  get("T_p", c.T_p);
  get("T_r", c.T_r);
  get("T_q", c.T_q);
  get("T_m", c.T_m);
  get("T_s", c.T_s);
  get("T_w", c.T_w);
  get("scale", c.scale);
  get("M", c.M);
  get("margin_floor", c.margin_floor);
  get("seed", c.seed);
  get("template", c.template_name);
  std::string window = to_string(c.window_mode);
  get("window_mode", window);
  try {
    c.window_mode = window_mode_from_string(window);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  get("init_from_data", c.init_from_data);
  get("train_fraction", c.split.train);
  get("cal_fraction", c.split.cal);
  get("test_fraction", c.split.test);
  get("cal_margin_fraction", c.split.cal_margin);
  c.split.seed = c.seed;

  if (c.alpha && !method_uses_alpha(c.method)) {
    out.warnings.push_back("alpha is ignored by method " + to_string(c.method));
  }
  if (j.contains("lambda") && c.method != Method::conftr) {
    out.warnings.push_back("lambda is ignored by method " + to_string(c.method));
  }
  c.validate();
  return out;
}

inline TrainConfig config_from_json(const nlohmann::json& j) { return resolve_config(j).config; }

// --- losses -----------------------------------------------------------------

template <class Scalar>
struct LabelPair {
  Scalar positive;
  Scalar negative;
};

template <class Scalar>
Scalar mean_of(std::vector<Scalar>& terms) {
  const double n = static_cast<double>(terms.size());
  return ad::sum(std::span<const Scalar>(terms)) / n;
}

// mean softplus(-y * rho / s)
template <class Scalar>
Scalar classification_loss(std::span<const Scalar> robustness, std::span<const int> labels, double scale = 1.0) {
  if (robustness.size() != labels.size()) throw InputError("robustness and label lists differ in length");
  if (robustness.empty()) throw InputError("classification loss needs at least one sample");
  if (!(scale > 0.0)) throw ParameterError("classification scale must be positive");
  std::vector<Scalar> terms;
  terms.reserve(robustness.size());
  for (std::size_t i = 0; i < robustness.size(); ++i) {
    terms.push_back(ad::softplus(robustness[i] * (-static_cast<double>(labels[i]) / scale)));
  }
  return mean_of(terms);
}

// mean ReLU(C~(+1) + C~(-1) - 1)
template <class Scalar>
Scalar conftr_loss(std::span<const LabelPair<Scalar>> soft_sets) {
  if (soft_sets.empty()) throw InputError("ConfTr loss needs at least one test sample");
  std::vector<Scalar> terms;
  terms.reserve(soft_sets.size());
  for (const auto& s : soft_sets) terms.push_back(ad::relu(s.positive + s.negative - 1.0));
  return mean_of(terms);
}

template <class Scalar>
Scalar combined_conftr_loss(const Scalar& classification, const Scalar& regularizer, double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be non-negative");
  return classification + lambda * regularizer;
}

// mean(p~(-1) * y - p~(+1) * y)
template <class Scalar>
Scalar tlicp_loss(std::span<const LabelPair<Scalar>> soft_p, std::span<const int> labels) {
  if (soft_p.size() != labels.size()) throw InputError("p-value and label lists differ in length");
  if (soft_p.empty()) throw InputError("TLICP loss needs at least one test sample");
  std::vector<Scalar> terms;
  terms.reserve(soft_p.size());
  for (std::size_t i = 0; i < soft_p.size(); ++i) {
    const double y = static_cast<double>(labels[i]);
    terms.push_back((soft_p[i].negative - soft_p[i].positive) * y);
  }
  return mean_of(terms);
}

// mean(ReLU(y(alpha - p~(+1))) + ReLU(y(p~(-1) - alpha)))
template <class Scalar>
Scalar tlicp_loss_alpha(std::span<const LabelPair<Scalar>> soft_p, std::span<const int> labels, double alpha) {
  if (soft_p.size() != labels.size()) throw InputError("p-value and label lists differ in length");
  if (soft_p.empty()) throw InputError("TLICP loss needs at least one test sample");
  check_alpha(alpha);
  std::vector<Scalar> terms;
  terms.reserve(soft_p.size());
  for (std::size_t i = 0; i < soft_p.size(); ++i) {
    const double y = static_cast<double>(labels[i]);
    terms.push_back(ad::relu((alpha - soft_p[i].positive) * y) + ad::relu((soft_p[i].negative - alpha) * y));
  }
  return mean_of(terms);
}

// --- optimizer --------------------------------------------------------------

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& values, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      values[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
inline double clip_gradient(std::vector<double>& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (double& g : grad) g *= f;
  }
  return norm;
}

// --- model ------------------------------------------------------------------

struct EpochRecord {
  double loss = 0.0;
  double batch_mcr = 0.0;  // sign errors of the smooth robustness, averaged over batches

  bool operator==(const EpochRecord&) const = default;
};

struct TrainedModel {
  FormulaNode formula;
  ParameterSet params;
  std::vector<EpochRecord> history;
  TrainConfig config;
  std::string task;
  std::size_t dimension = 0;
  std::size_t length = 0;

  FormulaNode bound() const { return bind(formula, params); }

  std::vector<double> robustness(const Dataset& ds) const {
    const FormulaNode f = bound();
    std::vector<double> out;
    out.reserve(ds.size());
    for (const auto& s : ds) out.push_back(stlcp::robustness(f, s.signal));
    return out;
  }

  std::string describe(int precision = 2) const { return format_formula(formula, params, precision); }
};

inline nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : m.history) history.push_back({{"loss", h.loss}, {"batch_mcr", h.batch_mcr}});
  return {{"formula", formula_to_json(m.formula)},
          {"parameters", parameters_to_json(m.params)},
          {"formula_text", m.describe()},
          {"config", config_to_json(m.config)},
          {"history", history},
          {"task", m.task},
          {"dimension", m.dimension},
          {"length", m.length}};
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    TrainedModel m;
    m.formula = formula_from_json(j.at("formula"));
    m.params = parameters_from_json(j.at("parameters"));
    m.config = config_from_json(j.at("config"));
    for (const auto& h : j.at("history")) m.history.push_back({h.at("loss").get<double>(), h.at("batch_mcr").get<double>()});
    m.task = j.value("task", std::string("custom"));
    m.dimension = j.at("dimension").get<std::size_t>();
    m.length = j.at("length").get<std::size_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid model JSON: ") + e.what());
  }
}

// --- training loops ---------------------------------------------------------

inline TemplateSpec resolve_template(const TrainConfig& cfg, const std::string& task, std::size_t length) {
  TemplateSpec spec;
  if (cfg.template_name == "task") {
    spec = task_template(task, length);
  } else {
    spec.kind = template_kind_from_string(cfg.template_name);
  }
  spec.window_mode = cfg.window_mode;
  return spec;
}

namespace detail {

struct BatchTerms {
  ad::Var loss;
  std::size_t errors = 0;
};

inline BatchTerms batch_loss(const FormulaNode& f, std::span<const ad::Var> theta, const Dataset& data,
                             std::span<const std::size_t> batch, const TrainConfig& cfg) {
  const SmoothOptions opt = cfg.smooth_options();
  std::vector<ad::Var> rho;
  std::vector<int> labels;
  rho.reserve(batch.size());
  labels.reserve(batch.size());
  BatchTerms out;
  for (std::size_t idx : batch) {
    const auto& s = data[idx];
    rho.push_back(smooth_robustness<ad::Var>(f, theta, s.signal, 0, opt));
    labels.push_back(s.label);
    out.errors += classify(rho.back().value()) != s.label ? 1 : 0;
  }

  const bool conformal = cfg.method != Method::baseline && !(cfg.method == Method::conftr && cfg.lambda == 0.0);
  if (!conformal) {
    out.loss = classification_loss<ad::Var>(rho, labels, cfg.scale);
    return out;
  }

  const std::size_t half = batch.size() / 2;
  const ScoreParams sp = cfg.score_params();
  std::vector<std::pair<ad::Var, int>> cal_pairs;
  for (std::size_t i = 0; i < half; ++i) cal_pairs.emplace_back(rho[i], labels[i]);
  const ad::Var m =
      soft_margin<ad::Var>(std::span<const std::pair<ad::Var, int>>(cal_pairs), cfg.T_m, cfg.margin_floor);
  std::vector<ad::Var> cal_scores;
  cal_scores.reserve(half);
  for (std::size_t i = 0; i < half; ++i) cal_scores.push_back(smooth_score(rho[i], labels[i], m, sp));

  std::vector<LabelPair<ad::Var>> per_label;
  std::vector<int> test_labels;
  per_label.reserve(batch.size() - half);
  if (cfg.method == Method::conftr) {
    const ad::Var tau = smooth_calibrate<ad::Var>(cal_scores, *cfg.alpha, cfg.T_r, cfg.T_q);
    for (std::size_t i = half; i < batch.size(); ++i) {
      per_label.push_back({smooth_pred(smooth_score(rho[i], 1, m, sp), tau, cfg.T_c),
                           smooth_pred(smooth_score(rho[i], -1, m, sp), tau, cfg.T_c)});
    }
    const ad::Var lc = classification_loss<ad::Var>(rho, labels, cfg.scale);
    out.loss = combined_conftr_loss(lc, conftr_loss<ad::Var>(per_label), cfg.lambda);
    return out;
  }

  for (std::size_t i = half; i < batch.size(); ++i) {
    per_label.push_back({diff_p(smooth_score(rho[i], 1, m, sp), std::span<const ad::Var>(cal_scores), cfg.T_p),
                         diff_p(smooth_score(rho[i], -1, m, sp), std::span<const ad::Var>(cal_scores), cfg.T_p)});
    test_labels.push_back(labels[i]);
  }
  out.loss = cfg.method == Method::tlicp ? tlicp_loss<ad::Var>(per_label, test_labels)
                                         : tlicp_loss_alpha<ad::Var>(per_label, test_labels, *cfg.alpha);
  return out;
}

}  // namespace detail

// Trains the configured method on `data` starting from the given template.
inline TrainedModel train(const Dataset& data, const TemplateSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InputError("training set is empty");
  if (data.size() < cfg.batch_size) {
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds the training set size " +
                      std::to_string(data.size()));
  }

  TrainedModel model;
  model.config = cfg;
  model.task = data.metadata().task;
  model.dimension = data.dimension();
  model.length = data.length();
  std::tie(model.formula, model.params) = instantiate_template(spec, data.dimension(), data.length(), cfg.seed);
  if (cfg.init_from_data) initialize_from_data(model.formula, model.params, data, cfg.seed);
  check_horizon(model.formula, data[0].signal, 0);

  Adam adam(model.params.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
  ad::Tape tape;
  std::vector<std::size_t> order(data.size());
  const std::size_t batches = data.size() / cfg.batch_size;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed, 0xEB0C0000ULL + epoch);
    rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    double mcr_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> batch(order.data() + b * cfg.batch_size, cfg.batch_size);
      tape.clear();
      const std::vector<ad::Var> theta = tape.variables(model.params.values);
      const auto terms = detail::batch_loss(model.formula, theta, data, batch, cfg);
      std::vector<double> grad = ad::gradient(terms.loss, theta);
      clip_gradient(grad, cfg.clip_norm);
      adam.step(model.params.values, grad);
      model.params.clamp();
      loss_sum += terms.loss.value();
      mcr_sum += static_cast<double>(terms.errors) / static_cast<double>(cfg.batch_size);
    }
    model.history.push_back({loss_sum / static_cast<double>(batches), mcr_sum / static_cast<double>(batches)});
  }
  return model;
}

inline TrainedModel train(const Dataset& data, const TrainConfig& cfg) {
  if (data.empty()) throw InputError("training set is empty");
  return train(data, resolve_template(cfg, data.metadata().task, data.length()), cfg);
}

inline TrainedModel train_baseline(const Dataset& data, const TemplateSpec& spec, TrainConfig cfg) {
  if (cfg.method != Method::baseline) throw ConfigError("train_baseline needs method baseline");
  return train(data, spec, cfg);
}

inline TrainedModel train_conftr(const Dataset& data, const TemplateSpec& spec, const TrainConfig& cfg) {
  if (cfg.method != Method::conftr) throw ConfigError("train_conftr needs method conftr");
  return train(data, spec, cfg);
}

inline TrainedModel train_tlicp(const Dataset& data, const TemplateSpec& spec, const TrainConfig& cfg) {
  if (cfg.method != Method::tlicp && cfg.method != Method::tlicp_alpha) {
    throw ConfigError("train_tlicp needs method tlicp or tlicp_alpha");
  }
  return train(data, spec, cfg);
}

}  // namespace stlcp
