#pragma once

// Exact-CP evaluation of a frozen model: MCR, coverage, set sizes, alpha
// sweeps, normalized robustness for strip plots, and report files.
//
// Data flow: cal1 fixes the margin m, cal2 supplies calibration scores, and
// every test sample gets hard scores for both candidate labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stlcp/conformal.hpp"
#include "stlcp/error.hpp"
#include "stlcp/formula.hpp"
#include "stlcp/nonconformity.hpp"
#include "stlcp/signal.hpp"
#include "stlcp/training.hpp"

namespace stlcp {

// --- misclassification ------------------------------------------------------

inline double mcr(std::span<const double> robustness, std::span<const int> labels) {
  if (robustness.size() != labels.size()) throw InputError("robustness and label lists differ in length");
  if (robustness.empty()) throw InputError("MCR of an empty dataset is undefined");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < robustness.size(); ++i) errors += classify(robustness[i]) != labels[i] ? 1 : 0;
  return static_cast<double>(errors) / static_cast<double>(robustness.size());
}

inline std::vector<int> labels_of(const Dataset& ds) {
  std::vector<int> out;
  out.reserve(ds.size());
  for (const auto& s : ds) out.push_back(s.label);
  return out;
}

inline double mcr(const TrainedModel& model, const Dataset& ds) {
  if (ds.empty()) throw InputError("MCR of an empty dataset is undefined");
  const auto rho = model.robustness(ds);
  const auto labels = labels_of(ds);
  return mcr(rho, labels);
}

// --- coverage interval ------------------------------------------------------

struct Interval95 {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval at 95%.
inline Interval95 wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  // The endpoints are exactly 0 and 1 at the extremes; rounding would leave them slightly inside.
  const double lo = successes == 0 ? 0.0 : std::max(0.0, centre - half);
  const double hi = successes == n ? 1.0 : std::min(1.0, centre + half);
  return {lo, hi};
}

// --- scoring ----------------------------------------------------------------

// Everything exact CP needs on one split, computed once per model.
struct ScoredSplit {
  MarginEstimate margin;
  double M = 5.0;
  std::vector<double> cal_scores;
  std::vector<double> test_robustness;
  std::vector<LabelScores> test_scores;
  std::vector<int> test_labels;
};

inline ScoredSplit score_split(std::span<const double> cal1_rho, std::span<const int> cal1_labels,
                               std::span<const double> cal2_rho, std::span<const int> cal2_labels,
                               std::span<const double> test_rho, std::span<const int> test_labels, double M) {
  if (cal2_rho.empty()) throw InputError("calibration set cal2 is empty");
  if (test_rho.empty()) throw InputError("test set is empty");
  if (cal2_rho.size() != cal2_labels.size() || test_rho.size() != test_labels.size()) {
    throw InputError("robustness and label lists differ in length");
  }
  ScoredSplit s;
  s.margin = margin(cal1_rho, cal1_labels, "cal1");
  s.M = M;
  for (std::size_t i = 0; i < cal2_rho.size(); ++i) {
    s.cal_scores.push_back(hard_score(cal2_rho[i], cal2_labels[i], s.margin.m, M));
  }
  s.test_robustness.assign(test_rho.begin(), test_rho.end());
  s.test_labels.assign(test_labels.begin(), test_labels.end());
  for (double r : test_rho) s.test_scores.push_back({hard_score(r, 1, s.margin.m, M), hard_score(r, -1, s.margin.m, M)});
  return s;
}

inline ScoredSplit score_split(const TrainedModel& model, const Dataset& cal1, const Dataset& cal2,
                               const Dataset& test) {
  const auto r1 = model.robustness(cal1);
  const auto r2 = model.robustness(cal2);
  const auto rt = model.robustness(test);
  const auto l1 = labels_of(cal1);
  const auto l2 = labels_of(cal2);
  const auto lt = labels_of(test);
  return score_split(r1, l1, r2, l2, rt, lt, model.config.M);
}

// --- single-alpha evaluation ------------------------------------------------

struct CpEvaluation {
  double alpha = 0.1;
  CpMethod method = CpMethod::threshold;
  double margin = 0.0;
  double tau = 0.0;
  bool unbounded = false;
  double coverage = 0.0;
  Interval95 coverage_ci;
  double mean_set_size = 0.0;
  double mcr = 0.0;
  std::size_t empty = 0;
  std::size_t singleton = 0;
  std::size_t full = 0;
  std::vector<PredictionSet> sets;
  std::vector<std::string> warnings;
};

inline CpEvaluation evaluate_scored(const ScoredSplit& s, double alpha, CpMethod method) {
  const auto arts = CalibrationArtifacts::build(s.cal_scores, s.margin.m, alpha, s.M);
  CpEvaluation e;
  e.alpha = alpha;
  e.method = method;
  e.margin = s.margin.m;
  e.tau = arts.tau;
  e.unbounded = arts.unbounded;
  if (s.margin.m == 0.0) {
    e.warnings.push_back("margin from cal1 is 0; scores collapse to {0, M}");
  }
  if (arts.unbounded) {
    e.warnings.push_back("quantile rank exceeds the calibration size; every set is {+1, -1}");
  }
  std::size_t covered = 0;
  std::size_t total = 0;
  e.sets.reserve(s.test_scores.size());
  for (std::size_t i = 0; i < s.test_scores.size(); ++i) {
    auto set = predict_set(s.test_scores[i], arts, method);
    covered += set.contains(s.test_labels[i]) ? 1 : 0;
    total += set.size();
    switch (set.size()) {
      case 0: ++e.empty; break;
      case 1: ++e.singleton; break;
      default: ++e.full; break;
    }
    e.sets.push_back(std::move(set));
  }
  const double n = static_cast<double>(s.test_scores.size());
  e.coverage = static_cast<double>(covered) / n;
  e.coverage_ci = wilson_interval(covered, s.test_scores.size());
  e.mean_set_size = static_cast<double>(total) / n;
  e.mcr = mcr(s.test_robustness, s.test_labels);
  return e;
}

inline CpEvaluation evaluate_cp(const TrainedModel& model, const Dataset& cal1, const Dataset& cal2,
                                const Dataset& test, double alpha, CpMethod method) {
  return evaluate_scored(score_split(model, cal1, cal2, test), alpha, method);
}

// --- sweeps -----------------------------------------------------------------

struct SweepRow {
  double alpha = 0.0;
  double mean_set_size = 0.0;
  double coverage = 0.0;
  double mcr = 0.0;
  std::size_t empty = 0;
  std::size_t singleton = 0;
  std::size_t full = 0;

  bool operator==(const SweepRow&) const = default;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  CpMethod method = CpMethod::threshold;
  double margin = 0.0;
  std::size_t n_cal = 0;
  std::size_t n_test = 0;
  // Every test sample's set shrinks (weakly) as alpha grows.
  bool nested = true;
  // Mean set size is non-increasing in alpha.
  bool monotone = true;
  // Smallest alpha such that the mean set size is <= 1 at it and at every
  // larger grid alpha: the point where the curve first rises above 1.
  std::optional<double> singleton_alpha;
  // Smallest grid alpha whose mean set size is exactly 1.
  std::optional<double> exact_singleton_alpha;

  bool operator==(const SweepResult&) const = default;
};

inline bool subset_of(const PredictionSet& a, const PredictionSet& b) {
  return (!a.positive || b.positive) && (!a.negative || b.negative);
}

inline SweepResult alpha_sweep(const ScoredSplit& s, std::span<const double> grid, CpMethod method) {
  if (grid.empty()) throw InputError("alpha grid is empty");
  for (double a : grid) check_alpha(a);
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());

  SweepResult r;
  r.method = method;
  r.margin = s.margin.m;
  r.n_cal = s.cal_scores.size();
  r.n_test = s.test_scores.size();
  std::vector<PredictionSet> previous;
  for (double a : sorted) {
    auto e = evaluate_scored(s, a, method);
    r.rows.push_back({a, e.mean_set_size, e.coverage, e.mcr, e.empty, e.singleton, e.full});
    if (!previous.empty()) {
      for (std::size_t i = 0; i < previous.size(); ++i) r.nested = r.nested && subset_of(e.sets[i], previous[i]);
      r.monotone = r.monotone && r.rows.back().mean_set_size <= r.rows[r.rows.size() - 2].mean_set_size;
    }
    previous = std::move(e.sets);
  }
  for (auto it = r.rows.rbegin(); it != r.rows.rend(); ++it) {
    if (it->mean_set_size > 1.0) break;
    r.singleton_alpha = it->alpha;
  }
  for (const auto& row : r.rows) {
    if (row.mean_set_size == 1.0) {
      r.exact_singleton_alpha = row.alpha;
      break;
    }
  }
  return r;
}

inline SweepResult alpha_sweep(const TrainedModel& model, const Dataset& cal1, const Dataset& cal2,
                               const Dataset& test, std::span<const double> grid,
                               CpMethod method = CpMethod::threshold) {
  return alpha_sweep(score_split(model, cal1, cal2, test), grid, method);
}

// --- normalization and strip data ------------------------------------------

inline std::vector<double> normalize_robustness(std::span<const double> values, double m) {
  if (!(m > 0.0)) throw NormalizationError("normalization needs a positive margin, got " + detail::format_real(m));
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(v / m);
  return out;
}

struct StripRow {
  double normalized = 0.0;
  int label = 1;
  bool correct = true;
};

struct StripData {
  double margin = 0.0;
  std::vector<StripRow> rows;
};

inline StripData strip_data(std::span<const double> test_rho, std::span<const int> labels, double m) {
  if (test_rho.size() != labels.size()) throw InputError("robustness and label lists differ in length");
  StripData d;
  d.margin = m;
  const auto normalized = normalize_robustness(test_rho, m);
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    d.rows.push_back({normalized[i], labels[i], classify(test_rho[i]) == labels[i]});
  }
  return d;
}

inline StripData strip_data(const ScoredSplit& s) { return strip_data(s.test_robustness, s.test_labels, s.margin.m); }

// --- alpha grids and file names ---------------------------------------------

// "lo:hi:step" or a comma-separated list.
inline std::vector<double> parse_alpha_grid(const std::string& text) {
  auto number = [&](const std::string& t) {
    try {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw InputError("invalid alpha grid entry '" + t + "'");
    }
  };
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw InputError("alpha range must look like lo:hi:step");
    const double lo = number(parts[0]);
    const double hi = number(parts[1]);
    const double step = number(parts[2]);
    if (!(step > 0.0) || hi < lo) throw InputError("alpha range needs lo <= hi and a positive step");
    const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = lo + static_cast<double>(i) * step;
      grid.push_back(std::round(v * 1e12) / 1e12);
    }
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) {
      if (!p.empty()) grid.push_back(number(p));
    }
  }
  if (grid.empty()) throw InputError("alpha grid is empty");
  for (double a : grid) {
    if (!(a > 0.0 && a < 1.0)) throw InputError("alpha grid values must lie in (0, 1)");
  }
  return grid;
}

inline std::vector<double> default_alpha_grid() { return parse_alpha_grid("0.001:0.1:0.001"); }

inline std::string grid_hash(std::span<const double> grid) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double a : grid) {
    for (char c : detail::format_real(a) + ";") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

inline std::string report_name(const std::string& kind, const std::string& method, const std::string& task,
                               std::uint64_t seed, std::span<const double> grid, const std::string& ext) {
  return kind + "_" + method + "_" + task + "_s" + std::to_string(seed) + "_g" + grid_hash(grid) + "." + ext;
}

// --- export -----------------------------------------------------------------

enum class ReportFormat { csv, json };

namespace detail {

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "alpha,mean_set_size,coverage,mcr,empty,singleton,full\n";
  for (const auto& row : r.rows) {
    out << detail::format_real(row.alpha) << ',' << detail::format_real(row.mean_set_size) << ','
        << detail::format_real(row.coverage) << ',' << detail::format_real(row.mcr) << ',' << row.empty << ','
        << row.singleton << ',' << row.full << '\n';
  }
}

inline nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"alpha", row.alpha},
                    {"mean_set_size", row.mean_set_size},
                    {"coverage", row.coverage},
                    {"mcr", row.mcr},
                    {"empty", row.empty},
                    {"singleton", row.singleton},
                    {"full", row.full}});
  }
  return {{"method", to_string(r.method)},
          {"margin", r.margin},
          {"n_cal", r.n_cal},
          {"n_test", r.n_test},
          {"nested", r.nested},
          {"monotone", r.monotone},
          {"singleton_alpha", detail::optional_json(r.singleton_alpha)},
          {"exact_singleton_alpha", detail::optional_json(r.exact_singleton_alpha)},
          {"rows", rows}};
}

inline SweepResult sweep_from_json(const nlohmann::json& j) {
  try {
    SweepResult r;
    r.method = cp_method_from_string(j.at("method").get<std::string>());
    r.margin = j.at("margin").get<double>();
    r.n_cal = j.at("n_cal").get<std::size_t>();
    r.n_test = j.at("n_test").get<std::size_t>();
    r.nested = j.at("nested").get<bool>();
    r.monotone = j.at("monotone").get<bool>();
    if (!j.at("singleton_alpha").is_null()) r.singleton_alpha = j.at("singleton_alpha").get<double>();
    if (!j.at("exact_singleton_alpha").is_null()) r.exact_singleton_alpha = j.at("exact_singleton_alpha").get<double>();
    for (const auto& row : j.at("rows")) {
      r.rows.push_back({row.at("alpha").get<double>(), row.at("mean_set_size").get<double>(),
                        row.at("coverage").get<double>(), row.at("mcr").get<double>(),
                        row.at("empty").get<std::size_t>(), row.at("singleton").get<std::size_t>(),
                        row.at("full").get<std::size_t>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid sweep JSON: ") + e.what());
  }
}

inline void export_report(const SweepResult& r, const std::string& path, ReportFormat format) {
  auto out = detail::open_for_write(path);
  if (format == ReportFormat::csv) {
    write_sweep_csv(out, r);
  } else {
    out << to_json(r).dump(2) << '\n';
  }
}

inline SweepResult load_sweep(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  try {
    return sweep_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid sweep JSON: ") + e.what());
  }
}

// Columns: normalized_robustness,label,correct
inline void export_strip(const StripData& d, const std::string& path) {
  auto out = detail::open_for_write(path);
  out << "normalized_robustness,label,correct\n";
  for (const auto& row : d.rows) {
    out << detail::format_real(row.normalized) << ',' << row.label << ',' << (row.correct ? 1 : 0) << '\n';
  }
}

struct McrEntry {
  std::string method;
  std::string task;
  std::uint64_t seed = 0;
  std::optional<double> alpha;  // training alpha, for alpha-specific methods
  double train_mcr = 0.0;
  double test_mcr = 0.0;
};

// Columns: method,task,seed,alpha,train_mcr,test_mcr (alpha empty when unused)
inline void export_mcr_table(std::span<const McrEntry> entries, const std::string& path) {
  auto out = detail::open_for_write(path);
  out << "method,task,seed,alpha,train_mcr,test_mcr\n";
  for (const auto& e : entries) {
    out << e.method << ',' << e.task << ',' << e.seed << ',' << (e.alpha ? detail::format_real(*e.alpha) : "") << ','
        << detail::format_real(e.train_mcr) << ',' << detail::format_real(e.test_mcr) << '\n';
  }
}

}  // namespace stlcp
