#pragma once

// Command-line front end. One process runs one verb:
//
//   generate   synthetic dataset plus metadata sidecar
//   train      fit a template with baseline, conftr, tlicp or tlicp_alpha
//   calibrate  margin from cal1 and scores from cal2, saved as JSON
//   evaluate   exact CP at one alpha: coverage, set sizes, strip data
//   sweep      calibrate + evaluate over an alpha grid (one model, no retraining)
//   report     MCR table and strip files for a list of models
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config error.
// Every verb writes <verb>.config.json describing its fully resolved inputs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stlcp/conformal.hpp"
#include "stlcp/error.hpp"
#include "stlcp/evaluation.hpp"
#include "stlcp/generators.hpp"
#include "stlcp/signal.hpp"
#include "stlcp/training.hpp"

namespace stlcp::cli {

enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2, kConfig = 3 };

inline std::string default_out_dir() {
  const char* env = std::getenv("STLCP_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

namespace detail {

namespace fs = std::filesystem;

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

// Value of a --set override: JSON when it parses, otherwise a string.
inline nlohmann::json override_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return text;
  }
}

struct Options {
  // shared
  std::string out_dir;
  std::string data;
  std::string model;
  std::string config;
  std::vector<std::string> overrides;
  std::optional<double> alpha;
  std::string cp_method = "threshold";

  // generate
  std::string task = "reach";
  std::size_t n = 2000;
  double noise = 1.0;
  std::uint64_t seed = 0;
  double balance = 0.5;
  std::string format = "csv";

  // train
  std::optional<std::string> method;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> train_seed;

  // sweep / report
  std::string alphas = "0.001:0.1:0.001";
  std::string calibration;
  std::vector<std::string> models;
};

// Config file (if any), then --set pairs, then dedicated flags.
inline ResolvedConfig build_config(const Options& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) {
    j = read_json(o.config);
    if (!j.is_object()) throw ConfigError("config '" + o.config + "' must be a JSON object");
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' must look like key=value");
    j[kv.substr(0, eq)] = override_value(kv.substr(eq + 1));
  }
  if (o.method) j["method"] = *o.method;
  if (o.alpha) j["alpha"] = *o.alpha;
  if (o.lambda) j["lambda"] = *o.lambda;
  if (o.epochs) j["epochs"] = *o.epochs;
  if (o.batch_size) j["batch_size"] = *o.batch_size;
  if (o.learning_rate) j["learning_rate"] = *o.learning_rate;
  if (o.train_seed) j["seed"] = *o.train_seed;
  return resolve_config(j);
}

inline DatasetSplit load_split(const std::string& data_path, const TrainConfig& cfg) {
  const Dataset ds = load_dataset(data_path);
  return split_dataset(ds, cfg.split);
}

inline std::string alpha_text(double a) { return stlcp::detail::format_real(a); }

inline nlohmann::json evaluation_json(const CpEvaluation& e) {
  return {{"alpha", e.alpha},
          {"method", to_string(e.method)},
          {"margin", e.margin},
          {"tau", e.unbounded ? nlohmann::json("inf") : nlohmann::json(e.tau)},
          {"unbounded", e.unbounded},
          {"coverage", e.coverage},
          {"coverage_ci95", {e.coverage_ci.lo, e.coverage_ci.hi}},
          {"mean_set_size", e.mean_set_size},
          {"mcr", e.mcr},
          {"empty", e.empty},
          {"singleton", e.singleton},
          {"full", e.full},
          {"warnings", e.warnings}};
}

inline int cmd_generate(const Options& o, std::ostream& out) {
  const auto dir = prepare_dir(o.out_dir);
  const DataFormat fmt = o.format == "json" ? DataFormat::json : DataFormat::csv;
  if (o.format != "json" && o.format != "csv") throw InputError("unknown format '" + o.format + "'");
  const Dataset ds = tasks::generate_task(o.task, o.n, o.noise, o.seed, o.balance);
  const auto path = dir / ("dataset." + o.format);
  save_dataset(ds, path.string(), fmt);
  write_json(dir / "generate.config.json", {{"verb", "generate"},
                                            {"task", o.task},
                                            {"n", o.n},
                                            {"noise", o.noise},
                                            {"seed", o.seed},
                                            {"balance", o.balance},
                                            {"format", o.format},
                                            {"output", path.filename().string()}});
  out << "wrote " << path.string() << " (" << ds.size() << " samples, " << ds.count(1) << " positive)\n";
  return kOk;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.data.empty()) throw InputError("train needs --data");
  const ResolvedConfig rc = build_config(o);
  for (const auto& w : rc.warnings) err << "stlcp: warning: " << w << '\n';
  const auto dir = prepare_dir(o.out_dir);
  write_json(dir / "train.config.json", config_to_json(rc.config));
  const auto split = load_split(o.data, rc.config);
  const TrainedModel model = train(split.train, rc.config);
  write_json(dir / "model.json", to_json(model));
  out << "method " << to_string(rc.config.method) << ": " << model.describe() << '\n';
  out << "train MCR " << mcr(model, split.train) << ", final loss " << model.history.back().loss << '\n';
  return kOk;
}

inline TrainedModel load_model(const std::string& path) {
  if (path.empty()) throw InputError("missing --model");
  return model_from_json(read_json(path));
}

inline int cmd_calibrate(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.data.empty()) throw InputError("calibrate needs --data");
  const TrainedModel model = load_model(o.model);
  const double alpha = o.alpha.value_or(0.1);
  const auto split = load_split(o.data, model.config);
  const auto r1 = model.robustness(split.cal1);
  const auto l1 = labels_of(split.cal1);
  const auto m = margin(r1, l1, "cal1");
  const auto r2 = model.robustness(split.cal2);
  std::vector<double> scores;
  for (std::size_t i = 0; i < r2.size(); ++i) scores.push_back(hard_score(r2[i], split.cal2[i].label, m.m, model.config.M));
  const auto arts = CalibrationArtifacts::build(scores, m.m, alpha, model.config.M);
  const auto dir = prepare_dir(o.out_dir);
  write_json(dir / "calibrate.config.json",
             {{"verb", "calibrate"}, {"model", o.model}, {"data", o.data}, {"alpha", alpha}});
  write_json(dir / "calibration.json", to_json(arts));
  if (m.m == 0.0) err << "stlcp: warning: margin from cal1 is 0; scores collapse to {0, M}\n";
  out << "margin " << m.m << ", tau " << (arts.unbounded ? std::string("inf") : alpha_text(arts.tau)) << " at alpha "
      << alpha << '\n';
  return kOk;
}

inline int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.data.empty()) throw InputError("evaluate needs --data");
  const TrainedModel model = load_model(o.model);
  const CpMethod method = cp_method_from_string(o.cp_method);
  const auto split = load_split(o.data, model.config);
  ScoredSplit scored = score_split(model, split.cal1, split.cal2, split.test);
  double alpha = o.alpha.value_or(0.1);
  if (!o.calibration.empty()) {
    // Reuse saved calibration: its margin and scores replace the recomputed ones.
    const auto arts = calibration_from_json(read_json(o.calibration));
    if (!o.alpha) alpha = arts.alpha;
    scored.margin.m = arts.margin;
    scored.cal_scores = arts.scores;
    scored.test_scores.clear();
    for (double r : scored.test_robustness) {
      scored.test_scores.push_back({hard_score(r, 1, arts.margin, arts.M), hard_score(r, -1, arts.margin, arts.M)});
    }
  }
  const CpEvaluation e = evaluate_scored(scored, alpha, method);
  for (const auto& w : e.warnings) err << "stlcp: warning: " << w << '\n';
  const auto dir = prepare_dir(o.out_dir);
  write_json(dir / "evaluate.config.json", {{"verb", "evaluate"},
                                            {"model", o.model},
                                            {"data", o.data},
                                            {"calibration", o.calibration},
                                            {"alpha", alpha},
                                            {"cp_method", to_string(method)}});
  write_json(dir / "evaluation.json", evaluation_json(e));
  if (scored.margin.m > 0.0) export_strip(strip_data(scored), (dir / "strip.csv").string());
  out << "alpha " << alpha << ": coverage " << e.coverage << ", mean set size " << e.mean_set_size << ", empty "
      << e.empty << ", MCR " << e.mcr << '\n';
  return kOk;
}

inline int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.data.empty()) throw InputError("sweep needs --data");
  const TrainedModel model = load_model(o.model);
  const CpMethod method = cp_method_from_string(o.cp_method);
  const auto grid = parse_alpha_grid(o.alphas);
  const auto split = load_split(o.data, model.config);
  const auto scored = score_split(model, split.cal1, split.cal2, split.test);
  if (scored.margin.m == 0.0) err << "stlcp: warning: margin from cal1 is 0; scores collapse to {0, M}\n";
  const SweepResult r = alpha_sweep(scored, grid, method);
  const auto dir = prepare_dir(o.out_dir);
  const std::string m = to_string(model.config.method);
  const std::string csv = report_name("sweep", m, model.task, model.config.seed, grid, "csv");
  const std::string json = report_name("sweep", m, model.task, model.config.seed, grid, "json");
  write_json(dir / "sweep.config.json", {{"verb", "sweep"},
                                         {"model", o.model},
                                         {"data", o.data},
                                         {"alphas", grid},
                                         {"cp_method", to_string(method)},
                                         {"outputs", {csv, json}}});
  export_report(r, (dir / csv).string(), ReportFormat::csv);
  export_report(r, (dir / json).string(), ReportFormat::json);
  out << "wrote " << (dir / csv).string() << " (" << r.rows.size() << " rows); singleton alpha "
      << (r.singleton_alpha ? alpha_text(*r.singleton_alpha) : std::string("none")) << '\n';
  return kOk;
}

inline int cmd_report(const Options& o, std::ostream& out) {
  if (o.data.empty()) throw InputError("report needs --data");
  if (o.models.empty()) throw InputError("report needs at least one --models entry");
  const auto dir = prepare_dir(o.out_dir);
  const Dataset ds = load_dataset(o.data);
  std::vector<McrEntry> entries;
  std::vector<std::string> strips;
  for (const auto& path : o.models) {
    const TrainedModel model = load_model(path);
    const auto split = split_dataset(ds, model.config.split);
    const std::string m = to_string(model.config.method);
    entries.push_back({m, model.task, model.config.seed,
                       method_uses_alpha(model.config.method) ? model.config.alpha : std::nullopt,
                       mcr(model, split.train), mcr(model, split.test)});
    const auto scored = score_split(model, split.cal1, split.cal2, split.test);
    if (scored.margin.m > 0.0) {
      std::string name = "strip_" + m;
      if (method_uses_alpha(model.config.method)) name += "_a" + alpha_text(*model.config.alpha);
      name += "_" + model.task + "_s" + std::to_string(model.config.seed) + ".csv";
      export_strip(strip_data(scored), (dir / name).string());
      strips.push_back(name);
    }
  }
  export_mcr_table(entries, (dir / "mcr_table.csv").string());
  write_json(dir / "report.config.json",
             {{"verb", "report"}, {"data", o.data}, {"models", o.models}, {"strips", strips}});
  out << "wrote " << (dir / "mcr_table.csv").string() << " (" << entries.size() << " models)\n";
  return kOk;
}

}  // namespace detail

// Parses `args` (without the program name) and runs one verb.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  detail::Options o;
  o.out_dir = default_out_dir();

  CLI::App app{"STL inference with conformal prediction", "stlcp"};
  app.require_subcommand(1);

  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out", o.out_dir, "output directory (default: $STLCP_OUT_DIR or .)");
  };

  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  gen->add_option("--task", o.task, "reach or sequence")->check(CLI::IsMember({"reach", "sequence"}));
  gen->add_option("--n", o.n, "number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--noise", o.noise, "trajectory noise (standard deviation)")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", o.seed, "generator seed");
  gen->add_option("--balance", o.balance, "fraction of positive samples")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  add_out(gen);

  auto* tr = app.add_subcommand("train", "train an STL classifier");
  tr->add_option("--data", o.data, "dataset file")->required();
  tr->add_option("--config", o.config, "flat JSON config file");
  tr->add_option("--set", o.overrides, "config override key=value (repeatable)");
  tr->add_option("--method", o.method, "baseline, conftr, tlicp or tlicp_alpha");
  tr->add_option("--alpha", o.alpha, "miscoverage level for conftr / tlicp_alpha");
  tr->add_option("--lambda", o.lambda, "ConfTr regularizer weight");
  tr->add_option("--epochs", o.epochs, "training epochs");
  tr->add_option("--batch-size", o.batch_size, "batch size (even)");
  tr->add_option("--lr", o.learning_rate, "learning rate");
  tr->add_option("--seed", o.train_seed, "training and split seed");
  add_out(tr);

  auto* cal = app.add_subcommand("calibrate", "compute calibration artifacts");
  cal->add_option("--model", o.model, "model.json from train")->required();
  cal->add_option("--data", o.data, "dataset file used for training")->required();
  cal->add_option("--alpha", o.alpha, "miscoverage level (default 0.1)");
  add_out(cal);

  auto* ev = app.add_subcommand("evaluate", "exact conformal evaluation at one alpha");
  ev->add_option("--model", o.model, "model.json from train")->required();
  ev->add_option("--data", o.data, "dataset file used for training")->required();
  ev->add_option("--alpha", o.alpha, "miscoverage level (default 0.1 or the calibration's)");
  ev->add_option("--calibration", o.calibration, "calibration.json from calibrate");
  ev->add_option("--cp-method", o.cp_method, "threshold or p_value")->check(CLI::IsMember({"threshold", "p_value"}));
  add_out(ev);

  auto* sw = app.add_subcommand("sweep", "exact conformal evaluation over an alpha grid");
  sw->add_option("--model", o.model, "model.json from train")->required();
  sw->add_option("--data", o.data, "dataset file used for training")->required();
  sw->add_option("--alphas", o.alphas, "lo:hi:step or a comma list");
  sw->add_option("--cp-method", o.cp_method, "threshold or p_value")->check(CLI::IsMember({"threshold", "p_value"}));
  add_out(sw);

  auto* rep = app.add_subcommand("report", "MCR table and strip data for trained models");
  rep->add_option("--data", o.data, "dataset file used for training")->required();
  rep->add_option("--models", o.models, "model.json files")->required();
  add_out(rep);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "stlcp: usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*gen) return detail::cmd_generate(o, out);
    if (*tr) return detail::cmd_train(o, out, err);
    if (*cal) return detail::cmd_calibrate(o, out, err);
    if (*ev) return detail::cmd_evaluate(o, out, err);
    if (*sw) return detail::cmd_sweep(o, out, err);
    if (*rep) return detail::cmd_report(o, out);
  } catch (const ConfigError& e) {
    err << "stlcp: config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    err << "stlcp: error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace stlcp::cli
