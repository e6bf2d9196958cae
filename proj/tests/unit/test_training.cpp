#include <gtest/gtest.h>

#include <cmath>

#include "stlcp/evaluation.hpp"
#include "stlcp/generators.hpp"
#include "stlcp/training.hpp"
#include "support/oracles.hpp"

using namespace stlcp;
using ad::Var;

namespace {

// One-dimensional, length-3 signals: positives stay in [4, 6], negatives stay
// well outside it, so an always-box separates them with room to spare.
Dataset separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 2 == 0 ? 1 : -1;
    std::vector<double> v;
    for (int t = 0; t < 3; ++t) {
      if (y == 1) {
        v.push_back(rng.uniform(4, 6));
      } else {
        v.push_back(rng.below(2) ? rng.uniform(-6, 0) : rng.uniform(10, 16));
      }
    }
    out.push_back({Signal(1, v), y});
  }
  return Dataset(out);
}

TrainConfig quick(Method m, std::uint64_t seed = 1) {
  TrainConfig c;
  c.method = m;
  c.epochs = 50;
  c.seed = seed;
  if (method_uses_alpha(m)) c.alpha = 0.1;
  return c;
}

using Pair = LabelPair<double>;

}  // namespace

TEST(ClassificationLoss, Examples) {
  const std::vector<double> zero{0.0, 0.0};
  const std::vector<int> y{1, -1};
  EXPECT_NEAR(classification_loss<double>(zero, y), std::log(2.0), 1e-12);
  EXPECT_NEAR(classification_loss<double>(std::vector<double>{1e3}, std::vector<int>{1}), 0.0, 1e-12);
  EXPECT_NEAR(classification_loss<double>(std::vector<double>{10.0, 10.0}, std::vector<int>{1, -1}), 5.0, 1e-4);
  EXPECT_THROW(classification_loss<double>(zero, std::vector<int>{1}), InputError);
}

TEST(ConftrLoss, Examples) {
  EXPECT_DOUBLE_EQ(conftr_loss<double>(std::vector<Pair>{{1.0, 1.0}}), 1.0);
  EXPECT_DOUBLE_EQ(conftr_loss<double>(std::vector<Pair>{{0.5, 0.3}}), 0.0);
  EXPECT_DOUBLE_EQ(conftr_loss<double>(std::vector<Pair>{{0.9, 0.1}}), 0.0);
  EXPECT_DOUBLE_EQ(combined_conftr_loss(0.5, 1.0, 2.0), 2.5);
  EXPECT_DOUBLE_EQ(combined_conftr_loss(0.5, 1.0, 0.0), 0.5);
}

TEST(TlicpLoss, Examples) {
  EXPECT_NEAR(tlicp_loss<double>(std::vector<Pair>{{0.9, 0.1}}, std::vector<int>{1}), -0.8, 1e-12);
  EXPECT_DOUBLE_EQ(tlicp_loss<double>(std::vector<Pair>{{0.4, 0.4}}, std::vector<int>{-1}), 0.0);
  const double a = tlicp_loss<double>(std::vector<Pair>{{0.7, 0.2}}, std::vector<int>{1});
  const double b = tlicp_loss<double>(std::vector<Pair>{{0.2, 0.7}}, std::vector<int>{-1});
  EXPECT_DOUBLE_EQ(a, b);
}

TEST(TlicpAlphaLoss, Examples) {
  EXPECT_NEAR(tlicp_loss_alpha<double>(std::vector<Pair>{{0.02, 0.2}}, std::vector<int>{1}, 0.05), 0.18, 1e-12);
  EXPECT_DOUBLE_EQ(tlicp_loss_alpha<double>(std::vector<Pair>{{0.5, 0.01}}, std::vector<int>{1}, 0.05), 0.0);
  EXPECT_NEAR(tlicp_loss_alpha<double>(std::vector<Pair>{{0.2, 0.02}}, std::vector<int>{-1}, 0.05), 0.18, 1e-12);
}

TEST(TlicpLossProperty, RelabelingSymmetry) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Pair> p(1 + rng.below(10));
    std::vector<int> y(p.size());
    std::vector<Pair> q(p.size());
    std::vector<int> z(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = {rng.uniform(), rng.uniform()};
      y[i] = rng.below(2) ? 1 : -1;
      q[i] = {p[i].negative, p[i].positive};
      z[i] = -y[i];
    }
    EXPECT_NEAR(tlicp_loss<double>(p, y), tlicp_loss<double>(q, z), 1e-12);
    EXPECT_NEAR(tlicp_loss_alpha<double>(p, y, 0.1), tlicp_loss_alpha<double>(q, z, 0.1), 1e-12);
  }
}

TEST(TlicpLossProperty, HardExamplesShareGradients) {
  Rng rng(5);
  const double alpha = 0.3;
  for (int trial = 0; trial < 200; ++trial) {
    const int y = rng.below(2) ? 1 : -1;
    const double truth = rng.uniform(0.0, alpha - 0.01);
    const double other = rng.uniform(alpha + 0.01, 1.0);
    const std::vector<double> x = y == 1 ? std::vector<double>{truth, other} : std::vector<double>{other, truth};
    auto plain = [&](const std::vector<Var>& v) {
      return tlicp_loss<Var>(std::vector<LabelPair<Var>>{{v[0], v[1]}}, std::vector<int>{y});
    };
    auto with_alpha = [&](const std::vector<Var>& v) {
      return tlicp_loss_alpha<Var>(std::vector<LabelPair<Var>>{{v[0], v[1]}}, std::vector<int>{y}, alpha);
    };
    EXPECT_EQ(oracle::tape_gradient(plain, x), oracle::tape_gradient(with_alpha, x));
  }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> x(6);
    std::vector<int> y{1, -1, 1};
    for (auto& v : x) v = rng.uniform(0.1, 0.9);
    auto cls = [&](const auto& v) {
      using S = std::decay_t<decltype(v[0])>;
      return classification_loss<S>(std::span<const S>(v.data(), 3), y, 1.0);
    };
    auto pairs = [](const auto& v) {
      using S = std::decay_t<decltype(v[0])>;
      return std::vector<LabelPair<S>>{{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}};
    };
    auto tr = [&](const auto& v) {
      using S = std::decay_t<decltype(v[0])>;
      return conftr_loss<S>(pairs(v));
    };
    auto tl = [&](const auto& v) {
      using S = std::decay_t<decltype(v[0])>;
      return tlicp_loss<S>(pairs(v), y);
    };
    auto ta = [&](const auto& v) {
      using S = std::decay_t<decltype(v[0])>;
      return tlicp_loss_alpha<S>(pairs(v), y, 0.05);
    };
    EXPECT_LT(oracle::relative_error(oracle::tape_gradient(cls, x), oracle::finite_gradient(cls, x)), 1e-4);
    EXPECT_LT(oracle::relative_error(oracle::tape_gradient(tl, x), oracle::finite_gradient(tl, x)), 1e-4);
    // Keep the ReLU kinks away from the finite-difference stencil.
    std::vector<double> big = x;
    for (auto& v : big) v += 0.6;
    EXPECT_LT(oracle::relative_error(oracle::tape_gradient(tr, big), oracle::finite_gradient(tr, big)), 1e-4);
    std::vector<double> hard = {0.01, 0.5, 0.6, 0.02, 0.015, 0.7};
    EXPECT_LT(oracle::relative_error(oracle::tape_gradient(ta, hard), oracle::finite_gradient(ta, hard)), 1e-4);
  }
}

TEST(Config, DefaultsOnlyResolvesToDefaults) {
  const auto r = resolve_config(nlohmann::json::object());
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_EQ(config_to_json(r.config), config_to_json(TrainConfig{}));
}

TEST(Config, AlphaRequiredForConftr) {
  try {
    resolve_config({{"method", "conftr"}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha required"), std::string::npos);
  }
  EXPECT_THROW(resolve_config({{"method", "tlicp_alpha"}}), ConfigError);
}

TEST(Config, IgnoredFieldsWarn) {
  const auto r = resolve_config({{"method", "tlicp"}, {"alpha", 0.1}, {"lambda", 3.0}});
  EXPECT_EQ(r.warnings.size(), 2u);
  EXPECT_EQ(r.config.method, Method::tlicp);
}

TEST(Config, Rejections) {
  EXPECT_THROW(resolve_config({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(resolve_config({{"batch_size", 63}}), ConfigError);
  EXPECT_THROW(resolve_config({{"epochs", "many"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"method", "conftr"}, {"alpha", 1.5}}), ConfigError);
  EXPECT_THROW(resolve_config({{"T_p", 0.0}}), ConfigError);
  EXPECT_THROW(resolve_config({{"template", "spiral"}}), ConfigError);
  EXPECT_THROW(resolve_config(nlohmann::json::array()), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = quick(Method::conftr, 9);
  c.lambda = 2.5;
  c.T_c = 0.3;
  c.window_mode = WindowMode::learned;
  EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
}

TEST(Optimizer, ClipRescalesToNorm) {
  std::vector<double> g{30.0, 40.0};
  EXPECT_DOUBLE_EQ(clip_gradient(g, 10.0), 50.0);
  EXPECT_NEAR(std::hypot(g[0], g[1]), 10.0, 1e-12);
  std::vector<double> small{0.3, 0.4};
  clip_gradient(small, 10.0);
  EXPECT_EQ(small, (std::vector<double>{0.3, 0.4}));
}

TEST(Optimizer, AdamFirstStepHasLearningRateLength) {
  Adam adam(2, 0.05, 0.9, 0.999, 1e-8);
  std::vector<double> v{1.0, 1.0};
  adam.step(v, {3.0, -0.001});
  EXPECT_NEAR(v[0], 0.95, 1e-6);
  EXPECT_NEAR(v[1], 1.05, 1e-4);
}

TEST(Training, LambdaZeroMatchesBaseline) {
  const auto ds = separable(128, 2);
  TrainConfig c = quick(Method::conftr);
  c.lambda = 0.0;
  c.epochs = 10;
  const auto spec = task_template("custom", 3);
  const auto a = train_conftr(ds, spec, c);
  TrainConfig b = c;
  b.method = Method::baseline;
  const auto base = train_baseline(ds, spec, b);
  EXPECT_EQ(a.params.values, base.params.values);
  EXPECT_EQ(a.history, base.history);
}

TEST(Training, SeedDeterminismAndHistoryLength) {
  const auto ds = separable(128, 3);
  for (Method m : {Method::baseline, Method::conftr, Method::tlicp, Method::tlicp_alpha}) {
    TrainConfig c = quick(m, 4);
    c.epochs = 7;
    const auto a = train(ds, c);
    const auto b = train(ds, c);
    EXPECT_EQ(a.history.size(), 7u);
    EXPECT_EQ(a.history, b.history);
    EXPECT_EQ(a.params, b.params);
    c.seed = 5;
    EXPECT_NE(train(ds, c).history, a.history);
  }
}

TEST(Training, SeparableTaskReachesZeroMcr) {
  const auto ds = separable(256, 1);
  for (Method m : {Method::baseline, Method::conftr, Method::tlicp, Method::tlicp_alpha}) {
    const auto model = train(ds, quick(m));
    EXPECT_EQ(mcr(model, ds), 0.0) << to_string(m) << " " << model.describe();
  }
}

TEST(Training, BaselineLossTrendsDown) {
  const auto model = train(tasks::generate_reach_task(512, 1.0, 2), quick(Method::baseline, 2));
  double early = 0.0, late = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    early += model.history[i].loss;
    late += model.history[model.history.size() - 1 - i].loss;
  }
  EXPECT_LT(late, early);
}

TEST(Training, ConfigErrors) {
  const auto ds = separable(32, 1);
  TrainConfig c = quick(Method::baseline);
  c.batch_size = 64;
  EXPECT_THROW(train(ds, c), ConfigError);
  c.batch_size = 7;
  EXPECT_THROW(train(ds, c), ConfigError);
  EXPECT_THROW(train_tlicp(ds, task_template("custom", 3), quick(Method::baseline)), ConfigError);
}

TEST(Training, ModelJsonRoundTrip) {
  const auto ds = separable(64, 1);
  TrainConfig c = quick(Method::tlicp);
  c.epochs = 3;
  const auto m = train(ds, c);
  const auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back.formula, m.formula);
  EXPECT_EQ(back.params, m.params);
  EXPECT_EQ(back.history, m.history);
  EXPECT_EQ(back.robustness(ds), m.robustness(ds));
  EXPECT_THROW(model_from_json(nlohmann::json::object()), ParseError);
}
