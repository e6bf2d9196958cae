#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "stlcp/autodiff.hpp"
#include "stlcp/generators.hpp"
#include "stlcp/smooth.hpp"
#include "stlcp/templates.hpp"
#include "support/oracles.hpp"

using namespace stlcp;
using ad::Var;

TEST(Autodiff, ArithmeticGradients) {
  const auto g = oracle::tape_gradient(
      [](const std::vector<Var>& v) { return v[0] * v[1] + ad::exp(v[0]) / v[1] - 3.0 * ad::log(v[1]); }, {0.5, 2.0});
  EXPECT_NEAR(g[0], 2.0 + std::exp(0.5) / 2.0, 1e-12);
  EXPECT_NEAR(g[1], 0.5 - std::exp(0.5) / 4.0 - 1.5, 1e-12);
}

TEST(Autodiff, ConstantsCarryNoTape) {
  const Var c(3.0);
  EXPECT_TRUE(c.is_constant());
  ad::Tape tape;
  const auto x = tape.variables(std::vector<double>{1.0});
  const Var y = x[0] * c;
  EXPECT_FALSE(y.is_constant());
  EXPECT_DOUBLE_EQ(ad::gradient(y, x)[0], 3.0);
}

TEST(Autodiff, ReusedNodeAccumulates) {
  const auto g = oracle::tape_gradient([](const std::vector<Var>& v) { return v[0] * v[0] * v[0]; }, {2.0});
  EXPECT_DOUBLE_EQ(g[0], 12.0);
}

TEST(Autodiff, PredicateOffsetDerivativeIsMinusOne) {
  Rng rng(5);
  ParameterSet p;
  FormulaNode f = predicate({1.0, -2.0}, 0.0);
  f.offset.param = p.add(0.3, {SlotKind::offset, 0, 0}, -10, 10);
  for (int trial = 0; trial < 20; ++trial) {
    const Signal x = Signal::from_states({{rng.uniform(-3, 3), rng.uniform(-3, 3)}});
    ad::Tape tape;
    const auto theta = tape.variables(p.values);
    const Var r = smooth_robustness<Var>(f, theta, x, 0, {});
    EXPECT_DOUBLE_EQ(ad::gradient(r, theta)[0], -1.0);
  }
}

TEST(Softmin, TwoZerosGiveMinusLogTwo) {
  const std::vector<double> v{0.0, 0.0};
  EXPECT_NEAR(ad::softmin(v, 1.0), -std::log(2.0), 1e-12);
  EXPECT_NEAR(ad::softmax(v, 1.0), std::log(2.0), 1e-12);
}

TEST(Softmin, BoundedByTemperatureLogN) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(2 + rng.below(6));
    for (auto& x : v) x = rng.uniform(-5, 5);
    const double T = rng.uniform(0.01, 2.0);
    const double lo = *std::min_element(v.begin(), v.end());
    const double s = ad::softmin(v, T);
    EXPECT_LE(s, lo + 1e-12);
    EXPECT_GE(s, lo - T * std::log(static_cast<double>(v.size())) - 1e-12);
  }
}

TEST(SoftminProperty, PermutationInvariantAndWeightsSumToOne) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(3 + rng.below(5));
    for (auto& x : v) x = rng.uniform(-4, 4);
    std::vector<double> w = v;
    rng.shuffle(std::span<double>(w));
    EXPECT_NEAR(ad::softmin(v, 0.7), ad::softmin(w, 0.7), 1e-12);
    const auto g = oracle::tape_gradient([](const std::vector<Var>& x) { return ad::softmin(x, 0.7); }, v);
    EXPECT_NEAR(std::accumulate(g.begin(), g.end(), 0.0), 1.0, 1e-12);
    for (double gi : g) EXPECT_GE(gi, 0.0);
  }
}

TEST(SmoothRobustness, PredicateOnlyIsExact) {
  const auto f = predicate({2.0, -1.0}, 0.5);
  const Signal x = Signal::from_states({{1.5, 4.0}});
  const std::vector<double> none;
  EXPECT_DOUBLE_EQ(smooth_robustness<double>(f, none, x, 0, {}), robustness(f, x));
}

TEST(SmoothRobustness, ConvergesToHardWithinDepthBound) {
  auto [f, p] = instantiate_template(task_template("reach", 20), 2, 20, 1);
  initialize_from_data(f, p, tasks::generate_reach_task(100, 1.0, 1), 1);
  const auto ds = tasks::generate_reach_task(50, 1.0, 2);
  const auto hard = bind(f, p);
  const double fan = 20.0;  // the widest min/max in the template
  for (double T : {1.0, 0.1, 0.01, 0.001}) {
    for (const auto& s : ds) {
      const double exact = robustness(hard, s.signal);
      const double soft = smooth_robustness(f, p, s.signal, 0, {T, 0.5});
      EXPECT_LE(std::abs(soft - exact), minmax_depth(f) * T * std::log(fan) + 1e-9);
    }
  }
}

TEST(SmoothRobustness, RejectsNonPositiveTemperature) {
  const auto f = always(0, 1, predicate({1.0}, 0.0));
  const std::vector<double> none;
  EXPECT_THROW(smooth_robustness<double>(f, none, Signal(1, {1, 2}), 0, {0.0, 0.5}), ParameterError);
  EXPECT_THROW(smooth_robustness<double>(f, none, Signal(1, {1}), 0, {1.0, 0.5}), HorizonError);
}

TEST(SmoothRobustness, GradientMatchesFiniteDifferences) {
  for (const std::string task : {"reach", "sequence"}) {
    const std::size_t len = task == "reach" ? 20 : 40;
    const std::size_t d = task == "reach" ? 2 : 4;
    const auto ds = tasks::generate_task(task, 40, 1.0, 4);
    auto [f, p] = instantiate_template(task_template(task, len), d, len, 4);
    initialize_from_data(f, p, ds, 4);
    for (std::size_t i = 0; i < ds.size(); i += 4) {
      const Signal& x = ds[i].signal;
      auto fd = oracle::finite_gradient(
          [&](const std::vector<double>& th) { return smooth_robustness<double>(f, th, x, 0, {1.0, 0.5}); }, p.values);
      auto tg = oracle::tape_gradient(
          [&](const std::vector<Var>& th) { return smooth_robustness<Var>(f, th, x, 0, {1.0, 0.5}); }, p.values);
      EXPECT_LT(oracle::relative_error(tg, fd), 1e-4) << task << " sample " << i;
    }
  }
}

TEST(SmoothRobustness, LearnedWindowGradient) {
  TemplateSpec spec;
  spec.window_mode = WindowMode::learned;
  auto [f, p] = instantiate_template(spec, 2, 20, 6);
  const auto ds = tasks::generate_reach_task(20, 1.0, 6);
  initialize_from_data(f, p, ds, 6);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.slots[i].kind == SlotKind::window_lo) p.values[i] = 15.3;
    if (p.slots[i].kind == SlotKind::window_hi) p.values[i] = 18.6;
  }
  for (const auto& s : ds) {
    auto fd = oracle::finite_gradient(
        [&](const std::vector<double>& th) { return smooth_robustness<double>(f, th, s.signal, 0, {1.0, 0.5}); },
        p.values);
    auto tg = oracle::tape_gradient(
        [&](const std::vector<Var>& th) { return smooth_robustness<Var>(f, th, s.signal, 0, {1.0, 0.5}); }, p.values);
    EXPECT_LT(oracle::relative_error(tg, fd), 1e-4);
  }
}
