#include <gtest/gtest.h>

#include <sstream>

#include "stlcp/generators.hpp"

using namespace stlcp;
using namespace stlcp::tasks;

namespace {

std::string csv_of(const Dataset& ds) {
  std::ostringstream os;
  write_csv(os, ds);
  return os.str();
}

}  // namespace

TEST(ReachTask, ShapeAndSize) {
  const Dataset ds = generate_reach_task(2000, 1.0, 7);
  EXPECT_EQ(ds.size(), 2000u);
  EXPECT_EQ(ds.dimension(), 2u);
  EXPECT_EQ(ds.length(), 20u);
}

TEST(ReachTask, BalanceWithinSixtyForty) {
  const Dataset ds = generate_reach_task(2000, 1.0, 7);
  const double pos = static_cast<double>(ds.count(1)) / static_cast<double>(ds.size());
  EXPECT_GE(pos, 0.4);
  EXPECT_LE(pos, 0.6);
}

TEST(ReachTask, NoiselessPositivesEndInsideGoal) {
  const Dataset ds = generate_reach_task(300, 0.0, 2);
  for (const auto& s : ds) {
    if (s.label != 1) continue;
    for (std::size_t t = kReachHoldStart; t < kReachLength; ++t) {
      const double x = s.signal.at(t, 0);
      const double y = s.signal.at(t, 1);
      EXPECT_GT(x, kBasket.x_lo);
      EXPECT_LT(x, kBasket.x_hi);
      EXPECT_GT(y, kBasket.y_lo);
      EXPECT_LT(y, kBasket.y_hi);
    }
  }
}

TEST(ReachTask, SeedDeterminism) {
  EXPECT_EQ(csv_of(generate_reach_task(200, 1.0, 7)), csv_of(generate_reach_task(200, 1.0, 7)));
  EXPECT_NE(csv_of(generate_reach_task(200, 1.0, 7)), csv_of(generate_reach_task(200, 1.0, 8)));
}

TEST(ReachTask, LabelsAgreeWithIndependentChecker) {
  const Dataset ds = generate_reach_task(500, 2.0, 4);
  for (const auto& s : ds) EXPECT_EQ(reach_task_holds(s.signal), s.label == 1);
}

TEST(SequenceTask, ShapeAndSize) {
  const Dataset ds = generate_sequence_task(2000, 1.0, 3);
  EXPECT_EQ(ds.size(), 2000u);
  EXPECT_EQ(ds.dimension(), 4u);
  EXPECT_EQ(ds.length(), 40u);
}

TEST(SequenceTask, LabelsAgreeWithIndependentChecker) {
  const Dataset ds = generate_sequence_task(500, 1.0, 5);
  for (const auto& s : ds) EXPECT_EQ(sequence_task_holds(s.signal), s.label == 1);
}

TEST(SequenceTask, OrderViolationIsNegative) {
  // B settles in the basket first, A only at the end.
  std::vector<std::vector<double>> states;
  for (std::size_t t = 0; t < kSequenceLength; ++t) {
    const double a_x = t < 30 ? 30.0 : 125.0;
    const double b_x = 125.0;
    states.push_back({a_x, 75.0, b_x, 75.0});
  }
  EXPECT_FALSE(sequence_task_holds(Signal::from_states(states)));
}

TEST(SequenceTask, SeedDeterminism) {
  EXPECT_EQ(csv_of(generate_sequence_task(100, 1.0, 3)), csv_of(generate_sequence_task(100, 1.0, 3)));
}

TEST(Generators, RejectInvalidArguments) {
  EXPECT_THROW(generate_reach_task(1, 1.0, 0), InputError);
  EXPECT_THROW(generate_reach_task(10, -1.0, 0), InputError);
  EXPECT_THROW(generate_task("juggle", 10, 1.0, 0), InputError);
}
