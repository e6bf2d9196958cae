#pragma once

// Synthetic pick-and-place trajectory tasks.
//
// Coordinates are planar workspace units (roughly pixels of a 200 x 150
// tabletop). Trajectories are piecewise-linear waypoint paths with Gaussian
// jitter on every state. Labels are certified by the checkers at the bottom
// of this file: a draw whose jittered trajectory disagrees with its intended
// label is redrawn from the same per-sample stream.
//
//   reach:    2-D, 20 steps. Positive iff the block is inside the basket for
//             every t in [17, 19] and never enters the constraint bar.
//   sequence: 4-D (block A xy, block B xy), 40 steps. Positive iff A enters
//             the basket before t = 20 and stays to the end, B is in the
//             basket for t in [36, 39] and enters it after A, and neither block
//             enters the constraint bar.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stlcp/error.hpp"
#include "stlcp/rng.hpp"
#include "stlcp/signal.hpp"

namespace stlcp::tasks {

struct Box {
  double x_lo, x_hi, y_lo, y_hi;

  bool contains(double x, double y) const { return x > x_lo && x < x_hi && y > y_lo && y < y_hi; }
};

inline constexpr Box kBasket{100.0, 150.0, 60.0, 90.0};
// The constraint bar spans the workspace width.
inline constexpr Box kConstraint{0.0, 200.0, 105.0, 150.0};

inline constexpr std::size_t kReachLength = 20;
inline constexpr std::size_t kReachHoldStart = 17;
inline constexpr std::size_t kSequenceLength = 40;
inline constexpr std::size_t kSequenceHalf = 20;
inline constexpr std::size_t kSequenceFinalStart = 36;

struct Point {
  double x, y;
};

namespace detail {

struct Waypoint {
  std::size_t t;
  Point p;
};

// Linear interpolation through waypoints; held constant after the last one.
inline std::vector<Point> interpolate(const std::vector<Waypoint>& path, std::size_t length) {
  std::vector<Point> out(length);
  std::size_t k = 0;
  for (std::size_t t = 0; t < length; ++t) {
    while (k + 1 < path.size() && path[k + 1].t <= t) ++k;
    if (k + 1 >= path.size() || t <= path[k].t) {
      out[t] = path[k].p;
      continue;
    }
    const auto& a = path[k];
    const auto& b = path[k + 1];
    const double s = static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t);
    out[t] = {a.p.x + s * (b.p.x - a.p.x), a.p.y + s * (b.p.y - a.p.y)};
  }
  return out;
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

inline Point inside(Rng& rng, const Box& b, double inset) {
  return {rng.uniform(b.x_lo + inset, b.x_hi - inset), rng.uniform(b.y_lo + inset, b.y_hi - inset)};
}

// End point clearly outside the basket but below the constraint bar.
inline Point near_miss(Rng& rng) {
  for (;;) {
    const Point p{rng.uniform(65.0, 185.0), rng.uniform(30.0, 99.0)};
    if (p.x < kBasket.x_lo - 6.0 || p.x > kBasket.x_hi + 6.0 || p.y < kBasket.y_lo - 6.0 || p.y > kBasket.y_hi + 6.0) {
      return p;
    }
  }
}

inline Point via_point(Rng& rng, bool through_constraint) {
  if (through_constraint) return {rng.uniform(50.0, 130.0), rng.uniform(112.0, 135.0)};
  return {rng.uniform(50.0, 90.0), rng.uniform(40.0, 95.0)};
}

inline std::vector<double> jitter(const std::vector<std::vector<Point>>& tracks, double noise, Rng& rng) {
  const std::size_t length = tracks.front().size();
  std::vector<double> data;
  data.reserve(length * tracks.size() * 2);
  for (std::size_t t = 0; t < length; ++t) {
    for (const auto& track : tracks) {
      data.push_back(track[t].x + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0));
      data.push_back(track[t].y + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0));
    }
  }
  return data;
}

// Draws with the given label by rejection against `holds`.
template <class Draw, class Check>
Signal draw_certified(Rng& rng, int label, Draw draw, Check holds) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Signal s = draw(rng, label);
    if (holds(s) == (label == 1)) return s;
  }
  throw InputError("generator could not certify a sample; noise is too large for the task geometry");
}

inline Dataset assemble(std::size_t n, double noise, double balance, std::uint64_t seed, const std::string& task,
                        std::uint64_t task_tag, auto&& make_sample) {
  if (n < 2) throw InputError("generators need n >= 2");
  if (noise < 0.0) throw InputError("noise must be non-negative");
  if (!(balance > 0.0 && balance < 1.0)) throw InputError("balance must lie in (0, 1)");
  auto n_pos = static_cast<std::size_t>(std::llround(balance * static_cast<double>(n)));
  n_pos = std::clamp<std::size_t>(n_pos, 1, n - 1);

  std::vector<LabeledSample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, task_tag * 0x100000000ULL + i);
    const int label = i < n_pos ? 1 : -1;
    samples.push_back({make_sample(rng, label), label});
  }
  Rng order(seed, task_tag * 0x100000000ULL + 0xFFFFFFFFULL);
  order.shuffle(std::span<LabeledSample>(samples));
  return Dataset(std::move(samples), DatasetMetadata{task, seed, noise, balance});
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Independent label checkers (plain loops, no temporal-logic machinery).

inline bool reach_task_holds(const Signal& s) {
  if (s.dimension() != 2 || s.length() != kReachLength) throw ShapeError("reach task expects 2-D signals of length 20");
  for (std::size_t t = 0; t < s.length(); ++t) {
    if (kConstraint.contains(s.at(t, 0), s.at(t, 1))) return false;
  }
  for (std::size_t t = kReachHoldStart; t < s.length(); ++t) {
    if (!kBasket.contains(s.at(t, 0), s.at(t, 1))) return false;
  }
  return true;
}

inline bool sequence_task_holds(const Signal& s) {
  if (s.dimension() != 4 || s.length() != kSequenceLength) {
    throw ShapeError("sequence task expects 4-D signals of length 40");
  }
  const std::size_t n = s.length();
  auto a_in = [&](std::size_t t) { return kBasket.contains(s.at(t, 0), s.at(t, 1)); };
  auto b_in = [&](std::size_t t) { return kBasket.contains(s.at(t, 2), s.at(t, 3)); };
  for (std::size_t t = 0; t < n; ++t) {
    if (kConstraint.contains(s.at(t, 0), s.at(t, 1)) || kConstraint.contains(s.at(t, 2), s.at(t, 3))) return false;
  }
  // Earliest time from which A stays in the basket until the end.
  std::optional<std::size_t> a_settled;
  for (std::size_t t = n; t-- > 0;) {
    if (!a_in(t)) break;
    a_settled = t;
  }
  if (!a_settled || *a_settled >= kSequenceHalf) return false;
  for (std::size_t t = kSequenceFinalStart; t < n; ++t) {
    if (!b_in(t)) return false;
  }
  for (std::size_t t = 0; t <= *a_settled; ++t) {
    if (b_in(t)) return false;
  }
  return true;
}

// ----------------------------------------------------------------------------
// Generators

inline Dataset generate_reach_task(std::size_t n, double noise, std::uint64_t seed, double balance = 0.5) {
  auto draw = [noise](Rng& rng, int label) {
    const Point start{rng.normal(30.0, 4.0), rng.normal(30.0, 4.0)};
    const std::size_t t_via = detail::pick(rng, 5, 9);
    const std::size_t t_end = detail::pick(rng, 12, 16);
    // Negatives either miss the basket or cross the constraint bar.
    const bool crosses = label == -1 && rng.uniform() < 0.5;
    const Point via = detail::via_point(rng, crosses);
    const Point end = (label == 1 || crosses) ? detail::inside(rng, kBasket, 6.0) : detail::near_miss(rng);
    const auto track = detail::interpolate({{0, start}, {t_via, via}, {t_end, end}}, kReachLength);
    return Signal(2, detail::jitter({track}, noise, rng));
  };
  return detail::assemble(n, noise, balance, seed, "reach", 1, [&](Rng& rng, int label) {
    return detail::draw_certified(rng, label, draw, reach_task_holds);
  });
}

inline Dataset generate_sequence_task(std::size_t n, double noise, std::uint64_t seed, double balance = 0.5) {
  enum class Failure { none, order, a_miss, b_miss, constraint };
  auto draw = [noise](Rng& rng, int label) {
    Failure failure = Failure::none;
    if (label == -1) failure = static_cast<Failure>(1 + rng.below(4));

    const Point a_start{rng.normal(30.0, 4.0), rng.normal(30.0, 4.0)};
    const Point b_start{rng.normal(175.0, 4.0), rng.normal(30.0, 4.0)};
    const bool a_crosses = failure == Failure::constraint && rng.uniform() < 0.5;
    const bool b_crosses = failure == Failure::constraint && !a_crosses;
    const Point a_end = failure == Failure::a_miss ? detail::near_miss(rng) : detail::inside(rng, kBasket, 6.0);
    const Point b_end = failure == Failure::b_miss ? detail::near_miss(rng) : detail::inside(rng, kBasket, 6.0);
    const Point a_via = detail::via_point(rng, a_crosses);
    const Point b_via = b_crosses ? detail::via_point(rng, true)
                                  : Point{rng.uniform(140.0, 170.0), rng.uniform(35.0, 80.0)};

    std::vector<detail::Waypoint> a_path, b_path;
    if (failure == Failure::order) {
      // B moves first and settles in the basket; A follows late.
      const std::size_t tb_end = detail::pick(rng, 8, 15);
      const std::size_t ta_start = detail::pick(rng, tb_end + 1, 20);
      const std::size_t ta_end = detail::pick(rng, 27, 34);
      b_path = {{0, b_start}, {tb_end / 2, b_via}, {tb_end, b_end}};
      a_path = {{0, a_start}, {ta_start, a_start}, {(ta_start + ta_end) / 2, a_via}, {ta_end, a_end}};
    } else {
      const std::size_t ta_end = detail::pick(rng, 8, 16);
      const std::size_t tb_start = detail::pick(rng, ta_end + 1, 24);
      const std::size_t tb_end = detail::pick(rng, 28, 34);
      a_path = {{0, a_start}, {ta_end / 2, a_via}, {ta_end, a_end}};
      b_path = {{0, b_start}, {tb_start, b_start}, {(tb_start + tb_end) / 2, b_via}, {tb_end, b_end}};
    }
    const auto a = detail::interpolate(a_path, kSequenceLength);
    const auto b = detail::interpolate(b_path, kSequenceLength);
    return Signal(4, detail::jitter({a, b}, noise, rng));
  };
  return detail::assemble(n, noise, balance, seed, "sequence", 2, [&](Rng& rng, int label) {
    return detail::draw_certified(rng, label, draw, sequence_task_holds);
  });
}

inline Dataset generate_task(const std::string& task, std::size_t n, double noise, std::uint64_t seed,
                             double balance = 0.5) {
  if (task == "reach") return generate_reach_task(n, noise, seed, balance);
  if (task == "sequence") return generate_sequence_task(n, noise, seed, balance);
  throw InputError("unknown task '" + task + "' (expected reach or sequence)");
}

}  // namespace stlcp::tasks
