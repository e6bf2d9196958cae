#pragma once

// Parametric formula templates built from boxes (axis-aligned
// lo < x_j < hi constraints over a subset of dimensions).
//
//   always_box            G_I(box)
//   eventually_box        F_I(box)
//   conjunction_of_boxes  G_I1(box_1) & ... & G_In(box_n)
//   disjunction_of_boxes  G_I1(box_1) | ... | G_In(box_n)
//
// Each box side is an axis predicate with a learnable offset: x_j >= lo is
// a = e_j, b = lo; x_j <= hi is a = -e_j, b = -hi.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stlcp/error.hpp"
#include "stlcp/formula.hpp"
#include "stlcp/rng.hpp"
#include "stlcp/signal.hpp"

namespace stlcp {

enum class TemplateKind { always_box, eventually_box, conjunction_of_boxes, disjunction_of_boxes };
enum class WindowMode { fixed, learned };

struct BoxSpec {
  std::vector<std::size_t> dims;
  int lo = 0;
  int hi = 0;

  bool operator==(const BoxSpec&) const = default;
};

struct TemplateSpec {
  TemplateKind kind = TemplateKind::always_box;
  WindowMode window_mode = WindowMode::fixed;
  // Empty means "use the defaults for kind, dimension and length".
  std::vector<BoxSpec> boxes;
  // Number of default boxes for conjunction/disjunction when `boxes` is empty.
  std::size_t box_count = 2;
  bool learn_coefficients = false;

  bool operator==(const TemplateSpec&) const = default;
};

inline std::string to_string(TemplateKind k) {
  switch (k) {
    case TemplateKind::always_box: return "always_box";
    case TemplateKind::eventually_box: return "eventually_box";
    case TemplateKind::conjunction_of_boxes: return "conjunction_of_boxes";
    case TemplateKind::disjunction_of_boxes: return "disjunction_of_boxes";
  }
  return "always_box";
}

inline TemplateKind template_kind_from_string(const std::string& s) {
  for (auto k : {TemplateKind::always_box, TemplateKind::eventually_box, TemplateKind::conjunction_of_boxes,
                 TemplateKind::disjunction_of_boxes}) {
    if (to_string(k) == s) return k;
  }
  throw TemplateError("unknown template '" + s + "'");
}

inline std::string to_string(WindowMode m) { return m == WindowMode::fixed ? "fixed" : "learned"; }

inline WindowMode window_mode_from_string(const std::string& s) {
  if (s == "fixed") return WindowMode::fixed;
  if (s == "learned") return WindowMode::learned;
  throw TemplateError("unknown window mode '" + s + "'");
}

inline std::vector<BoxSpec> default_boxes(const TemplateSpec& spec, std::size_t d, std::size_t length) {
  if (!spec.boxes.empty()) return spec.boxes;
  std::vector<std::size_t> all(d);
  for (std::size_t j = 0; j < d; ++j) all[j] = j;
  const int last = static_cast<int>(length) - 1;
  const int tail = std::max(0, last - 2);
  switch (spec.kind) {
    case TemplateKind::always_box:
      return {{all, tail, last}};
    case TemplateKind::eventually_box:
      return {{all, 0, last}};
    case TemplateKind::conjunction_of_boxes: {
      std::vector<BoxSpec> out;
      for (std::size_t k = 0; k < spec.box_count; ++k) {
        std::vector<std::size_t> dims{(2 * k) % d};
        if (d > 1) dims.push_back((2 * k + 1) % d);
        std::sort(dims.begin(), dims.end());
        dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
        out.push_back({dims, 0, last});
      }
      return out;
    }
    case TemplateKind::disjunction_of_boxes:
      return std::vector<BoxSpec>(spec.box_count, BoxSpec{all, tail, last});
  }
  return {};
}

// Template suited to one of the synthetic tasks.
inline TemplateSpec task_template(const std::string& task, std::size_t length) {
  const int last = static_cast<int>(length) - 1;
  TemplateSpec spec;
  spec.kind = TemplateKind::conjunction_of_boxes;
  if (task == "reach") {
    // Stay in the valid region throughout; be in the basket at the end.
    spec.boxes = {{{0, 1}, 0, last}, {{0, 1}, std::max(0, last - 2), last}};
  } else if (task == "sequence") {
    const int half = static_cast<int>(length / 2) - 1;
    spec.boxes = {{{0, 1, 2, 3}, 0, last}, {{0, 1}, std::max(0, half), last}, {{2, 3}, std::max(0, last - 3), last}};
  } else {
    spec.kind = TemplateKind::always_box;
  }
  return spec;
}

namespace detail {

inline constexpr int kToLearn = -2;

// Assigns parameter indices to every Term marked kToLearn, in preorder.
inline void register_parameters(FormulaNode& f, ParameterSet& params, double window_max) {
  std::size_t counter = 0;
  for_each_node_mut(
      f,
      [&](FormulaNode& n, std::size_t node) {
        for (std::size_t j = 0; j < n.coefficients.size(); ++j) {
          if (n.coefficients[j].param == kToLearn) {
            n.coefficients[j].param = params.add(n.coefficients[j].value, {SlotKind::coefficient, node, j});
          }
        }
        if (n.offset.param == kToLearn) n.offset.param = params.add(n.offset.value, {SlotKind::offset, node, 0});
        if (n.interval.lo_param == kToLearn) {
          n.interval.lo_param = params.add(n.interval.lo, {SlotKind::window_lo, node, 0}, 0.0, window_max);
        }
        if (n.interval.hi_param == kToLearn) {
          n.interval.hi_param = params.add(n.interval.hi, {SlotKind::window_hi, node, 0}, 0.0, window_max);
        }
      },
      counter);
}

}  // namespace detail

// Builds the template formula and registers its learnable slots. Box bounds
// start at [-1, 1] plus seeded jitter; initialize_from_data() replaces them
// with data-driven values.
inline std::pair<FormulaNode, ParameterSet> instantiate_template(const TemplateSpec& spec, std::size_t d,
                                                                 std::size_t length, std::uint64_t seed) {
  if (d == 0 || length == 0) throw TemplateError("template needs positive dimension and length");
  const auto boxes = default_boxes(spec, d, length);
  if (boxes.empty()) throw TemplateError("template has no boxes");
  if ((spec.kind == TemplateKind::always_box || spec.kind == TemplateKind::eventually_box) && boxes.size() != 1) {
    throw TemplateError(to_string(spec.kind) + " takes exactly one box");
  }
  Rng rng(seed, 0x7E3A);
  const int last = static_cast<int>(length) - 1;

  std::vector<FormulaNode> temporal_boxes;
  for (const auto& box : boxes) {
    if (box.dims.empty()) throw TemplateError("box has no dimensions");
    for (std::size_t j : box.dims) {
      if (j >= d) {
        throw TemplateError("box uses dimension " + std::to_string(j) + " but signals have dimension " +
                            std::to_string(d));
      }
    }
    if (box.lo < 0 || box.hi < box.lo || box.hi > last) {
      throw TemplateError("box window [" + std::to_string(box.lo) + "," + std::to_string(box.hi) +
                          "] does not fit a signal of length " + std::to_string(length));
    }
    std::vector<FormulaNode> sides;
    for (std::size_t j : box.dims) {
      for (double sign : {1.0, -1.0}) {
        // Both sides of the box [-1, 1] have offset -1.
        const double bound = -1.0 + 0.05 * rng.normal();
        FormulaNode p = axis_predicate(d, j, sign, bound);
        p.offset.param = detail::kToLearn;
        if (spec.learn_coefficients) {
          for (auto& c : p.coefficients) c.param = detail::kToLearn;
        }
        sides.push_back(std::move(p));
      }
    }
    FormulaNode body = sides.size() == 1 ? std::move(sides.front()) : conjunction(std::move(sides));
    FormulaNode node;
    if (spec.kind == TemplateKind::eventually_box) {
      node = eventually(box.lo, box.hi, std::move(body));
    } else {
      node = always(box.lo, box.hi, std::move(body));
    }
    if (spec.window_mode == WindowMode::learned) {
      node.interval.lo_param = detail::kToLearn;
      node.interval.hi_param = detail::kToLearn;
    }
    temporal_boxes.push_back(std::move(node));
  }

  FormulaNode root;
  if (temporal_boxes.size() == 1) {
    root = std::move(temporal_boxes.front());
  } else if (spec.kind == TemplateKind::disjunction_of_boxes) {
    root = disjunction(std::move(temporal_boxes));
  } else {
    root = conjunction(std::move(temporal_boxes));
  }

  ParameterSet params;
  detail::register_parameters(root, params, static_cast<double>(last));
  if (spec.window_mode == WindowMode::learned) {
    // Endpoints are registered with their initial values; the support
    // becomes the whole signal.
    std::size_t counter = 0;
    for_each_node_mut(
        root,
        [&](FormulaNode& n, std::size_t) {
          if (n.interval.learned()) {
            n.interval.lo = 0;
            n.interval.hi = last;
          }
        },
        counter);
  }
  return {std::move(root), std::move(params)};
}

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, v.size() - 1);
  return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
}

}  // namespace detail

// Data-driven start: every learnable axis-predicate offset is set from the
// positive-class coordinates inside its window (low/high quantiles), plus
// seeded jitter of 2% of the quantile span. Bounds allow the box to move one
// data range beyond the observed coordinates.
inline void initialize_from_data(const FormulaNode& f, ParameterSet& params, const Dataset& data, std::uint64_t seed,
                                 double low_q = 0.1, double high_q = 0.9) {
  if (data.empty()) throw InputError("cannot initialise from an empty dataset");
  if (data.count(1) == 0) throw InputError("initialisation needs at least one positive sample");
  Rng rng(seed, 0x1A17);
  const std::size_t d = data.dimension();

  std::vector<double> all_lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> all_hi(d, -std::numeric_limits<double>::infinity());
  for (const auto& s : data) {
    for (std::size_t t = 0; t < s.signal.length(); ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        all_lo[j] = std::min(all_lo[j], s.signal.at(t, j));
        all_hi[j] = std::max(all_hi[j], s.signal.at(t, j));
      }
    }
  }

  auto visit = [&](auto&& self, const FormulaNode& n, int t_lo, int t_hi) -> void {
    if (n.op == Op::predicate) {
      if (!n.offset.learned()) return;
      std::size_t axis = d;
      double sign = 0.0;
      for (std::size_t j = 0; j < n.coefficients.size(); ++j) {
        if (n.coefficients[j].value != 0.0) {
          if (axis != d) return;  // not an axis predicate
          axis = j;
          sign = n.coefficients[j].value > 0.0 ? 1.0 : -1.0;
        }
      }
      if (axis == d) return;
      std::vector<double> coords;
      for (const auto& s : data) {
        if (s.label != 1) continue;
        for (int t = t_lo; t <= t_hi && t < static_cast<int>(s.signal.length()); ++t) {
          coords.push_back(s.signal.at(static_cast<std::size_t>(t), axis));
        }
      }
      std::sort(coords.begin(), coords.end());
      const double q_lo = detail::quantile_sorted(coords, low_q);
      const double q_hi = detail::quantile_sorted(coords, high_q);
      const double jitter = 0.02 * std::max(q_hi - q_lo, 1e-6) * rng.normal();
      const double span = std::max(all_hi[axis] - all_lo[axis], 1e-6);
      const auto idx = static_cast<std::size_t>(n.offset.param);
      const double coef = std::abs(n.coefficients[axis].value);
      if (sign > 0) {
        params.lower[idx] = coef * (all_lo[axis] - span);
        params.upper[idx] = coef * (all_hi[axis] + span);
        params.values[idx] = coef * (q_lo + jitter);
      } else {
        params.lower[idx] = -coef * (all_hi[axis] + span);
        params.upper[idx] = -coef * (all_lo[axis] - span);
        params.values[idx] = -coef * (q_hi + jitter);
      }
      return;
    }
    int lo = t_lo, hi = t_hi;
    if (is_temporal(n.op)) {
      const int w_lo = n.interval.lo_param >= 0
                           ? static_cast<int>(std::lround(params.values[static_cast<std::size_t>(n.interval.lo_param)]))
                           : n.interval.lo;
      const int w_hi = n.interval.hi_param >= 0
                           ? static_cast<int>(std::lround(params.values[static_cast<std::size_t>(n.interval.hi_param)]))
                           : n.interval.hi;
      lo = t_lo + w_lo;
      hi = t_hi + w_hi;
    }
    for (const auto& c : n.children) self(self, c, lo, hi);
  };
  visit(visit, f, 0, 0);
  params.clamp();
}

}  // namespace stlcp
