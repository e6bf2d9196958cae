#pragma once

// Text and JSON forms of formulas and parameter sets.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stlcp/error.hpp"
#include "stlcp/formula.hpp"

namespace stlcp {

inline std::string variable_name(std::size_t j, std::size_t d) {
  static const char* const kNames[] = {"x", "y", "z"};
  if (d <= 3) return kNames[j];
  return "x" + std::to_string(j);
}

namespace detail {

inline std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v == 0.0 ? 0.0 : v);
  return buf;
}

// (axis, sign) when the predicate constrains a single coordinate.
inline std::optional<std::pair<std::size_t, double>> single_axis(const FormulaNode& p) {
  std::optional<std::pair<std::size_t, double>> out;
  for (std::size_t j = 0; j < p.coefficients.size(); ++j) {
    const double c = p.coefficients[j].value;
    if (c == 0.0) continue;
    if (out) return std::nullopt;
    out = std::make_pair(j, c);
  }
  return out;
}

struct Printed {
  std::string text;
  bool unit;  // already parenthesised or atomic
};

inline std::string as_unit(const Printed& p) { return p.unit ? p.text : "(" + p.text + ")"; }

inline Printed print_predicate(const FormulaNode& p, int precision) {
  const std::size_t d = p.coefficients.size();
  if (auto axis = single_axis(p)) {
    const auto [j, c] = *axis;
    const std::string name = variable_name(j, d);
    if (c == 1.0) return {"(" + name + " ≥ " + fixed(p.offset.value, precision) + ")", true};
    if (c == -1.0) return {"(" + name + " ≤ " + fixed(-p.offset.value, precision) + ")", true};
  }
  std::string lhs;
  for (std::size_t j = 0; j < d; ++j) {
    const double c = p.coefficients[j].value;
    if (c == 0.0) continue;
    if (!lhs.empty()) lhs += " + ";
    lhs += fixed(c, precision) + "*" + variable_name(j, d);
  }
  if (lhs.empty()) lhs = "0";
  return {"(" + lhs + " ≥ " + fixed(p.offset.value, precision) + ")", true};
}

inline Printed print(const FormulaNode& f, int precision);

inline Printed print_junction(const FormulaNode& f, int precision) {
  const bool is_and = f.op == Op::conjunction;
  std::vector<std::string> parts;
  std::vector<bool> used(f.children.size(), false);
  for (std::size_t i = 0; i < f.children.size(); ++i) {
    if (used[i]) continue;
    const auto& c = f.children[i];
    // Pair x >= lo with x <= hi on the same axis as (lo<x<hi).
    if (is_and && c.op == Op::predicate) {
      if (auto axis = single_axis(c); axis && std::abs(axis->second) == 1.0) {
        for (std::size_t k = i + 1; k < f.children.size(); ++k) {
          if (used[k] || f.children[k].op != Op::predicate) continue;
          auto other = single_axis(f.children[k]);
          if (!other || other->first != axis->first || other->second != -axis->second) continue;
          const FormulaNode& lower = axis->second > 0 ? c : f.children[k];
          const FormulaNode& upper = axis->second > 0 ? f.children[k] : c;
          parts.push_back("(" + fixed(lower.offset.value, precision) + "<" +
                          variable_name(axis->first, c.coefficients.size()) + "<" +
                          fixed(-upper.offset.value, precision) + ")");
          used[i] = used[k] = true;
          break;
        }
        if (used[i]) continue;
      }
    }
    parts.push_back(print(c, precision).text);
    used[i] = true;
  }
  if (parts.size() == 1) return {parts.front(), parts.front().front() == '('};
  std::string out = "(";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += is_and ? " & " : " | ";
    out += parts[i];
  }
  return {out + ")", true};
}

inline Printed print(const FormulaNode& f, int precision) {
  auto window = [&](const char* name) {
    return std::string(name) + "[" + std::to_string(f.interval.lo) + "," + std::to_string(f.interval.hi) + "]";
  };
  switch (f.op) {
    case Op::predicate:
      return print_predicate(f, precision);
    case Op::negation:
      return {"¬" + as_unit(print(f.children[0], precision)), true};
    case Op::conjunction:
    case Op::disjunction:
      return print_junction(f, precision);
    case Op::always:
      return {window("G") + as_unit(print(f.children[0], precision)), false};
    case Op::eventually:
      return {window("F") + as_unit(print(f.children[0], precision)), false};
    case Op::until:
      return {"(" + print(f.children[0], precision).text + " " + window("U") + " " + print(f.children[1], precision).text +
                  ")",
              true};
  }
  return {"", true};
}

}  // namespace detail

// Human-readable STL; learned windows appear rounded to integers.
inline std::string format_formula(const FormulaNode& f, const ParameterSet& params, int precision = 2) {
  return detail::print(bind(f, params), precision).text;
}

inline std::string format_formula(const FormulaNode& f, int precision = 2) {
  return detail::print(bind(f, ParameterSet{}), precision).text;
}

// --- JSON -------------------------------------------------------------------

inline std::string to_string(Op op) {
  switch (op) {
    case Op::predicate: return "predicate";
    case Op::negation: return "not";
    case Op::conjunction: return "and";
    case Op::disjunction: return "or";
    case Op::eventually: return "eventually";
    case Op::always: return "always";
    case Op::until: return "until";
  }
  return "predicate";
}

inline Op op_from_string(const std::string& s) {
  for (auto op : {Op::predicate, Op::negation, Op::conjunction, Op::disjunction, Op::eventually, Op::always, Op::until}) {
    if (to_string(op) == s) return op;
  }
  throw ParseError("unknown formula operator '" + s + "'");
}

inline nlohmann::json formula_to_json(const FormulaNode& f) {
  nlohmann::json j;
  j["op"] = to_string(f.op);
  if (f.op == Op::predicate) {
    std::vector<double> a;
    std::vector<int> a_param;
    for (const auto& c : f.coefficients) {
      a.push_back(c.value);
      a_param.push_back(c.param);
    }
    j["a"] = a;
    j["a_param"] = a_param;
    j["b"] = f.offset.value;
    j["b_param"] = f.offset.param;
  }
  if (is_temporal(f.op)) {
    j["interval"] = {f.interval.lo, f.interval.hi};
    j["interval_param"] = {f.interval.lo_param, f.interval.hi_param};
  }
  if (!f.children.empty()) {
    j["children"] = nlohmann::json::array();
    for (const auto& c : f.children) j["children"].push_back(formula_to_json(c));
  }
  return j;
}

inline FormulaNode formula_from_json(const nlohmann::json& j) {
  try {
    FormulaNode f;
    f.op = op_from_string(j.at("op").get<std::string>());
    if (f.op == Op::predicate) {
      const auto a = j.at("a").get<std::vector<double>>();
      const auto a_param = j.value("a_param", std::vector<int>(a.size(), -1));
      if (a_param.size() != a.size()) throw ParseError("predicate a_param length mismatch");
      for (std::size_t i = 0; i < a.size(); ++i) f.coefficients.push_back({a[i], a_param[i]});
      f.offset = {j.at("b").get<double>(), j.value("b_param", -1)};
    }
    if (is_temporal(f.op)) {
      const auto iv = j.at("interval").get<std::vector<int>>();
      const auto ip = j.value("interval_param", std::vector<int>{-1, -1});
      if (iv.size() != 2 || ip.size() != 2) throw ParseError("interval must have two entries");
      f.interval = {iv[0], iv[1], ip[0], ip[1]};
    }
    if (j.contains("children")) {
      for (const auto& c : j.at("children")) f.children.push_back(formula_from_json(c));
    }
    const std::size_t arity = f.children.size();
    const bool ok = (f.op == Op::predicate && arity == 0) ||
                    ((f.op == Op::negation || f.op == Op::always || f.op == Op::eventually) && arity == 1) ||
                    (f.op == Op::until && arity == 2) ||
                    ((f.op == Op::conjunction || f.op == Op::disjunction) && arity >= 1);
    if (!ok) throw ParseError("operator '" + to_string(f.op) + "' has wrong number of children");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid formula JSON: ") + e.what());
  }
}

namespace detail {

inline nlohmann::json bound_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double bound_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ParseError("invalid bound '" + s + "'");
  }
  return j.get<double>();
}

inline std::string to_string(SlotKind k) {
  switch (k) {
    case SlotKind::coefficient: return "coefficient";
    case SlotKind::offset: return "offset";
    case SlotKind::window_lo: return "window_lo";
    case SlotKind::window_hi: return "window_hi";
  }
  return "offset";
}

inline SlotKind slot_kind_from_string(const std::string& s) {
  for (auto k : {SlotKind::coefficient, SlotKind::offset, SlotKind::window_lo, SlotKind::window_hi}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown parameter slot kind '" + s + "'");
}

}  // namespace detail

inline nlohmann::json parameters_to_json(const ParameterSet& p) {
  nlohmann::json j;
  j["values"] = p.values;
  j["lower"] = nlohmann::json::array();
  j["upper"] = nlohmann::json::array();
  for (double v : p.lower) j["lower"].push_back(detail::bound_to_json(v));
  for (double v : p.upper) j["upper"].push_back(detail::bound_to_json(v));
  j["slots"] = nlohmann::json::array();
  for (const auto& s : p.slots) {
    j["slots"].push_back({{"kind", detail::to_string(s.kind)}, {"node", s.node}, {"component", s.component}});
  }
  return j;
}

inline ParameterSet parameters_from_json(const nlohmann::json& j) {
  try {
    ParameterSet p;
    p.values = j.at("values").get<std::vector<double>>();
    for (const auto& v : j.at("lower")) p.lower.push_back(detail::bound_from_json(v));
    for (const auto& v : j.at("upper")) p.upper.push_back(detail::bound_from_json(v));
    for (const auto& s : j.at("slots")) {
      p.slots.push_back({detail::slot_kind_from_string(s.at("kind").get<std::string>()), s.at("node").get<std::size_t>(),
                         s.at("component").get<std::size_t>()});
    }
    if (p.lower.size() != p.size() || p.upper.size() != p.size() || p.slots.size() != p.size()) {
      throw ParseError("parameter arrays have inconsistent lengths");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid parameter JSON: ") + e.what());
  }
}

}  // namespace stlcp
