#pragma once

// Labeled multivariate signals, file I/O, and reproducible splits.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stlcp/error.hpp"
#include "stlcp/rng.hpp"

namespace stlcp {

// A finite discrete signal x_0..x_T, stored row-major (time, then dimension).
class Signal {
 public:
  Signal() = default;

  Signal(std::size_t dimension, std::vector<double> data) : dim_(dimension), data_(std::move(data)) {
    if (dim_ == 0) throw ShapeError("signal dimension must be at least 1");
    if (data_.empty() || data_.size() % dim_ != 0) {
      throw ShapeError("signal data size " + std::to_string(data_.size()) + " is not a positive multiple of dimension " +
                       std::to_string(dim_));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw ShapeError("signal contains a non-finite entry");
    }
  }

  static Signal from_states(const std::vector<std::vector<double>>& states) {
    if (states.empty()) throw ShapeError("signal must have at least one state");
    const std::size_t d = states.front().size();
    std::vector<double> data;
    data.reserve(d * states.size());
    for (const auto& s : states) {
      if (s.size() != d) throw ShapeError("signal states have inconsistent dimension");
      data.insert(data.end(), s.begin(), s.end());
    }
    return Signal(d, std::move(data));
  }

  std::size_t dimension() const { return dim_; }
  std::size_t length() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  // Last time index T.
  std::size_t horizon() const { return length() - 1; }

  double at(std::size_t t, std::size_t j) const { return data_[t * dim_ + j]; }
  std::span<const double> state(std::size_t t) const { return {data_.data() + t * dim_, dim_}; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Signal&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

struct LabeledSample {
  Signal signal;
  int label = 1;

  bool operator==(const LabeledSample&) const = default;
};

inline void check_label(int label) {
  if (label != 1 && label != -1) throw LabelError("label must be +1 or -1, got " + std::to_string(label));
}

struct DatasetMetadata {
  std::string task = "custom";
  std::uint64_t seed = 0;
  double noise = 0.0;
  double balance = 0.5;

  bool operator==(const DatasetMetadata&) const = default;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<LabeledSample> samples, DatasetMetadata meta = {})
      : samples_(std::move(samples)), meta_(std::move(meta)) {
    for (const auto& s : samples_) {
      check_label(s.label);
      if (s.signal.dimension() != samples_.front().signal.dimension() ||
          s.signal.length() != samples_.front().signal.length()) {
        throw ShapeError("all signals in a dataset must share dimension and length");
      }
    }
  }

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<LabeledSample>& samples() const { return samples_; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  std::size_t dimension() const { return empty() ? 0 : samples_.front().signal.dimension(); }
  std::size_t length() const { return empty() ? 0 : samples_.front().signal.length(); }
  const DatasetMetadata& metadata() const { return meta_; }
  DatasetMetadata& metadata() { return meta_; }

  std::size_t count(int label) const {
    std::size_t c = 0;
    for (const auto& s : samples_) c += s.label == label ? 1 : 0;
    return c;
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<LabeledSample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(samples_.at(i));
    return Dataset(std::move(out), meta_);
  }

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<LabeledSample> samples_;
  DatasetMetadata meta_;
};

struct SplitSpec {
  double train = 0.6;
  double cal = 0.2;
  double test = 0.2;
  // Share of the calibration part used to estimate the margin (cal1).
  double cal_margin = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    for (double f : {train, cal, test, cal_margin}) {
      if (!(f > 0.0 && f < 1.0)) throw SplitError("split fractions must lie in (0, 1)");
    }
    if (std::abs(train + cal + test - 1.0) > 1e-9) throw SplitError("train/cal/test fractions must sum to 1");
  }
};

struct DatasetSplit {
  Dataset train;
  Dataset cal1;
  Dataset cal2;
  Dataset test;
};

// Index form of a split; kept separate so partition properties are testable.
struct SplitIndices {
  std::vector<std::size_t> train, cal1, cal2, test;
};

inline SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed, 0x5B11);
  rng.shuffle(std::span<std::size_t>(order));

  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
  const auto n_cal = static_cast<std::size_t>(std::llround(spec.cal * static_cast<double>(n)));
  if (n_train + n_cal >= n) throw SplitError("split leaves the test part empty");
  const auto n_cal1 = static_cast<std::size_t>(std::llround(spec.cal_margin * static_cast<double>(n_cal)));

  SplitIndices out;
  auto it = order.begin();
  out.train.assign(it, it + n_train);
  it += n_train;
  out.cal1.assign(it, it + n_cal1);
  it += n_cal1;
  out.cal2.assign(it, it + (n_cal - n_cal1));
  it += n_cal - n_cal1;
  out.test.assign(it, order.end());

  if (out.train.empty() || out.cal1.empty() || out.cal2.empty() || out.test.empty()) {
    throw SplitError("split of " + std::to_string(n) + " samples leaves a part empty (train " +
                     std::to_string(out.train.size()) + ", cal1 " + std::to_string(out.cal1.size()) + ", cal2 " +
                     std::to_string(out.cal2.size()) + ", test " + std::to_string(out.test.size()) + ")");
  }
  return out;
}

inline DatasetSplit split_dataset(const Dataset& ds, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(ds.size(), spec);
  return {ds.subset(idx.train), ds.subset(idx.cal1), ds.subset(idx.cal2), ds.subset(idx.test)};
}

// ---------------------------------------------------------------------------
// File formats
//
// CSV:  header `label,t0_x0,...,t0_x{d-1},t1_x0,...`, one row per sample.
// JSON: array of `{"label": ±1, "states": [[...], ...]}`.
// Metadata lives in a sidecar `<path>.meta.json`.

enum class DataFormat { csv, json };

inline DataFormat format_from_path(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos && path.substr(dot) == ".json") return DataFormat::json;
  return DataFormat::csv;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_real(const std::string& text, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() && text.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + text + "' as a number");
  }
}

// Shortest text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ParseError("line 1: empty file (missing header)");
  }
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto columns = detail::split_csv_line(header);
  if (columns.size() < 2 || columns.front() != "label") throw ParseError("line 1: header must start with 'label'");

  // Dimension is the number of columns sharing the t0_ prefix.
  std::size_t d = 0;
  for (std::size_t c = 1; c < columns.size(); ++c) {
    if (columns[c].rfind("t0_", 0) == 0) ++d;
  }
  if (d == 0 || (columns.size() - 1) % d != 0) throw ShapeError("line 1: header does not describe a t*_x* grid");
  for (std::size_t c = 1; c < columns.size(); ++c) {
    const std::string expected = "t" + std::to_string((c - 1) / d) + "_x" + std::to_string((c - 1) % d);
    if (columns[c] != expected) throw ParseError("line 1: expected column '" + expected + "', got '" + columns[c] + "'");
  }

  std::vector<LabeledSample> samples;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != columns.size()) {
      throw ShapeError("line " + std::to_string(line_no) + ": expected " + std::to_string(columns.size()) +
                       " columns, got " + std::to_string(cells.size()));
    }
    const double label_value = detail::parse_real(cells[0], line_no);
    if (label_value != 1.0 && label_value != -1.0) {
      throw LabelError("line " + std::to_string(line_no) + ": label must be 1 or -1, got '" + cells[0] + "'");
    }
    std::vector<double> data;
    data.reserve(cells.size() - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) data.push_back(detail::parse_real(cells[c], line_no));
    samples.push_back({Signal(d, std::move(data)), static_cast<int>(label_value)});
  }
  if (samples.empty()) throw ParseError("line " + std::to_string(line_no) + ": no data rows");
  return Dataset(std::move(samples));
}

inline Dataset parse_json(const nlohmann::json& doc) {
  if (!doc.is_array() || doc.empty()) throw ParseError("dataset JSON must be a non-empty array");
  std::vector<LabeledSample> samples;
  std::size_t d = 0, length = 0;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    const std::string where = "sample " + std::to_string(i);
    if (!item.is_object() || !item.contains("label") || !item.contains("states")) {
      throw ParseError(where + ": expected object with 'label' and 'states'");
    }
    if (!item["label"].is_number_integer()) throw LabelError(where + ": label must be the integer 1 or -1");
    const int label = item["label"].get<int>();
    if (label != 1 && label != -1) throw LabelError(where + ": label must be 1 or -1, got " + std::to_string(label));
    std::vector<std::vector<double>> states;
    try {
      states = item["states"].get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(where + ": states must be an array of numeric arrays");
    }
    Signal s = Signal::from_states(states);
    if (i == 0) {
      d = s.dimension();
      length = s.length();
    } else if (s.dimension() != d || s.length() != length) {
      throw ShapeError(where + ": inconsistent signal shape");
    }
    samples.push_back({std::move(s), label});
  }
  return Dataset(std::move(samples));
}

inline nlohmann::json metadata_to_json(const Dataset& ds) {
  const auto& m = ds.metadata();
  return {{"task", m.task},         {"seed", m.seed},       {"noise", m.noise},   {"balance", m.balance},
          {"size", ds.size()},      {"dimension", ds.dimension()}, {"length", ds.length()},
          {"positives", ds.count(1)}};
}

inline DatasetMetadata metadata_from_json(const nlohmann::json& j) {
  DatasetMetadata m;
  m.task = j.value("task", std::string("custom"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.noise = j.value("noise", 0.0);
  m.balance = j.value("balance", 0.5);
  return m;
}

inline std::string metadata_path(const std::string& data_path) { return data_path + ".meta.json"; }

inline Dataset load_dataset(const std::string& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  Dataset ds;
  if (format == DataFormat::csv) {
    ds = parse_csv(in);
  } else {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    ds = parse_json(doc);
  }
  std::ifstream meta(metadata_path(path));
  if (meta) {
    try {
      ds.metadata() = metadata_from_json(nlohmann::json::parse(meta));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("invalid metadata sidecar: " + std::string(e.what()));
    }
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path) { return load_dataset(path, format_from_path(path)); }

inline void write_csv(std::ostream& out, const Dataset& ds) {
  out << "label";
  for (std::size_t t = 0; t < ds.length(); ++t) {
    for (std::size_t j = 0; j < ds.dimension(); ++j) out << ",t" << t << "_x" << j;
  }
  out << '\n';
  for (const auto& s : ds) {
    out << s.label;
    for (double v : s.signal.data()) out << ',' << detail::format_real(v);
    out << '\n';
  }
}

inline nlohmann::json to_json(const Dataset& ds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : ds) {
    nlohmann::json states = nlohmann::json::array();
    for (std::size_t t = 0; t < s.signal.length(); ++t) {
      auto st = s.signal.state(t);
      states.push_back(std::vector<double>(st.begin(), st.end()));
    }
    arr.push_back({{"label", s.label}, {"states", std::move(states)}});
  }
  return arr;
}

inline void save_dataset(const Dataset& ds, const std::string& path, DataFormat format, bool with_metadata = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  if (format == DataFormat::csv) {
    write_csv(out, ds);
  } else {
    out << to_json(ds).dump() << '\n';
  }
  if (with_metadata) {
    std::ofstream meta(metadata_path(path), std::ios::binary);
    if (!meta) throw IoError("cannot write metadata for '" + path + "'");
    meta << metadata_to_json(ds).dump(2) << '\n';
  }
}

}  // namespace stlcp
