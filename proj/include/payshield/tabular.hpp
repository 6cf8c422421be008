#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "payshield/error.hpp"

namespace payshield {

/// Row-major numeric feature table with a binary label per row.
/// Label 1 is the fraud class, label 0 the legitimate class.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<std::string> feature_names, std::vector<double> values,
          std::vector<int> labels)
      : names_(std::move(feature_names)),
        values_(std::move(values)),
        labels_(std::move(labels)) {
    const std::size_t d = names_.size();
    if (d == 0 && !values_.empty()) {
      throw Error(ErrorKind::kDimensionMismatch, "values given without features");
    }
    if (values_.size() != d * labels_.size()) {
      throw Error(ErrorKind::kDimensionMismatch,
                  "expected " + std::to_string(d * labels_.size()) +
                      " values for " + std::to_string(labels_.size()) +
                      " rows, got " + std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw Error(ErrorKind::kParseError,
                    "non-finite value at row " + std::to_string(i / d));
      }
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] != 0 && labels_[i] != 1) {
        throw Error(ErrorKind::kNonBinaryLabel,
                    "label " + std::to_string(labels_[i]) + " at row " +
                        std::to_string(i));
      }
    }
  }

  std::size_t rows() const noexcept { return labels_.size(); }
  std::size_t cols() const noexcept { return names_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  const std::vector<std::string>& feature_names() const noexcept { return names_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols(), cols()};
  }
  double at(std::size_t i, std::size_t j) const { return values_[i * cols() + j]; }
  int label(std::size_t i) const { return labels_[i]; }

  std::size_t count_label(int label) const {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
  }

  /// Returns the index of the named feature or throws UnknownFeature.
  std::size_t feature_index(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
      throw Error(ErrorKind::kUnknownFeature, "no feature named '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - names_.begin());
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i) out[i] = at(i, j);
    return out;
  }

  /// Rows at the given indices, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<double> values;
    values.reserve(indices.size() * cols());
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) {
      auto r = row(i);
      values.insert(values.end(), r.begin(), r.end());
      labels.push_back(labels_[i]);
    }
    return Dataset(names_, std::move(values), std::move(labels));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
  std::vector<int> labels_;
};

/// Header plus numeric cells, without any label semantics.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<double> values;
  std::size_t rows = 0;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

// A value in [a, b) for a < b; the plain midpoint can round up to b when
// the two are adjacent doubles.
inline double midpoint_below(double a, double b) {
  const double m = a + 0.5 * (b - a);
  return m < b ? m : a;
}

}  // namespace detail

/// Formats a real with 17 significant digits, enough to round-trip a double.
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Parses a comma-separated numeric table with one header line.
/// LF and CRLF line endings are accepted; blank trailing lines are ignored.
inline NumericTable read_numeric_table(std::istream& in, const std::string& source = "<stream>") {
  NumericTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::kEmptyDataset, source + ": missing header line");
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
    line.erase(0, 3);
  }
  for (auto cell : detail::split_commas(line)) {
    auto name = detail::trim(cell);
    if (name.size() >= 2 && name.front() == '"' && name.back() == '"') {
      name = name.substr(1, name.size() - 2);
    }
    table.header.emplace_back(name);
  }
  const std::size_t width = table.header.size();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_commas(line);
    if (cells.size() != width) {
      throw Error(ErrorKind::kParseError,
                  source + ": data row " + std::to_string(table.rows) + " (line " +
                      std::to_string(line_no) + ") has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0.0;
      if (!detail::parse_double(cells[c], v)) {
        throw Error(ErrorKind::kParseError,
                    source + ": data row " + std::to_string(table.rows) + ", column '" +
                        table.header[c] + "': cannot parse '" + std::string(cells[c]) + "'");
      }
      table.values.push_back(v);
    }
    ++table.rows;
  }
  return table;
}

inline NumericTable read_numeric_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open '" + path + "'");
  return read_numeric_table(in, path);
}

/// Splits a numeric table into features and labels.
inline Dataset dataset_from_table(const NumericTable& table, std::string_view label_column) {
  auto it = std::find(table.header.begin(), table.header.end(), label_column);
  if (it == table.header.end()) {
    throw Error(ErrorKind::kMissingColumn, "label column '" + std::string(label_column) + "' not in header");
  }
  if (table.rows == 0) throw Error(ErrorKind::kEmptyDataset, "no data rows");
  const std::size_t width = table.header.size();
  const std::size_t label_col = static_cast<std::size_t>(it - table.header.begin());

  std::vector<std::string> names;
  for (std::size_t c = 0; c < width; ++c) {
    if (c != label_col) names.push_back(table.header[c]);
  }
  std::vector<double> values;
  values.reserve(table.rows * (width - 1));
  std::vector<int> labels(table.rows);
  for (std::size_t r = 0; r < table.rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double v = table.values[r * width + c];
      if (c == label_col) {
        if (v != 0.0 && v != 1.0) {
          throw Error(ErrorKind::kNonBinaryLabel,
                      "data row " + std::to_string(r) + " has label " + format_real(v));
        }
        labels[r] = static_cast<int>(v);
      } else {
        values.push_back(v);
      }
    }
  }
  return Dataset(std::move(names), std::move(values), std::move(labels));
}

inline Dataset load_csv(std::istream& in, std::string_view label_column = "Class") {
  return dataset_from_table(read_numeric_table(in), label_column);
}

inline Dataset load_csv(const std::string& path, std::string_view label_column = "Class") {
  return dataset_from_table(read_numeric_table(path), label_column);
}

/// Writes features followed by the label column; reals use 17 significant digits.
inline void write_csv(std::ostream& out, const Dataset& ds, std::string_view label_column = "Class") {
  for (const auto& name : ds.feature_names()) out << name << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (double v : ds.row(i)) out << format_real(v) << ',';
    out << ds.label(i) << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& ds, std::string_view label_column = "Class") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write '" + path + "'");
  write_csv(out, ds, label_column);
}

struct SplitPair {
  Dataset train;
  Dataset test;
};

/// Per class, floor(test_fraction * class_count) rows chosen by a seeded
/// shuffle go to test. Both partitions keep the input row order.
inline SplitPair stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "test_fraction must lie in (0,1)");
  }
  std::mt19937_64 rng(seed);
  std::vector<char> in_test(ds.rows(), 0);
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (ds.label(i) == cls) members.push_back(i);
    }
    if (members.size() < 2) {
      throw Error(ErrorKind::kDegenerateClass,
                  "class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                      " rows, need at least 2");
    }
    std::shuffle(members.begin(), members.end(), rng);
    auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < n_test; ++k) in_test[members[k]] = 1;
  }
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    (in_test[i] ? test_idx : train_idx).push_back(i);
  }
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

struct ScaleParams {
  std::vector<double> min;
  std::vector<double> max;

  /// (x - min) / (max - min); constant features map to 0.
  double apply(std::size_t j, double x) const {
    double range = max[j] - min[j];
    return range > 0.0 ? (x - min[j]) / range : 0.0;
  }
  double invert(std::size_t j, double scaled) const {
    return min[j] + scaled * (max[j] - min[j]);
  }

  Dataset transform(const Dataset& ds) const {
    if (ds.cols() != min.size()) {
      throw Error(ErrorKind::kDimensionMismatch, "scale params do not match dataset width");
    }
    std::vector<double> values(ds.values().size());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      for (std::size_t j = 0; j < ds.cols(); ++j) values[i * ds.cols() + j] = apply(j, ds.at(i, j));
    }
    return Dataset(ds.feature_names(), std::move(values), ds.labels());
  }
};

inline ScaleParams fit_minmax(const Dataset& train) {
  if (train.empty()) throw Error(ErrorKind::kEmptyDataset, "cannot fit scaling on an empty train set");
  ScaleParams params{std::vector<double>(train.row(0).begin(), train.row(0).end()),
                     std::vector<double>(train.row(0).begin(), train.row(0).end())};
  for (std::size_t i = 1; i < train.rows(); ++i) {
    for (std::size_t j = 0; j < train.cols(); ++j) {
      params.min[j] = std::min(params.min[j], train.at(i, j));
      params.max[j] = std::max(params.max[j], train.at(i, j));
    }
  }
  return params;
}

/// Fits on train only and applies the same map to test.
inline std::pair<SplitPair, ScaleParams> minmax_scale(const SplitPair& split) {
  ScaleParams params = fit_minmax(split.train);
  SplitPair scaled{params.transform(split.train), params.transform(split.test)};
  return {std::move(scaled), std::move(params)};
}

}  // namespace payshield
