#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "payshield/error.hpp"
#include "payshield/tabular.hpp"

namespace payshield {

/// Linear-interpolation quantile of an ascending list: with h = q(n-1),
/// returns v[floor h] + (h - floor h)(v[ceil h] - v[floor h]).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorKind::kEmptyInput, "quantile of an empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "quantile level outside [0,1]");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::span<const double> values, double q) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, q);
}

struct Fences {
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double multiplier = 1.5;

  /// Strictly outside [lower, upper].
  bool outside(double v) const { return v < lower || v > upper; }
};

inline Fences tukey_fences(std::span<const double> values, double multiplier = 1.5) {
  if (values.empty()) throw Error(ErrorKind::kEmptyInput, "fences of an empty list");
  Fences f;
  f.multiplier = multiplier;
  f.q1 = quantile(values, 0.25);
  f.q3 = quantile(values, 0.75);
  f.iqr = f.q3 - f.q1;
  f.lower = f.q1 - multiplier * f.iqr;
  f.upper = f.q3 + multiplier * f.iqr;
  return f;
}

struct FeatureRemoval {
  std::string feature;
  Fences fences;
  std::size_t removed_count = 0;
};

struct RemovalReport {
  std::vector<FeatureRemoval> features;
  std::vector<std::size_t> removed_row_indices;  // indices into the input, ascending
  std::size_t rows_before = 0;
  std::size_t rows_after = 0;
};

struct PruneOptions {
  int target_class = 1;
  double multiplier = 1.5;
  // When false, every feature's fences come from the original target-class
  // subset instead of the subset left by the previous feature.
  bool recompute_fences = true;
};

/// Removes target-class rows strictly outside per-feature Tukey fences.
/// Features are processed in the given order; rows of the other class are
/// never touched.
inline std::pair<Dataset, RemovalReport> prune_class_outliers(const Dataset& ds,
                                                              std::span<const std::string> features,
                                                              const PruneOptions& options = {}) {
  std::vector<std::size_t> columns;
  for (const auto& name : features) columns.push_back(ds.feature_index(name));

  RemovalReport report;
  report.rows_before = ds.rows();
  std::vector<char> alive(ds.rows(), 1);

  auto target_values = [&](std::size_t col) {
    std::vector<double> v;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (alive[i] && ds.label(i) == options.target_class) v.push_back(ds.at(i, col));
    }
    return v;
  };

  std::vector<Fences> frozen;
  if (!options.recompute_fences) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      auto v = target_values(columns[k]);
      if (v.empty()) {
        throw Error(ErrorKind::kEmptyClassSubset,
                    "class " + std::to_string(options.target_class) + " has no rows");
      }
      frozen.push_back(tukey_fences(v, options.multiplier));
    }
  }

  for (std::size_t k = 0; k < columns.size(); ++k) {
    const std::size_t col = columns[k];
    Fences fences;
    if (options.recompute_fences) {
      auto v = target_values(col);
      if (v.empty()) {
        throw Error(ErrorKind::kEmptyClassSubset,
                    "class " + std::to_string(options.target_class) + " is empty before feature '" +
                        features[k] + "'");
      }
      fences = tukey_fences(v, options.multiplier);
    } else {
      fences = frozen[k];
    }
    FeatureRemoval entry{features[k], fences, 0};
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (alive[i] && ds.label(i) == options.target_class && fences.outside(ds.at(i, col))) {
        alive[i] = 0;
        ++entry.removed_count;
      }
    }
    report.features.push_back(std::move(entry));
  }

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    (alive[i] ? kept : report.removed_row_indices).push_back(i);
  }
  report.rows_after = kept.size();
  return {ds.subset(kept), std::move(report)};
}

inline void write_removal_report(std::ostream& out, const RemovalReport& report) {
  out << "feature,q1,q3,lower,upper,removed_count\n";
  for (const auto& f : report.features) {
    out << f.feature << ',' << format_real(f.fences.q1) << ',' << format_real(f.fences.q3) << ','
        << format_real(f.fences.lower) << ',' << format_real(f.fences.upper) << ','
        << f.removed_count << '\n';
  }
}

}  // namespace payshield
