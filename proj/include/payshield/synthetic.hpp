#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "payshield/error.hpp"
#include "payshield/tabular.hpp"

namespace payshield {

/// Imbalanced two-class generator in the style of hypercube-cluster
/// classification benchmarks: each class is a mixture of Gaussian clusters
/// centred on distinct vertices of a hypercube with side 2 * class_sep in the
/// informative subspace, each cluster sheared by its own random linear map.
/// The remaining features are independent standard normal noise. Features
/// are named V1..VD with the informative ones first.
struct SyntheticSpec {
  std::size_t rows = 10000;
  double positive_rate = 0.01;
  std::size_t features = 20;
  std::size_t informative = 10;
  std::size_t clusters_per_class = 2;
  double class_sep = 1.5;
  std::uint64_t seed = 0;
};

inline Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.informative == 0 || spec.informative > spec.features) {
    throw Error(ErrorKind::kInvalidArgument, "informative features must lie in [1, features]");
  }
  if (spec.informative > 30) throw Error(ErrorKind::kInvalidArgument, "at most 30 informative features");
  if (!(spec.positive_rate > 0.0 && spec.positive_rate < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "positive_rate must lie in (0,1)");
  }
  const std::size_t clusters = 2 * spec.clusters_per_class;
  if (spec.clusters_per_class == 0 || clusters > (std::size_t{1} << spec.informative)) {
    throw Error(ErrorKind::kInvalidArgument, "not enough hypercube vertices for the requested clusters");
  }
  const auto positives = static_cast<std::size_t>(std::llround(spec.positive_rate * static_cast<double>(spec.rows)));
  if (positives < 2 || positives + 2 > spec.rows) {
    throw Error(ErrorKind::kInvalidArgument, "each class needs at least 2 rows");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> shear(-1.0, 1.0);
  const std::size_t q = spec.informative;

  // Distinct vertices; the first clusters_per_class belong to class 0.
  std::set<std::uint64_t> used;
  std::uniform_int_distribution<std::uint64_t> vertex_pick(0, (std::uint64_t{1} << q) - 1);
  std::vector<std::vector<double>> centroids;
  while (centroids.size() < clusters) {
    const std::uint64_t v = vertex_pick(rng);
    if (!used.insert(v).second) continue;
    std::vector<double> c(q);
    for (std::size_t k = 0; k < q; ++k) c[k] = ((v >> k) & 1U) ? spec.class_sep : -spec.class_sep;
    centroids.push_back(std::move(c));
  }
  std::vector<std::vector<double>> maps(clusters, std::vector<double>(q * q));
  for (auto& m : maps) {
    for (double& v : m) v = shear(rng);
  }

  std::vector<int> labels(spec.rows, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<double> values(spec.rows * spec.features);
  std::vector<std::size_t> seen_per_class(2, 0);
  std::vector<double> z(q);
  for (std::size_t i = 0; i < spec.rows; ++i) {
    const int y = labels[i];
    const std::size_t cluster =
        static_cast<std::size_t>(y) * spec.clusters_per_class + seen_per_class[static_cast<std::size_t>(y)]++ %
                                                                     spec.clusters_per_class;
    for (double& v : z) v = gauss(rng);
    double* row = values.data() + i * spec.features;
    const auto& m = maps[cluster];
    for (std::size_t a = 0; a < q; ++a) {
      double s = centroids[cluster][a];
      for (std::size_t b = 0; b < q; ++b) s += z[b] * m[b * q + a];
      row[a] = s;
    }
    for (std::size_t a = q; a < spec.features; ++a) row[a] = gauss(rng);
  }

  std::vector<std::string> names;
  for (std::size_t j = 0; j < spec.features; ++j) names.push_back("V" + std::to_string(j + 1));
  return Dataset(std::move(names), std::move(values), std::move(labels));
}

}  // namespace payshield
