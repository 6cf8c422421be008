#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "payshield/error.hpp"
#include "payshield/tabular.hpp"

namespace payshield {

struct SmoteParams {
  int k = 5;
  double target_ratio = 1.0;  // minority:majority after synthesis
  std::uint64_t seed = 0;
};

/// One synthetic sample: x_base + lambda (x_neighbor - x_base). Indices
/// refer to the minority rows in their original order.
struct SynthesisDraw {
  std::size_t base_index = 0;
  std::size_t neighbor_index = 0;
  double lambda = 0.0;
};

struct SmoteResult {
  Dataset data;
  std::vector<SynthesisDraw> draws;
  int minority_label = 1;
  std::vector<std::size_t> minority_rows;  // positions of minority rows in the input
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

/// k nearest rows to row i (excluding i) by Euclidean distance, ties to the
/// lower index. `rows` is a row-major matrix with `dim` columns.
inline std::vector<std::size_t> minority_neighbors(std::span<const double> rows, std::size_t dim,
                                                   std::size_t i, std::size_t k) {
  const std::size_t n = dim == 0 ? 0 : rows.size() / dim;
  if (i >= n) throw Error(ErrorKind::kInvalidArgument, "row index out of range");
  if (k >= n) {
    throw Error(ErrorKind::kKTooLarge,
                "k=" + std::to_string(k) + " needs more than " + std::to_string(n) + " minority rows");
  }
  auto row = [&](std::size_t r) { return rows.subspan(r * dim, dim); };
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) cand.emplace_back(squared_distance(row(i), row(j)), j);
  }
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
  std::vector<std::size_t> out(k);
  for (std::size_t m = 0; m < k; ++m) out[m] = cand[m].second;
  return out;
}

inline std::vector<double> synthesize_sample(std::span<const double> base, std::span<const double> neighbor,
                                             double lambda) {
  if (base.size() != neighbor.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "SMOTE endpoints differ in length");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "lambda must lie in [0,1]");
  }
  std::vector<double> out(base.size());
  for (std::size_t d = 0; d < base.size(); ++d) out[d] = base[d] + lambda * (neighbor[d] - base[d]);
  return out;
}

/// Appends synthetic minority rows until minority >= ceil(target_ratio * majority).
/// The generator is consumed per sample in the order: base draw, neighbor
/// draw, lambda draw.
inline SmoteResult smote_balance(const Dataset& train, const SmoteParams& params) {
  if (params.k < 1) throw Error(ErrorKind::kInvalidArgument, "SMOTE k must be >= 1");
  if (!(params.target_ratio > 0.0 && params.target_ratio <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "SMOTE target_ratio must lie in (0,1]");
  }
  const std::size_t positives = train.count_label(1);
  const std::size_t negatives = train.rows() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorKind::kSingleClass, "SMOTE needs both classes in the training set");
  }
  SmoteResult result;
  result.minority_label = positives <= negatives ? 1 : 0;
  const std::size_t majority = std::max(positives, negatives);
  const std::size_t dim = train.cols();

  std::vector<double> minority;
  for (std::size_t i = 0; i < train.rows(); ++i) {
    if (train.label(i) == result.minority_label) {
      result.minority_rows.push_back(i);
      auto r = train.row(i);
      minority.insert(minority.end(), r.begin(), r.end());
    }
  }
  const std::size_t m = result.minority_rows.size();
  const auto k = static_cast<std::size_t>(params.k);
  if (k >= m) {
    throw Error(ErrorKind::kKTooLarge,
                "k=" + std::to_string(k) + " but only " + std::to_string(m) + " minority rows");
  }

  const auto target = static_cast<std::size_t>(std::ceil(params.target_ratio * static_cast<double>(majority)));
  const std::size_t n_new = target > m ? target - m : 0;
  if (n_new == 0) {
    result.data = train;
    return result;
  }

  std::vector<std::vector<std::size_t>> neighbors(m);
  for (std::size_t i = 0; i < m; ++i) neighbors[i] = minority_neighbors(minority, dim, i, k);

  std::vector<double> values = train.values();
  values.reserve(values.size() + n_new * dim);
  std::vector<int> labels = train.labels();
  labels.reserve(labels.size() + n_new);

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick_base(0, m - 1);
  std::uniform_int_distribution<std::size_t> pick_neighbor(0, k - 1);
  std::uniform_real_distribution<double> pick_lambda(0.0, 1.0);
  std::span<const double> mat(minority);
  result.draws.reserve(n_new);
  for (std::size_t s = 0; s < n_new; ++s) {
    SynthesisDraw draw;
    draw.base_index = pick_base(rng);
    draw.neighbor_index = neighbors[draw.base_index][pick_neighbor(rng)];
    draw.lambda = pick_lambda(rng);
    auto sample = synthesize_sample(mat.subspan(draw.base_index * dim, dim),
                                    mat.subspan(draw.neighbor_index * dim, dim), draw.lambda);
    values.insert(values.end(), sample.begin(), sample.end());
    labels.push_back(result.minority_label);
    result.draws.push_back(draw);
  }
  result.data = Dataset(train.feature_names(), std::move(values), std::move(labels));
  return result;
}

/// One line per synthetic sample: base_index,neighbor_index,lambda.
inline void write_synthesis_log(std::ostream& out, std::span<const SynthesisDraw> draws) {
  for (const auto& d : draws) {
    out << d.base_index << ',' << d.neighbor_index << ',' << format_real(d.lambda) << '\n';
  }
}

}  // namespace payshield
