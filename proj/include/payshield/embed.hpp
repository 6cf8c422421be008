#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "payshield/error.hpp"
#include "payshield/tabular.hpp"

namespace payshield {

/// Dense row-major n x n matrix.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> data;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size) : n(size), data(size * size, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * n, n}; }

  double sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
  }
};

/// Row-major point set with `dim` coordinates per point.
struct PointSet {
  std::size_t dim = 0;
  std::vector<double> coords;

  std::size_t size() const { return dim == 0 ? 0 : coords.size() / dim; }
  std::span<const double> point(std::size_t i) const { return {coords.data() + i * dim, dim}; }
};

struct TsneParams {
  double perplexity = 30.0;
  int output_dim = 2;  // fixed at 2
  int iterations = 1000;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch_iteration = 250;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double init_stddev = 1e-4;
  std::uint64_t seed = 0;
};

struct Affinities {
  SquareMatrix p;
  std::vector<double> sigma;
  std::vector<double> achieved_perplexity;
  std::vector<char> converged;
};

struct Embedding {
  PointSet y;
  std::vector<double> kl_history;
  std::size_t unconverged_rows = 0;
};

inline SquareMatrix pairwise_sq_distances(const PointSet& x) {
  const std::size_t n = x.size();
  SquareMatrix d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      auto a = x.point(i);
      auto b = x.point(j);
      for (std::size_t k = 0; k < x.dim; ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
      }
      d(i, j) = s;
      d(j, i) = s;
    }
  }
  return d;
}

struct SigmaCalibration {
  double sigma = 1.0;
  std::vector<double> row;  // p_{j|i}; entry i is 0
  double perplexity = 0.0;  // achieved 2^H
  bool converged = false;
};

namespace detail {

// Gaussian conditional row at bandwidth sigma. Distances are shifted by
// their minimum before exponentiating; the shift cancels in the ratio.
inline double conditional_row(std::span<const double> sq_dists, std::size_t i, double sigma,
                              std::vector<double>& row) {
  const std::size_t n = sq_dists.size();
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) dmin = std::min(dmin, sq_dists[j]);
  }
  const double scale = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  row.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    row[j] = std::exp(-(sq_dists[j] - dmin) * scale);
    total += row[j];
  }
  double entropy_bits = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    row[j] /= total;
    if (row[j] > 0.0) entropy_bits -= row[j] * std::log2(row[j]);
  }
  return std::exp2(entropy_bits);
}

}  // namespace detail

/// Finds sigma_i whose conditional row has perplexity 2^H (H in bits) within
/// 1e-5 of the target: the bracket is grown geometrically until it encloses
/// the target, then bisected (in log sigma) for at most 50 steps.
inline SigmaCalibration calibrate_sigma(std::span<const double> sq_dists_row, std::size_t i, double perplexity) {
  const std::size_t n = sq_dists_row.size();
  if (n < 3) throw Error(ErrorKind::kInvalidArgument, "sigma calibration needs at least 3 points");
  if (i >= n) throw Error(ErrorKind::kInvalidArgument, "row index out of range");
  if (!(perplexity > 1.0 && perplexity < static_cast<double>(n))) {
    throw Error(ErrorKind::kInvalidArgument, "perplexity must lie in (1, N)");
  }
  constexpr double kTolerance = 1e-5;
  constexpr int kMaxExpansions = 200;
  constexpr int kBisections = 50;

  SigmaCalibration out;
  auto eval = [&](double s) { return detail::conditional_row(sq_dists_row, i, s, out.row); };
  auto done = [&](double s, double perp) {
    out.sigma = s;
    out.perplexity = perp;
    out.converged = std::abs(perp - perplexity) < kTolerance;
    return out;
  };

  double sigma = 1.0;
  double perp = eval(sigma);
  if (std::abs(perp - perplexity) < kTolerance) return done(sigma, perp);

  double lo = sigma, hi = sigma;
  if (perp < perplexity) {
    for (int e = 0; e < kMaxExpansions; ++e) {
      lo = hi;
      hi *= 2.0;
      perp = eval(hi);
      if (std::abs(perp - perplexity) < kTolerance) return done(hi, perp);
      if (perp > perplexity) break;
    }
    if (perp < perplexity) return done(hi, perp);
  } else {
    for (int e = 0; e < kMaxExpansions; ++e) {
      hi = lo;
      lo *= 0.5;
      perp = eval(lo);
      if (std::abs(perp - perplexity) < kTolerance) return done(lo, perp);
      if (perp < perplexity) break;
    }
    if (perp > perplexity) return done(lo, perp);
  }
  for (int it = 0; it < kBisections; ++it) {
    sigma = std::sqrt(lo * hi);
    perp = eval(sigma);
    if (std::abs(perp - perplexity) < kTolerance) break;
    (perp < perplexity ? lo : hi) = sigma;
  }
  return done(sigma, perp);
}

/// p_ij = (p_{j|i} + p_{i|j}) / 2N. Rows that fail to reach the target
/// perplexity are flagged in `converged` but still used.
inline Affinities joint_affinities(const PointSet& x, double perplexity) {
  const std::size_t n = x.size();
  if (n < 3) throw Error(ErrorKind::kInvalidArgument, "affinities need at least 3 points");
  const SquareMatrix d = pairwise_sq_distances(x);
  SquareMatrix cond(n);
  Affinities a;
  a.sigma.resize(n);
  a.achieved_perplexity.resize(n);
  a.converged.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto cal = calibrate_sigma(d.row(i), i, perplexity);
    std::copy(cal.row.begin(), cal.row.end(), cond.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    a.sigma[i] = cal.sigma;
    a.achieved_perplexity[i] = cal.perplexity;
    a.converged[i] = cal.converged ? 1 : 0;
  }
  a.p = SquareMatrix(n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) a.p(i, j) = (cond(i, j) + cond(j, i)) / denom;
    }
  }
  return a;
}

namespace detail {

// Student-t kernel (1 + |y_i - y_j|^2)^-1 with zero diagonal.
inline SquareMatrix cauchy_kernel(const PointSet& y) {
  SquareMatrix k = pairwise_sq_distances(y);
  for (std::size_t i = 0; i < k.n; ++i) {
    for (std::size_t j = 0; j < k.n; ++j) k(i, j) = i == j ? 0.0 : 1.0 / (1.0 + k(i, j));
  }
  return k;
}

inline SquareMatrix normalize(SquareMatrix k) {
  const double total = k.sum();
  for (double& v : k.data) v /= total;
  return k;
}

}  // namespace detail

inline SquareMatrix low_dim_affinities(const PointSet& y) { return detail::normalize(detail::cauchy_kernel(y)); }

/// sum p_ij ln(p_ij / q_ij); zero p contributes nothing and q is floored at 1e-12.
inline double kl_divergence(const SquareMatrix& p, const SquareMatrix& q) {
  if (p.n != q.n) throw Error(ErrorKind::kDimensionMismatch, "P and Q differ in size");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.data.size(); ++k) {
    const double pv = p.data[k];
    if (pv > 0.0) kl += pv * std::log(pv / std::max(q.data[k], 1e-12));
  }
  return kl;
}

namespace detail {

// 4 sum_j (p_ij - q_ij)(y_i - y_j) kernel_ij, with `p_scale` multiplying P.
inline std::vector<double> tsne_gradient(const SquareMatrix& p, double p_scale, const SquareMatrix& q,
                                         const SquareMatrix& kernel, const PointSet& y) {
  const std::size_t n = y.size();
  std::vector<double> grad(n * y.dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto yi = y.point(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double mult = 4.0 * (p_scale * p(i, j) - q(i, j)) * kernel(i, j);
      auto yj = y.point(j);
      for (std::size_t k = 0; k < y.dim; ++k) grad[i * y.dim + k] += mult * (yi[k] - yj[k]);
    }
  }
  return grad;
}

}  // namespace detail

/// Analytic gradient of KL(P || Q(Y)) with respect to Y, row-major like Y.
inline std::vector<double> tsne_gradient(const SquareMatrix& p, const SquareMatrix& q, const PointSet& y) {
  if (p.n != q.n || p.n != y.size()) throw Error(ErrorKind::kDimensionMismatch, "P, Q and Y disagree in size");
  return detail::tsne_gradient(p, 1.0, q, detail::cauchy_kernel(y), y);
}

/// Exact O(N^2) t-SNE: momentum gradient descent with per-coordinate
/// adaptive gains and early exaggeration. kl_history holds the divergence
/// against the unexaggerated P after every update.
inline Embedding run_tsne(const PointSet& x, const TsneParams& params) {
  const std::size_t n = x.size();
  if (n < 3) throw Error(ErrorKind::kInvalidArgument, "t-SNE needs at least 3 points");
  if (!(params.perplexity > 1.0 && params.perplexity < static_cast<double>(n))) {
    throw Error(ErrorKind::kInvalidArgument, "perplexity must lie in (1, N)");
  }
  if (params.iterations < 1) throw Error(ErrorKind::kInvalidArgument, "iterations must be >= 1");
  if (params.output_dim != 2) throw Error(ErrorKind::kInvalidArgument, "only 2-D output is supported");

  const Affinities aff = joint_affinities(x, params.perplexity);
  Embedding out;
  out.unconverged_rows = static_cast<std::size_t>(std::count(aff.converged.begin(), aff.converged.end(), 0));
  const std::size_t dim = 2;
  out.y.dim = dim;
  out.y.coords.resize(n * dim);
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> gauss(0.0, params.init_stddev);
  for (double& v : out.y.coords) v = gauss(rng);

  std::vector<double> update(n * dim, 0.0), gains(n * dim, 1.0);
  SquareMatrix kernel = detail::cauchy_kernel(out.y);
  SquareMatrix q = detail::normalize(kernel);
  out.kl_history.reserve(static_cast<std::size_t>(params.iterations));
  for (int it = 0; it < params.iterations; ++it) {
    const double exaggeration = it < params.exaggeration_iterations ? params.early_exaggeration : 1.0;
    const double momentum = it < params.momentum_switch_iteration ? params.initial_momentum : params.final_momentum;
    const auto grad = detail::tsne_gradient(aff.p, exaggeration, q, kernel, out.y);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
      gains[k] = same_sign ? std::max(gains[k] * 0.8, 0.01) : gains[k] + 0.2;
      update[k] = momentum * update[k] - params.learning_rate * gains[k] * grad[k];
      out.y.coords[k] += update[k];
    }
    for (std::size_t c = 0; c < dim; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += out.y.coords[i * dim + c];
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) out.y.coords[i * dim + c] -= mean;
    }
    kernel = detail::cauchy_kernel(out.y);
    q = detail::normalize(kernel);
    out.kl_history.push_back(kl_divergence(aff.p, q));
  }
  return out;
}

inline PointSet points_from(const Dataset& ds) { return {ds.cols(), ds.values()}; }

/// CSV with header y1,y2,label.
inline void write_embedding_csv(std::ostream& out, const Embedding& e, std::span<const int> labels) {
  out << "y1,y2,label\n";
  for (std::size_t i = 0; i < e.y.size(); ++i) {
    out << format_real(e.y.coords[i * 2]) << ',' << format_real(e.y.coords[i * 2 + 1]) << ',' << labels[i] << '\n';
  }
}

}  // namespace payshield
