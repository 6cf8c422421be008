#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "payshield/error.hpp"
#include "payshield/gbdt.hpp"
#include "payshield/resample.hpp"
#include "payshield/tabular.hpp"
#include "payshield/tree.hpp"

namespace payshield {

// ---------------------------------------------------------------------------
// k-nearest neighbours

struct KnnParams {
  int k = 5;
};

/// Fraction of the k nearest training rows (Euclidean, ties to the lower
/// index) that carry label 1.
inline double knn_score(const Dataset& train, std::span<const double> query, const KnnParams& params) {
  if (query.size() != train.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "query width does not match training data");
  }
  if (params.k < 1 || static_cast<std::size_t>(params.k) > train.rows()) {
    throw Error(ErrorKind::kKTooLarge, "k=" + std::to_string(params.k) + " with " +
                                           std::to_string(train.rows()) + " training rows");
  }
  const auto k = static_cast<std::size_t>(params.k);
  std::vector<std::pair<double, std::size_t>> cand(train.rows());
  for (std::size_t i = 0; i < train.rows(); ++i) cand[i] = {squared_distance(train.row(i), query), i};
  std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
  std::size_t positives = 0;
  for (std::size_t m = 0; m < k; ++m) positives += static_cast<std::size_t>(train.label(cand[m].second));
  return static_cast<double>(positives) / static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogRegParams {
  double learning_rate = 0.5;
  int epochs = 300;
  double l2 = 1e-4;
};

struct LogRegModel {
  std::vector<double> weights;
  double bias = 0.0;
  int iterations = 0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // loss at the start and after each epoch
};

inline double logreg_score(const LogRegModel& model, std::span<const double> x) {
  if (x.size() != model.weights.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "vector width does not match model");
  }
  double z = model.bias;
  for (std::size_t d = 0; d < x.size(); ++d) z += model.weights[d] * x[d];
  return sigmoid(z);
}

namespace detail {

// Mean log loss plus (l2/2)|w|^2; the bias is not penalized.
inline double logreg_loss(const Dataset& ds, std::span<const double> w, double b, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    double z = b;
    auto r = ds.row(i);
    for (std::size_t d = 0; d < r.size(); ++d) z += w[d] * r[d];
    // log(1 + e^z) - y z, computed stably
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += softplus - static_cast<double>(ds.label(i)) * z;
  }
  loss /= static_cast<double>(ds.rows());
  double norm = 0.0;
  for (double v : w) norm += v * v;
  return loss + 0.5 * l2 * norm;
}

}  // namespace detail

/// Full-batch gradient descent from zero weights. The loss is L-smooth with
/// L <= 0.25 * mean(|x|^2 + 1) + l2, so steps below 2/L decrease it; any step
/// that fails to decrease the loss is halved until it does, and the reduced
/// step is kept for later epochs. Stops early once no step size helps.
inline LogRegModel logreg_fit(const Dataset& train, const LogRegParams& params) {
  const std::size_t positives = train.count_label(1);
  if (positives == 0 || positives == train.rows()) {
    throw Error(ErrorKind::kSingleClass, "logistic regression needs both classes");
  }
  const std::size_t dim = train.cols();
  const auto n = static_cast<double>(train.rows());
  LogRegModel model;
  model.weights.assign(dim, 0.0);
  double loss = detail::logreg_loss(train, model.weights, model.bias, params.l2);
  model.loss_history.push_back(loss);
  double step = params.learning_rate;

  std::vector<double> grad(dim), trial(dim);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      auto r = train.row(i);
      double z = model.bias;
      for (std::size_t d = 0; d < dim; ++d) z += model.weights[d] * r[d];
      const double err = sigmoid(z) - static_cast<double>(train.label(i));
      for (std::size_t d = 0; d < dim; ++d) grad[d] += err * r[d];
      grad_b += err;
    }
    for (std::size_t d = 0; d < dim; ++d) grad[d] = grad[d] / n + params.l2 * model.weights[d];
    grad_b /= n;

    bool improved = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      for (std::size_t d = 0; d < dim; ++d) trial[d] = model.weights[d] - step * grad[d];
      const double trial_b = model.bias - step * grad_b;
      const double trial_loss = detail::logreg_loss(train, trial, trial_b, params.l2);
      if (trial_loss <= loss) {
        model.weights.swap(trial);
        model.bias = trial_b;
        loss = trial_loss;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    model.iterations = epoch + 1;
    model.loss_history.push_back(loss);
  }
  model.final_loss = loss;
  return model;
}

// ---------------------------------------------------------------------------
// CART

struct CartParams {
  int max_depth = 6;
  int min_samples_leaf = 5;
};

using CartTree = Tree<double>;

inline double gini(std::size_t positives, std::size_t total) {
  if (total == 0) return 0.0;
  const double p = static_cast<double>(positives) / static_cast<double>(total);
  return 2.0 * p * (1.0 - p);
}

struct CartSplit {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;  // size-weighted child Gini, divided by parent size

  bool valid() const { return feature >= 0; }
};

/// Exhaustive search over (feature, midpoint between adjacent distinct
/// values) minimizing weighted child Gini. Only splits that lower the
/// impurity strictly and leave min_samples_leaf rows per side qualify; ties
/// go to the lowest feature, then the lowest threshold.
inline CartSplit best_gini_split(const Dataset& ds, std::span<const std::size_t> rows, int min_samples_leaf) {
  const std::size_t n = rows.size();
  std::size_t pos_total = 0;
  for (std::size_t i : rows) pos_total += static_cast<std::size_t>(ds.label(i));
  CartSplit best;
  best.impurity = gini(pos_total, n);
  const auto min_leaf = static_cast<std::size_t>(std::max(1, min_samples_leaf));

  std::vector<std::pair<double, int>> column(n);
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    for (std::size_t m = 0; m < n; ++m) column[m] = {ds.at(rows[m], j), ds.label(rows[m])};
    std::sort(column.begin(), column.end());
    std::size_t pos_left = 0;
    for (std::size_t m = 0; m + 1 < n; ++m) {
      pos_left += static_cast<std::size_t>(column[m].second);
      if (column[m].first == column[m + 1].first) continue;
      const std::size_t n_left = m + 1;
      const std::size_t n_right = n - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const double weighted = (static_cast<double>(n_left) * gini(pos_left, n_left) +
                               static_cast<double>(n_right) * gini(pos_total - pos_left, n_right)) /
                              static_cast<double>(n);
      if (weighted < best.impurity) {
        best.feature = static_cast<int>(j);
        best.threshold = detail::midpoint_below(column[m].first, column[m + 1].first);
        best.impurity = weighted;
      }
    }
  }
  return best;
}

/// Greedy Gini tree; leaves hold the fraction of positives they contain.
inline CartTree cart_fit(const Dataset& train, const CartParams& params) {
  if (train.empty()) throw Error(ErrorKind::kEmptyDataset, "cannot fit a tree on no rows");
  if (params.max_depth < 1) throw Error(ErrorKind::kInvalidArgument, "max_depth must be >= 1");
  CartTree tree;
  struct Work {
    int node;
    int depth;
    std::vector<std::size_t> rows;
  };
  std::vector<std::size_t> all(train.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<Work> stack;
  stack.push_back({0, 0, std::move(all)});
  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    std::size_t positives = 0;
    for (std::size_t i : w.rows) positives += static_cast<std::size_t>(train.label(i));
    tree.set_leaf_value(w.node, static_cast<double>(positives) / static_cast<double>(w.rows.size()));
    if (w.depth >= params.max_depth || positives == 0 || positives == w.rows.size()) continue;
    const CartSplit s = best_gini_split(train, w.rows, params.min_samples_leaf);
    if (!s.valid()) continue;
    const double parent = gini(positives, w.rows.size());
    auto [l, r] = tree.split(w.node, s.feature, s.threshold, parent - s.impurity);
    std::vector<std::size_t> left, right;
    for (std::size_t i : w.rows) {
      (train.at(i, static_cast<std::size_t>(s.feature)) <= s.threshold ? left : right).push_back(i);
    }
    stack.push_back({r, w.depth + 1, std::move(right)});
    stack.push_back({l, w.depth + 1, std::move(left)});
  }
  return tree;
}

inline double cart_score(const CartTree& tree, std::span<const double> x) { return tree.predict(x); }

}  // namespace payshield
