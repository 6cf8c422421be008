#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "payshield/error.hpp"
#include "payshield/tabular.hpp"

namespace payshield {

struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

using RocCurve = std::vector<RocPoint>;

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double roc_auc = 0.0;
  double threshold = 0.5;
};

namespace detail {

inline void check_pairs(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorKind::kLengthMismatch, std::to_string(labels.size()) + " labels vs " +
                                                std::to_string(scores.size()) + " scores");
  }
  if (labels.empty()) throw Error(ErrorKind::kEmptyInput, "no samples to evaluate");
}

}  // namespace detail

/// Predicts positive iff score >= threshold.
inline ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> scores, double threshold) {
  detail::check_pairs(labels, scores);
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      predicted ? ++cm.tp : ++cm.fn;
    } else {
      predicted ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

inline double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

/// Positive-class precision, recall and F1; zero denominators yield 0.
inline PrecisionRecall prf1(const ConfusionMatrix& cm) {
  PrecisionRecall out;
  if (cm.tp + cm.fp > 0) out.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  if (cm.tp + cm.fn > 0) out.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

namespace detail {

// Cumulative (fp, tp) counts at each distinct score, descending.
struct RocCounts {
  std::vector<std::uint64_t> fp;
  std::vector<std::uint64_t> tp;
  std::uint64_t negatives = 0;
  std::uint64_t positives = 0;
};

inline RocCounts roc_counts(std::span<const int> labels, std::span<const double> scores) {
  check_pairs(labels, scores);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocCounts c;
  c.fp.push_back(0);
  c.tp.push_back(0);
  std::uint64_t fp = 0, tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    labels[order[k]] == 1 ? ++tp : ++fp;
    const bool last_of_group = k + 1 == order.size() || scores[order[k + 1]] != scores[order[k]];
    if (last_of_group) {
      c.fp.push_back(fp);
      c.tp.push_back(tp);
    }
  }
  c.negatives = fp;
  c.positives = tp;
  if (c.positives == 0 || c.negatives == 0) {
    throw Error(ErrorKind::kSingleClass, "ROC needs at least one positive and one negative");
  }
  // The sweep ends at (N, P); the explicit (1,1) endpoint is appended by roc_curve.
  return c;
}

}  // namespace detail

/// One vertex per distinct score (descending), framed by (0,0) and (1,1).
inline RocCurve roc_curve(std::span<const int> labels, std::span<const double> scores) {
  auto c = detail::roc_counts(labels, scores);
  RocCurve curve;
  curve.reserve(c.fp.size() + 1);
  for (std::size_t k = 0; k < c.fp.size(); ++k) {
    curve.push_back({static_cast<double>(c.fp[k]) / static_cast<double>(c.negatives),
                     static_cast<double>(c.tp[k]) / static_cast<double>(c.positives)});
  }
  curve.push_back({1.0, 1.0});
  return curve;
}

/// Trapezoidal area under the ROC curve. Accumulated in integer counts so
/// the result equals the Mann-Whitney pair statistic up to one rounding.
inline double roc_auc(std::span<const int> labels, std::span<const double> scores) {
  auto c = detail::roc_counts(labels, scores);
  // Twice the area in count units: sum (dfp) * (tp_prev + tp_cur).
  std::uint64_t twice_area = 0;
  for (std::size_t k = 1; k < c.fp.size(); ++k) {
    twice_area += (c.fp[k] - c.fp[k - 1]) * (c.tp[k] + c.tp[k - 1]);
  }
  return static_cast<double>(twice_area) /
         (2.0 * static_cast<double>(c.positives) * static_cast<double>(c.negatives));
}

inline MetricsReport evaluate(std::span<const int> labels, std::span<const double> scores, double threshold) {
  auto pr = prf1(confusion(labels, scores, threshold));
  return {pr.precision, pr.recall, pr.f1, roc_auc(labels, scores), threshold};
}

inline void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "fpr,tpr\n";
  for (const auto& p : curve) out << format_real(p.fpr) << ',' << format_real(p.tpr) << '\n';
}

}  // namespace payshield
