#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "payshield/cleanse.hpp"

namespace payshield {
namespace {

// Type-7 quantile via order statistics, written without the library helpers.
double OracleQuantile(std::vector<double> v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t k = static_cast<std::size_t>(pos);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  const double a = v[k];
  if (k + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(k) + 1, v.end());
  const double w = pos - static_cast<double>(k);
  return (1.0 - w) * a + w * b;
}

TEST(Quantile, Examples) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile(a, 0.5), 2.5);
  const std::vector<double> b{5};
  EXPECT_DOUBLE_EQ(quantile(b, 0.25), 5.0);
  const std::vector<double> c{3, 1, 4, 1, 5, 9, 2, 6};
  EXPECT_DOUBLE_EQ(quantile(c, 0.25), 1.75);
}

TEST(Quantile, MatchesOrderStatisticOracle) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng() % 60);
    for (double& x : v) x = std::round(g(rng));  // ties on purpose
    for (double q : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
      EXPECT_NEAR(quantile(v, q), OracleQuantile(v, q), 1e-12);
    }
  }
}

TEST(Quantile, Errors) {
  const std::vector<double> empty;
  const std::vector<double> one{1.0};
  EXPECT_THROW(quantile(empty, 0.5), Error);
  try {
    quantile(empty, 0.5);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyInput);
  }
  EXPECT_THROW(quantile(one, 1.5), Error);
}

TEST(TukeyFences, Examples) {
  const std::vector<double> v{1, 2, 3, 4, 100};
  const Fences f = tukey_fences(v);
  EXPECT_DOUBLE_EQ(f.q1, 2.0);
  EXPECT_DOUBLE_EQ(f.q3, 4.0);
  EXPECT_DOUBLE_EQ(f.iqr, 2.0);
  EXPECT_DOUBLE_EQ(f.lower, -1.0);
  EXPECT_DOUBLE_EQ(f.upper, 7.0);
  EXPECT_TRUE(f.outside(100.0));
  EXPECT_FALSE(f.outside(7.0));
  EXPECT_FALSE(f.outside(-1.0));

  const std::vector<double> flat{5, 5, 5, 5};
  const Fences z = tukey_fences(flat);
  EXPECT_EQ(z.iqr, 0.0);
  EXPECT_EQ(z.lower, 5.0);
  EXPECT_EQ(z.upper, 5.0);

  const Fences m = tukey_fences(v, 0.0);
  EXPECT_EQ(m.lower, m.q1);
  EXPECT_EQ(m.upper, m.q3);
}

// Fraud rows carry V14 values 1,2,3,4,100; legitimate rows carry wild values.
Dataset FraudFixture() {
  std::vector<double> values;
  std::vector<int> labels;
  for (double v : {1.0, 2.0, 3.0, 4.0, 100.0}) {
    values.insert(values.end(), {v, 0.0});
    labels.push_back(1);
  }
  for (double v : {-500.0, 0.0, 900.0}) {
    values.insert(values.end(), {v, 1.0});
    labels.push_back(0);
  }
  return Dataset({"V14", "V12"}, values, labels);
}

TEST(PruneClassOutliers, RemovesSingleFraudOutlier) {
  const Dataset ds = FraudFixture();
  const std::vector<std::string> features{"V14"};
  const auto [out, report] = prune_class_outliers(ds, features);
  EXPECT_EQ(report.rows_before, 8u);
  EXPECT_EQ(report.rows_after, 7u);
  EXPECT_EQ(out.rows(), 7u);
  EXPECT_EQ(report.removed_row_indices, (std::vector<std::size_t>{4}));
  ASSERT_EQ(report.features.size(), 1u);
  EXPECT_EQ(report.features[0].removed_count, 1u);
  EXPECT_DOUBLE_EQ(report.features[0].fences.lower, -1.0);
  EXPECT_DOUBLE_EQ(report.features[0].fences.upper, 7.0);
  EXPECT_EQ(out.count_label(0), 3u);
}

TEST(PruneClassOutliers, EmptyFeatureListIsIdentity) {
  const Dataset ds = FraudFixture();
  const auto [out, report] = prune_class_outliers(ds, std::vector<std::string>{});
  EXPECT_EQ(out, ds);
  EXPECT_TRUE(report.removed_row_indices.empty());
}

TEST(PruneClassOutliers, EqualValuesRemoveNothing) {
  const Dataset ds({"a"}, {3, 3, 3, 3, 99}, {1, 1, 1, 1, 0});
  const auto [out, report] = prune_class_outliers(ds, std::vector<std::string>{"a"});
  EXPECT_EQ(out.rows(), 5u);
}

TEST(PruneClassOutliers, Errors) {
  const Dataset ds = FraudFixture();
  try {
    prune_class_outliers(ds, std::vector<std::string>{"V99"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnknownFeature);
  }
  const Dataset no_fraud({"a"}, {1, 2}, {0, 0});
  try {
    prune_class_outliers(no_fraud, std::vector<std::string>{"a"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyClassSubset);
  }
}

Dataset RandomHeavyTailed(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::student_t_distribution<double> t(1.5);
  const std::size_t n = 40 + rng() % 80;
  std::vector<double> values(n * 3);
  for (double& v : values) v = t(rng);
  std::vector<int> labels(n);
  for (auto& y : labels) y = rng() % 3 == 0 ? 1 : 0;
  labels[0] = 1;
  labels[1] = 0;
  return Dataset({"A", "B", "C"}, values, labels);
}

TEST(PruneClassOutliers, Invariants) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Dataset ds = RandomHeavyTailed(seed);
    const std::vector<std::string> features{"C", "A", "B"};
    const auto [out, report] = prune_class_outliers(ds, features);

    EXPECT_EQ(out.count_label(0), ds.count_label(0));
    EXPECT_EQ(report.rows_before - report.rows_after, report.removed_row_indices.size());

    // Replay every step independently.
    std::vector<std::size_t> alive_fraud;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (ds.label(i) == 1) alive_fraud.push_back(i);
    }
    std::vector<std::size_t> removed;
    for (std::size_t k = 0; k < features.size(); ++k) {
      const std::size_t col = ds.feature_index(features[k]);
      std::vector<double> v;
      for (auto i : alive_fraud) v.push_back(ds.at(i, col));
      const double q1 = OracleQuantile(v, 0.25), q3 = OracleQuantile(v, 0.75);
      const double lo = q1 - 1.5 * (q3 - q1), hi = q3 + 1.5 * (q3 - q1);
      EXPECT_NEAR(report.features[k].fences.lower, lo, 1e-12);
      EXPECT_NEAR(report.features[k].fences.upper, hi, 1e-12);
      std::vector<std::size_t> keep;
      for (auto i : alive_fraud) (ds.at(i, col) < lo || ds.at(i, col) > hi ? removed : keep).push_back(i);
      alive_fraud = keep;
      if (k + 1 == features.size()) {
        for (std::size_t r = 0; r < out.rows(); ++r) {
          if (out.label(r) == 1) {
            EXPECT_GE(out.at(r, col), lo);
            EXPECT_LE(out.at(r, col), hi);
          }
        }
      }
    }
    std::sort(removed.begin(), removed.end());
    EXPECT_EQ(report.removed_row_indices, removed);
    for (auto i : report.removed_row_indices) EXPECT_EQ(ds.label(i), 1);
  }
}

TEST(PruneClassOutliers, SequentialEqualsChained) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const Dataset ds = RandomHeavyTailed(seed);
    const auto both = prune_class_outliers(ds, std::vector<std::string>{"A", "B"}).first;
    const auto first = prune_class_outliers(ds, std::vector<std::string>{"A"}).first;
    const auto chained = prune_class_outliers(first, std::vector<std::string>{"B"}).first;
    EXPECT_EQ(both, chained);
  }
}

TEST(PruneClassOutliers, FrozenFencesUseOriginalSubset) {
  const Dataset ds = RandomHeavyTailed(7);
  PruneOptions opt;
  opt.recompute_fences = false;
  const auto [out, report] = prune_class_outliers(ds, std::vector<std::string>{"A", "B"}, opt);
  std::vector<double> b;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (ds.label(i) == 1) b.push_back(ds.at(i, 1));
  }
  EXPECT_NEAR(report.features[1].fences.q1, OracleQuantile(b, 0.25), 1e-12);
  EXPECT_NEAR(report.features[1].fences.q3, OracleQuantile(b, 0.75), 1e-12);
}

TEST(RemovalReport, CsvLayout) {
  const auto [out, report] = prune_class_outliers(FraudFixture(), std::vector<std::string>{"V14"});
  std::ostringstream os;
  write_removal_report(os, report);
  EXPECT_EQ(os.str(), "feature,q1,q3,lower,upper,removed_count\nV14,2,4,-1,7,1\n");
}

}  // namespace
}  // namespace payshield
