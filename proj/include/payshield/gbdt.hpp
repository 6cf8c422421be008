#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "payshield/cleanse.hpp"
#include "payshield/error.hpp"
#include "payshield/tabular.hpp"
#include "payshield/tree.hpp"

namespace payshield {

enum class Growth { kLeafWise, kLevelWise };

/// Hyperparameters of the boosted ensemble. Leaf-wise growth is capped by
/// max_leaves only, level-wise growth by max_depth only.
struct GbdtParams {
  int n_trees = 200;
  double learning_rate = 0.1;
  int max_leaves = 31;
  int max_depth = 6;
  Growth growth = Growth::kLeafWise;
  double l1 = 0.0;              // alpha
  double l2 = 1.0;              // lambda
  double min_split_gain = 0.0;  // gamma
  double min_child_weight = 1e-3;
  int max_bins = 256;
  std::uint64_t seed = 0;  // no sampling is performed; kept for config symmetry

  void validate() const {
    if (n_trees < 1) throw Error(ErrorKind::kInvalidArgument, "n_trees must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::kInvalidArgument, "learning_rate must be > 0");
    if (max_bins < 2 || max_bins > 256) throw Error(ErrorKind::kInvalidArgument, "max_bins must lie in [2,256]");
    if (max_leaves < 1) throw Error(ErrorKind::kInvalidArgument, "max_leaves must be >= 1");
    if (max_depth < 0) throw Error(ErrorKind::kInvalidArgument, "max_depth must be >= 0");
    if (l1 < 0.0 || l2 < 0.0 || min_split_gain < 0.0 || min_child_weight < 0.0) {
      throw Error(ErrorKind::kInvalidArgument, "regularization terms must be >= 0");
    }
  }
};

using Bin = std::uint8_t;
using BinnedTree = Tree<Bin>;

/// Per-feature ascending bin edges. A value x falls in bin b where b is the
/// number of edges strictly below x, so bin b <= t exactly when x <= edge[t].
class BinMapper {
 public:
  BinMapper() = default;
  explicit BinMapper(std::vector<std::vector<double>> edges) : edges_(std::move(edges)) {
    for (const auto& e : edges_) {
      if (e.size() > 255) throw Error(ErrorKind::kInvalidArgument, "more than 255 edges for a feature");
      for (std::size_t k = 1; k < e.size(); ++k) {
        if (!(e[k - 1] < e[k])) throw Error(ErrorKind::kInvalidArgument, "bin edges must increase strictly");
      }
    }
  }

  std::size_t features() const noexcept { return edges_.size(); }
  const std::vector<double>& edges(std::size_t j) const { return edges_[j]; }
  std::size_t bins(std::size_t j) const { return edges_[j].size() + 1; }

  Bin bin(std::size_t j, double x) const {
    const auto& e = edges_[j];
    return static_cast<Bin>(std::lower_bound(e.begin(), e.end(), x) - e.begin());
  }

  std::vector<Bin> transform(std::span<const double> row) const {
    if (row.size() != edges_.size()) {
      throw Error(ErrorKind::kDimensionMismatch, "row has " + std::to_string(row.size()) +
                                                     " values, model expects " + std::to_string(edges_.size()));
    }
    std::vector<Bin> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = bin(j, row[j]);
    return out;
  }

  /// Row-major N x D bin matrix.
  std::vector<Bin> transform(const Dataset& ds) const {
    std::vector<Bin> out(ds.rows() * ds.cols());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      for (std::size_t j = 0; j < ds.cols(); ++j) out[i * ds.cols() + j] = bin(j, ds.at(i, j));
    }
    return out;
  }

  friend bool operator==(const BinMapper&, const BinMapper&) = default;

 private:
  std::vector<std::vector<double>> edges_;
};

/// Up to max_bins bins per feature. Features with at most max_bins distinct
/// values get one edge midway between each adjacent pair; otherwise edges sit
/// at the j/max_bins linear-interpolation quantiles of the distinct values.
inline BinMapper build_bins(const Dataset& train, int max_bins) {
  if (train.empty()) throw Error(ErrorKind::kEmptyDataset, "cannot bin an empty dataset");
  if (max_bins < 2 || max_bins > 256) throw Error(ErrorKind::kInvalidArgument, "max_bins must lie in [2,256]");
  std::vector<std::vector<double>> all_edges(train.cols());
  for (std::size_t j = 0; j < train.cols(); ++j) {
    auto distinct = train.column(j);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    auto& edges = all_edges[j];
    if (distinct.size() <= 1) continue;
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
      for (std::size_t k = 1; k < distinct.size(); ++k) {
        edges.push_back(detail::midpoint_below(distinct[k - 1], distinct[k]));
      }
    } else {
      for (int b = 1; b < max_bins; ++b) {
        double e = quantile_sorted(distinct, static_cast<double>(b) / max_bins);
        if (edges.empty() || e > edges.back()) edges.push_back(e);
      }
    }
  }
  return BinMapper(std::move(all_edges));
}

inline double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

/// sign(G) * max(|G| - alpha, 0)
inline double soft_threshold(double g, double alpha) {
  const double m = std::abs(g) - alpha;
  if (m <= 0.0) return 0.0;
  return g > 0.0 ? m : -m;
}

namespace detail {

inline double structure_score(double g, double h, const GbdtParams& p) {
  const double denom = h + p.l2;
  if (!(denom > 0.0)) return 0.0;
  const double s = soft_threshold(g, p.l1);
  return s * s / denom;
}

}  // namespace detail

/// Unscaled Newton leaf weight -S(G)/(H + lambda).
inline double leaf_weight(double g, double h, const GbdtParams& p) {
  const double denom = h + p.l2;
  if (!(denom > 0.0)) return 0.0;
  return -soft_threshold(g, p.l1) / denom;
}

inline double split_gain(double gl, double hl, double gr, double hr, const GbdtParams& p) {
  return 0.5 * (detail::structure_score(gl, hl, p) + detail::structure_score(gr, hr, p) -
                detail::structure_score(gl + gr, hl + hr, p)) -
         p.min_split_gain;
}

struct SplitCandidate {
  int feature = -1;
  int bin = -1;
  double gain = 0.0;

  bool valid() const { return feature >= 0; }
};

class GbdtModel {
 public:
  double base_score = 0.0;
  std::vector<BinnedTree> trees;
  BinMapper bin_mapper;
  std::vector<std::string> feature_names;

  double margin(std::span<const double> x) const {
    check_width(x.size());
    const auto binned = bin_mapper.transform(x);
    double m = base_score;
    for (const auto& t : trees) m += t.predict(binned);
    return m;
  }

  double predict_proba(std::span<const double> x) const { return sigmoid(margin(x)); }

  /// Sum over accepted splits of their gain, per feature.
  std::vector<double> feature_importance() const {
    std::vector<double> imp(feature_names.size(), 0.0);
    for (const auto& t : trees) {
      for (const auto& nd : t.nodes()) {
        if (!nd.is_leaf) imp[static_cast<std::size_t>(nd.feature)] += nd.gain;
      }
    }
    return imp;
  }

 private:
  void check_width(std::size_t n) const {
    if (n != feature_names.size()) {
      throw Error(ErrorKind::kDimensionMismatch, "vector has " + std::to_string(n) + " values, model expects " +
                                                     std::to_string(feature_names.size()));
    }
  }
};

namespace detail {

struct BinStat {
  double g = 0.0;
  double h = 0.0;
  std::uint32_t count = 0;
};

// Histogram-based tree grower over a fixed bin matrix. Every gradient and
// hessian sum runs over rows in ascending index order.
class TreeGrower {
 public:
  TreeGrower(std::span<const Bin> binned, const BinMapper& mapper, std::span<const double> grad,
             std::span<const double> hess, const GbdtParams& params)
      : binned_(binned), mapper_(mapper), grad_(grad), hess_(hess), params_(params), dim_(mapper.features()) {
    offsets_.resize(dim_ + 1, 0);
    for (std::size_t j = 0; j < dim_; ++j) offsets_[j + 1] = offsets_[j] + mapper.bins(j);
  }

  struct Grown {
    BinnedTree tree;
    std::vector<std::pair<int, std::vector<std::uint32_t>>> leaves;  // leaf id, rows
  };

  Grown grow(std::vector<std::uint32_t> rows) {
    Grown out;
    std::vector<Work> frontier;
    frontier.push_back(make_work(0, 0, std::move(rows)));
    if (params_.growth == Growth::kLeafWise) {
      std::size_t leaves = 1;
      while (leaves < static_cast<std::size_t>(params_.max_leaves)) {
        std::size_t pick = frontier.size();
        for (std::size_t k = 0; k < frontier.size(); ++k) {
          const auto& c = frontier[k].best;
          if (!c.valid()) continue;
          if (pick == frontier.size() || c.gain > frontier[pick].best.gain ||
              (c.gain == frontier[pick].best.gain && frontier[k].node < frontier[pick].node)) {
            pick = k;
          }
        }
        if (pick == frontier.size()) break;
        Work parent = std::move(frontier[pick]);
        frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
        auto [l, r] = split(out.tree, parent);
        frontier.push_back(std::move(l));
        frontier.push_back(std::move(r));
        ++leaves;
      }
    } else {
      for (int depth = 0; depth < params_.max_depth && !frontier.empty(); ++depth) {
        std::vector<Work> next;
        for (auto& w : frontier) {
          if (!w.best.valid()) {
            finish(out, w);
            continue;
          }
          auto [l, r] = split(out.tree, w);
          next.push_back(std::move(l));
          next.push_back(std::move(r));
        }
        frontier = std::move(next);
      }
    }
    for (auto& w : frontier) finish(out, w);
    std::sort(out.leaves.begin(), out.leaves.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  /// Best split of the given rows: strictly positive gain, both children
  /// non-empty with hessian sum >= min_child_weight; ties go to the lowest
  /// feature index, then the lowest bin.
  SplitCandidate best_split(std::span<const std::uint32_t> rows, double g_total, double h_total) const {
    std::vector<BinStat> hist(offsets_.back());
    for (std::uint32_t i : rows) {
      const Bin* r = binned_.data() + static_cast<std::size_t>(i) * dim_;
      for (std::size_t j = 0; j < dim_; ++j) {
        BinStat& s = hist[offsets_[j] + r[j]];
        s.g += grad_[i];
        s.h += hess_[i];
        ++s.count;
      }
    }
    SplitCandidate best;
    const auto n = static_cast<std::uint32_t>(rows.size());
    for (std::size_t j = 0; j < dim_; ++j) {
      double gl = 0.0, hl = 0.0;
      std::uint32_t cl = 0;
      const std::size_t nb = mapper_.bins(j);
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        const BinStat& s = hist[offsets_[j] + b];
        gl += s.g;
        hl += s.h;
        cl += s.count;
        if (cl == 0 || cl == n) continue;
        const double gr = g_total - gl;
        const double hr = h_total - hl;
        if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
        const double gain = split_gain(gl, hl, gr, hr, params_);
        if (gain > 0.0 && (!best.valid() || gain > best.gain)) {
          best = {static_cast<int>(j), static_cast<int>(b), gain};
        }
      }
    }
    return best;
  }

 private:
  struct Work {
    int node = 0;
    int depth = 0;
    std::vector<std::uint32_t> rows;
    double g = 0.0;
    double h = 0.0;
    SplitCandidate best;
  };

  Work make_work(int node, int depth, std::vector<std::uint32_t> rows) const {
    Work w{node, depth, std::move(rows), 0.0, 0.0, {}};
    for (std::uint32_t i : w.rows) {
      w.g += grad_[i];
      w.h += hess_[i];
    }
    w.best = best_split(w.rows, w.g, w.h);
    return w;
  }

  std::pair<Work, Work> split(BinnedTree& tree, const Work& parent) const {
    const auto f = static_cast<std::size_t>(parent.best.feature);
    const auto t = static_cast<Bin>(parent.best.bin);
    auto [lid, rid] = tree.split(parent.node, parent.best.feature, t, parent.best.gain);
    std::vector<std::uint32_t> left, right;
    for (std::uint32_t i : parent.rows) {
      (binned_[static_cast<std::size_t>(i) * dim_ + f] <= t ? left : right).push_back(i);
    }
    return {make_work(lid, parent.depth + 1, std::move(left)), make_work(rid, parent.depth + 1, std::move(right))};
  }

  void finish(Grown& out, Work& w) const {
    out.tree.set_leaf_value(w.node, params_.learning_rate * leaf_weight(w.g, w.h, params_));
    out.leaves.emplace_back(w.node, std::move(w.rows));
  }

  std::span<const Bin> binned_;
  const BinMapper& mapper_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  const GbdtParams& params_;
  std::size_t dim_;
  std::vector<std::size_t> offsets_;
};

}  // namespace detail

/// Log-odds of the positive rate, clipped to [1e-6, 1 - 1e-6].
inline double base_score_for(const Dataset& train) {
  double p = static_cast<double>(train.count_label(1)) / static_cast<double>(train.rows());
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

/// Newton boosting on the logistic loss over histogram-binned features.
inline GbdtModel train_gbdt(const Dataset& train, const GbdtParams& params) {
  params.validate();
  const std::size_t n = train.rows();
  const std::size_t positives = train.count_label(1);
  if (positives == 0 || positives == n) {
    throw Error(ErrorKind::kSingleClass, "boosting needs both classes in the training set");
  }
  GbdtModel model;
  model.feature_names = train.feature_names();
  model.base_score = base_score_for(train);
  model.bin_mapper = build_bins(train, params.max_bins);
  const auto binned = model.bin_mapper.transform(train);

  std::vector<double> margins(n, model.base_score);
  std::vector<double> grad(n), hess(n);
  std::vector<std::uint32_t> all_rows(n);
  for (std::size_t i = 0; i < n; ++i) all_rows[i] = static_cast<std::uint32_t>(i);

  model.trees.reserve(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margins[i]);
      grad[i] = p - static_cast<double>(train.label(i));
      hess[i] = p * (1.0 - p);
    }
    detail::TreeGrower grower(binned, model.bin_mapper, grad, hess, params);
    auto grown = grower.grow(all_rows);
    for (const auto& [leaf, rows] : grown.leaves) {
      const double v = grown.tree.node(leaf).value;
      for (std::uint32_t i : rows) margins[i] += v;
    }
    model.trees.push_back(std::move(grown.tree));
  }
  return model;
}

inline double predict_proba(const GbdtModel& model, std::span<const double> x) { return model.predict_proba(x); }

inline std::vector<double> feature_importance(const GbdtModel& model) { return model.feature_importance(); }

// Model blob, line oriented:
//   gbdtmodel v1
//   <base_score>
//   features <D>
//   feature <j> <name>            (D lines)
//   edges <j> <count> <e1> ...    (D lines)
//   tree <k>
//   node <id> split <feat> <bin> <left> <right>
//   node <id> leaf <value>
// Reals carry 17 significant digits. Split gains are not stored.
inline void save_model(std::ostream& out, const GbdtModel& model) {
  out << "gbdtmodel v1\n";
  out << format_real(model.base_score) << '\n';
  out << "features " << model.feature_names.size() << '\n';
  for (std::size_t j = 0; j < model.feature_names.size(); ++j) {
    out << "feature " << j << ' ' << model.feature_names[j] << '\n';
  }
  for (std::size_t j = 0; j < model.bin_mapper.features(); ++j) {
    const auto& e = model.bin_mapper.edges(j);
    out << "edges " << j << ' ' << e.size();
    for (double v : e) out << ' ' << format_real(v);
    out << '\n';
  }
  for (std::size_t k = 0; k < model.trees.size(); ++k) {
    out << "tree " << k << '\n';
    const auto& nodes = model.trees[k].nodes();
    for (std::size_t id = 0; id < nodes.size(); ++id) {
      const auto& nd = nodes[id];
      if (nd.is_leaf) {
        out << "node " << id << " leaf " << format_real(nd.value) << '\n';
      } else {
        out << "node " << id << " split " << nd.feature << ' ' << static_cast<int>(nd.threshold) << ' '
            << nd.left << ' ' << nd.right << '\n';
      }
    }
  }
}

inline std::string save_model(const GbdtModel& model) {
  std::ostringstream out;
  save_model(out, model);
  return out.str();
}

namespace detail {

class BlobReader {
 public:
  explicit BlobReader(std::istream& in) : in_(in) {}

  bool next() {
    while (std::getline(in_, line_)) {
      ++line_no_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      tokens_ = tokenize(line_);
      if (!tokens_.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::kFormatError, "line " + std::to_string(line_no_) + ": " + what);
  }

  const std::string& line() const { return line_; }
  const std::vector<std::string_view>& tokens() const { return tokens_; }

  void expect_tokens(std::size_t n) const {
    if (tokens_.size() != n) fail("expected " + std::to_string(n) + " fields");
  }

  double real(std::string_view s) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) fail("bad real '" + std::string(s) + "'");
    return v;
  }

  long long integer(std::string_view s) const {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("bad integer '" + std::string(s) + "'");
    return v;
  }

 private:
  static std::vector<std::string_view> tokenize(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && s[i] == ' ') ++i;
      std::size_t j = i;
      while (j < s.size() && s[j] != ' ') ++j;
      if (j > i) out.push_back(s.substr(i, j - i));
      i = j;
    }
    return out;
  }

  std::istream& in_;
  std::string line_;
  std::vector<std::string_view> tokens_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline GbdtModel load_model(std::istream& in) {
  detail::BlobReader r(in);
  GbdtModel model;
  if (!r.next() || r.line() != "gbdtmodel v1") r.fail("expected header 'gbdtmodel v1'");
  if (!r.next()) r.fail("missing base score");
  r.expect_tokens(1);
  model.base_score = r.real(r.tokens()[0]);

  if (!r.next() || r.tokens()[0] != "features") r.fail("expected 'features <count>'");
  r.expect_tokens(2);
  const auto d = r.integer(r.tokens()[1]);
  if (d < 0) r.fail("negative feature count");
  for (long long j = 0; j < d; ++j) {
    if (!r.next() || r.tokens().size() < 3 || r.tokens()[0] != "feature" || r.integer(r.tokens()[1]) != j) {
      r.fail("expected 'feature " + std::to_string(j) + " <name>'");
    }
    // The name is everything after the second field.
    const std::string& line = r.line();
    std::size_t pos = line.find(' ');
    pos = line.find(' ', pos + 1);
    model.feature_names.push_back(line.substr(pos + 1));
  }
  std::vector<std::vector<double>> edges(static_cast<std::size_t>(d));
  for (long long j = 0; j < d; ++j) {
    if (!r.next() || r.tokens().size() < 3 || r.tokens()[0] != "edges" || r.integer(r.tokens()[1]) != j) {
      r.fail("expected 'edges " + std::to_string(j) + " <count> ...'");
    }
    const auto count = r.integer(r.tokens()[2]);
    if (count < 0 || r.tokens().size() != static_cast<std::size_t>(count) + 3) r.fail("edge count mismatch");
    for (long long k = 0; k < count; ++k) edges[static_cast<std::size_t>(j)].push_back(r.real(r.tokens()[3 + k]));
  }
  try {
    model.bin_mapper = BinMapper(std::move(edges));
  } catch (const Error& e) {
    r.fail(e.detail());
  }

  bool have_line = r.next();
  while (have_line) {
    if (r.tokens()[0] != "tree") r.fail("expected 'tree <k>'");
    r.expect_tokens(2);
    if (r.integer(r.tokens()[1]) != static_cast<long long>(model.trees.size())) r.fail("trees out of order");
    std::vector<BinnedTree::Node> nodes;
    while ((have_line = r.next()) && r.tokens()[0] == "node") {
      const auto& tk = r.tokens();
      if (tk.size() < 3 || r.integer(tk[1]) != static_cast<long long>(nodes.size())) r.fail("nodes out of order");
      BinnedTree::Node nd;
      if (tk[2] == "leaf") {
        r.expect_tokens(4);
        nd.value = r.real(tk[3]);
      } else if (tk[2] == "split") {
        r.expect_tokens(7);
        nd.is_leaf = false;
        const auto f = r.integer(tk[3]);
        const auto b = r.integer(tk[4]);
        if (f < 0 || f >= d) r.fail("split feature out of range");
        if (b < 0 || static_cast<std::size_t>(b) + 1 >= model.bin_mapper.bins(static_cast<std::size_t>(f))) {
          r.fail("split bin out of range");
        }
        nd.feature = static_cast<int>(f);
        nd.threshold = static_cast<Bin>(b);
        nd.left = static_cast<int>(r.integer(tk[5]));
        nd.right = static_cast<int>(r.integer(tk[6]));
      } else {
        r.fail("unknown node kind");
      }
      nodes.push_back(nd);
    }
    if (nodes.empty()) r.fail("tree without nodes");
    BinnedTree tree(std::move(nodes));
    try {
      tree.validate(static_cast<std::size_t>(d));
    } catch (const Error& e) {
      r.fail("tree " + std::to_string(model.trees.size()) + ": " + e.detail());
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

inline GbdtModel load_model(const std::string& blob) {
  std::istringstream in(blob);
  return load_model(in);
}

inline GbdtModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open model '" + path + "'");
  return load_model(in);
}

inline void save_model_file(const std::string& path, const GbdtModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write model '" + path + "'");
  save_model(out, model);
}

}  // namespace payshield
