#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "payshield/baselines.hpp"
#include "payshield/cleanse.hpp"
#include "payshield/config.hpp"
#include "payshield/embed.hpp"
#include "payshield/error.hpp"
#include "payshield/gbdt.hpp"
#include "payshield/metrics.hpp"
#include "payshield/resample.hpp"
#include "payshield/synthetic.hpp"
#include "payshield/tabular.hpp"

namespace payshield {

// Stage seeds are the master seed plus a fixed offset, so toggling one stage
// never perturbs the random stream of another.
inline constexpr std::uint64_t kSplitSeedOffset = 1;
inline constexpr std::uint64_t kSmoteSeedOffset = 2;
inline constexpr std::uint64_t kGbdtSeedOffset = 3;
inline constexpr std::uint64_t kTsneSeedOffset = 4;
inline constexpr std::uint64_t kTsneSampleSeedOffset = 5;

inline const std::vector<std::string>& known_models() {
  static const std::vector<std::string> names{"knn", "logreg", "cart", "gbdt_leafwise", "gbdt_levelwise"};
  return names;
}

enum class DataSource { kCsv, kSynthetic };

struct ExperimentConfig {
  DataSource source = DataSource::kCsv;
  std::string data_path;
  std::string label_column = "Class";
  SyntheticSpec synthetic;
  double test_fraction = 0.2;
  std::uint64_t seed = 42;
  bool scale = false;

  std::vector<std::string> outlier_features;
  double outlier_multiplier = 1.5;
  bool recompute_fences = true;

  bool smote = true;  // when on, every model runs with and without SMOTE
  SmoteParams smote_params;

  std::vector<std::string> models;
  KnnParams knn;
  LogRegParams logreg;
  CartParams cart;
  GbdtParams gbdt;

  double threshold = 0.5;

  bool tsne = false;
  TsneParams tsne_params;
  std::size_t tsne_max_points = 500;

  std::string output_dir = "out";

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::kConfigError, m); };
    if (models.empty()) fail("at least one model must be listed in models.list");
    for (const auto& m : models) {
      if (std::find(known_models().begin(), known_models().end(), m) == known_models().end()) {
        fail("unknown model '" + m + "'");
      }
    }
    if (source == DataSource::kCsv && data_path.empty()) fail("data.path is required for csv input");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("data.test_fraction must lie in (0,1)");
    if (!(threshold >= 0.0 && threshold <= 1.0)) fail("run.threshold must lie in [0,1]");
    if (output_dir.empty()) fail("run.output must not be empty");
    if (smote && smote_params.k < 1) fail("smote.k must be >= 1");
    if (smote && !(smote_params.target_ratio > 0.0 && smote_params.target_ratio <= 1.0)) {
      fail("smote.target_ratio must lie in (0,1]");
    }
    if (knn.k < 1) fail("knn.k must be >= 1");
    if (cart.max_depth < 1) fail("cart.max_depth must be >= 1");
    try {
      gbdt.validate();
    } catch (const Error& e) {
      fail("gbdt: " + e.detail());
    }
    if (tsne && tsne_max_points < 3) fail("tsne.max_points must be >= 3");
  }
};

/// Reads an ExperimentConfig from parsed key/values; see configs/ for a
/// commented example of every key.
inline ExperimentConfig experiment_config_from(const Config& c) {
  ExperimentConfig x;
  const std::string source = c.get_string("data.source", "csv");
  if (source == "csv") {
    x.source = DataSource::kCsv;
  } else if (source == "synthetic") {
    x.source = DataSource::kSynthetic;
  } else {
    throw Error(ErrorKind::kConfigError, "data.source must be csv or synthetic");
  }
  x.data_path = c.get_string("data.path", "");
  x.label_column = c.get_string("data.label", x.label_column);
  x.test_fraction = c.get_real("data.test_fraction", x.test_fraction);
  x.seed = static_cast<std::uint64_t>(c.get_int("data.seed", static_cast<long long>(x.seed)));
  x.scale = c.get_bool("data.scale", x.scale);

  auto count = [&](const std::string& key, std::size_t fallback) {
    const long long v = c.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw Error(ErrorKind::kConfigError, "'" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  x.synthetic.rows = count("synthetic.rows", x.synthetic.rows);
  x.synthetic.positive_rate = c.get_real("synthetic.positive_rate", x.synthetic.positive_rate);
  x.synthetic.features = count("synthetic.features", x.synthetic.features);
  x.synthetic.informative = count("synthetic.informative", x.synthetic.informative);
  x.synthetic.clusters_per_class = count("synthetic.clusters_per_class", x.synthetic.clusters_per_class);
  x.synthetic.class_sep = c.get_real("synthetic.class_sep", x.synthetic.class_sep);
  x.synthetic.seed = static_cast<std::uint64_t>(c.get_int("synthetic.seed", static_cast<long long>(x.seed)));

  x.outlier_features = c.get_list("cleanse.features", {});
  x.outlier_multiplier = c.get_real("cleanse.multiplier", x.outlier_multiplier);
  x.recompute_fences = c.get_bool("cleanse.recompute_fences", x.recompute_fences);

  x.smote = c.get_bool("smote.enabled", x.smote);
  x.smote_params.k = static_cast<int>(c.get_int("smote.k", x.smote_params.k));
  x.smote_params.target_ratio = c.get_real("smote.target_ratio", x.smote_params.target_ratio);

  x.models = c.get_list("models.list", {});
  x.knn.k = static_cast<int>(c.get_int("knn.k", x.knn.k));
  x.logreg.learning_rate = c.get_real("logreg.learning_rate", x.logreg.learning_rate);
  x.logreg.epochs = static_cast<int>(c.get_int("logreg.epochs", x.logreg.epochs));
  x.logreg.l2 = c.get_real("logreg.l2", x.logreg.l2);
  x.cart.max_depth = static_cast<int>(c.get_int("cart.max_depth", x.cart.max_depth));
  x.cart.min_samples_leaf = static_cast<int>(c.get_int("cart.min_samples_leaf", x.cart.min_samples_leaf));

  GbdtParams& g = x.gbdt;
  g.n_trees = static_cast<int>(c.get_int("gbdt.n_trees", g.n_trees));
  g.learning_rate = c.get_real("gbdt.learning_rate", g.learning_rate);
  g.max_leaves = static_cast<int>(c.get_int("gbdt.max_leaves", g.max_leaves));
  g.max_depth = static_cast<int>(c.get_int("gbdt.max_depth", g.max_depth));
  g.l1 = c.get_real("gbdt.l1", g.l1);
  g.l2 = c.get_real("gbdt.l2", g.l2);
  g.min_split_gain = c.get_real("gbdt.min_split_gain", g.min_split_gain);
  g.min_child_weight = c.get_real("gbdt.min_child_weight", g.min_child_weight);
  g.max_bins = static_cast<int>(c.get_int("gbdt.max_bins", g.max_bins));

  x.threshold = c.get_real("run.threshold", x.threshold);
  x.output_dir = c.get_string("run.output", x.output_dir);

  x.tsne = c.get_bool("tsne.enabled", x.tsne);
  x.tsne_params.perplexity = c.get_real("tsne.perplexity", x.tsne_params.perplexity);
  x.tsne_params.iterations = static_cast<int>(c.get_int("tsne.iterations", x.tsne_params.iterations));
  x.tsne_params.learning_rate = c.get_real("tsne.learning_rate", x.tsne_params.learning_rate);
  x.tsne_params.early_exaggeration = c.get_real("tsne.early_exaggeration", x.tsne_params.early_exaggeration);
  x.tsne_max_points = count("tsne.max_points", x.tsne_max_points);

  c.reject_unused();
  x.validate();
  return x;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from(Config::parse_file(path));
}

struct ReportRow {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double roc_auc = 0.0;
};

struct Provenance {
  std::size_t rows_loaded = 0;
  std::size_t rows_after_cleaning = 0;
  std::size_t train_negatives = 0;
  std::size_t train_positives = 0;
  std::size_t smote_negatives = 0;
  std::size_t smote_positives = 0;
  std::size_t test_negatives = 0;
  std::size_t test_positives = 0;
};

struct RunReport {
  std::vector<ReportRow> rows;
  Provenance provenance;
};

struct VariantResult {
  std::string name;  // model, plus "_smote" when trained on the balanced set
  std::string model;
  bool smote = false;
  MetricsReport metrics;
  std::vector<double> scores;  // one per test row
  RocCurve roc;
  std::optional<GbdtModel> gbdt;
};

struct RunState {
  ExperimentConfig config;
  RunReport report;
  Dataset cleaned;
  RemovalReport cleaning;
  SplitPair split;  // after optional scaling
  std::optional<ScaleParams> scale;
  std::vector<SynthesisDraw> smote_draws;
  std::vector<VariantResult> variants;
  std::optional<Embedding> embedding;
  std::vector<int> embedding_labels;
};

namespace detail {

template <class F>
auto run_stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage '") + name + "': " + e.detail());
  }
}

template <class Scorer>
std::vector<double> score_rows(const Dataset& test, Scorer&& scorer) {
  std::vector<double> out(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) out[i] = scorer(test.row(i));
  return out;
}

inline VariantResult fit_and_score(const std::string& model, const Dataset& train, const Dataset& test,
                                   const ExperimentConfig& cfg) {
  VariantResult v;
  v.model = model;
  if (model == "knn") {
    v.scores = score_rows(test, [&](auto r) { return knn_score(train, r, cfg.knn); });
  } else if (model == "logreg") {
    const auto fit = logreg_fit(train, cfg.logreg);
    v.scores = score_rows(test, [&](auto r) { return logreg_score(fit, r); });
  } else if (model == "cart") {
    const auto tree = cart_fit(train, cfg.cart);
    v.scores = score_rows(test, [&](auto r) { return tree.predict(r); });
  } else {
    GbdtParams params = cfg.gbdt;
    params.growth = model == "gbdt_levelwise" ? Growth::kLevelWise : Growth::kLeafWise;
    params.seed = cfg.seed + kGbdtSeedOffset;
    v.gbdt = train_gbdt(train, params);
    v.scores = score_rows(test, [&](auto r) { return v.gbdt->predict_proba(r); });
  }
  v.metrics = evaluate(test.labels(), v.scores, cfg.threshold);
  v.roc = roc_curve(test.labels(), v.scores);
  return v;
}

}  // namespace detail

/// Fixed pipeline: load, prune outliers, split, optional scaling, optional
/// SMOTE on the training partition, then fit and score every model.
inline RunState run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunState st;
  st.config = cfg;

  Dataset raw = detail::run_stage("load", [&] {
    if (cfg.source == DataSource::kSynthetic) return make_synthetic(cfg.synthetic);
    return load_csv(cfg.data_path, cfg.label_column);
  });
  st.report.provenance.rows_loaded = raw.rows();

  detail::run_stage("cleanse", [&] {
    PruneOptions opt;
    opt.multiplier = cfg.outlier_multiplier;
    opt.recompute_fences = cfg.recompute_fences;
    auto [cleaned, report] = prune_class_outliers(raw, cfg.outlier_features, opt);
    st.cleaned = std::move(cleaned);
    st.cleaning = std::move(report);
    return 0;
  });
  st.report.provenance.rows_after_cleaning = st.cleaned.rows();

  st.split = detail::run_stage("split", [&] {
    return stratified_split(st.cleaned, cfg.test_fraction, cfg.seed + kSplitSeedOffset);
  });
  if (cfg.scale) {
    detail::run_stage("scale", [&] {
      auto [scaled, params] = minmax_scale(st.split);
      st.split = std::move(scaled);
      st.scale = std::move(params);
      return 0;
    });
  }
  auto& prov = st.report.provenance;
  prov.train_positives = st.split.train.count_label(1);
  prov.train_negatives = st.split.train.rows() - prov.train_positives;
  prov.test_positives = st.split.test.count_label(1);
  prov.test_negatives = st.split.test.rows() - prov.test_positives;

  std::optional<Dataset> balanced;
  if (cfg.smote) {
    detail::run_stage("smote", [&] {
      SmoteParams p = cfg.smote_params;
      p.seed = cfg.seed + kSmoteSeedOffset;
      auto res = smote_balance(st.split.train, p);
      st.smote_draws = std::move(res.draws);
      balanced = std::move(res.data);
      return 0;
    });
    prov.smote_positives = balanced->count_label(1);
    prov.smote_negatives = balanced->rows() - prov.smote_positives;
  }

  for (const auto& model : cfg.models) {
    for (bool with_smote : {false, true}) {
      if (with_smote && !cfg.smote) continue;
      const std::string name = with_smote ? model + "_smote" : model;
      auto v = detail::run_stage(name.c_str(), [&] {
        return detail::fit_and_score(model, with_smote ? *balanced : st.split.train, st.split.test, cfg);
      });
      v.name = name;
      v.smote = with_smote;
      st.report.rows.push_back({name, v.metrics.precision, v.metrics.recall, v.metrics.f1, v.metrics.roc_auc});
      st.variants.push_back(std::move(v));
    }
  }

  if (cfg.tsne) {
    detail::run_stage("tsne", [&] {
      std::vector<std::size_t> idx(st.cleaned.rows());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      if (idx.size() > cfg.tsne_max_points) {
        std::mt19937_64 rng(cfg.seed + kTsneSampleSeedOffset);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(cfg.tsne_max_points);
        std::sort(idx.begin(), idx.end());
      }
      const Dataset sample = st.cleaned.subset(idx);
      TsneParams p = cfg.tsne_params;
      p.seed = cfg.seed + kTsneSeedOffset;
      st.embedding = run_tsne(points_from(sample), p);
      st.embedding_labels = sample.labels();
      return 0;
    });
  }
  return st;
}

/// Pearson correlations between all features and the label (last row and
/// column). A constant column correlates 0 with others and 1 with itself.
inline SquareMatrix correlation_matrix(const Dataset& ds) {
  const std::size_t d = ds.cols() + 1;
  const std::size_t n = ds.rows();
  auto value = [&](std::size_t i, std::size_t j) {
    return j < ds.cols() ? ds.at(i, j) : static_cast<double>(ds.label(i));
  };
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) mean[j] += value(i, j);
    mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sd[j] += (value(i, j) - mean[j]) * (value(i, j) - mean[j]);
    sd[j] = std::sqrt(sd[j]);
  }
  SquareMatrix c(d);
  for (std::size_t a = 0; a < d; ++a) {
    c(a, a) = 1.0;
    for (std::size_t b = a + 1; b < d; ++b) {
      double r = 0.0;
      if (sd[a] > 0.0 && sd[b] > 0.0) {
        double cov = 0.0;
        for (std::size_t i = 0; i < n; ++i) cov += (value(i, a) - mean[a]) * (value(i, b) - mean[b]);
        r = std::clamp(cov / (sd[a] * sd[b]), -1.0, 1.0);
      }
      c(a, b) = r;
      c(b, a) = r;
    }
  }
  return c;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write '" + path.string() + "'");
  return out;
}

inline void close_output(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw Error(ErrorKind::kIoError, "failed writing '" + path.string() + "'");
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const RunReport& report) {
  out << "model,precision,recall,f1,roc_auc\n";
  for (const auto& r : report.rows) {
    out << r.name << ',' << format_real(r.precision) << ',' << format_real(r.recall) << ',' << format_real(r.f1)
        << ',' << format_real(r.roc_auc) << '\n';
  }
}

/// Writes report.csv, provenance.csv, cleaning.csv, correlation.csv,
/// test_partition.csv, and per variant roc_<name>.csv and scores_<name>.csv;
/// gbdt variants add model_<name>.txt, SMOTE runs add smote_draws.csv and
/// t-SNE runs add embedding.csv. Returns the paths written, in order.
inline std::vector<std::filesystem::path> export_artifacts(const RunState& st, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIoError, "cannot create '" + dir.string() + "': " + ec.message());
  std::vector<fs::path> written;
  auto emit = [&](const std::string& file, auto&& body) {
    const fs::path path = dir / file;
    auto out = detail::open_output(path);
    body(out);
    detail::close_output(out, path);
    written.push_back(path);
  };

  emit("report.csv", [&](std::ostream& out) { write_report_csv(out, st.report); });
  emit("provenance.csv", [&](std::ostream& out) {
    const auto& p = st.report.provenance;
    out << "key,value\n"
        << "seed," << st.config.seed << '\n'
        << "threshold," << format_real(st.config.threshold) << '\n'
        << "rows_loaded," << p.rows_loaded << '\n'
        << "rows_after_cleaning," << p.rows_after_cleaning << '\n'
        << "train_negatives," << p.train_negatives << '\n'
        << "train_positives," << p.train_positives << '\n'
        << "smote_negatives," << p.smote_negatives << '\n'
        << "smote_positives," << p.smote_positives << '\n'
        << "test_negatives," << p.test_negatives << '\n'
        << "test_positives," << p.test_positives << '\n';
  });
  emit("cleaning.csv", [&](std::ostream& out) { write_removal_report(out, st.cleaning); });
  emit("correlation.csv", [&](std::ostream& out) {
    const auto c = correlation_matrix(st.cleaned);
    std::vector<std::string> names = st.cleaned.feature_names();
    names.push_back(st.config.label_column);
    out << "feature";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (std::size_t a = 0; a < c.n; ++a) {
      out << names[a];
      for (std::size_t b = 0; b < c.n; ++b) out << ',' << format_real(c(a, b));
      out << '\n';
    }
  });
  emit("test_partition.csv", [&](std::ostream& out) { write_csv(out, st.split.test, st.config.label_column); });
  for (const auto& v : st.variants) {
    emit("roc_" + v.name + ".csv", [&](std::ostream& out) { write_roc_csv(out, v.roc); });
    emit("scores_" + v.name + ".csv", [&](std::ostream& out) {
      out << "label,score\n";
      for (std::size_t i = 0; i < v.scores.size(); ++i) {
        out << st.split.test.label(i) << ',' << format_real(v.scores[i]) << '\n';
      }
    });
    if (v.gbdt) emit("model_" + v.name + ".txt", [&](std::ostream& out) { save_model(out, *v.gbdt); });
  }
  if (st.config.smote) {
    emit("smote_draws.csv", [&](std::ostream& out) { write_synthesis_log(out, st.smote_draws); });
  }
  if (st.embedding) {
    emit("embedding.csv", [&](std::ostream& out) { write_embedding_csv(out, *st.embedding, st.embedding_labels); });
  }
  return written;
}

// ---------------------------------------------------------------------------
// Transaction screening

enum class Decision { kApprove, kReview };

struct ScreeningDecision {
  std::size_t index = 0;
  double score = 0.0;
  Decision decision = Decision::kApprove;
};

/// Scores at or above the threshold are forwarded for review.
inline Decision decide(double score, double threshold) {
  return score >= threshold ? Decision::kReview : Decision::kApprove;
}

/// Columns are matched to the model's features by name; extra columns are
/// ignored and missing ones raise SchemaMismatch listing every absent name.
inline std::vector<ScreeningDecision> screen_transactions(const GbdtModel& model, const NumericTable& table,
                                                          double threshold) {
  std::vector<std::size_t> source_col;
  std::string missing;
  for (const auto& name : model.feature_names) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      missing += (missing.empty() ? "" : ", ") + name;
    } else {
      source_col.push_back(static_cast<std::size_t>(it - table.header.begin()));
    }
  }
  if (!missing.empty()) throw Error(ErrorKind::kSchemaMismatch, "transactions lack columns: " + missing);
  const std::size_t width = table.header.size();
  std::vector<ScreeningDecision> out(table.rows);
  std::vector<double> x(model.feature_names.size());
  for (std::size_t r = 0; r < table.rows; ++r) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = table.values[r * width + source_col[j]];
    const double s = model.predict_proba(x);
    out[r] = {r, s, decide(s, threshold)};
  }
  return out;
}

inline void write_decisions_csv(std::ostream& out, std::span<const ScreeningDecision> decisions) {
  out << "index,score,decision\n";
  for (const auto& d : decisions) {
    out << d.index << ',' << format_real(d.score) << ',' << (d.decision == Decision::kReview ? "review" : "approve")
        << '\n';
  }
}

}  // namespace payshield
