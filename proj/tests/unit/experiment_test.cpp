#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "payshield/experiment.hpp"

namespace payshield {
namespace {

namespace fs = std::filesystem;

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void Spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("payshield_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kSmallConfig = R"(
[data]
source = synthetic
seed = 7
[synthetic]
rows = 2000
positive_rate = 0.02
features = 8
informative = 4
[cleanse]
features = V1, V2
[models]
list = knn, logreg, cart, gbdt_leafwise, gbdt_levelwise
[logreg]
epochs = 100
[gbdt]
n_trees = 20
)";

ExperimentConfig SmallConfig(const std::string& extra = "") {
  return experiment_config_from(Config::parse_string(std::string(kSmallConfig) + extra));
}

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::kIoError;
}

TEST(Config, ParsesSectionsCommentsAndLists) {
  const auto c = Config::parse_string("# top\n[a]\nx = 1.5   # trailing\nname = p#q\n[b]\nl = u, v ,, w\nflag = on\n");
  EXPECT_EQ(c.get_real("a.x", 0), 1.5);
  EXPECT_EQ(c.get_string("a.name", ""), "p#q");
  EXPECT_EQ(c.get_list("b.l", {}), (std::vector<std::string>{"u", "v", "w"}));
  EXPECT_TRUE(c.get_bool("b.flag", false));
  EXPECT_EQ(c.get_int("b.missing", 9), 9);
  EXPECT_NO_THROW(c.reject_unused());
}

TEST(Config, Errors) {
  EXPECT_EQ(KindOf([] { Config::parse_string("[a]\nx = 1\nx = 2\n"); }), ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] { Config::parse_string("[a\n"); }), ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] { Config::parse_string("novalue\n"); }), ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] { Config::parse_string("[a]\nx = one\n").get_int("a.x", 0); }), ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] { Config::parse_string("[a]\nx = maybe\n").get_bool("a.x", false); }),
            ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] { Config::parse_string("[a]\ntypo = 1\n").reject_unused(); }), ErrorKind::kConfigError);
}

TEST(ExperimentConfig, ReadsEveryKey) {
  const auto cfg = SmallConfig("[smote]\nk = 3\ntarget_ratio = 0.5\n[run]\nthreshold = 0.25\n");
  EXPECT_EQ(cfg.source, DataSource::kSynthetic);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.synthetic.seed, 7u);
  EXPECT_EQ(cfg.synthetic.rows, 2000u);
  EXPECT_EQ(cfg.outlier_features, (std::vector<std::string>{"V1", "V2"}));
  EXPECT_EQ(cfg.smote_params.k, 3);
  EXPECT_EQ(cfg.smote_params.target_ratio, 0.5);
  EXPECT_EQ(cfg.threshold, 0.25);
  EXPECT_EQ(cfg.gbdt.n_trees, 20);
  EXPECT_EQ(cfg.models.size(), 5u);
}

TEST(ExperimentConfig, BundledConfigsAreValid) {
  const fs::path root = fs::path(PAYSHIELD_SOURCE_DIR) / "configs";
  for (const char* name : {"synthetic.ini", "creditcard.ini"}) {
    EXPECT_NO_THROW(load_experiment_config((root / name).string())) << name;
  }
}

TEST(ExperimentConfig, ValidationRejectsBadRuns) {
  EXPECT_EQ(KindOf([] { experiment_config_from(Config::parse_string("[data]\nsource = synthetic\n")); }),
            ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] { SmallConfig("[knn]\nk = 0\n"); }), ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] { SmallConfig("[gbdt]\nmax_bins = 999\n"); }), ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] { SmallConfig("[extra]\nkey = 1\n"); }), ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] {
              experiment_config_from(Config::parse_string("[data]\nsource = csv\n[models]\nlist = knn\n"));
            }),
            ErrorKind::kConfigError);
  EXPECT_EQ(KindOf([] {
              experiment_config_from(Config::parse_string("[data]\nsource = synthetic\n[models]\nlist = svm\n"));
            }),
            ErrorKind::kConfigError);
}

TEST(RunExperiment, ReportHasEveryVariant) {
  const auto st = run_experiment(SmallConfig());
  std::vector<std::string> names;
  for (const auto& r : st.report.rows) {
    names.push_back(r.name);
    for (double m : {r.precision, r.recall, r.f1, r.roc_auc}) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
  }
  EXPECT_EQ(names, (std::vector<std::string>{"knn", "knn_smote", "logreg", "logreg_smote", "cart", "cart_smote",
                                             "gbdt_leafwise", "gbdt_leafwise_smote", "gbdt_levelwise",
                                             "gbdt_levelwise_smote"}));
  const auto& p = st.report.provenance;
  EXPECT_EQ(p.rows_loaded, 2000u);
  EXPECT_LE(p.rows_after_cleaning, p.rows_loaded);
  EXPECT_EQ(p.smote_positives, p.smote_negatives);
  EXPECT_EQ(p.smote_negatives, p.train_negatives);
  EXPECT_EQ(p.train_negatives + p.train_positives + p.test_negatives + p.test_positives, p.rows_after_cleaning);
}

TEST(RunExperiment, ArtifactsAreDeterministic) {
  const auto a = Scratch("det_a"), b = Scratch("det_b");
  const auto fa = export_artifacts(run_experiment(SmallConfig()), a);
  const auto fb = export_artifacts(run_experiment(SmallConfig()), b);
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t k = 0; k < fa.size(); ++k) {
    EXPECT_EQ(fa[k].filename(), fb[k].filename());
    EXPECT_EQ(Slurp(fa[k]), Slurp(fb[k])) << fa[k];
  }
}

TEST(RunExperiment, SmoteNeverTouchesTheTestPartition) {
  const auto on = Scratch("smote_on"), off = Scratch("smote_off");
  export_artifacts(run_experiment(SmallConfig()), on);
  export_artifacts(run_experiment(SmallConfig("[smote]\nenabled = false\n")), off);
  EXPECT_EQ(Slurp(on / "test_partition.csv"), Slurp(off / "test_partition.csv"));
  EXPECT_EQ(Slurp(on / "scores_gbdt_leafwise.csv"), Slurp(off / "scores_gbdt_leafwise.csv"));
  EXPECT_FALSE(fs::exists(off / "smote_draws.csv"));
  EXPECT_FALSE(fs::exists(off / "scores_knn_smote.csv"));
}

std::vector<std::vector<std::string>> ReadCells(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(Slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

TEST(RunExperiment, ReportMatchesExportedScores) {
  const auto dir = Scratch("recompute");
  export_artifacts(run_experiment(SmallConfig()), dir);
  const auto report = ReadCells(dir / "report.csv");
  ASSERT_EQ(report[0], (std::vector<std::string>{"model", "precision", "recall", "f1", "roc_auc"}));
  for (std::size_t r = 1; r < report.size(); ++r) {
    const auto scores = ReadCells(dir / ("scores_" + report[r][0] + ".csv"));
    std::vector<int> y;
    std::vector<double> s;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      y.push_back(std::stoi(scores[i][0]));
      s.push_back(std::stod(scores[i][1]));
    }
    const auto m = evaluate(y, s, 0.5);
    EXPECT_EQ(std::stod(report[r][1]), m.precision) << report[r][0];
    EXPECT_EQ(std::stod(report[r][2]), m.recall);
    EXPECT_EQ(std::stod(report[r][3]), m.f1);
    EXPECT_EQ(std::stod(report[r][4]), m.roc_auc);

    const auto roc = ReadCells(dir / ("roc_" + report[r][0] + ".csv"));
    EXPECT_EQ(roc[1], (std::vector<std::string>{"0", "0"}));
    EXPECT_EQ(roc.back(), (std::vector<std::string>{"1", "1"}));
  }
  EXPECT_TRUE(fs::exists(dir / "model_gbdt_leafwise.txt"));
  EXPECT_TRUE(fs::exists(dir / "model_gbdt_levelwise_smote.txt"));
  EXPECT_FALSE(fs::exists(dir / "embedding.csv"));

  const auto corr = ReadCells(dir / "correlation.csv");
  ASSERT_EQ(corr.size(), 10u);  // header + 8 features + label
  EXPECT_EQ(corr[0].back(), "Class");
  for (std::size_t a = 1; a < corr.size(); ++a) {
    EXPECT_EQ(corr[a][a], "1");
    for (std::size_t b = 1; b < corr[a].size(); ++b) EXPECT_EQ(corr[a][b], corr[b][a]);
  }
  const auto cleaning = ReadCells(dir / "cleaning.csv");
  EXPECT_EQ(cleaning.size(), 3u);
  EXPECT_EQ(cleaning[1][0], "V1");
}

TEST(RunExperiment, EmbeddingOnlyWhenRequested) {
  const auto dir = Scratch("embedding");
  const auto st = run_experiment(SmallConfig("[tsne]\nenabled = true\nperplexity = 10\niterations = 300\nmax_points = 120\n"));
  export_artifacts(st, dir);
  const auto rows = ReadCells(dir / "embedding.csv");
  EXPECT_EQ(rows.size(), 121u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"y1", "y2", "label"}));
}

TEST(RunExperiment, ErrorsNameTheStage) {
  ExperimentConfig cfg = SmallConfig();
  cfg.source = DataSource::kCsv;
  cfg.data_path = "/nonexistent/file.csv";
  try {
    run_experiment(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIoError);
    EXPECT_NE(std::string(e.what()).find("stage 'load'"), std::string::npos);
  }
  cfg = SmallConfig();
  cfg.smote_params.k = 500;
  try {
    run_experiment(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kKTooLarge);
    EXPECT_NE(std::string(e.what()).find("stage 'smote'"), std::string::npos);
  }
}

TEST(CorrelationMatrix, DiagonalAndConstantColumns) {
  const Dataset ds({"a", "b", "flat"}, {1, 2, 5, 2, 4, 5, 3, 6.5, 5, 4, 8, 5}, {0, 0, 1, 1});
  const auto c = correlation_matrix(ds);
  ASSERT_EQ(c.n, 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c(i, i), 1.0);
  EXPECT_EQ(c(2, 0), 0.0);
  EXPECT_GT(c(0, 1), 0.9);
  EXPECT_EQ(c(0, 1), c(1, 0));
}

GbdtModel SmallModel() {
  GbdtParams p;
  p.n_trees = 10;
  return train_gbdt(make_synthetic({500, 0.1, 4, 2, 1, 1.5, 3}), p);
}

TEST(Screening, ThresholdRule) {
  EXPECT_EQ(decide(0.9, 0.5), Decision::kReview);
  EXPECT_EQ(decide(0.1, 0.5), Decision::kApprove);
  EXPECT_EQ(decide(0.5, 0.5), Decision::kReview);
  EXPECT_EQ(decide(0.0, 0.0), Decision::kReview);
}

TEST(Screening, MatchesColumnsByName) {
  const auto model = SmallModel();
  NumericTable t;
  t.header = {"extra", "V4", "V3", "V2", "V1"};
  t.rows = 3;
  t.values = {9, 0.4, 0.3, 0.2, 0.1, 9, -1, 2, -3, 4, 9, 5, 5, 5, 5};
  const auto d = screen_transactions(model, t, 0.5);
  ASSERT_EQ(d.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    const std::vector<double> x{t.values[r * 5 + 4], t.values[r * 5 + 3], t.values[r * 5 + 2], t.values[r * 5 + 1]};
    EXPECT_EQ(d[r].index, r);
    EXPECT_EQ(d[r].score, model.predict_proba(x));
    EXPECT_EQ(d[r].decision, decide(d[r].score, 0.5));
  }
  for (const auto& x : screen_transactions(model, t, 0.0)) EXPECT_EQ(x.decision, Decision::kReview);
  std::ostringstream os;
  write_decisions_csv(os, d);
  EXPECT_EQ(os.str().substr(0, 21), "index,score,decision\n");
}

TEST(Screening, MissingColumnsAreListed) {
  NumericTable t;
  t.header = {"V1", "V3"};
  t.rows = 1;
  t.values = {0, 0};
  try {
    screen_transactions(SmallModel(), t, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSchemaMismatch);
    EXPECT_NE(std::string(e.what()).find("V2, V4"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Command-line front end

int Cli(const std::string& args) {
  const char* exe = std::getenv("PAYSHIELD_CLI");
  if (exe == nullptr) return -1;
  const std::string cmd = std::string(exe) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    if (std::getenv("PAYSHIELD_CLI") == nullptr) GTEST_SKIP() << "PAYSHIELD_CLI not set";
    dir_ = Scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
  fs::path dir_;
};

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(Cli("--help"), 0);
  EXPECT_EQ(Cli(""), 1);
  EXPECT_EQ(Cli("bogus"), 1);
  EXPECT_EQ(Cli("run /nonexistent.ini"), 1);
  Spit(dir_ / "empty.ini", "[data]\nsource = synthetic\n");
  EXPECT_EQ(Cli("run " + (dir_ / "empty.ini").string()), 1);
  Spit(dir_ / "missing.ini", "[data]\npath = /nonexistent.csv\n[models]\nlist = knn\n");
  EXPECT_EQ(Cli("run " + (dir_ / "missing.ini").string()), 2);
}

TEST_F(CliTest, RunGenerateScreenAndTsne) {
  const auto out = dir_ / "out";
  Spit(dir_ / "run.ini", std::string(kSmallConfig) + "[run]\noutput = " + out.string() + "\n");
  ASSERT_EQ(Cli("run " + (dir_ / "run.ini").string()), 0);
  EXPECT_TRUE(fs::exists(out / "report.csv"));
  const auto model = (out / "model_gbdt_leafwise.txt").string();

  const auto csv = (dir_ / "tx.csv").string();
  ASSERT_EQ(Cli("generate " + csv + " --rows 300 --positive-rate 0.1 --features 8 --informative 4 --seed 5"), 0);
  const auto decisions = dir_ / "decisions.csv";
  ASSERT_EQ(Cli("screen " + model + " " + csv + " --threshold 0.5 --out " + decisions.string()), 0);
  const auto rows = ReadCells(decisions);
  EXPECT_EQ(rows.size(), 301u);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    EXPECT_EQ(rows[r][2], std::stod(rows[r][1]) >= 0.5 ? "review" : "approve");
  }

  EXPECT_EQ(Cli("screen " + model + " " + csv + " --threshold 1.5"), 1);
  EXPECT_EQ(Cli("screen " + model + " " + csv), 1);
  Spit(dir_ / "narrow.csv", "V1,V2\n1,2\n");
  EXPECT_EQ(Cli("screen " + model + " " + (dir_ / "narrow.csv").string() + " --threshold 0.5"), 2);
  Spit(dir_ / "bad_model.txt", "gbdtmodel v9\n");
  EXPECT_EQ(Cli("screen " + (dir_ / "bad_model.txt").string() + " " + csv + " --threshold 0.5"), 2);

  const auto emb = dir_ / "emb.csv";
  ASSERT_EQ(Cli("tsne " + csv + " --perplexity 10 --seed 3 --iterations 300 --out " + emb.string()), 0);
  EXPECT_EQ(ReadCells(emb).size(), 301u);
  EXPECT_EQ(Cli("tsne " + csv + " --perplexity 500"), 1);
}

}  // namespace
}  // namespace payshield
