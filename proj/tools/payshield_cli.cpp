// payshield command-line front end.
//
//   payshield run <config>
//   payshield screen <model> <csv> --threshold <t> [--out decisions.csv]
//   payshield tsne <csv> --perplexity <p> --seed <s> [--out embedding.csv]
//   payshield generate <out.csv> [--rows n] [--positive-rate r] [--seed s]
//
// Exit status: 0 on success, 1 on validation errors (bad arguments or
// configuration), 2 on runtime errors.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "payshield/embed.hpp"
#include "payshield/error.hpp"
#include "payshield/experiment.hpp"
#include "payshield/gbdt.hpp"
#include "payshield/synthetic.hpp"
#include "payshield/tabular.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int run_command(const std::string& config_path) {
  const auto cfg = payshield::load_experiment_config(config_path);
  const auto state = payshield::run_experiment(cfg);
  const auto files = payshield::export_artifacts(state, cfg.output_dir);

  std::cout << "model,precision,recall,f1,roc_auc\n";
  for (const auto& r : state.report.rows) {
    std::printf("%s,%.4f,%.4f,%.4f,%.4f\n", r.name.c_str(), r.precision, r.recall, r.f1, r.roc_auc);
  }
  const auto& p = state.report.provenance;
  std::cout << "rows loaded " << p.rows_loaded << ", after cleaning " << p.rows_after_cleaning << "; train "
            << p.train_negatives << "/" << p.train_positives;
  if (cfg.smote) std::cout << " (after SMOTE " << p.smote_negatives << "/" << p.smote_positives << ")";
  std::cout << "; test " << p.test_negatives << "/" << p.test_positives << "\n";
  std::cout << "wrote " << files.size() << " files to " << cfg.output_dir << "\n";
  return 0;
}

int screen_command(const std::string& model_path, const std::string& csv_path, double threshold,
                   const std::string& out_path) {
  const auto model = payshield::load_model_file(model_path);
  const auto table = payshield::read_numeric_table(csv_path);
  const auto decisions = payshield::screen_transactions(model, table, threshold);
  std::size_t review = 0;
  for (const auto& d : decisions) review += d.decision == payshield::Decision::kReview ? 1 : 0;
  if (out_path.empty()) {
    payshield::write_decisions_csv(std::cout, decisions);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw payshield::Error(payshield::ErrorKind::kIoError, "cannot write '" + out_path + "'");
    payshield::write_decisions_csv(out, decisions);
  }
  std::cerr << "approved " << decisions.size() - review << ", forwarded for review " << review << "\n";
  return 0;
}

int tsne_command(const std::string& csv_path, const std::string& label, payshield::TsneParams params,
                 const std::string& out_path) {
  const auto ds = payshield::load_csv(csv_path, label);
  const auto emb = payshield::run_tsne(payshield::points_from(ds), params);
  if (out_path.empty()) {
    payshield::write_embedding_csv(std::cout, emb, ds.labels());
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw payshield::Error(payshield::ErrorKind::kIoError, "cannot write '" + out_path + "'");
    payshield::write_embedding_csv(out, emb, ds.labels());
  }
  std::cerr << "KL " << emb.kl_history.front() << " -> " << emb.kl_history.back();
  if (emb.unconverged_rows > 0) std::cerr << " (" << emb.unconverged_rows << " rows missed the perplexity target)";
  std::cerr << "\n";
  return 0;
}

int generate_command(const payshield::SyntheticSpec& spec, const std::string& out_path) {
  payshield::write_csv(out_path, payshield::make_synthetic(spec));
  return 0;
}

bool is_validation(payshield::ErrorKind kind) {
  return kind == payshield::ErrorKind::kConfigError || kind == payshield::ErrorKind::kInvalidArgument;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imbalanced fraud-detection toolkit: experiments, screening and t-SNE"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiment grid described by a config file");
  run->add_option("config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);

  std::string model_path, screen_csv, screen_out;
  double threshold = 0.5;
  auto* screen = app.add_subcommand("screen", "Approve or forward transactions using a saved model");
  screen->add_option("model", model_path, "Model blob written by `run`")->required()->check(CLI::ExistingFile);
  screen->add_option("csv", screen_csv, "Transactions CSV")->required()->check(CLI::ExistingFile);
  screen->add_option("--threshold", threshold, "Scores at or above this go to review")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  screen->add_option("--out", screen_out, "Decisions CSV (default: stdout)");

  std::string tsne_csv, tsne_out, tsne_label = "Class";
  payshield::TsneParams tsne_params;
  auto* tsne = app.add_subcommand("tsne", "Embed a labelled CSV in two dimensions");
  tsne->add_option("csv", tsne_csv, "Input CSV")->required()->check(CLI::ExistingFile);
  tsne->add_option("--perplexity", tsne_params.perplexity, "Target perplexity")->capture_default_str();
  tsne->add_option("--seed", tsne_params.seed, "Random seed")->capture_default_str();
  tsne->add_option("--iterations", tsne_params.iterations, "Gradient steps")->capture_default_str();
  tsne->add_option("--label", tsne_label, "Label column")->capture_default_str();
  tsne->add_option("--out", tsne_out, "Embedding CSV (default: stdout)");

  std::string gen_out;
  payshield::SyntheticSpec spec;
  auto* gen = app.add_subcommand("generate", "Write the synthetic imbalanced dataset as CSV");
  gen->add_option("out", gen_out, "Output CSV")->required();
  gen->add_option("--rows", spec.rows)->capture_default_str();
  gen->add_option("--positive-rate", spec.positive_rate)->capture_default_str();
  gen->add_option("--features", spec.features)->capture_default_str();
  gen->add_option("--informative", spec.informative)->capture_default_str();
  gen->add_option("--class-sep", spec.class_sep)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) return run_command(config_path);
    if (*screen) return screen_command(model_path, screen_csv, threshold, screen_out);
    if (*tsne) return tsne_command(tsne_csv, tsne_label, tsne_params, tsne_out);
    if (*gen) return generate_command(spec, gen_out);
  } catch (const payshield::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation(e.kind()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
