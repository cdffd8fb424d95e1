// eegraph command-line front end: synth -> features -> graph -> train with
// tune/explain on the side. Each subcommand is idempotent for a fixed config
// and seed; failures print a machine-readable JSON envelope on stderr and
// exit nonzero.

#include <CLI11.hpp>
#include <iostream>

#include "eegraph/pipeline.hpp"

using namespace eegraph;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string data_dir, out_dir, band, feature;
  int segment = -1;
  int k_neighbors = -1;
  int n_trials = -1;
  int jobs = -1;
  int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration file");
  cmd->add_option("--data-dir", args.data_dir, "recordings + manifest directory");
  cmd->add_option("--out-dir", args.out_dir, "artifact output directory");
  cmd->add_option("--band", args.band, "delta|theta|alpha|beta");
  cmd->add_option("--feature", args.feature, "pli|plv connectivity");
  cmd->add_option("--segment", args.segment, "segment 1..3");
  cmd->add_option("--k", args.k_neighbors, "kNN neighbor count");
  cmd->add_option("--n-trials", args.n_trials, "tuning budget");
  cmd->add_option("--jobs", args.jobs, "parallel workers for folds/stages");
  cmd->add_option("--seed", args.seed, "global RNG seed");
}

RunConfig resolve(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = RunConfig::from_json_file(args.config_path);
  if (!args.data_dir.empty()) cfg.data_dir = args.data_dir;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.band.empty()) cfg.band = args.band;
  if (!args.feature.empty()) cfg.feature = args.feature;
  if (args.segment > 0) cfg.segment = args.segment;
  if (args.k_neighbors > 0) cfg.k_neighbors = args.k_neighbors;
  if (args.n_trials > 0) cfg.n_trials = args.n_trials;
  if (args.jobs > 0) cfg.jobs = args.jobs;
  if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
  return cfg;
}

int fail(const std::string& stage, const std::string& message, const std::string& hint) {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["message"] = message;
  j["hint"] = hint;
  std::cerr << j.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG connectivity-graph classification pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string checkpoint;
  bool all_subjects = false, correct_only = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  auto* features = app.add_subcommand("features", "multitaper band features");
  auto* graph = app.add_subcommand("graph", "connectivity + kNN graphs");
  auto* train = app.add_subcommand("train", "25-fold repeated stratified CV");
  auto* tune = app.add_subcommand("tune", "MOTPE hyperparameter search");
  auto* explain = app.add_subcommand("explain", "export averaged adjacency topology");
  for (auto* cmd : {synth, features, graph, train, tune, explain}) add_common(cmd, args);
  explain->add_option("--checkpoint", checkpoint, "checkpoint manifest (default out_dir/checkpoint.json)");
  explain->add_flag("--all-subjects", all_subjects, "average over every subject, not just the checkpoint's test set");
  explain->add_flag("--correct-only", correct_only, "average only correctly classified subjects");
  bool matrix_csv = false;
  explain->add_flag("--matrix-csv", matrix_csv, "also dump the averaged matrices as CSV");

  CLI11_PARSE(app, argc, argv);

  std::string stage = "config";
  try {
    RunConfig cfg = resolve(args);
    cfg.explain_all_subjects = all_subjects;
    cfg.explain_correct_only = correct_only;
    cfg.explain_matrix_csv = matrix_csv;
    StageSummary summary;
    if (synth->parsed()) {
      stage = "synth";
      summary = cmd_synth(cfg);
      std::cout << "wrote " << summary.n_items << " recordings under " << summary.output << "\n";
    } else if (features->parsed()) {
      stage = "features";
      summary = cmd_features(cfg);
      std::cout << "wrote " << summary.n_items << " feature sets under " << summary.output << "\n";
    } else if (graph->parsed()) {
      stage = "graph";
      summary = cmd_graph(cfg);
      std::cout << "wrote " << summary.n_items << " graphs under " << summary.output << "\n";
    } else if (train->parsed()) {
      stage = "train";
      summary = cmd_train(cfg);
      std::cout << "ran " << summary.n_items << " CV iterations; report at " << summary.output
                << "\n";
    } else if (tune->parsed()) {
      stage = "tune";
      summary = cmd_tune(cfg);
      std::cout << "ran " << summary.n_items << " trials; journal at " << summary.output << "\n";
    } else if (explain->parsed()) {
      stage = "explain";
      summary = cmd_explain(cfg, checkpoint);
      std::cout << "averaged " << summary.n_items << " projections; topology at " << summary.output
                << "\n";
    }
    return 0;
  } catch (const StageError& e) {
    return fail(e.stage, e.what(), e.hint);
  } catch (const std::exception& e) {
    return fail(stage, e.what(), "");
  }
}
