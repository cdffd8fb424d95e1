#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "eegraph/connectivity.hpp"
#include "eegraph/explain.hpp"
#include "eegraph/ggcn.hpp"
#include "eegraph/motpe.hpp"
#include "eegraph/recording.hpp"
#include "eegraph/spectral.hpp"
#include "eegraph/training.hpp"

namespace eegraph {

// Stage error carrying the machine-readable envelope fields.
struct StageError : std::runtime_error {
  std::string stage;
  std::string hint;
  StageError(std::string stage_, const std::string& message, std::string hint_ = "")
      : std::runtime_error(message), stage(std::move(stage_)), hint(std::move(hint_)) {}
};

struct RunConfig {
  std::string data_dir = "data";
  std::string out_dir = "out";
  std::string band = "alpha";
  std::string feature = "plv";
  int segment = 1;
  int k_neighbors = 5;
  int n_trials = 50;
  uint64_t seed = 1;
  int jobs = 1;
  bool explain_all_subjects = false;
  bool explain_correct_only = false;
  bool explain_matrix_csv = false;
  SynthSpec synth;
  WindowPlan window;
  TrainConfig train;
  GgcnConfig ggcn;

  void validate() const {
    band_by_name(band);
    connectivity_kind_from_string(feature);
    if (segment < 1 || segment > 3) throw std::invalid_argument("RunConfig: segment must be 1..3");
    if (jobs < 1) throw std::invalid_argument("RunConfig: jobs must be >= 1");
    if (n_trials < 1) throw std::invalid_argument("RunConfig: n_trials must be >= 1");
    train.validate();
    ggcn.validate();
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("band")) c.band = j.at("band").get<std::string>();
    if (j.contains("feature")) c.feature = j.at("feature").get<std::string>();
    if (j.contains("segment")) c.segment = j.at("segment").get<int>();
    if (j.contains("k_neighbors")) c.k_neighbors = j.at("k_neighbors").get<int>();
    if (j.contains("n_trials")) c.n_trials = j.at("n_trials").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
    if (j.contains("synth")) c.synth = SynthSpec::from_json(j.at("synth"));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      if (t.contains("learning_rate")) c.train.learning_rate = t.at("learning_rate").get<double>();
      if (t.contains("batch_size")) c.train.batch_size = t.at("batch_size").get<int>();
      if (t.contains("max_epochs")) c.train.max_epochs = t.at("max_epochs").get<int>();
      if (t.contains("patience")) c.train.patience = t.at("patience").get<int>();
    }
    if (j.contains("ggcn")) c.ggcn = GgcnConfig::from_json(j.at("ggcn"));
    return c;
  }

  static RunConfig from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw StageError("config", "cannot open config file: " + path);
    nlohmann::json j;
    is >> j;
    return from_json(j);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["data_dir"] = data_dir;
    j["out_dir"] = out_dir;
    j["band"] = band;
    j["feature"] = feature;
    j["segment"] = segment;
    j["k_neighbors"] = k_neighbors;
    j["n_trials"] = n_trials;
    j["seed"] = seed;
    j["jobs"] = jobs;
    j["synth"] = synth.to_json();
    j["train"] = train.to_json();
    j["ggcn"] = ggcn.to_json();
    return j;
  }
};

namespace detail {

template <typename Fn>
void parallel_for(int n, int jobs, Fn fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (int w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

inline std::string recording_path(const RunConfig& cfg, const std::string& subject, int segment) {
  return cfg.data_dir + "/recordings/" + subject + "_seg" + std::to_string(segment) + ".eegr";
}

inline std::string feature_stem(const RunConfig& cfg, const std::string& subject) {
  return cfg.out_dir + "/features/" + subject + "_seg" + std::to_string(cfg.segment) + "_" +
         cfg.band;
}

inline std::string graph_path(const RunConfig& cfg, const std::string& subject) {
  return cfg.out_dir + "/graphs/" + subject + ".json";
}

inline void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::string& path, const std::string& stage,
                                     const std::string& hint) {
  std::ifstream is(path);
  if (!is) throw StageError(stage, "missing " + path, hint);
  nlohmann::json j;
  is >> j;
  return j;
}

struct ManifestEntry {
  std::string subject;
  GroupLabel group;
};

inline std::vector<ManifestEntry> read_manifest(const RunConfig& cfg, const std::string& stage) {
  const auto j = read_json_file(cfg.data_dir + "/manifest.json", stage,
                                "run 'eegraph synth' first (or point --data-dir at a dataset)");
  std::vector<ManifestEntry> out;
  for (const auto& s : j.at("subjects"))
    out.push_back({s.at("id").get<std::string>(), group_from_string(s.at("group").get<std::string>())});
  return out;
}

inline std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

}  // namespace detail

struct StageSummary {
  int n_items = 0;
  std::string output;
};

// Generate the synthetic cohort and write it under data_dir along with a
// manifest of subjects and recording files.
inline StageSummary cmd_synth(const RunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.data_dir + "/recordings");
  const auto recordings = generate_synthetic(cfg.synth);

  nlohmann::ordered_json manifest;
  manifest["sample_rate_hz"] = cfg.synth.sample_rate_hz;
  manifest["synth"] = cfg.synth.to_json();
  manifest["subjects"] = nlohmann::ordered_json::array();
  manifest["recordings"] = nlohmann::ordered_json::array();
  std::vector<std::string> seen;
  for (const auto& rec : recordings) {
    const std::string path = detail::recording_path(cfg, rec.subject_id, rec.segment_id);
    write_recording(rec, path, RecordingFormat::binary);
    if (std::find(seen.begin(), seen.end(), rec.subject_id) == seen.end()) {
      seen.push_back(rec.subject_id);
      manifest["subjects"].push_back({{"id", rec.subject_id}, {"group", to_string(rec.group)}});
    }
    manifest["recordings"].push_back({{"subject", rec.subject_id},
                                      {"segment", rec.segment_id},
                                      {"path", "recordings/" + rec.subject_id + "_seg" +
                                                   std::to_string(rec.segment_id) + ".eegr"}});
  }
  detail::write_json_file(cfg.data_dir + "/manifest.json", manifest);
  return {static_cast<int>(recordings.size()), cfg.data_dir};
}

// Multitaper band features for the configured (band, segment).
inline StageSummary cmd_features(const RunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const auto subjects = detail::read_manifest(cfg, "features");
  fs::create_directories(cfg.out_dir + "/features");
  const Band band = band_by_name(cfg.band);

  detail::parallel_for(static_cast<int>(subjects.size()), cfg.jobs, [&](int i) {
    const auto& entry = subjects[static_cast<size_t>(i)];
    const std::string rec_path = detail::recording_path(cfg, entry.subject, cfg.segment);
    if (!fs::exists(rec_path))
      throw StageError("features", "missing recording " + rec_path, "run 'eegraph synth' first");
    const Recording rec = load_recording(rec_path, RecordingFormat::binary);
    const auto spectra = multitaper_spectra(rec, cfg.window);
    const auto feats = extract_band_features(spectra, band, rec);
    const std::string stem = detail::feature_stem(cfg, entry.subject);
    write_band_features(feats, stem + ".json", stem + ".bin");
  });

  nlohmann::ordered_json meta;
  meta["band"] = cfg.band;
  meta["segment"] = cfg.segment;
  meta["window_s"] = cfg.window.window_s;
  meta["step_s"] = cfg.window.step_s;
  detail::write_json_file(cfg.out_dir + "/features/_meta.json", meta);
  return {static_cast<int>(subjects.size()), cfg.out_dir + "/features"};
}

namespace detail {

inline void check_feature_meta(const RunConfig& cfg, const std::string& stage) {
  const auto meta = read_json_file(cfg.out_dir + "/features/_meta.json", stage,
                                   "run 'eegraph features' first");
  if (meta.at("band").get<std::string>() != cfg.band ||
      meta.at("segment").get<int>() != cfg.segment)
    throw StageError(stage, "feature files were built for band/segment " +
                                meta.at("band").get<std::string>() + "/" +
                                std::to_string(meta.at("segment").get<int>()),
                     "re-run 'eegraph features' with the current configuration");
}

inline BandFeatureSet load_features_for(const RunConfig& cfg, const std::string& subject,
                                        const std::string& stage) {
  const std::string path = feature_stem(cfg, subject) + ".json";
  if (!std::filesystem::exists(path))
    throw StageError(stage, "missing feature file " + path, "run 'eegraph features' first");
  return read_band_features(path);
}

}  // namespace detail

// Connectivity + kNN sparsification into per-subject graph files.
inline StageSummary cmd_graph(const RunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const auto subjects = detail::read_manifest(cfg, "graph");
  detail::check_feature_meta(cfg, "graph");
  fs::create_directories(cfg.out_dir + "/graphs");
  const ConnectivityKind kind = connectivity_kind_from_string(cfg.feature);

  detail::parallel_for(static_cast<int>(subjects.size()), cfg.jobs, [&](int i) {
    const auto& entry = subjects[static_cast<size_t>(i)];
    const auto feats = detail::load_features_for(cfg, entry.subject, "graph");
    const auto cm = connectivity_matrix(feats, kind);
    const auto graph = knn_sparsify(cm, cfg.k_neighbors, feats);
    write_sparse_graph(graph, detail::graph_path(cfg, entry.subject));
  });

  nlohmann::ordered_json meta;
  meta["band"] = cfg.band;
  meta["segment"] = cfg.segment;
  meta["feature"] = to_string(kind);
  meta["k_neighbors"] = cfg.k_neighbors;
  detail::write_json_file(cfg.out_dir + "/graphs/_meta.json", meta);
  return {static_cast<int>(subjects.size()), cfg.out_dir + "/graphs"};
}

namespace detail {

inline void check_graph_meta(const RunConfig& cfg, const std::string& stage) {
  const auto meta =
      read_json_file(cfg.out_dir + "/graphs/_meta.json", stage, "run 'eegraph graph' first");
  if (meta.at("band").get<std::string>() != cfg.band ||
      meta.at("segment").get<int>() != cfg.segment ||
      meta.at("feature").get<std::string>() != to_string(connectivity_kind_from_string(cfg.feature)) ||
      meta.at("k_neighbors").get<int>() != cfg.k_neighbors)
    throw StageError(stage, "graph files do not match the current configuration",
                     "re-run 'eegraph graph' with the current configuration");
}

inline std::vector<SparseGraph> load_all_graphs(const RunConfig& cfg, const std::string& stage) {
  const auto subjects = read_manifest(cfg, stage);
  std::vector<SparseGraph> graphs;
  for (const auto& s : subjects) {
    const std::string path = graph_path(cfg, s.subject);
    if (!std::filesystem::exists(path))
      throw StageError(stage, "missing graph file " + path, "run 'eegraph graph' first");
    graphs.push_back(load_sparse_graph(path));
  }
  return graphs;
}

struct CvIterationResult {
  int repeat = 0;
  int fold = 0;
  MetricReport metrics;
  ParamStore best_params;
  std::vector<std::string> test_subjects;
};

// One CV iteration: train on the triple's train set, early-stop on val,
// evaluate on test.
inline CvIterationResult run_cv_iteration(const SplitTriple& triple,
                                          const std::vector<SparseGraph>& graphs,
                                          const TrainConfig& tc, const GgcnConfig& gc,
                                          uint64_t seed) {
  auto collect = [&](const std::vector<std::string>& ids) {
    std::vector<const SparseGraph*> out;
    for (const auto& g : graphs)
      if (std::find(ids.begin(), ids.end(), g.subject_id) != ids.end()) out.push_back(&g);
    return out;
  };
  const auto train_set = collect(triple.train);
  const auto val_set = collect(triple.val);
  const auto test_set = collect(triple.test);
  const uint64_t fold_seed =
      derive_seed(seed, static_cast<uint64_t>(triple.repeat), static_cast<uint64_t>(triple.fold), 0xcf);
  auto trained = train_model(tc, gc, train_set, val_set, fold_seed);
  CvIterationResult res;
  res.repeat = triple.repeat;
  res.fold = triple.fold;
  res.metrics = evaluate(trained.best_params, gc, test_set);
  res.best_params = std::move(trained.best_params);
  res.test_subjects = triple.test;
  return res;
}

struct CvRun {
  std::vector<CvIterationResult> iterations;
  nlohmann::ordered_json report;
};

inline CvRun run_cross_validation(const RunConfig& cfg, const std::vector<SparseGraph>& graphs,
                                  const TrainConfig& tc, const GgcnConfig& gc) {
  std::vector<SubjectLabel> subjects;
  for (const auto& g : graphs) subjects.push_back({g.subject_id, g.label});
  const auto splits = make_splits(subjects, SplitPlan{}, cfg.seed);

  CvRun run;
  run.iterations.resize(splits.size());
  parallel_for(static_cast<int>(splits.size()), cfg.jobs, [&](int i) {
    run.iterations[static_cast<size_t>(i)] =
        run_cv_iteration(splits[static_cast<size_t>(i)], graphs, tc, gc, cfg.seed);
  });

  nlohmann::ordered_json per_iter = nlohmann::ordered_json::array();
  const std::vector<std::string> names = {"auc", "f1", "precision", "recall", "accuracy",
                                          "specificity"};
  std::map<std::string, std::vector<double>> values;
  for (const auto& it : run.iterations) {
    nlohmann::ordered_json j;
    j["repeat"] = it.repeat;
    j["fold"] = it.fold;
    j["test_subjects"] = it.test_subjects;
    j["metrics"] = it.metrics.to_json();
    per_iter.push_back(j);
    if (it.metrics.auc) values["auc"].push_back(*it.metrics.auc);
    values["f1"].push_back(it.metrics.f1);
    values["precision"].push_back(it.metrics.precision);
    values["recall"].push_back(it.metrics.recall);
    values["accuracy"].push_back(it.metrics.accuracy);
    values["specificity"].push_back(it.metrics.specificity);
  }
  nlohmann::ordered_json aggregate;
  for (const auto& name : names) {
    const auto& v = values[name];
    if (v.empty()) {
      aggregate[name] = nullptr;
      continue;
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    aggregate[name] = {{"mean", mean}, {"stdev", std::sqrt(var)}, {"n", v.size()}};
  }
  run.report["per_iteration"] = per_iter;
  run.report["aggregate"] = aggregate;
  return run;
}

}  // namespace detail

// Full 25-iteration CV; writes metrics.json and the best-AUC fold's
// checkpoint.
inline StageSummary cmd_train(const RunConfig& cfg) {
  cfg.validate();
  detail::check_graph_meta(cfg, "train");
  const auto graphs = detail::load_all_graphs(cfg, "train");
  std::filesystem::create_directories(cfg.out_dir);

  auto run = detail::run_cross_validation(cfg, graphs, cfg.train, cfg.ggcn);

  // Checkpoint the best iteration by test AUC (lowest index on ties).
  size_t best = 0;
  double best_auc = -1.0;
  for (size_t i = 0; i < run.iterations.size(); ++i) {
    const double auc = run.iterations[i].metrics.auc.value_or(-1.0);
    if (auc > best_auc) {
      best_auc = auc;
      best = i;
    }
  }
  nlohmann::ordered_json meta;
  meta["band"] = cfg.band;
  meta["feature"] = cfg.feature;
  meta["segment"] = cfg.segment;
  meta["k_neighbors"] = cfg.k_neighbors;
  meta["repeat"] = run.iterations[best].repeat;
  meta["fold"] = run.iterations[best].fold;
  meta["test_subjects"] = run.iterations[best].test_subjects;
  save_checkpoint(run.iterations[best].best_params, cfg.ggcn, meta, cfg.out_dir + "/checkpoint.json",
                  cfg.out_dir + "/checkpoint.bin");

  nlohmann::ordered_json report;
  // The echoed config identifies the experiment; host-local paths and worker
  // counts are environment, not identity, and must not break byte-level
  // reproducibility across machines.
  report["config"] = cfg.to_json();
  report["config"].erase("data_dir");
  report["config"].erase("out_dir");
  report["config"].erase("jobs");
  report["per_iteration"] = run.report["per_iteration"];
  report["aggregate"] = run.report["aggregate"];
  report["checkpoint"] = {{"manifest", "checkpoint.json"},
                          {"repeat", run.iterations[best].repeat},
                          {"fold", run.iterations[best].fold}};
  report["timestamp"] = detail::now_iso8601();
  detail::write_json_file(cfg.out_dir + "/metrics.json", report);
  return {static_cast<int>(run.iterations.size()), cfg.out_dir + "/metrics.json"};
}

namespace detail {

inline GgcnConfig ggcn_from_assignment(const Assignment& a, const GgcnConfig& defaults) {
  GgcnConfig gc = defaults;
  gc.blocks.clear();
  const int n_blocks = static_cast<int>(std::llround(a.at("n_blocks")));
  for (int b = 1; b <= n_blocks; ++b)
    gc.blocks.push_back(
        {static_cast<int>(std::llround(a.at("out_channels_" + std::to_string(b)))),
         static_cast<int>(std::llround(a.at("prop_steps_" + std::to_string(b))))});
  gc.dropout_p = a.at("dropout");
  gc.asap_ratio = a.at("asap_ratio");
  return gc;
}

}  // namespace detail

// MOTPE study over the tuned hyperparameter space; appends every trial to the
// JSON-lines journal and exports the final Pareto archive.
inline StageSummary cmd_tune(const RunConfig& cfg) {
  cfg.validate();
  detail::check_feature_meta(cfg, "tune");
  const auto subjects = detail::read_manifest(cfg, "tune");
  std::filesystem::create_directories(cfg.out_dir);

  // Connectivity matrices once; kNN graphs rebuilt per sampled K.
  const ConnectivityKind kind = connectivity_kind_from_string(cfg.feature);
  std::vector<BandFeatureSet> features;
  std::vector<ConnectivityMatrix> matrices(subjects.size());
  for (const auto& s : subjects) features.push_back(detail::load_features_for(cfg, s.subject, "tune"));
  detail::parallel_for(static_cast<int>(subjects.size()), cfg.jobs, [&](int i) {
    matrices[static_cast<size_t>(i)] = connectivity_matrix(features[static_cast<size_t>(i)], kind);
  });

  const std::string journal_path = cfg.out_dir + "/trials.jsonl";
  std::filesystem::remove(journal_path);
  const auto space = SearchSpace::default_space();
  MotpeOptions opt;
  std::vector<Trial> history;
  ParetoArchive archive;

  for (int i = 0; i < cfg.n_trials; ++i) {
    Trial trial;
    trial.id = i;
    trial.seed = derive_seed(cfg.seed, 0x7e57, static_cast<uint64_t>(i));
    Rng rng(trial.seed);
    trial.assignment = suggest(history, space, rng, opt);
    try {
      const int k = static_cast<int>(std::llround(trial.assignment.at("k_neighbors")));
      std::vector<SparseGraph> graphs;
      for (size_t s = 0; s < subjects.size(); ++s)
        graphs.push_back(knn_sparsify(matrices[s], k, features[s]));
      TrainConfig tc = cfg.train;
      tc.learning_rate = trial.assignment.at("lr");
      tc.batch_size = static_cast<int>(std::llround(trial.assignment.at("batch_size")));
      const GgcnConfig gc = detail::ggcn_from_assignment(trial.assignment, cfg.ggcn);
      RunConfig fold_cfg = cfg;
      fold_cfg.seed = derive_seed(cfg.seed, 0xc5, static_cast<uint64_t>(i));
      auto run = detail::run_cross_validation(fold_cfg, graphs, tc, gc);
      double auc = 0.0, precision = 0.0, specificity = 0.0, recall = 0.0;
      int n_auc = 0;
      for (const auto& it : run.iterations) {
        if (it.metrics.auc) {
          auc += *it.metrics.auc;
          ++n_auc;
        }
        precision += it.metrics.precision;
        specificity += it.metrics.specificity;
        recall += it.metrics.recall;
      }
      const double n = static_cast<double>(run.iterations.size());
      trial.objectives = {n_auc ? auc / n_auc : 0.0, precision / n, specificity / n, recall / n};
      trial.state = TrialState::complete;
    } catch (const std::exception&) {
      trial.state = TrialState::failed;
    }
    history.push_back(trial);
    archive.insert(trial);
    append_trial_journal(journal_path, trial);
  }

  nlohmann::ordered_json pareto;
  pareto["objectives"] = {"auc", "precision", "specificity", "recall"};
  pareto["front"] = nlohmann::ordered_json::array();
  for (const auto& t : archive.members) pareto["front"].push_back(trial_to_json(t));
  detail::write_json_file(cfg.out_dir + "/pareto.json", pareto);

  // Flat per-front hyperparameter table.
  {
    std::ofstream os(cfg.out_dir + "/pareto_table.csv");
    std::vector<std::string> cols;
    for (const auto& d : space.params) cols.push_back(d.name);
    os << "trial";
    for (const auto& c : cols) os << "," << c;
    os << ",auc,precision,specificity,recall\n";
    for (const auto& t : archive.members) {
      os << t.id;
      for (const auto& c : cols) {
        os << ",";
        const auto it = t.assignment.find(c);
        if (it != t.assignment.end()) os << it->second;
      }
      for (double o : t.objectives) os << "," << o;
      os << "\n";
    }
  }
  return {cfg.n_trials, journal_path};
}

// Project, average per group, and export the topology JSON.
inline StageSummary cmd_explain(const RunConfig& cfg, const std::string& checkpoint_path) {
  cfg.validate();
  detail::check_graph_meta(cfg, "explain");
  const std::string manifest =
      checkpoint_path.empty() ? cfg.out_dir + "/checkpoint.json" : checkpoint_path;
  if (!std::filesystem::exists(manifest))
    throw StageError("explain", "missing checkpoint " + manifest, "run 'eegraph train' first");
  auto ck = load_checkpoint(manifest);
  const auto graphs = detail::load_all_graphs(cfg, "explain");

  std::vector<std::string> wanted;
  if (!cfg.explain_all_subjects && ck.meta.contains("test_subjects"))
    wanted = ck.meta.at("test_subjects").get<std::vector<std::string>>();

  const Montage montage = default_montage();
  std::vector<Matrix> projections;
  std::vector<GroupLabel> membership;
  for (const auto& g : graphs) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), g.subject_id) == wanted.end())
      continue;
    if (g.channels != montage.names())
      throw StageError("explain", "graph channels do not match the montage for " + g.subject_id);
    auto batch = std::make_shared<const BatchedGraph>(make_batch({&g}));
    auto trace = classify_forward(batch, ck.config, ck.params, Mode::eval);
    if (cfg.explain_correct_only) {
      const Matrix& logits = trace.logits_value();
      const bool pred_ad = logits(0, 1) >= logits(0, 0);
      if (pred_ad != (g.label == GroupLabel::AD)) continue;
    }
    projections.push_back(project_pooled_adjacency(trace));
    membership.push_back(g.label);
  }
  if (projections.empty())
    throw StageError("explain", "no samples selected for explanation",
                     "check --all-subjects / --correct-only and the checkpoint's test subjects");

  const auto hc = group_average(projections, membership, GroupLabel::HC);
  const auto ad = group_average(projections, membership, GroupLabel::AD);
  const std::string out = cfg.out_dir + "/topology.json";
  export_topology(hc, ad, montage, out);
  if (cfg.explain_matrix_csv) {
    const auto names = montage.names();
    export_matrix_csv(hc.channel_matrix, names, cfg.out_dir + "/adjacency_hc.csv");
    export_matrix_csv(ad.channel_matrix, names, cfg.out_dir + "/adjacency_ad.csv");
    export_matrix_csv(ad.channel_matrix - hc.channel_matrix, names,
                      cfg.out_dir + "/adjacency_diff.csv");
  }
  return {static_cast<int>(projections.size()), out};
}

}  // namespace eegraph
