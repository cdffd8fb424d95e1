#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegraph/ggcn.hpp"
#include "eegraph/rng.hpp"

namespace eegraph {

// 5x5 repeated stratified cross-validation; the inner first-of-4 split turns
// each train+val pool into a 3:1 train:val division, giving a 3:1:1 ratio
// overall and 25 (train, val, test) triples.
struct SplitPlan {
  int repeats = 5;
  int outer_folds = 5;
  int inner_folds = 4;
};

struct SubjectLabel {
  std::string id;
  GroupLabel label = GroupLabel::HC;
};

struct SplitTriple {
  int repeat = 0;
  int fold = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

namespace detail {

// Round-robin deal of each class's shuffled subjects into n folds.
inline std::vector<std::vector<std::string>> stratified_folds(
    const std::vector<SubjectLabel>& subjects, int n_folds, Rng& rng) {
  std::vector<std::vector<std::string>> by_class(2);
  for (const auto& s : subjects) by_class[s.label == GroupLabel::AD ? 1 : 0].push_back(s.id);
  std::vector<std::vector<std::string>> folds(static_cast<size_t>(n_folds));
  for (auto& cls : by_class) {
    std::sort(cls.begin(), cls.end());  // input order must not matter
    for (size_t i = cls.size(); i > 1; --i)
      std::swap(cls[i - 1], cls[rng.uniform_int(i)]);
    for (size_t i = 0; i < cls.size(); ++i)
      folds[i % static_cast<size_t>(n_folds)].push_back(cls[i]);
  }
  return folds;
}

}  // namespace detail

inline std::vector<SplitTriple> make_splits(const std::vector<SubjectLabel>& subjects,
                                            const SplitPlan& plan, uint64_t seed) {
  size_t n_hc = 0, n_ad = 0;
  for (const auto& s : subjects) (s.label == GroupLabel::AD ? n_ad : n_hc)++;
  if (n_hc < static_cast<size_t>(plan.outer_folds) || n_ad < static_cast<size_t>(plan.outer_folds))
    throw std::invalid_argument("make_splits: each class needs at least " +
                                std::to_string(plan.outer_folds) + " subjects");

  std::vector<SplitTriple> out;
  for (int rep = 0; rep < plan.repeats; ++rep) {
    Rng outer_rng(derive_seed(seed, static_cast<uint64_t>(rep), 0xf01d));
    const auto test_folds = detail::stratified_folds(subjects, plan.outer_folds, outer_rng);
    for (int fold = 0; fold < plan.outer_folds; ++fold) {
      SplitTriple triple;
      triple.repeat = rep;
      triple.fold = fold;
      triple.test = test_folds[static_cast<size_t>(fold)];
      std::vector<SubjectLabel> pool;
      for (const auto& s : subjects)
        if (std::find(triple.test.begin(), triple.test.end(), s.id) == triple.test.end())
          pool.push_back(s);
      Rng inner_rng(derive_seed(seed, static_cast<uint64_t>(rep), static_cast<uint64_t>(fold) + 1));
      const auto inner = detail::stratified_folds(pool, plan.inner_folds, inner_rng);
      triple.val = inner[0];  // first split of the stratified 4-fold
      for (size_t f = 1; f < inner.size(); ++f)
        triple.train.insert(triple.train.end(), inner[f].begin(), inner[f].end());
      std::sort(triple.train.begin(), triple.train.end());
      std::sort(triple.val.begin(), triple.val.end());
      std::sort(triple.test.begin(), triple.test.end());
      out.push_back(std::move(triple));
    }
  }
  return out;
}

struct TrainConfig {
  double learning_rate = 3e-3;
  int batch_size = 32;
  int max_epochs = 300;
  int patience = 15;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (learning_rate < 1e-4 || learning_rate > 1e-2)
      throw std::invalid_argument("TrainConfig: learning_rate must be in [1e-4, 1e-2]");
    if (batch_size != 16 && batch_size != 32 && batch_size != 64)
      throw std::invalid_argument("TrainConfig: batch_size must be 16, 32 or 64");
    if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  }

  nlohmann::ordered_json to_json() const {
    return {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"patience", patience}};
  }
};

// Bias-corrected Adam state, one slot pair per trainable tensor.
struct AdamState {
  int64_t step = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments;  // name -> (m, v)
};

inline void adam_step(ParamStore& params, AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (auto& e : params.entries) {
    if (!e.trainable) continue;
    for (double g : e.grad.v)
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient for parameter " + e.name);
    auto it = state.moments.find(e.name);
    if (it == state.moments.end())
      it = state.moments
               .emplace(e.name, std::make_pair(Matrix(e.value.rows, e.value.cols),
                                               Matrix(e.value.rows, e.value.cols)))
               .first;
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    for (size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad.v[i];
      m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * g;
      v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * g * g;
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      e.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  ++params.version;
}

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ParamStore best_params;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  std::vector<EpochRecord> history;
};

namespace detail {

inline double eval_loss(const std::vector<const SparseGraph*>& graphs, const GgcnConfig& cfg,
                        const ParamStore& params) {
  auto batch = std::make_shared<const BatchedGraph>(make_batch(graphs));
  auto trace = classify_forward(batch, cfg, params, Mode::eval);
  return cross_entropy(trace.logits_value(), batch->labels).loss;
}

}  // namespace detail

// Adam training with early stopping on validation loss: stop after `patience`
// consecutive epochs without a strict improvement (> 1e-6), return the
// parameters of the best-validation epoch.
inline TrainResult train_model(const TrainConfig& tc, const GgcnConfig& gc,
                               const std::vector<const SparseGraph*>& train_set,
                               const std::vector<const SparseGraph*>& val_set, uint64_t seed) {
  tc.validate();
  gc.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train_model: empty train or validation set");

  Rng rng(derive_seed(seed, 0x7a41c0de));
  ParamStore params = init_params(gc, train_set[0]->node_features.cols, rng);
  AdamState adam;

  TrainResult result;
  result.best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_improvement = 0;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
      std::vector<const SparseGraph*> chunk;
      for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
           ++i)
        chunk.push_back(train_set[order[i]]);
      auto batch = std::make_shared<const BatchedGraph>(make_batch(chunk));
      const MaskSet masks = make_dropout_masks(gc, *batch, rng);
      auto trace = classify_forward(batch, gc, params, Mode::train, &masks);
      const auto ce = cross_entropy(trace.logits_value(), batch->labels);
      if (!std::isfinite(ce.loss))
        throw std::runtime_error("train_model: diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch + 1));
      params.zero_grads();
      backward(trace, ce.dlogits, params);
      adam_step(params, adam, tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
      commit_bn_updates(trace, params);
      epoch_loss += ce.loss * static_cast<double>(chunk.size());
      seen += chunk.size();
    }
    epoch_loss /= static_cast<double>(seen);

    const double val_loss = detail::eval_loss(val_set, gc, params);
    if (!std::isfinite(val_loss))
      throw std::runtime_error("train_model: diverged (non-finite validation loss) at epoch " +
                               std::to_string(epoch + 1));
    result.history.push_back(EpochRecord{epoch_loss, val_loss});

    if (val_loss < best_val - 1e-6) {
      best_val = val_loss;
      result.best_epoch = epoch;
      result.best_params = params;
      since_improvement = 0;
    } else {
      ++since_improvement;
      if (since_improvement >= tc.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  result.best_val_loss = best_val;
  return result;
}

struct MetricReport {
  std::optional<double> auc;
  std::string auc_undefined_reason;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  double specificity = 0.0;
  int tp = 0, fp = 0, tn = 0, fn = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    if (auc)
      j["auc"] = *auc;
    else {
      j["auc"] = nullptr;
      j["auc_undefined_reason"] = auc_undefined_reason;
    }
    j["f1"] = f1;
    j["precision"] = precision;
    j["recall"] = recall;
    j["accuracy"] = accuracy;
    j["specificity"] = specificity;
    j["confusion"] = {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
    return j;
  }
};

// Rank-based AUC with the Mann-Whitney tie convention (ties count 1/2).
inline double rank_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups.
  std::vector<double> rank(scores.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  size_t n_pos = 0, n_neg = 0;
  for (size_t k = 0; k < scores.size(); ++k) {
    if (labels[k] == 1) {
      rank_sum_pos += rank[k];
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline MetricReport metrics_from_scores(const std::vector<double>& scores,
                                        const std::vector<int>& labels) {
  MetricReport r;
  size_t n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred_ad = scores[i] >= 0.5;
    if (labels[i] == 1) {
      ++n_pos;
      pred_ad ? ++r.tp : ++r.fn;
    } else {
      ++n_neg;
      pred_ad ? ++r.fp : ++r.tn;
    }
  }
  r.precision = (r.tp + r.fp) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = (r.tp + r.fn) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.specificity = (r.tn + r.fp) ? static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp) : 0.0;
  r.accuracy = scores.empty() ? 0.0
                              : static_cast<double>(r.tp + r.tn) / static_cast<double>(scores.size());
  r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                        : 0.0;
  if (n_pos == 0 || n_neg == 0) {
    r.auc = std::nullopt;
    r.auc_undefined_reason = "test set contains a single class";
  } else {
    r.auc = rank_auc(scores, labels);
  }
  return r;
}

// Eval-mode scoring of a test set: P(AD) via softmax over the logits.
inline MetricReport evaluate(const ParamStore& params, const GgcnConfig& cfg,
                             const std::vector<const SparseGraph*>& test_set) {
  if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
  auto batch = std::make_shared<const BatchedGraph>(make_batch(test_set));
  auto trace = classify_forward(batch, cfg, params, Mode::eval);
  const Matrix& logits = trace.logits_value();
  std::vector<double> scores(test_set.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    const double mx = std::max(logits(i, 0), logits(i, 1));
    const double e0 = std::exp(logits(i, 0) - mx);
    const double e1 = std::exp(logits(i, 1) - mx);
    scores[i] = e1 / (e0 + e1);
  }
  return metrics_from_scores(scores, batch->labels);
}

}  // namespace eegraph
