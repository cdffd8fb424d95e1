#pragma once

#include <algorithm>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "eegraph/connectivity.hpp"
#include "eegraph/mat.hpp"
#include "eegraph/rng.hpp"
#include "eegraph/tape.hpp"

namespace eegraph {

struct BlockConfig {
  int out_channels = 32;
  int n_prop_steps = 3;
};

struct GgcnConfig {
  std::vector<BlockConfig> blocks = {{32, 3}};
  double dropout_p = 0.2;
  double asap_ratio = 0.5;
  int hidden_width = 64;
  int n_classes = 2;

  int n_blocks() const { return static_cast<int>(blocks.size()); }

  void validate() const {
    if (blocks.empty() || blocks.size() > 3)
      throw std::invalid_argument("GgcnConfig: n_blocks must be in [1,3]");
    for (const auto& b : blocks) {
      if (b.out_channels < 1 || b.out_channels > 256)
        throw std::invalid_argument("GgcnConfig: out_channels must be in [1,256]");
      if (b.n_prop_steps < 1 || b.n_prop_steps > 17)
        throw std::invalid_argument("GgcnConfig: n_prop_steps must be in [1,17]");
    }
    if (dropout_p < 0.1 || dropout_p > 0.5)
      throw std::invalid_argument("GgcnConfig: dropout_p must be in [0.1,0.5]");
    if (asap_ratio < 0.1 || asap_ratio > 1.0)
      throw std::invalid_argument("GgcnConfig: asap_ratio must be in [0.1,1.0]");
    if (hidden_width < 1) throw std::invalid_argument("GgcnConfig: hidden_width must be >= 1");
    if (n_classes != 2) throw std::invalid_argument("GgcnConfig: n_classes must be 2");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["blocks"] = nlohmann::ordered_json::array();
    for (const auto& b : blocks) j["blocks"].push_back({{"out_channels", b.out_channels},
                                                        {"n_prop_steps", b.n_prop_steps}});
    j["dropout_p"] = dropout_p;
    j["asap_ratio"] = asap_ratio;
    j["hidden_width"] = hidden_width;
    j["n_classes"] = n_classes;
    return j;
  }

  static GgcnConfig from_json(const nlohmann::json& j) {
    GgcnConfig c;
    c.blocks.clear();
    for (const auto& b : j.at("blocks"))
      c.blocks.push_back({b.at("out_channels").get<int>(), b.at("n_prop_steps").get<int>()});
    c.dropout_p = j.at("dropout_p").get<double>();
    c.asap_ratio = j.at("asap_ratio").get<double>();
    c.hidden_width = j.at("hidden_width").get<int>();
    c.n_classes = j.at("n_classes").get<int>();
    return c;
  }
};

// Disjoint union of graphs for minibatching; no cross-graph edges exist by
// construction.
struct BatchedGraph {
  int n_graphs = 0;
  int n_nodes_total = 0;
  std::vector<int> node_offset;   // per graph
  std::vector<int> n_nodes;       // per graph
  std::vector<Matrix> adjacency;  // per graph, weighted, symmetric
  std::vector<int> graph_of_node;
  Matrix features;  // [n_nodes_total x F]
  std::vector<int> labels;
  // 0/1 neighborhood structure (edges + self) of the disjoint union; drives
  // attention support and cluster membership.
  Matrix structure;
};

inline BatchedGraph make_batch(const std::vector<const SparseGraph*>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("make_batch: empty batch");
  BatchedGraph b;
  b.n_graphs = static_cast<int>(graphs.size());
  size_t total = 0;
  const size_t f = graphs[0]->node_features.cols;
  for (const auto* g : graphs) {
    if (g->n_nodes <= 0) throw std::invalid_argument("make_batch: empty graph");
    if (g->node_features.cols != f)
      throw std::invalid_argument("make_batch: feature width mismatch across graphs");
    b.node_offset.push_back(static_cast<int>(total));
    b.n_nodes.push_back(g->n_nodes);
    total += static_cast<size_t>(g->n_nodes);
  }
  b.n_nodes_total = static_cast<int>(total);
  b.features = Matrix(total, f);
  b.structure = Matrix(total, total);
  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto* g = graphs[gi];
    const size_t off = static_cast<size_t>(b.node_offset[gi]);
    b.adjacency.push_back(g->adjacency);
    b.labels.push_back(g->label == GroupLabel::AD ? 1 : 0);
    for (int n = 0; n < g->n_nodes; ++n) {
      b.graph_of_node.push_back(static_cast<int>(gi));
      for (size_t c = 0; c < f; ++c)
        b.features(off + static_cast<size_t>(n), c) = g->node_features(static_cast<size_t>(n), c);
      b.structure(off + static_cast<size_t>(n), off + static_cast<size_t>(n)) = 1.0;
    }
    for (const auto& e : g->edges) {
      b.structure(off + static_cast<size_t>(e.a), off + static_cast<size_t>(e.b)) = 1.0;
      b.structure(off + static_cast<size_t>(e.b), off + static_cast<size_t>(e.a)) = 1.0;
    }
  }
  return b;
}

// Named tensors plus same-shaped gradient buffers. Running batch-norm
// statistics live here too, marked non-trainable.
struct ParamStore {
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;
  };
  std::vector<Entry> entries;
  std::unordered_map<std::string, size_t> index;
  uint64_t version = 0;

  void add(const std::string& name, Matrix value, bool trainable = true) {
    if (index.count(name)) throw std::invalid_argument("ParamStore: duplicate tensor " + name);
    index[name] = entries.size();
    Matrix grad(value.rows, value.cols);
    entries.push_back(Entry{name, std::move(value), std::move(grad), trainable});
  }

  Entry& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::invalid_argument("ParamStore: unknown tensor " + name);
    return entries[it->second];
  }
  const Entry& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::invalid_argument("ParamStore: unknown tensor " + name);
    return entries[it->second];
  }

  Matrix& value(const std::string& name) { return at(name).value; }
  const Matrix& value(const std::string& name) const { return at(name).value; }
  Matrix& grad(const std::string& name) { return at(name).grad; }

  void zero_grads() {
    for (auto& e : entries) std::fill(e.grad.v.begin(), e.grad.v.end(), 0.0);
  }

  size_t n_trainable_scalars() const {
    size_t n = 0;
    for (const auto& e : entries)
      if (e.trainable) n += e.value.size();
    return n;
  }
};

namespace detail {

inline Matrix uniform_init(size_t rows, size_t cols, size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (auto& v : m.v) v = rng.uniform(-bound, bound);
  return m;
}

}  // namespace detail

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for weights, zeros for biases,
// identity-like batch-norm state.
inline ParamStore init_params(const GgcnConfig& cfg, size_t in_features, Rng& rng) {
  cfg.validate();
  ParamStore p;
  size_t width = in_features;
  for (size_t b = 0; b < cfg.blocks.size(); ++b) {
    const size_t c = static_cast<size_t>(cfg.blocks[b].out_channels);
    if (width > c)
      throw std::invalid_argument("init_params: input width " + std::to_string(width) +
                                  " exceeds out_channels of block " + std::to_string(b));
    const std::string pre = "block" + std::to_string(b) + ".";
    for (int s = 0; s < cfg.blocks[b].n_prop_steps; ++s)
      p.add(pre + "theta" + std::to_string(s), detail::uniform_init(c, c, c, rng));
    for (const char* g : {"wz", "uz", "wr", "ur", "wn", "un"})
      p.add(pre + "gru." + g, detail::uniform_init(c, c, c, rng));
    for (const char* g : {"bz", "br", "bwn", "bun"}) p.add(pre + "gru." + g, Matrix(1, c));
    p.add(pre + "bn.gamma", Matrix(1, c, 1.0));
    p.add(pre + "bn.beta", Matrix(1, c));
    p.add(pre + "bn.running_mean", Matrix(1, c), false);
    p.add(pre + "bn.running_var", Matrix(1, c, 1.0), false);
    width = c;
  }
  p.add("asap.att_w1", detail::uniform_init(width, width, width, rng));
  p.add("asap.att_w2", detail::uniform_init(width, width, width, rng));
  p.add("asap.omega", detail::uniform_init(width, 1, width, rng));
  p.add("asap.le1", detail::uniform_init(width, 1, width, rng));
  p.add("asap.le2", detail::uniform_init(width, 1, width, rng));
  p.add("asap.le3", detail::uniform_init(width, 1, width, rng));
  const size_t h = static_cast<size_t>(cfg.hidden_width);
  p.add("head.w1", detail::uniform_init(h, width, width, rng));
  p.add("head.b1", Matrix(1, h));
  p.add("head.w2", detail::uniform_init(2, h, h, rng));
  p.add("head.b2", Matrix(1, 2));
  return p;
}

enum class Mode { train, eval };

// Pre-scaled inverted-dropout masks (entries 0 or 1/(1-p)); fixed masks make
// forward replay and finite-difference checks exact.
struct MaskSet {
  std::vector<Matrix> block_masks;
  Matrix head_mask;
};

inline MaskSet make_dropout_masks(const GgcnConfig& cfg, const BatchedGraph& batch, Rng& rng) {
  MaskSet m;
  const double keep = 1.0 - cfg.dropout_p;
  // Block dropout removes whole nodes (every channel of a row at once); the
  // classifier head drops individual hidden units.
  for (const auto& b : cfg.blocks) {
    Matrix mask(static_cast<size_t>(batch.n_nodes_total), static_cast<size_t>(b.out_channels));
    for (size_t row = 0; row < mask.rows; ++row) {
      const double v = rng.uniform() < keep ? 1.0 / keep : 0.0;
      for (size_t col = 0; col < mask.cols; ++col) mask(row, col) = v;
    }
    m.block_masks.push_back(std::move(mask));
  }
  m.head_mask = Matrix(static_cast<size_t>(batch.n_graphs), static_cast<size_t>(cfg.hidden_width));
  for (auto& v : m.head_mask.v) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return m;
}

// Per-graph pooling cache kept for backward-free inspection and the
// explainability projection.
struct PoolCache {
  std::vector<int> kept;  // local node ids of retained clusters, in rank order
  Matrix s_hat;           // [N x K] pruned assignment
  Matrix a_cluster;       // [N x N] weighted adjacency + I
  Matrix a_pooled;        // [K x K]
  std::vector<double> fitness;  // per local node
};

struct ForwardTrace {
  std::shared_ptr<const BatchedGraph> batch;
  tape::Tape tape;
  tape::Var logits;
  Mode mode = Mode::eval;
  MaskSet masks;
  std::vector<std::pair<std::string, tape::Var>> param_leaves;
  // name -> updated running stats (committed by the training loop)
  std::vector<std::pair<std::string, Matrix>> bn_updates;
  std::vector<PoolCache> pools;
  Matrix attention;  // full [T x T] assignment over the batch union
  uint64_t params_version = 0;

  const Matrix& logits_value() const { return tape.val(logits); }
};

namespace detail {

struct ForwardCtx {
  tape::Tape* tape;
  const ParamStore* params;
  ForwardTrace* trace;
  std::unordered_map<std::string, tape::Var> leaf_cache;

  tape::Var pvar(const std::string& name) {
    auto it = leaf_cache.find(name);
    if (it != leaf_cache.end()) return it->second;
    const auto& e = params->at(name);
    tape::Var v = tape->leaf(e.value, e.trainable);
    leaf_cache[name] = v;
    trace->param_leaves.push_back({name, v});
    return v;
  }
};

inline void check_finite(const Matrix& m, const std::string& layer) {
  if (!m.all_finite())
    throw std::runtime_error("non-finite activation in layer " + layer);
}

}  // namespace detail

// One GGCN block: n_prop_steps of gated message passing (per-step theta,
// shared GRU), i.e. m_i = sum_j e_ji * Theta * h_j followed by
// h_i = GRU(m_i, h_i) with update-gate convention h' = (1-z) h + z n.
inline tape::Var ggcn_block_forward(detail::ForwardCtx& ctx,
                                    std::shared_ptr<const std::vector<Matrix>> adj,
                                    std::shared_ptr<const std::vector<int>> offsets, tape::Var h,
                                    const std::string& prefix, const BlockConfig& block) {
  tape::Tape& t = *ctx.tape;
  const size_t c = static_cast<size_t>(block.out_channels);
  const size_t in_width = t.val(h).cols;
  if (in_width > c)
    throw std::invalid_argument(prefix + ": input width exceeds out_channels");
  if (in_width < c) h = t.pad_cols(h, c);

  const tape::Var wz = ctx.pvar(prefix + "gru.wz"), uz = ctx.pvar(prefix + "gru.uz");
  const tape::Var wr = ctx.pvar(prefix + "gru.wr"), ur = ctx.pvar(prefix + "gru.ur");
  const tape::Var wn = ctx.pvar(prefix + "gru.wn"), un = ctx.pvar(prefix + "gru.un");
  const tape::Var bz = ctx.pvar(prefix + "gru.bz"), br = ctx.pvar(prefix + "gru.br");
  const tape::Var bwn = ctx.pvar(prefix + "gru.bwn"), bun = ctx.pvar(prefix + "gru.bun");

  for (int s = 0; s < block.n_prop_steps; ++s) {
    const tape::Var theta = ctx.pvar(prefix + "theta" + std::to_string(s));
    const tape::Var msg = t.block_adj_matmul(adj, offsets, t.matmul_nt(h, theta));
    const tape::Var z =
        t.sigmoid(t.add_rowvec(t.add(t.matmul_nt(msg, wz), t.matmul_nt(h, uz)), bz));
    const tape::Var r =
        t.sigmoid(t.add_rowvec(t.add(t.matmul_nt(msg, wr), t.matmul_nt(h, ur)), br));
    const tape::Var cand = t.tanh_(t.add(t.add_rowvec(t.matmul_nt(msg, wn), bwn),
                                         t.mul(r, t.add_rowvec(t.matmul_nt(h, un), bun))));
    h = t.add(t.mul(t.affine(z, -1.0, 1.0), h), t.mul(z, cand));
  }
  return h;
}

inline int asap_cluster_count(double ratio, int n_nodes) {
  // ceil(k*N) with a tolerance so exact products are not pushed up a step by
  // floating-point dust.
  int k = static_cast<int>(std::ceil(ratio * static_cast<double>(n_nodes) - 1e-9));
  k = std::max(1, std::min(k, n_nodes));
  return k;
}

struct AsapOut {
  tape::Var pooled;                       // [sum K_g x C]
  std::shared_ptr<std::vector<int>> graph_of_pooled;
};

// ASAP pooling: master-query attention over 1-hop clusters, LEConv fitness,
// TopK selection of ceil(k*N) clusters per graph, pooled adjacency
// A^p = S_hat^T (A + I) S_hat.
inline AsapOut asap_pool(detail::ForwardCtx& ctx, const BatchedGraph& batch,
                         std::shared_ptr<const std::vector<Matrix>> adj,
                         std::shared_ptr<const std::vector<int>> offsets, tape::Var h,
                         double ratio) {
  tape::Tape& t = *ctx.tape;
  auto mask = std::make_shared<const Matrix>(batch.structure);

  const tape::Var w1 = ctx.pvar("asap.att_w1");
  const tape::Var w2 = ctx.pvar("asap.att_w2");
  const tape::Var omega = ctx.pvar("asap.omega");

  const tape::Var master = t.masked_rowwise_max(h, mask);
  const tape::Var score =
      t.attention_scores(t.matmul_nt(master, w1), t.matmul_nt(h, w2), omega, mask, 0.2);
  const tape::Var alpha = t.masked_softmax_rows(score, mask);
  const tape::Var xc = t.matmul(alpha, h);

  // LEConv fitness on the cluster graph with adjacency A + I.
  const tape::Var le1 = ctx.pvar("asap.le1");
  const tape::Var le2 = ctx.pvar("asap.le2");
  const tape::Var le3 = ctx.pvar("asap.le3");
  Matrix deg(static_cast<size_t>(batch.n_nodes_total), 1);
  for (int g = 0; g < batch.n_graphs; ++g) {
    const Matrix& a = batch.adjacency[static_cast<size_t>(g)];
    const size_t off = static_cast<size_t>(batch.node_offset[static_cast<size_t>(g)]);
    for (size_t i = 0; i < a.rows; ++i) {
      double s = 1.0;  // self weight from +I
      for (size_t j = 0; j < a.cols; ++j) s += a(i, j);
      deg(off + i, 0) = s;
    }
  }
  const tape::Var deg_v = t.constant(deg);
  const tape::Var t3 = t.matmul(xc, le3);
  const tape::Var neigh = t.add(t.block_adj_matmul(adj, offsets, t3), t3);
  const tape::Var fitness_in =
      t.sub(t.add(t.matmul(xc, le1), t.mul(t.matmul(xc, le2), deg_v)), neigh);
  const tape::Var phi = t.sigmoid(fitness_in);
  const tape::Var xhat = t.mul_colvec(xc, phi);

  // TopK per graph: higher fitness wins, equal fitness breaks to lower index.
  const Matrix& phi_v = t.val(phi);
  const Matrix& alpha_v = t.val(alpha);
  std::vector<int> kept_global;
  auto graph_of_pooled = std::make_shared<std::vector<int>>();
  ctx.trace->pools.clear();
  for (int g = 0; g < batch.n_graphs; ++g) {
    const int n = batch.n_nodes[static_cast<size_t>(g)];
    const int off = batch.node_offset[static_cast<size_t>(g)];
    const int keep = asap_cluster_count(ratio, n);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double fa = phi_v(static_cast<size_t>(off + a), 0);
      const double fb = phi_v(static_cast<size_t>(off + b), 0);
      if (fa != fb) return fa > fb;
      return a < b;
    });
    order.resize(static_cast<size_t>(keep));

    PoolCache cache;
    cache.kept = order;
    cache.fitness.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      cache.fitness[static_cast<size_t>(i)] = phi_v(static_cast<size_t>(off + i), 0);
    const Matrix& a = batch.adjacency[static_cast<size_t>(g)];
    cache.a_cluster = a;
    for (int i = 0; i < n; ++i)
      cache.a_cluster(static_cast<size_t>(i), static_cast<size_t>(i)) += 1.0;
    // S_hat(n, c) = alpha(kept[c], n) restricted to this graph's nodes.
    cache.s_hat = Matrix(static_cast<size_t>(n), static_cast<size_t>(keep));
    for (int cidx = 0; cidx < keep; ++cidx)
      for (int node = 0; node < n; ++node)
        cache.s_hat(static_cast<size_t>(node), static_cast<size_t>(cidx)) =
            alpha_v(static_cast<size_t>(off + order[static_cast<size_t>(cidx)]),
                    static_cast<size_t>(off + node));
    cache.a_pooled = matmul(transpose(cache.s_hat), matmul(cache.a_cluster, cache.s_hat));
    ctx.trace->pools.push_back(std::move(cache));

    for (int r = 0; r < keep; ++r) {
      kept_global.push_back(off + order[static_cast<size_t>(r)]);
      graph_of_pooled->push_back(g);
    }
  }
  ctx.trace->attention = alpha_v;

  return AsapOut{t.gather_rows(xhat, kept_global), graph_of_pooled};
}

// Full classifier forward. Train mode needs dropout masks (see
// make_dropout_masks); eval mode must not get any.
inline ForwardTrace classify_forward(std::shared_ptr<const BatchedGraph> batch,
                                     const GgcnConfig& cfg, const ParamStore& params, Mode mode,
                                     const MaskSet* masks = nullptr) {
  cfg.validate();
  if (mode == Mode::train && masks == nullptr)
    throw std::invalid_argument("classify_forward: train mode requires dropout masks");
  if (mode == Mode::eval && masks != nullptr)
    throw std::invalid_argument("classify_forward: eval mode must not take dropout masks");

  ForwardTrace trace;
  trace.batch = batch;
  trace.mode = mode;
  if (masks) trace.masks = *masks;
  trace.params_version = params.version;

  detail::ForwardCtx ctx{&trace.tape, &params, &trace, {}};
  tape::Tape& t = trace.tape;

  auto adj = std::make_shared<const std::vector<Matrix>>(batch->adjacency);
  auto offsets = std::make_shared<const std::vector<int>>(batch->node_offset);

  tape::Var h = t.constant(batch->features);
  for (size_t b = 0; b < cfg.blocks.size(); ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    h = ggcn_block_forward(ctx, adj, offsets, h, pre, cfg.blocks[b]);

    const tape::Var gamma = ctx.pvar(pre + "bn.gamma");
    const tape::Var beta = ctx.pvar(pre + "bn.beta");
    if (mode == Mode::train) {
      auto bn = t.batch_norm_train(h, gamma, beta);
      h = bn.y;
      // Momentum-0.1 running-stat updates, committed by the caller.
      const Matrix& rm = params.value(pre + "bn.running_mean");
      const Matrix& rv = params.value(pre + "bn.running_var");
      Matrix nm = rm, nv = rv;
      for (size_t j = 0; j < nm.cols; ++j) {
        nm(0, j) = 0.9 * rm(0, j) + 0.1 * bn.mean(0, j);
        nv(0, j) = 0.9 * rv(0, j) + 0.1 * bn.var(0, j);
      }
      trace.bn_updates.push_back({pre + "bn.running_mean", std::move(nm)});
      trace.bn_updates.push_back({pre + "bn.running_var", std::move(nv)});
    } else {
      h = t.batch_norm_eval(h, gamma, beta, params.value(pre + "bn.running_mean"),
                            params.value(pre + "bn.running_var"));
    }
    h = t.relu(h);
    if (mode == Mode::train) h = t.mul_mask(h, trace.masks.block_masks[b]);
    detail::check_finite(t.val(h), pre + "out");
  }

  AsapOut pooled = asap_pool(ctx, *batch, adj, offsets, h, cfg.asap_ratio);
  detail::check_finite(t.val(pooled.pooled), "asap");

  const tape::Var r = t.segment_max(pooled.pooled, pooled.graph_of_pooled, batch->n_graphs);

  tape::Var z1 = t.relu(t.add_rowvec(t.matmul_nt(r, ctx.pvar("head.w1")), ctx.pvar("head.b1")));
  if (mode == Mode::train) z1 = t.mul_mask(z1, trace.masks.head_mask);
  trace.logits = t.add_rowvec(t.matmul_nt(z1, ctx.pvar("head.w2")), ctx.pvar("head.b2"));
  detail::check_finite(t.val(trace.logits), "head");
  return trace;
}

struct CrossEntropyOut {
  double loss = 0.0;
  Matrix dlogits;  // gradient averaged over the batch
};

// Softmax cross-entropy; gradient is (softmax - onehot)/B.
inline CrossEntropyOut cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows != labels.size()) throw std::invalid_argument("cross_entropy: batch mismatch");
  CrossEntropyOut out;
  out.dlogits = Matrix(logits.rows, logits.cols);
  const double inv_b = 1.0 / static_cast<double>(logits.rows);
  for (size_t i = 0; i < logits.rows; ++i) {
    if (labels[i] < 0 || static_cast<size_t>(labels[i]) >= logits.cols)
      throw std::invalid_argument("cross_entropy: label out of range");
    double mx = logits(i, 0);
    for (size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
    double denom = 0.0;
    for (size_t j = 0; j < logits.cols; ++j) denom += std::exp(logits(i, j) - mx);
    const double log_denom = std::log(denom) + mx;
    out.loss += inv_b * (log_denom - logits(i, static_cast<size_t>(labels[i])));
    for (size_t j = 0; j < logits.cols; ++j) {
      const double p = std::exp(logits(i, j) - log_denom);
      out.dlogits(i, j) = inv_b * (p - (static_cast<size_t>(labels[i]) == j ? 1.0 : 0.0));
    }
  }
  return out;
}

// Reverse sweep from dLoss/dlogits into the parameter gradient buffers
// (accumulating; call params.zero_grads() between steps).
inline void backward(ForwardTrace& trace, const Matrix& dlogits, ParamStore& params) {
  if (trace.params_version != params.version)
    throw std::runtime_error("backward: stale trace (parameters changed since forward)");
  trace.tape.backward(trace.logits, dlogits);
  for (const auto& [name, var] : trace.param_leaves) {
    auto& entry = params.at(name);
    if (!entry.trainable) continue;
    const Matrix g = trace.tape.grad(var);
    for (size_t i = 0; i < g.size(); ++i) entry.grad.v[i] += g.v[i];
  }
}

inline void commit_bn_updates(const ForwardTrace& trace, ParamStore& params) {
  for (const auto& [name, value] : trace.bn_updates) params.value(name) = value;
  ++params.version;
}

// Checkpoints: JSON manifest (names, shapes, dtype, byte offsets) alongside a
// packed little-endian binary blob.
inline void save_checkpoint(const ParamStore& params, const GgcnConfig& cfg,
                            const nlohmann::ordered_json& extra, const std::string& manifest_path,
                            const std::string& bin_path) {
  nlohmann::ordered_json j;
  j["format"] = "eegraph-checkpoint-v1";
  j["config"] = cfg.to_json();
  j["meta"] = extra;
  j["dtype"] = "float64";
  j["binary"] = bin_path.substr(bin_path.find_last_of('/') + 1);
  j["tensors"] = nlohmann::ordered_json::array();
  size_t offset = 0;
  for (const auto& e : params.entries) {
    j["tensors"].push_back({{"name", e.name},
                            {"rows", e.value.rows},
                            {"cols", e.value.cols},
                            {"trainable", e.trainable},
                            {"byte_offset", offset}});
    offset += e.value.size() * sizeof(double);
  }
  std::ofstream ms(manifest_path);
  if (!ms) throw std::runtime_error("cannot open for writing: " + manifest_path);
  ms << j.dump(2) << "\n";
  std::ofstream bs(bin_path, std::ios::binary);
  if (!bs) throw std::runtime_error("cannot open for writing: " + bin_path);
  for (const auto& e : params.entries)
    bs.write(reinterpret_cast<const char*>(e.value.v.data()),
             static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  if (!bs) throw std::runtime_error("write failed: " + bin_path);
}

struct Checkpoint {
  ParamStore params;
  GgcnConfig config;
  nlohmann::json meta;
};

inline Checkpoint load_checkpoint(const std::string& manifest_path) {
  std::ifstream ms(manifest_path);
  if (!ms) throw std::runtime_error("cannot open: " + manifest_path);
  nlohmann::json j;
  ms >> j;
  if (j.at("format").get<std::string>() != "eegraph-checkpoint-v1")
    throw std::runtime_error(manifest_path + ": unknown checkpoint format");
  Checkpoint ck;
  ck.config = GgcnConfig::from_json(j.at("config"));
  ck.meta = j.value("meta", nlohmann::json::object());
  const std::string dir = manifest_path.substr(0, manifest_path.find_last_of('/') + 1);
  const std::string bin_path = dir + j.at("binary").get<std::string>();
  std::ifstream bs(bin_path, std::ios::binary);
  if (!bs) throw std::runtime_error("cannot open: " + bin_path);
  for (const auto& tj : j.at("tensors")) {
    Matrix m(tj.at("rows").get<size_t>(), tj.at("cols").get<size_t>());
    bs.seekg(static_cast<std::streamoff>(tj.at("byte_offset").get<size_t>()));
    if (!bs.read(reinterpret_cast<char*>(m.v.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw std::runtime_error(bin_path + ": truncated checkpoint");
    ck.params.add(tj.at("name").get<std::string>(), std::move(m), tj.at("trainable").get<bool>());
  }
  return ck;
}

}  // namespace eegraph
