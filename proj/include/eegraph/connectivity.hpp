#pragma once

#include <algorithm>
#include <complex>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegraph/mat.hpp"
#include "eegraph/spectral.hpp"

namespace eegraph {

enum class ConnectivityKind { PLI, PLV };

inline std::string to_string(ConnectivityKind k) { return k == ConnectivityKind::PLI ? "PLI" : "PLV"; }

inline ConnectivityKind connectivity_kind_from_string(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "pli") return ConnectivityKind::PLI;
  if (s == "plv") return ConnectivityKind::PLV;
  throw std::invalid_argument("unknown connectivity kind: " + s);
}

struct ConnectivityMatrix {
  ConnectivityKind kind = ConnectivityKind::PLV;
  Matrix values;  // [N x N], symmetric, entries in [0,1]
};

inline nlohmann::ordered_json connectivity_matrix_to_json(const ConnectivityMatrix& cm,
                                                          const std::vector<std::string>& channels) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(cm.kind);
  j["channels"] = channels;
  j["values"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < cm.values.rows; ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (size_t k = 0; k < cm.values.cols; ++k) row.push_back(cm.values(i, k));
    j["values"].push_back(row);
  }
  return j;
}

inline ConnectivityMatrix connectivity_matrix_from_json(const nlohmann::json& j) {
  ConnectivityMatrix cm;
  cm.kind = connectivity_kind_from_string(j.at("kind").get<std::string>());
  const auto& rows = j.at("values");
  const size_t n = rows.size();
  cm.values = Matrix(n, n);
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < n; ++k) cm.values(i, k) = rows[i][k].get<double>();
  return cm;
}

namespace detail {

// Band-aggregated cross-spectrum for one (window, taper) observation:
// sum over the band's bins of X * conj(Y).
inline std::vector<cdouble> cross_observations(const BandFeatureSet& fs, size_t x, size_t y) {
  std::vector<cdouble> obs(fs.n_obs);
  for (size_t o = 0; o < fs.n_obs; ++o) {
    const cdouble* cx = fs.obs_at(o, x);
    const cdouble* cy = fs.obs_at(o, y);
    cdouble s(0.0, 0.0);
    for (size_t b = 0; b < fs.n_band_bins; ++b) s += cx[b] * std::conj(cy[b]);
    obs[o] = s;
  }
  return obs;
}

}  // namespace detail

// PLI = |E[sign(Im S_xy)]| over (window, taper) observations; sign(0)
// contributes 0, so degenerate inputs yield 0.
inline double pli(std::span<const cdouble> cross_obs) {
  if (cross_obs.empty()) throw std::invalid_argument("pli: need at least one observation");
  double acc = 0.0;
  for (const cdouble& s : cross_obs) {
    const double im = s.imag();
    acc += (im > 0.0) - (im < 0.0);
  }
  return std::min(1.0, std::abs(acc / static_cast<double>(cross_obs.size())));
}

// PLV = |E[S_xy / |S_xy|]|; zero-magnitude observations are skipped, and if
// every observation is zero the value is defined as 0 (with a warning).
inline double plv(std::span<const cdouble> cross_obs) {
  if (cross_obs.empty()) throw std::invalid_argument("plv: need at least one observation");
  cdouble acc(0.0, 0.0);
  size_t used = 0;
  for (const cdouble& s : cross_obs) {
    const double mag = std::abs(s);
    if (mag > 0.0) {
      acc += s / mag;
      ++used;
    }
  }
  if (used == 0) {
    std::cerr << "plv: all observations have zero magnitude, defining PLV = 0\n";
    return 0.0;
  }
  return std::min(1.0, std::abs(acc) / static_cast<double>(used));
}

inline double pli(const BandFeatureSet& fs, size_t x, size_t y) {
  return pli(detail::cross_observations(fs, x, y));
}

inline double plv(const BandFeatureSet& fs, size_t x, size_t y) {
  return plv(detail::cross_observations(fs, x, y));
}

inline ConnectivityMatrix connectivity_matrix(const BandFeatureSet& fs, ConnectivityKind kind) {
  const size_t n = fs.channels.size();
  if (n < 2) throw std::invalid_argument("connectivity_matrix: need at least 2 channels");
  ConnectivityMatrix out;
  out.kind = kind;
  out.values = Matrix(n, n);
  for (size_t i = 0; i < n; ++i) {
    out.values(i, i) = (kind == ConnectivityKind::PLV) ? 1.0 : 0.0;
    for (size_t j = i + 1; j < n; ++j) {
      const auto obs = detail::cross_observations(fs, i, j);
      const double v = (kind == ConnectivityKind::PLI) ? pli(obs) : plv(obs);
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  }
  return out;
}

struct Edge {
  int a = 0;
  int b = 0;  // a < b
  double weight = 0.0;
};

// Undirected kNN graph over channels with node features attached; the sample
// unit fed to the classifier.
struct SparseGraph {
  std::string subject_id;
  int segment_id = 1;
  std::string band;
  std::string feature_kind;
  int n_nodes = 0;
  std::vector<std::string> channels;
  std::vector<Edge> edges;
  Matrix adjacency;     // symmetric, zero diagonal, weights in [0,1]
  Matrix node_features; // [N x F]
  GroupLabel label = GroupLabel::HC;

  int degree(int node) const {
    int d = 0;
    for (const auto& e : edges) d += (e.a == node || e.b == node);
    return d;
  }
};

// k-nearest-neighbor sparsification of a connectivity matrix with distance
// 1 - C (higher correlation = lower distance). Edges are the union of both
// endpoints' selections; ties break toward the lower channel index.
inline SparseGraph knn_sparsify(const ConnectivityMatrix& cm, int k_neighbors,
                                const BandFeatureSet& features) {
  const int n = static_cast<int>(cm.values.rows);
  if (k_neighbors < 1 || k_neighbors > n - 1)
    throw std::invalid_argument("knn_sparsify: k_neighbors out of range [1, N-1]");

  std::set<std::pair<int, int>> selected;
  for (int i = 0; i < n; ++i) {
    std::vector<int> order;
    order.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double da = 1.0 - cm.values(i, a);
      const double db = 1.0 - cm.values(i, b);
      if (da != db) return da < db;
      return a < b;
    });
    for (int r = 0; r < k_neighbors; ++r) {
      const int j = order[static_cast<size_t>(r)];
      selected.insert({std::min(i, j), std::max(i, j)});
    }
  }

  SparseGraph g;
  g.subject_id = features.subject_id;
  g.segment_id = features.segment_id;
  g.band = features.band.name;
  g.feature_kind = to_string(cm.kind);
  g.n_nodes = n;
  g.channels = features.channels;
  g.label = features.group;
  g.node_features = features.features;
  g.adjacency = Matrix(static_cast<size_t>(n), static_cast<size_t>(n));
  for (const auto& [a, b] : selected) {
    const double w = cm.values(static_cast<size_t>(a), static_cast<size_t>(b));
    g.edges.push_back(Edge{a, b, w});
    g.adjacency(static_cast<size_t>(a), static_cast<size_t>(b)) = w;
    g.adjacency(static_cast<size_t>(b), static_cast<size_t>(a)) = w;
  }
  return g;
}

inline nlohmann::ordered_json sparse_graph_to_json(const SparseGraph& g) {
  nlohmann::ordered_json j;
  j["subject_id"] = g.subject_id;
  j["segment_id"] = g.segment_id;
  j["band"] = g.band;
  j["feature_kind"] = g.feature_kind;
  j["label"] = to_string(g.label);
  j["n_nodes"] = g.n_nodes;
  j["channels"] = g.channels;
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : g.edges) j["edges"].push_back({e.a, e.b, e.weight});
  j["node_features"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < g.node_features.rows; ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (size_t c = 0; c < g.node_features.cols; ++c) row.push_back(g.node_features(i, c));
    j["node_features"].push_back(row);
  }
  return j;
}

inline SparseGraph sparse_graph_from_json(const nlohmann::json& j) {
  SparseGraph g;
  g.subject_id = j.at("subject_id").get<std::string>();
  g.segment_id = j.at("segment_id").get<int>();
  g.band = j.at("band").get<std::string>();
  g.feature_kind = j.at("feature_kind").get<std::string>();
  g.label = group_from_string(j.at("label").get<std::string>());
  g.n_nodes = j.at("n_nodes").get<int>();
  g.channels = j.at("channels").get<std::vector<std::string>>();
  const auto& feats = j.at("node_features");
  const size_t rows = feats.size();
  const size_t cols = rows ? feats[0].size() : 0;
  g.node_features = Matrix(rows, cols);
  for (size_t i = 0; i < rows; ++i)
    for (size_t c = 0; c < cols; ++c) g.node_features(i, c) = feats[i][c].get<double>();
  g.adjacency = Matrix(static_cast<size_t>(g.n_nodes), static_cast<size_t>(g.n_nodes));
  for (const auto& e : j.at("edges")) {
    Edge edge{e[0].get<int>(), e[1].get<int>(), e[2].get<double>()};
    g.edges.push_back(edge);
    g.adjacency(static_cast<size_t>(edge.a), static_cast<size_t>(edge.b)) = edge.weight;
    g.adjacency(static_cast<size_t>(edge.b), static_cast<size_t>(edge.a)) = edge.weight;
  }
  return g;
}

inline void write_sparse_graph(const SparseGraph& g, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << sparse_graph_to_json(g).dump(2) << "\n";
}

inline SparseGraph load_sparse_graph(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  is >> j;
  return sparse_graph_from_json(j);
}

}  // namespace eegraph
