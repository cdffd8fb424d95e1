#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegraph/ggcn.hpp"
#include "eegraph/recording.hpp"

namespace eegraph {

struct GroupAdjacency {
  GroupLabel group = GroupLabel::HC;
  Matrix channel_matrix;  // [N x N], symmetric, nonnegative
  int n_samples = 0;
  std::string band;
  int segment = 0;
  std::string feature_kind;
};

// Lift the pooled adjacency back to channel space through the retained
// assignment: M = S_hat A^p S_hat^T. Uses the first pooling stage, the one
// closest to channel space.
inline Matrix project_pooled_adjacency(const ForwardTrace& trace, size_t graph_index = 0) {
  if (trace.mode != Mode::eval)
    throw std::invalid_argument("project_pooled_adjacency: trace must come from an eval-mode forward");
  if (graph_index >= trace.pools.size())
    throw std::invalid_argument("project_pooled_adjacency: trace missing pooling cache");
  const PoolCache& pool = trace.pools[graph_index];
  Matrix m = matmul(pool.s_hat, matmul(pool.a_pooled, transpose(pool.s_hat)));
  // Exact symmetry despite floating-point drift in the triple product.
  for (size_t i = 0; i < m.rows; ++i)
    for (size_t j = i + 1; j < m.cols; ++j) {
      const double avg = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = avg;
      m(j, i) = avg;
    }
  return m;
}

// Elementwise mean of per-sample projections over the members of one group.
inline GroupAdjacency group_average(const std::vector<Matrix>& projections,
                                    const std::vector<GroupLabel>& membership, GroupLabel group) {
  if (projections.size() != membership.size())
    throw std::invalid_argument("group_average: size mismatch");
  GroupAdjacency out;
  out.group = group;
  for (size_t i = 0; i < projections.size(); ++i) {
    if (membership[i] != group) continue;
    if (out.n_samples == 0)
      out.channel_matrix = projections[i];
    else
      out.channel_matrix = out.channel_matrix + projections[i];
    ++out.n_samples;
  }
  if (out.n_samples == 0) throw std::invalid_argument("group_average: empty group");
  out.channel_matrix = (1.0 / static_cast<double>(out.n_samples)) * out.channel_matrix;
  return out;
}

struct DifferenceEdge {
  std::string channel_a;
  std::string channel_b;
  double difference = 0.0;  // AD - HC
};

inline std::vector<DifferenceEdge> top_difference_edges(const Matrix& diff,
                                                        const std::vector<std::string>& channels,
                                                        size_t top_n = 10) {
  std::vector<DifferenceEdge> edges;
  for (size_t i = 0; i < diff.rows; ++i)
    for (size_t j = i + 1; j < diff.cols; ++j)
      if (diff(i, j) != 0.0) edges.push_back({channels[i], channels[j], diff(i, j)});
  std::stable_sort(edges.begin(), edges.end(), [](const DifferenceEdge& a, const DifferenceEdge& b) {
    return std::abs(a.difference) > std::abs(b.difference);
  });
  if (edges.size() > top_n) edges.resize(top_n);
  return edges;
}

// Topology export: montage coordinates, both group matrices, their AD - HC
// difference, and the top differing edges by magnitude (zero ties dropped).
inline nlohmann::ordered_json topology_json(const GroupAdjacency& hc, const GroupAdjacency& ad,
                                            const Montage& montage) {
  const auto names = montage.names();
  if (hc.channel_matrix.rows != names.size() || ad.channel_matrix.rows != names.size())
    throw std::invalid_argument("topology_json: montage/channel count mismatch");

  nlohmann::ordered_json j;
  j["montage"] = nlohmann::ordered_json::array();
  for (const auto& c : montage.channels)
    j["montage"].push_back({{"name", c.name}, {"x", c.x}, {"y", c.y}});
  auto matrix_to_json = [](const Matrix& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (size_t i = 0; i < m.rows; ++i) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (size_t k = 0; k < m.cols; ++k) row.push_back(m(i, k));
      rows.push_back(row);
    }
    return rows;
  };
  j["hc"] = {{"matrix", matrix_to_json(hc.channel_matrix)}, {"n_samples", hc.n_samples}};
  j["ad"] = {{"matrix", matrix_to_json(ad.channel_matrix)}, {"n_samples", ad.n_samples}};
  const Matrix diff = ad.channel_matrix - hc.channel_matrix;
  j["difference"] = matrix_to_json(diff);
  j["top_difference_edges"] = nlohmann::ordered_json::array();
  for (const auto& e : top_difference_edges(diff, names))
    j["top_difference_edges"].push_back(
        {{"a", e.channel_a}, {"b", e.channel_b}, {"difference", e.difference}});
  return j;
}

inline void export_topology(const GroupAdjacency& hc, const GroupAdjacency& ad,
                            const Montage& montage, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << topology_json(hc, ad, montage).dump(2) << "\n";
}

// Matrices also exportable as a plain CSV dump.
inline void export_matrix_csv(const Matrix& m, const std::vector<std::string>& channels,
                              const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (size_t c = 0; c < channels.size(); ++c) os << channels[c] << (c + 1 < channels.size() ? "," : "\n");
  char buf[32];
  for (size_t i = 0; i < m.rows; ++i)
    for (size_t j = 0; j < m.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      os << buf << (j + 1 < m.cols ? "," : "\n");
    }
}

}  // namespace eegraph
