#pragma once

#include <string>
#include <utility>
#include <vector>

#include "archpred/archpred.hpp"

namespace archpred::testing {

inline Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

inline NodeRecord node(std::int64_t id, const std::string& op, std::vector<std::int64_t> attrs = {}) {
  return {id, OpVocabulary::standard().at(op).category, op, std::move(attrs)};
}

/// Random DAG on n nodes: edges only go from lower to higher index, then the
/// ids are scrambled so storage order is not topological.
inline ArchGraph random_dag(Rng& rng, std::size_t n, double edge_prob = 0.35) {
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::int64_t(i) * 7 + 3;
  rng.shuffle(ids);
  std::vector<NodeRecord> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    nodes.push_back(rng.below(2) ? node(ids[i], "Conv", {3}) : node(ids[i], "ReLU"));
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.uniform() < edge_prob) edges.emplace_back(ids[i], ids[j]);
    }
  }
  rng.shuffle(edges);
  return ArchGraph::build(nodes, edges);
}

/// 0 -> 1 -> 2 chain of Conv3, ReLU, Conv1.
inline ArchGraph chain3() {
  return ArchGraph::build({node(0, "Conv", {3}), node(1, "ReLU"), node(2, "Conv", {1})}, {{0, 1}, {1, 2}});
}

/// Five nodes with a skip connection: 0->1->2->4, 0->3->4, 1->4.
inline ArchGraph five_node_graph() {
  return ArchGraph::build(
      {node(0, "Conv", {3}), node(1, "BN"), node(2, "ReLU"), node(3, "Pool", {2}), node(4, "Add")},
      {{0, 1}, {1, 2}, {2, 4}, {0, 3}, {3, 4}, {1, 4}});
}

inline PlatformRecord t4_fp32() { return {"t4-fp32", "Nv", "GPU", "FP32", 8.1, "Turing", 70}; }

}  // namespace archpred::testing
