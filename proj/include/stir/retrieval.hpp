#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include <json.hpp>

#include "stir/graph.hpp"

namespace stir {

struct RetrievalParams {
  std::size_t anchors = 3;  // N
  std::size_t hops = 2;     // L
  double eta = 0.4;

  static RetrievalParams main_text() { return {3, 2, 0.4}; }
  // Best row of the graph-retrieval hyperparameter ablation.
  static RetrievalParams ablation_best() { return {2, 2, 0.6}; }
};

struct AnchorSet {
  std::size_t requested = 0;
  std::vector<NodeId> anchors;  // by descending score, ties to the lower id
  std::vector<double> scores;

  bool operator==(const AnchorSet&) const = default;
};

struct HopResult {
  std::vector<NodeId> anchors;
  std::vector<NodeId> nodes;  // ascending
  std::map<NodeId, std::size_t> hop_distance;
  RetrievalParams params;

  bool contains(NodeId id) const { return hop_distance.count(id) != 0; }
};

// The N nodes most cosine-similar to the query (all nodes if fewer).
AnchorSet select_anchors(const SpatioTemporalGraph& graph, const Embedding& query, std::size_t n);

// Nodes within `hops` edges of any anchor, walking only edges whose weight
// is at least eta. Distances are shortest hop counts in that subgraph.
HopResult multi_hop_expand(const SpatioTemporalGraph& graph, const AnchorSet& anchors,
                           std::size_t hops, double eta);

inline constexpr std::size_t kHopOracleMaxNodes = 64;

// All-pairs hop distances on the eta-thresholded edge list by repeated
// relaxation, then the membership predicate applied per node. Testing
// reference for multi_hop_expand.
std::vector<NodeId> brute_force_hop_oracle(const SpatioTemporalGraph& graph,
                                           std::span<const NodeId> anchors, std::size_t hops,
                                           double eta);

nlohmann::json to_json(const AnchorSet& anchors);
nlohmann::json to_json(const HopResult& hop);
AnchorSet anchors_from_json(const nlohmann::json& j);
HopResult hop_from_json(const nlohmann::json& j);

}  // namespace stir
