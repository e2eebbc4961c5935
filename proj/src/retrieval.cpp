#include "stir/retrieval.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>

#include "stir/error.hpp"

namespace stir {

AnchorSet select_anchors(const SpatioTemporalGraph& graph, const Embedding& query,
                         std::size_t n) {
  if (graph.size() == 0) throw InvalidInputError("select_anchors: empty graph");
  if (n == 0) throw InvalidInputError("select_anchors: N must be positive");
  if (query.dim() != graph.dim()) {
    throw InvalidInputError("select_anchors: query dim " + std::to_string(query.dim()) +
                            " does not match node dim " + std::to_string(graph.dim()));
  }
  std::vector<double> scores(graph.size());
  for (const ClipNode& node : graph.nodes()) {
    scores[node.id] = cosine_similarity(query, node.embedding);
  }
  std::vector<NodeId> order(graph.size());
  std::iota(order.begin(), order.end(), NodeId{0});
  const std::size_t take = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](NodeId a, NodeId b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  AnchorSet out;
  out.requested = n;
  for (std::size_t i = 0; i < take; ++i) {
    out.anchors.push_back(order[i]);
    out.scores.push_back(scores[order[i]]);
  }
  return out;
}

HopResult multi_hop_expand(const SpatioTemporalGraph& graph, const AnchorSet& anchors,
                           std::size_t hops, double eta) {
  HopResult out;
  out.anchors = anchors.anchors;
  out.params = {anchors.requested, hops, eta};
  std::deque<NodeId> frontier;
  for (NodeId a : anchors.anchors) {
    graph.node(a);
    if (out.hop_distance.emplace(a, 0).second) frontier.push_back(a);
  }
  while (!frontier.empty()) {
    const NodeId cur = frontier.front();
    frontier.pop_front();
    const std::size_t d = out.hop_distance[cur];
    if (d == hops) continue;
    for (const Neighbor& nb : graph.neighbors(cur, eta)) {
      if (out.hop_distance.emplace(nb.node, d + 1).second) frontier.push_back(nb.node);
    }
  }
  for (const auto& [id, d] : out.hop_distance) out.nodes.push_back(id);
  return out;
}

std::vector<NodeId> brute_force_hop_oracle(const SpatioTemporalGraph& graph,
                                           std::span<const NodeId> anchors, std::size_t hops,
                                           double eta) {
  const std::size_t n = graph.size();
  if (n > kHopOracleMaxNodes) {
    throw InvalidInputError("brute_force_hop_oracle: graph exceeds " +
                            std::to_string(kHopOracleMaxNodes) + " nodes");
  }
  for (NodeId a : anchors) {
    if (a >= n) throw InvalidInputError("brute_force_hop_oracle: invalid anchor");
  }
  constexpr std::size_t kFar = std::numeric_limits<std::size_t>::max() / 4;
  std::vector<std::vector<std::size_t>> dist(n, std::vector<std::size_t>(n, kFar));
  for (std::size_t i = 0; i < n; ++i) dist[i][i] = 0;
  for (const Edge& e : graph.edges()) {
    if (e.weight >= eta) {
      dist[e.u][e.v] = 1;
      dist[e.v][e.u] = 1;
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
          if (dist[i][k] + dist[k][j] < dist[i][j]) {
            dist[i][j] = dist[i][k] + dist[k][j];
            changed = true;
          }
        }
      }
    }
  }
  std::vector<NodeId> out;
  for (NodeId j = 0; j < n; ++j) {
    std::size_t nearest = kFar;
    for (NodeId a : anchors) nearest = std::min(nearest, dist[a][j]);
    if (nearest <= hops) out.push_back(j);
  }
  return out;
}

nlohmann::json to_json(const AnchorSet& anchors) {
  return {{"N", anchors.requested}, {"anchors", anchors.anchors}, {"scores", anchors.scores}};
}

nlohmann::json to_json(const HopResult& hop) {
  nlohmann::json dist = nlohmann::json::object();
  for (const auto& [id, d] : hop.hop_distance) dist[std::to_string(id)] = d;
  return {{"anchors", hop.anchors},
          {"nodes", hop.nodes},
          {"hop_distance", std::move(dist)},
          {"params", {{"N", hop.params.anchors}, {"L", hop.params.hops}, {"eta", hop.params.eta}}}};
}

AnchorSet anchors_from_json(const nlohmann::json& j) {
  try {
    AnchorSet a;
    a.requested = j.at("N").get<std::size_t>();
    a.anchors = j.at("anchors").get<std::vector<NodeId>>();
    a.scores = j.at("scores").get<std::vector<double>>();
    if (a.anchors.size() != a.scores.size()) throw FormatError("anchors/scores length mismatch");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("anchor set JSON: ") + e.what());
  }
}

HopResult hop_from_json(const nlohmann::json& j) {
  try {
    HopResult h;
    h.anchors = j.at("anchors").get<std::vector<NodeId>>();
    h.nodes = j.at("nodes").get<std::vector<NodeId>>();
    for (const auto& [key, value] : j.at("hop_distance").items()) {
      h.hop_distance[static_cast<NodeId>(std::stoul(key))] = value.get<std::size_t>();
    }
    const auto& p = j.at("params");
    h.params = {p.at("N").get<std::size_t>(), p.at("L").get<std::size_t>(),
                p.at("eta").get<double>()};
    if (h.nodes.size() != h.hop_distance.size()) {
      throw FormatError("hop result: nodes and hop_distance disagree");
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("hop result JSON: ") + e.what());
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("hop result JSON: bad node id: ") + e.what());
  }
}

}  // namespace stir
