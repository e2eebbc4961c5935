#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stir/embedding.hpp"
#include "stir/segmentation.hpp"

namespace stir {

using NodeId = std::uint32_t;

struct ClipNode {
  NodeId id = 0;
  Clip clip;
  Embedding embedding;

  bool operator==(const ClipNode& other) const {
    return id == other.id && clip == other.clip && bit_equal(embedding, other.embedding);
  }
};

enum class EdgeKind : std::uint8_t { kTemporal = 0, kSpatial = 1 };

// Undirected edge stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  EdgeKind kind = EdgeKind::kTemporal;
  double weight = 1.0;

  bool operator==(const Edge&) const = default;
};

struct Neighbor {
  NodeId node = 0;
  Edge edge;
};

// Clip nodes in chronological order, a temporal edge of weight 1 between
// each consecutive pair, and a cosine-weighted spatial edge between every
// non-adjacent pair whose weight reached the construction floor. Immutable.
class SpatioTemporalGraph {
 public:
  SpatioTemporalGraph() = default;

  // Validates every structural invariant; throws FormatError when violated.
  SpatioTemporalGraph(std::vector<ClipNode> nodes, std::vector<Edge> edges,
                      double construction_floor);

  const std::vector<ClipNode>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  double construction_floor() const noexcept { return construction_floor_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t dim() const noexcept { return nodes_.empty() ? 0 : nodes_.front().embedding.dim(); }

  const ClipNode& node(NodeId id) const;

  // Incident edges with weight >= min_weight, by ascending neighbor id.
  std::vector<Neighbor> neighbors(NodeId id, double min_weight) const;

  bool operator==(const SpatioTemporalGraph& other) const;

 private:
  std::vector<ClipNode> nodes_;
  std::vector<Edge> edges_;
  double construction_floor_ = 0.0;
  // Per node: indices into edges_, ordered by neighbor id.
  std::vector<std::vector<std::uint32_t>> adjacency_;
};

SpatioTemporalGraph build_graph(std::span<const Clip> clips,
                                std::span<const Embedding> clip_embeddings,
                                double construction_floor);

std::vector<Neighbor> neighbors(const SpatioTemporalGraph& graph, NodeId id, double min_weight);

// Binary container, little-endian:
//   header: magic "STGR", u16 version, u32 node count, u32 edge count,
//           u32 dim, f64 construction floor
//   node:   u32 begin, u32 end, f64 start time, f64 end time, f32[dim]
//   edge:   u32 u, u32 v, u8 kind, f64 weight
inline constexpr std::uint16_t kGraphFormatVersion = 1;
std::string serialize_graph(const SpatioTemporalGraph& graph);
SpatioTemporalGraph load_graph(std::string_view bytes);

nlohmann::json graph_to_json(const SpatioTemporalGraph& graph);

}  // namespace stir
