#include "stir/graph.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <set>
#include <tuple>

#include "stir/error.hpp"

namespace stir {

SpatioTemporalGraph::SpatioTemporalGraph(std::vector<ClipNode> nodes, std::vector<Edge> edges,
                                         double construction_floor)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), construction_floor_(construction_floor) {
  const std::size_t n = nodes_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (nodes_[i].id != i) throw FormatError("graph node ids must be 0..n-1 in order");
    if (nodes_[i].embedding.dim() != nodes_.front().embedding.dim()) {
      throw FormatError("graph node embeddings have mixed dimensions");
    }
    if (i > 0 && nodes_[i].clip.begin < nodes_[i - 1].clip.end) {
      throw FormatError("graph nodes are not in chronological order");
    }
  }
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.u, a.v, a.kind) < std::tie(b.u, b.v, b.kind);
  });
  std::size_t temporal = 0;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.u >= e.v || e.v >= n) throw FormatError("edge endpoints invalid or not canonical");
    if (i > 0 && edges_[i - 1].u == e.u && edges_[i - 1].v == e.v &&
        edges_[i - 1].kind == e.kind) {
      throw FormatError("duplicate edge");
    }
    if (e.kind == EdgeKind::kTemporal) {
      if (e.v != e.u + 1 || e.weight != 1.0) throw FormatError("malformed temporal edge");
      ++temporal;
    } else if (e.kind == EdgeKind::kSpatial) {
      if (!(e.weight >= -1.0 && e.weight <= 1.0)) throw FormatError("spatial weight outside [-1, 1]");
    } else {
      throw FormatError("unknown edge kind");
    }
  }
  if (n > 0 && temporal != n - 1) throw FormatError("temporal backbone incomplete");

  adjacency_.assign(n, {});
  for (std::uint32_t i = 0; i < edges_.size(); ++i) {
    adjacency_[edges_[i].u].push_back(i);
    adjacency_[edges_[i].v].push_back(i);
  }
  for (NodeId k = 0; k < n; ++k) {
    auto& adj = adjacency_[k];
    std::sort(adj.begin(), adj.end(), [&](std::uint32_t a, std::uint32_t b) {
      const Edge& ea = edges_[a];
      const Edge& eb = edges_[b];
      const NodeId na = ea.u == k ? ea.v : ea.u;
      const NodeId nb = eb.u == k ? eb.v : eb.u;
      return std::tie(na, ea.kind) < std::tie(nb, eb.kind);
    });
  }
}

const ClipNode& SpatioTemporalGraph::node(NodeId id) const {
  if (id >= nodes_.size()) throw InvalidInputError("invalid node id " + std::to_string(id));
  return nodes_[id];
}

std::vector<Neighbor> SpatioTemporalGraph::neighbors(NodeId id, double min_weight) const {
  if (id >= nodes_.size()) throw InvalidInputError("invalid node id " + std::to_string(id));
  std::vector<Neighbor> out;
  for (std::uint32_t idx : adjacency_[id]) {
    const Edge& e = edges_[idx];
    if (e.weight >= min_weight) out.push_back({e.u == id ? e.v : e.u, e});
  }
  return out;
}

bool SpatioTemporalGraph::operator==(const SpatioTemporalGraph& other) const {
  if (nodes_ != other.nodes_ || edges_.size() != other.edges_.size()) return false;
  if (std::memcmp(&construction_floor_, &other.construction_floor_, sizeof(double)) != 0) {
    return false;
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& a = edges_[i];
    const Edge& b = other.edges_[i];
    if (a.u != b.u || a.v != b.v || a.kind != b.kind ||
        std::memcmp(&a.weight, &b.weight, sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

SpatioTemporalGraph build_graph(std::span<const Clip> clips,
                                std::span<const Embedding> clip_embeddings,
                                double construction_floor) {
  if (clips.empty() || clips.size() != clip_embeddings.size()) {
    throw InvalidInputError("build_graph: need one embedding per clip and at least one clip");
  }
  const std::size_t n = clips.size();
  std::vector<ClipNode> nodes;
  nodes.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (clip_embeddings[k].dim() != clip_embeddings[0].dim()) {
      throw InvalidInputError("build_graph: clip embeddings have mixed dimensions");
    }
    nodes.push_back({static_cast<NodeId>(k), clips[k], clip_embeddings[k]});
  }
  std::vector<Edge> edges;
  for (NodeId i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, EdgeKind::kTemporal, 1.0});
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 2; j < n; ++j) {
      const double w = cosine_similarity(clip_embeddings[i], clip_embeddings[j]);
      if (w >= construction_floor) edges.push_back({i, j, EdgeKind::kSpatial, w});
    }
  }
  return SpatioTemporalGraph(std::move(nodes), std::move(edges), construction_floor);
}

std::vector<Neighbor> neighbors(const SpatioTemporalGraph& graph, NodeId id, double min_weight) {
  return graph.neighbors(id, min_weight);
}

// --- binary container ------------------------------------------------------

namespace {

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out_.append(reinterpret_cast<const char*>(raw), sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    if (in_.size() - pos_ < sizeof(T)) {
      throw FormatError(std::string("graph stream truncated while reading ") + what +
                        " at byte " + std::to_string(pos_));
    }
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  std::string_view bytes(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) throw FormatError(std::string("graph stream truncated in ") + what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_graph(const SpatioTemporalGraph& graph) {
  Writer w;
  w.bytes("STGR");
  w.put<std::uint16_t>(kGraphFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(graph.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(graph.edges().size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(graph.dim()));
  w.put<double>(graph.construction_floor());
  for (const ClipNode& node : graph.nodes()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(node.clip.begin));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(node.clip.end));
    w.put<double>(node.clip.start_time);
    w.put<double>(node.clip.end_time);
    for (float f : node.embedding.values()) w.put<float>(f);
  }
  for (const Edge& e : graph.edges()) {
    w.put<std::uint32_t>(e.u);
    w.put<std::uint32_t>(e.v);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.kind));
    w.put<double>(e.weight);
  }
  return w.take();
}

SpatioTemporalGraph load_graph(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != "STGR") throw FormatError("not a graph container (bad magic)");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kGraphFormatVersion) {
    throw FormatError("graph format version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kGraphFormatVersion) + ")");
  }
  const auto node_count = r.get<std::uint32_t>("node count");
  const auto edge_count = r.get<std::uint32_t>("edge count");
  const auto dim = r.get<std::uint32_t>("dim");
  const auto floor = r.get<double>("construction floor");
  if (node_count > 0 && dim == 0) throw FormatError("graph declares zero embedding dim");

  std::vector<ClipNode> nodes;
  nodes.reserve(std::min<std::size_t>(node_count, bytes.size()));
  for (std::uint32_t k = 0; k < node_count; ++k) {
    ClipNode node;
    node.id = k;
    node.clip.begin = r.get<std::uint32_t>("clip begin");
    node.clip.end = r.get<std::uint32_t>("clip end");
    node.clip.start_time = r.get<double>("clip start");
    node.clip.end_time = r.get<double>("clip end time");
    std::vector<float> values(dim);
    for (auto& v : values) v = r.get<float>("embedding");
    try {
      node.embedding = Embedding(std::move(values));
    } catch (const InvalidInputError& e) {
      throw FormatError("node " + std::to_string(k) + ": " + e.what());
    }
    if (node.clip.end <= node.clip.begin) throw FormatError("node has an empty clip span");
    nodes.push_back(std::move(node));
  }
  std::vector<Edge> edges;
  edges.reserve(std::min<std::size_t>(edge_count, bytes.size()));
  for (std::uint32_t i = 0; i < edge_count; ++i) {
    Edge e;
    e.u = r.get<std::uint32_t>("edge u");
    e.v = r.get<std::uint32_t>("edge v");
    const auto kind = r.get<std::uint8_t>("edge kind");
    if (kind > 1) throw FormatError("unknown edge kind " + std::to_string(kind));
    e.kind = static_cast<EdgeKind>(kind);
    e.weight = r.get<double>("edge weight");
    edges.push_back(e);
  }
  if (!r.done()) throw FormatError("trailing bytes after graph records");
  return SpatioTemporalGraph(std::move(nodes), std::move(edges), floor);
}

nlohmann::json graph_to_json(const SpatioTemporalGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const ClipNode& node : graph.nodes()) {
    nodes.push_back({{"id", node.id},
                     {"begin", node.clip.begin},
                     {"end", node.clip.end},
                     {"start_time", node.clip.start_time},
                     {"end_time", node.clip.end_time},
                     {"embedding", std::vector<float>(node.embedding.values().begin(),
                                                      node.embedding.values().end())}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : graph.edges()) {
    edges.push_back({{"u", e.u},
                     {"v", e.v},
                     {"kind", e.kind == EdgeKind::kTemporal ? "temporal" : "spatial"},
                     {"weight", e.weight}});
  }
  return {{"version", kGraphFormatVersion},
          {"dim", graph.dim()},
          {"construction_floor", graph.construction_floor()},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
}

}  // namespace stir
