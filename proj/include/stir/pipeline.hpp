#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stir/embedding.hpp"
#include "stir/embedding_cache.hpp"
#include "stir/graph.hpp"
#include "stir/retrieval.hpp"
#include "stir/scoring.hpp"
#include "stir/segmentation.hpp"

namespace stir {

struct VideoManifest {
  std::string video_id;
  double fps = 3.0;
  std::vector<FrameRef> frames;
  std::optional<std::string> source_path;

  // Frames strictly increasing by index and timestamps within 1 ms of
  // index / fps. Throws InvalidInputError naming the first offending frame.
  void validate() const;
};

VideoManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VideoManifest& manifest);
VideoManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const VideoManifest& manifest, const std::filesystem::path& path);

struct PipelineConfig {
  std::size_t anchors = 3;  // N
  std::size_t hops = 2;     // L
  double eta = 0.4;
  double kappa_s = 3.25;
  double penalty_scale = 1.0;
  std::optional<double> penalty;  // absolute penalty; overrides penalty_scale
  std::size_t min_clip_len = 3;
  std::size_t frame_stride = 1;
  std::size_t fallback_k = 8;
  double construction_floor = 0.0;
  std::size_t max_frames = 0;  // 0 disables the cap
  std::size_t score_batch_size = 16;
  std::size_t score_parallelism = 4;
  EmbeddingBackendDescriptor embed_backend = EmbeddingBackendDescriptor::mock(0, 64);
  EmbeddingBackendDescriptor boundary_backend = EmbeddingBackendDescriptor::mock(0, 64);
  ScorerBackendDescriptor scorer_backend = ScorerBackendDescriptor::mock(0);
  std::optional<std::filesystem::path> cache_dir;

  // Throws InvalidInputError on out-of-range values.
  void validate() const;

  // "main" (N=3, L=2, eta=0.4) or "ablation-best" (N=2, L=2, eta=0.6).
  void apply_preset(std::string_view name);
  // Sets one flat key from its text form; unknown keys are rejected.
  void set(std::string_view key, const std::string& value);
  // Points every mock backend at one seed.
  void set_seed(std::uint64_t seed);

  RetrievalParams retrieval() const { return {anchors, hops, eta}; }
};

// Flat key/value JSON object, applied over `base`.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
nlohmann::json to_json(const PipelineConfig& config);

struct EvidenceSet {
  std::string query;
  std::string video_id;
  std::vector<ScoredFrame> frames;
  bool fallback_used = false;
  SegmentationResult segmentation;
  AnchorSet anchors;
  HopResult hop;
};

nlohmann::json to_json(const SegmentationResult& seg);
SegmentationResult segmentation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvidenceSet& evidence);
EvidenceSet evidence_from_json(const nlohmann::json& j);
void emit_evidence(const EvidenceSet& evidence, const std::filesystem::path& path);
EvidenceSet read_evidence(const std::filesystem::path& path);

// Live backends for one run. When `cache` is set, every backend call goes
// through it.
struct PipelineBackends {
  EmbeddingProvider& boundary;
  EmbeddingProvider& graph;
  RelevanceScorer& scorer;
  EmbeddingCache* cache = nullptr;
};

// Intermediate artifacts, exposed for the stage-by-stage CLI verbs.
struct SegmentStage {
  SegmentationResult segmentation;
  std::vector<Clip> clips;
};

SegmentStage run_segmentation(const VideoManifest& manifest, const PipelineConfig& config,
                              EmbeddingProvider& boundary);
SpatioTemporalGraph run_graph_construction(const VideoManifest& manifest,
                                           std::span<const Clip> clips,
                                           const PipelineConfig& config, EmbeddingProvider& graph);
std::vector<Clip> clips_of(const SpatioTemporalGraph& graph);
EvidenceSet run_scoring(const VideoManifest& manifest, std::string_view query,
                        std::span<const Clip> clips, const AnchorSet& anchors,
                        const HopResult& hop, const SegmentationResult& segmentation,
                        const PipelineConfig& config, RelevanceScorer& scorer);

// embed frames -> segment -> embed clips -> graph -> embed query -> anchors
// -> multi-hop -> frame pool -> score -> threshold filter.
// Backend failures are rethrown with the failing stage named.
EvidenceSet run_pipeline(const VideoManifest& manifest, std::string_view query,
                         const PipelineConfig& config, PipelineBackends& backends);

// Builds backends from the config's descriptors and cache_dir.
EvidenceSet run_pipeline(const VideoManifest& manifest, std::string_view query,
                         const PipelineConfig& config);

}  // namespace stir
