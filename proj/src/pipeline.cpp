#include "stir/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stir/error.hpp"
#include "stir/remote_backend.hpp"

namespace stir {

// --- manifest --------------------------------------------------------------

void VideoManifest::validate() const {
  if (video_id.empty()) throw InvalidInputError("manifest: video_id is empty");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw InvalidInputError("manifest: fps must be > 0");
  if (frames.empty()) throw InvalidInputError("manifest: no frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameRef& f = frames[i];
    if (f.frame_index < 0) {
      throw InvalidInputError("manifest: frames[" + std::to_string(i) + "] has a negative index");
    }
    if (i > 0 && f.frame_index <= frames[i - 1].frame_index) {
      throw InvalidInputError("manifest: frames not sorted; first offending index is " +
                              std::to_string(f.frame_index) + " at frames[" + std::to_string(i) +
                              "]");
    }
    const double expected = static_cast<double>(f.frame_index) / fps;
    if (!(std::abs(f.timestamp - expected) <= 1e-3)) {
      throw InvalidInputError("manifest: frames[" + std::to_string(i) + "].timestamp " +
                              std::to_string(f.timestamp) + " inconsistent with fps " +
                              std::to_string(fps));
    }
  }
}

namespace {

std::string line_of(std::string_view text, std::size_t byte) {
  const std::size_t upto = std::min(byte, text.size());
  std::size_t line = 1;
  for (std::size_t i = 0; i < upto; ++i) line += text[i] == '\n';
  return std::to_string(line);
}

nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError(std::string(what) + ": cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(std::string(what) + ": " + path.string() + " line " +
                            line_of(text, e.byte) + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw InvalidInputError("cannot write " + path.string());
}

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw InvalidInputError(where + ": missing field \"" + key + "\"");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInputError(where + "." + key + ": wrong type (" +
                            std::string(j.at(key).type_name()) + ")");
  }
}

}  // namespace

VideoManifest manifest_from_json(const nlohmann::json& j) {
  VideoManifest m;
  m.video_id = field<std::string>(j, "video_id", "manifest");
  m.fps = field<double>(j, "fps", "manifest");
  if (j.contains("source_path") && !j["source_path"].is_null()) {
    m.source_path = field<std::string>(j, "source_path", "manifest");
  }
  const auto& frames = j.contains("frames") ? j["frames"] : nlohmann::json();
  if (!frames.is_array()) throw InvalidInputError("manifest: \"frames\" must be an array");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string where = "manifest.frames[" + std::to_string(i) + "]";
    FrameRef f;
    f.video_id = m.video_id;
    f.frame_index = field<std::int64_t>(frames[i], "index", where);
    f.timestamp = field<double>(frames[i], "timestamp", where);
    m.frames.push_back(std::move(f));
  }
  m.validate();
  return m;
}

nlohmann::json to_json(const VideoManifest& manifest) {
  nlohmann::json frames = nlohmann::json::array();
  for (const FrameRef& f : manifest.frames) {
    frames.push_back({{"index", f.frame_index}, {"timestamp", f.timestamp}});
  }
  nlohmann::json j = {{"video_id", manifest.video_id}, {"fps", manifest.fps}, {"frames", frames}};
  if (manifest.source_path) j["source_path"] = *manifest.source_path;
  return j;
}

VideoManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_json_file(path, "manifest"));
}

void write_manifest(const VideoManifest& manifest, const std::filesystem::path& path) {
  write_text(path, to_json(manifest).dump(2) + "\n");
}

// --- config ----------------------------------------------------------------

void PipelineConfig::validate() const {
  if (anchors < 1) throw InvalidInputError("config: N must be >= 1");
  if (!(eta <= 1.0)) throw InvalidInputError("config: eta must be <= 1");
  if (!(kappa_s >= 1.0 && kappa_s <= 5.0)) throw InvalidInputError("config: kappa_s must lie in [1, 5]");
  if (!(penalty_scale >= 0.0)) throw InvalidInputError("config: penalty_scale must be >= 0");
  if (penalty && !(*penalty >= 0.0)) throw InvalidInputError("config: penalty must be >= 0");
  if (min_clip_len < 1) throw InvalidInputError("config: min_clip_len must be >= 1");
  if (frame_stride < 1) throw InvalidInputError("config: frame_stride must be >= 1");
  if (fallback_k < 1) throw InvalidInputError("config: fallback_k must be >= 1");
  if (!(construction_floor <= eta)) {
    throw InvalidInputError("config: construction_floor must not exceed eta");
  }
  embed_backend.validate();
  boundary_backend.validate();
  scorer_backend.validate();
}

void PipelineConfig::apply_preset(std::string_view name) {
  RetrievalParams p;
  if (name == "main") {
    p = RetrievalParams::main_text();
  } else if (name == "ablation-best") {
    p = RetrievalParams::ablation_best();
  } else {
    throw InvalidInputError("config: unknown preset \"" + std::string(name) + "\"");
  }
  anchors = p.anchors;
  hops = p.hops;
  eta = p.eta;
}

void PipelineConfig::set_seed(std::uint64_t seed) {
  if (embed_backend.kind == BackendKind::kMock) embed_backend.seed = seed;
  if (boundary_backend.kind == BackendKind::kMock) boundary_backend.seed = seed;
  if (scorer_backend.kind == BackendKind::kMock) scorer_backend.seed = seed;
}

namespace {

std::size_t parse_size(std::string_view key, const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || x < 0) {
    throw InvalidInputError("config: " + std::string(key) + " expects a non-negative integer, got \"" +
                            v + "\"");
  }
  return static_cast<std::size_t>(x);
}

double parse_real(std::string_view key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || !std::isfinite(x)) {
    throw InvalidInputError("config: " + std::string(key) + " expects a number, got \"" + v + "\"");
  }
  return x;
}

BackendKind parse_kind(std::string_view key, const std::string& v) {
  if (v == "mock") return BackendKind::kMock;
  if (v == "remote") return BackendKind::kRemote;
  throw InvalidInputError("config: " + std::string(key) + " must be mock or remote");
}

bool set_embedding_key(EmbeddingBackendDescriptor& d, std::string_view field, std::string_view key,
                       const std::string& v) {
  if (field == "kind") {
    d.kind = parse_kind(key, v);
    if (d.kind == BackendKind::kRemote) d.seed.reset();
  } else if (field == "endpoint") {
    d.endpoint = v;
  } else if (field == "seed") {
    d.seed = parse_size(key, v);
  } else if (field == "dim") {
    d.dim = parse_size(key, v);
  } else {
    return false;
  }
  return true;
}

}  // namespace

void PipelineConfig::set(std::string_view key, const std::string& v) {
  auto starts = [&](std::string_view prefix) { return key.substr(0, prefix.size()) == prefix; };
  if (key == "N") {
    anchors = parse_size(key, v);
  } else if (key == "L") {
    hops = parse_size(key, v);
  } else if (key == "eta") {
    eta = parse_real(key, v);
  } else if (key == "kappa_s") {
    kappa_s = parse_real(key, v);
  } else if (key == "penalty_scale") {
    penalty_scale = parse_real(key, v);
  } else if (key == "penalty") {
    if (v.empty() || v == "auto") {
      penalty.reset();
    } else {
      penalty = parse_real(key, v);
    }
  } else if (key == "min_clip_len") {
    min_clip_len = parse_size(key, v);
  } else if (key == "frame_stride") {
    frame_stride = parse_size(key, v);
  } else if (key == "fallback_k") {
    fallback_k = parse_size(key, v);
  } else if (key == "construction_floor") {
    construction_floor = parse_real(key, v);
  } else if (key == "max_frames") {
    max_frames = parse_size(key, v);
  } else if (key == "score_batch_size") {
    score_batch_size = parse_size(key, v);
  } else if (key == "score_parallelism") {
    score_parallelism = parse_size(key, v);
  } else if (key == "preset") {
    apply_preset(v);
  } else if (key == "seed") {
    set_seed(parse_size(key, v));
  } else if (key == "cache_dir") {
    if (v.empty()) {
      cache_dir.reset();
    } else {
      cache_dir = v;
    }
  } else if (starts("embed_") && set_embedding_key(embed_backend, key.substr(6), key, v)) {
  } else if (starts("boundary_") && set_embedding_key(boundary_backend, key.substr(9), key, v)) {
  } else if (key == "scorer_kind") {
    scorer_backend.kind = parse_kind(key, v);
    if (scorer_backend.kind == BackendKind::kRemote) scorer_backend.seed.reset();
  } else if (key == "scorer_endpoint") {
    scorer_backend.endpoint = v;
  } else if (key == "scorer_seed") {
    scorer_backend.seed = parse_size(key, v);
  } else {
    throw InvalidInputError("config: unknown key \"" + std::string(key) + "\"");
  }
}

PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base) {
  if (!j.is_object()) throw InvalidInputError("config: expected a flat JSON object");
  // Presets and the global seed first so explicit keys in the same file win.
  for (const char* first : {"preset", "seed"}) {
    if (!j.contains(first)) continue;
    const auto& v = j[first];
    base.set(first, v.is_string() ? v.get<std::string>() : v.dump());
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "preset" || key == "seed") continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_number_integer() || value.is_number_unsigned()) {
      text = value.dump();
    } else if (value.is_number_float()) {
      std::ostringstream os;
      os.precision(17);
      os << value.get<double>();
      text = os.str();
    } else if (value.is_null()) {
      text = "";
    } else {
      throw InvalidInputError("config: " + key + " must be a scalar");
    }
    base.set(key, text);
  }
  return base;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  return config_from_json(read_json_file(path, "config"), std::move(base));
}

namespace {

void put_backend(nlohmann::json& j, const std::string& prefix, BackendKind kind,
                 const std::optional<std::string>& endpoint,
                 const std::optional<std::uint64_t>& seed) {
  j[prefix + "kind"] = kind == BackendKind::kMock ? "mock" : "remote";
  if (endpoint) j[prefix + "endpoint"] = *endpoint;
  if (seed) j[prefix + "seed"] = *seed;
}

}  // namespace

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j = {{"N", c.anchors},
                      {"L", c.hops},
                      {"eta", c.eta},
                      {"kappa_s", c.kappa_s},
                      {"penalty_scale", c.penalty_scale},
                      {"min_clip_len", c.min_clip_len},
                      {"frame_stride", c.frame_stride},
                      {"fallback_k", c.fallback_k},
                      {"construction_floor", c.construction_floor},
                      {"max_frames", c.max_frames},
                      {"score_batch_size", c.score_batch_size},
                      {"score_parallelism", c.score_parallelism},
                      {"embed_dim", c.embed_backend.dim},
                      {"boundary_dim", c.boundary_backend.dim}};
  put_backend(j, "embed_", c.embed_backend.kind, c.embed_backend.endpoint, c.embed_backend.seed);
  put_backend(j, "boundary_", c.boundary_backend.kind, c.boundary_backend.endpoint,
              c.boundary_backend.seed);
  put_backend(j, "scorer_", c.scorer_backend.kind, c.scorer_backend.endpoint,
              c.scorer_backend.seed);
  if (c.penalty) j["penalty"] = *c.penalty;
  if (c.cache_dir) j["cache_dir"] = c.cache_dir->string();
  return j;
}

// --- evidence --------------------------------------------------------------

nlohmann::json to_json(const SegmentationResult& seg) {
  return {{"boundaries", seg.boundaries}, {"penalty", seg.penalty}, {"total_cost", seg.total_cost}};
}

SegmentationResult segmentation_from_json(const nlohmann::json& j) {
  SegmentationResult s;
  s.boundaries = field<std::vector<std::size_t>>(j, "boundaries", "segmentation");
  s.penalty = field<double>(j, "penalty", "segmentation");
  s.total_cost = field<double>(j, "total_cost", "segmentation");
  return s;
}

nlohmann::json to_json(const EvidenceSet& e) {
  nlohmann::json frames = nlohmann::json::array();
  for (const ScoredFrame& s : e.frames) {
    frames.push_back({{"index", s.frame.frame_index},
                      {"timestamp", s.frame.timestamp},
                      {"score", s.score},
                      {"distribution", s.distribution.probs()},
                      {"source_node", s.source_node}});
  }
  return {{"query", e.query},
          {"video_id", e.video_id},
          {"fallback_used", e.fallback_used},
          {"frames", std::move(frames)},
          {"provenance",
           {{"segmentation", to_json(e.segmentation)},
            {"anchors", to_json(e.anchors)},
            {"hop", to_json(e.hop)}}}};
}

EvidenceSet evidence_from_json(const nlohmann::json& j) {
  EvidenceSet e;
  e.query = field<std::string>(j, "query", "evidence");
  e.video_id = j.contains("video_id") ? field<std::string>(j, "video_id", "evidence") : "";
  e.fallback_used = field<bool>(j, "fallback_used", "evidence");
  const auto frames = field<nlohmann::json>(j, "frames", "evidence");
  if (!frames.is_array()) throw InvalidInputError("evidence: \"frames\" must be an array");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string where = "evidence.frames[" + std::to_string(i) + "]";
    ScoredFrame s;
    s.frame.video_id = e.video_id;
    s.frame.frame_index = field<std::int64_t>(frames[i], "index", where);
    s.frame.timestamp = field<double>(frames[i], "timestamp", where);
    s.score = field<double>(frames[i], "score", where);
    s.source_node = field<NodeId>(frames[i], "source_node", where);
    s.distribution =
        RelevanceDistribution(field<std::array<double, kLevels>>(frames[i], "distribution", where));
    e.frames.push_back(std::move(s));
  }
  const auto prov = field<nlohmann::json>(j, "provenance", "evidence");
  try {
    e.segmentation = segmentation_from_json(prov.at("segmentation"));
    e.anchors = anchors_from_json(prov.at("anchors"));
    e.hop = hop_from_json(prov.at("hop"));
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidInputError(std::string("evidence.provenance: ") + ex.what());
  } catch (const FormatError& ex) {
    throw InvalidInputError(std::string("evidence.provenance: ") + ex.what());
  }
  return e;
}

void emit_evidence(const EvidenceSet& evidence, const std::filesystem::path& path) {
  write_text(path, to_json(evidence).dump(2) + "\n");
}

EvidenceSet read_evidence(const std::filesystem::path& path) {
  return evidence_from_json(read_json_file(path, "evidence"));
}

// --- orchestration -----------------------------------------------------------

namespace {

[[noreturn]] void rethrow_in_stage(const Error& e, std::string_view stage) {
  const std::string msg = "stage " + std::string(stage) + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::kInvalidInput: throw InvalidInputError(msg);
    case ErrorKind::kDegenerateInput: throw DegenerateInputError(msg);
    case ErrorKind::kBackend: throw BackendError(msg);
    case ErrorKind::kCacheCorruption: throw CacheCorruptionError(msg);
    case ErrorKind::kFormat: throw FormatError(msg);
  }
  throw Error(e.kind(), msg);
}

template <typename F>
auto in_stage(std::string_view stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    rethrow_in_stage(e, stage);
  }
}

}  // namespace

SegmentStage run_segmentation(const VideoManifest& manifest, const PipelineConfig& config,
                              EmbeddingProvider& boundary) {
  const auto embeddings =
      in_stage("embed_frames", [&] { return boundary.embed_frames(manifest.frames); });
  return in_stage("pelt_segment", [&] {
    const double penalty =
        config.penalty ? *config.penalty : default_penalty(embeddings, config.penalty_scale);
    SegmentStage s;
    s.segmentation = pelt_segment(embeddings, penalty, config.min_clip_len);
    s.clips = clips_from_boundaries(manifest.frames, s.segmentation);
    return s;
  });
}

SpatioTemporalGraph run_graph_construction(const VideoManifest& manifest,
                                           std::span<const Clip> clips,
                                           const PipelineConfig& config, EmbeddingProvider& graph) {
  const auto clip_embeddings = in_stage("embed_clips", [&] {
    std::vector<Embedding> out;
    out.reserve(clips.size());
    const std::span<const FrameRef> frames(manifest.frames);
    for (const Clip& c : clips) {
      if (c.end > frames.size()) throw InvalidInputError("clip exceeds the manifest");
      out.push_back(graph.embed_clip(frames.subspan(c.begin, c.size())));
    }
    return out;
  });
  return in_stage("build_graph",
                  [&] { return build_graph(clips, clip_embeddings, config.construction_floor); });
}

std::vector<Clip> clips_of(const SpatioTemporalGraph& graph) {
  std::vector<Clip> clips;
  for (const ClipNode& n : graph.nodes()) clips.push_back(n.clip);
  return clips;
}

EvidenceSet run_scoring(const VideoManifest& manifest, std::string_view query,
                        std::span<const Clip> clips, const AnchorSet& anchors,
                        const HopResult& hop, const SegmentationResult& segmentation,
                        const PipelineConfig& config, RelevanceScorer& scorer) {
  const auto pool = in_stage("expand_frame_pool", [&] {
    return expand_frame_pool(hop, clips, manifest.frames, config.frame_stride);
  });
  const auto scored = in_stage("score_frames", [&] { return score_frames(scorer, query, pool); });
  FilterResult filtered = filter_by_threshold(scored, config.kappa_s, config.fallback_k);
  EvidenceSet e;
  e.query = std::string(query);
  e.video_id = manifest.video_id;
  e.frames = config.max_frames > 0 ? cap_frames(filtered.frames, config.max_frames)
                                   : std::move(filtered.frames);
  e.fallback_used = filtered.fallback_used;
  e.segmentation = segmentation;
  e.anchors = anchors;
  e.hop = hop;
  return e;
}

EvidenceSet run_pipeline(const VideoManifest& manifest, std::string_view query,
                         const PipelineConfig& config, PipelineBackends& backends) {
  manifest.validate();
  config.validate();
  if (std::all_of(query.begin(), query.end(), [](unsigned char c) { return std::isspace(c); })) {
    throw InvalidInputError("query is empty");
  }

  std::optional<CachingEmbeddingProvider> cached_boundary;
  std::optional<CachingEmbeddingProvider> cached_graph;
  std::optional<CachingRelevanceScorer> cached_scorer;
  EmbeddingProvider* boundary = &backends.boundary;
  EmbeddingProvider* graph_provider = &backends.graph;
  RelevanceScorer* scorer = &backends.scorer;
  if (backends.cache != nullptr) {
    boundary = &cached_boundary.emplace(backends.boundary, *backends.cache);
    graph_provider = &cached_graph.emplace(backends.graph, *backends.cache);
    scorer = &cached_scorer.emplace(backends.scorer, *backends.cache);
  }

  const SegmentStage seg = run_segmentation(manifest, config, *boundary);
  const SpatioTemporalGraph graph =
      run_graph_construction(manifest, seg.clips, config, *graph_provider);
  const Embedding q = in_stage("embed_query", [&] { return graph_provider->embed_query(query); });
  const AnchorSet anchors =
      in_stage("select_anchors", [&] { return select_anchors(graph, q, config.anchors); });
  const HopResult hop = in_stage(
      "multi_hop_expand", [&] { return multi_hop_expand(graph, anchors, config.hops, config.eta); });
  return run_scoring(manifest, query, seg.clips, anchors, hop, seg.segmentation, config, *scorer);
}

EvidenceSet run_pipeline(const VideoManifest& manifest, std::string_view query,
                         const PipelineConfig& config) {
  config.validate();
  auto boundary = make_embedding_provider(config.boundary_backend);
  auto graph = make_embedding_provider(config.embed_backend);
  std::unique_ptr<RelevanceScorer> scorer;
  if (config.scorer_backend.kind == BackendKind::kRemote) {
    scorer = std::make_unique<RemoteRelevanceScorer>(*config.scorer_backend.endpoint,
                                                     config.score_batch_size,
                                                     config.score_parallelism);
  } else {
    scorer = make_relevance_scorer(config.scorer_backend);
  }
  std::optional<EmbeddingCache> cache;
  if (config.cache_dir) cache.emplace(*config.cache_dir);
  PipelineBackends backends{*boundary, *graph, *scorer, cache ? &*cache : nullptr};
  return run_pipeline(manifest, query, config, backends);
}

}  // namespace stir
