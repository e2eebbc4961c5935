#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stir/embedding.hpp"
#include "stir/pipeline.hpp"
#include "stir/scoring.hpp"

namespace stir::eval {

// One synthetic video: piecewise-constant centroids plus isotropic noise,
// with evidence frames planted in one segment and a query vector aligned to
// that segment's centroid.
struct SyntheticVideoSpec {
  std::string video_id;
  std::string query;
  double fps = 3.0;
  std::vector<std::size_t> segment_lengths;
  std::vector<Embedding> segment_centroids;
  double noise_scale = 0.05;
  std::size_t evidence_segment = 0;
  std::vector<std::size_t> evidence_offsets;  // within the evidence segment
  Embedding query_embedding;
};

struct GroundTruth {
  std::string video_id;
  std::vector<std::size_t> true_boundaries;
  std::vector<FrameRef> evidence_frames;
};

struct SyntheticVideo {
  VideoManifest manifest;
  std::map<std::int64_t, Embedding> frame_embeddings;
  std::string query;
  Embedding query_embedding;
  GroundTruth truth;
};

// Parameters for drawing a corpus of SyntheticVideoSpecs.
struct CorpusConfig {
  std::uint64_t seed = 2024;
  std::size_t num_videos = 20;
  std::size_t dim = 32;
  double fps = 3.0;
  std::size_t min_segments = 8;
  std::size_t max_segments = 14;
  std::size_t min_segment_length = 8;
  std::size_t max_segment_length = 20;
  double noise_scale = 0.05;
  double min_angle_deg = 25.0;
  // Centroids mix one of `themes` shared directions with a private one; the
  // shared weight is drawn from [theme_mix_min, theme_mix_max].
  std::size_t themes = 4;
  double theme_mix_min = 0.3;
  double theme_mix_max = 0.9;
  std::size_t evidence_frames = 3;
  double query_perturbation = 0.05;
  // Mock scorer settings for planted evidence.
  double boost = 4.0;
  double scorer_noise = 1.0;
  double tilt = 1.0;
};

CorpusConfig corpus_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CorpusConfig& c);

std::vector<SyntheticVideoSpec> make_corpus_specs(const CorpusConfig& config);

// Throws InvalidInputError on a degenerate spec (zero-length segment,
// mismatched centroid count, evidence outside its segment, ...).
std::vector<SyntheticVideo> generate_corpus(std::span<const SyntheticVideoSpec> specs,
                                            std::uint64_t seed);

std::unique_ptr<FixtureEmbeddingProvider> make_fixture_provider(
    std::span<const SyntheticVideo> corpus);
MockScorerOptions planted_scorer_options(std::span<const SyntheticVideo> corpus,
                                         const CorpusConfig& config, std::uint64_t seed);

// 1 when any evidence frame matches a ground-truth frame, else 0. With a
// window, a match is any pair of timestamps within window_s seconds.
// Throws InvalidInputError when the videos differ.
double retrieval_accuracy(const EvidenceSet& evidence, const GroundTruth& truth,
                          std::optional<double> window_s = std::nullopt);
double retrieval_accuracy(std::span<const EvidenceSet> evidence,
                          std::span<const GroundTruth> truth,
                          std::optional<double> window_s = std::nullopt);

double avg_clips(std::span<const HopResult> hops);

// Fraction of true boundaries with a detected boundary within `tolerance`
// frames. 1 when there are no true boundaries.
double boundary_recall(std::span<const std::size_t> detected,
                       std::span<const std::size_t> truth, std::size_t tolerance = 0);

double ce_eval(std::span<const RelevanceDistribution> predictions, std::span<const int> labels);

struct CorpusRun {
  std::vector<EvidenceSet> evidence;
  std::vector<std::string> errors;
};

// Full pipeline per video with fixture embeddings and the planted mock
// scorer. Per-video failures are recorded and skipped.
CorpusRun run_corpus(std::span<const SyntheticVideo> corpus, const PipelineConfig& config,
                     const MockScorerOptions& scorer_options,
                     const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

struct SweepGrid {
  std::vector<std::size_t> anchors{3};
  std::vector<std::size_t> hops{2};
  std::vector<double> eta{0.4};
  std::vector<double> kappa_s{3.25};
};

SweepGrid sweep_grid_from_json(const nlohmann::json& j);

struct SweepRow {
  std::size_t anchors = 0;
  std::size_t hops = 0;
  double eta = 0.0;
  double kappa_s = 0.0;
  double avg_clips = 0.0;
  double retrieval_accuracy = 0.0;
  double wall_time_s = 0.0;
  std::size_t runs = 0;
  std::vector<std::string> errors;
};

struct SweepOptions {
  PipelineConfig base;
  MockScorerOptions scorer;
  std::size_t parallelism = 1;
  // Each cell caches under its own subdirectory when set.
  std::optional<std::filesystem::path> cache_dir;
};

// Full-factorial evaluation in N, L, eta, kappa_s order.
std::vector<SweepRow> hyperparameter_sweep(std::span<const SyntheticVideo> corpus,
                                           const SweepGrid& grid, const SweepOptions& options);

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);
nlohmann::json sweep_to_json(std::span<const SweepRow> rows);
std::string sweep_summary(std::span<const SweepRow> rows);

// --- distillation annotations ------------------------------------------------

inline constexpr std::string_view kAnnotationSystemText = "You are a helpful assistant.";

struct IRAnnotation {
  std::string system_text{kAnnotationSystemText};
  std::string image_path;
  std::string query_text;
  int label = 1;

  bool operator==(const IRAnnotation&) const = default;
};

struct AnnotationSample {
  std::string query;
  FrameRef frame;
  int label = 1;
};

// "<video_id>/frame_<index, 6 digits>.jpg"
std::string default_image_path(const FrameRef& frame);

// One record: a JSON array of system, user (image then text) and assistant
// messages, with ", " and ": " separators.
std::string annotation_to_line(const IRAnnotation& annotation);
IRAnnotation annotation_from_line(std::string_view line);

// Newline-delimited records. Throws InvalidInputError on a label outside 1..5.
void export_ir_annotations(std::span<const AnnotationSample> samples, std::ostream& out);
std::vector<IRAnnotation> read_ir_annotations(std::istream& in);

}  // namespace stir::eval
