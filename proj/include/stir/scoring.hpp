#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stir/embedding.hpp"
#include "stir/embedding_cache.hpp"
#include "stir/graph.hpp"
#include "stir/retrieval.hpp"

namespace stir {

inline constexpr std::size_t kLevels = 5;

using LevelLogits = std::array<float, kLevels>;

// Probabilities over relevance levels 1..5; index i holds level i + 1.
class RelevanceDistribution {
 public:
  RelevanceDistribution();  // uniform
  // Throws InvalidInputError unless every entry is finite, in [0, 1], and the
  // entries sum to 1 within 1e-9.
  explicit RelevanceDistribution(const std::array<double, kLevels>& probs);

  const std::array<double, kLevels>& probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }

  bool operator==(const RelevanceDistribution&) const = default;

 private:
  std::array<double, kLevels> probs_;
};

// Max-shifted softmax. Throws InvalidInputError on a non-finite logit.
RelevanceDistribution softmax_levels(const std::array<double, kLevels>& logits);
RelevanceDistribution softmax_levels(const LevelLogits& logits);

// Sum over levels of level * probability; always within [1, 5].
double expected_relevance(const RelevanceDistribution& dist);

inline constexpr double kProbabilityFloor = 1e-12;

// -log(max(p[label - 1], 1e-12)). Throws InvalidInputError unless label is
// in 1..5.
double cross_entropy(const RelevanceDistribution& dist, int label);

// --- prompt ----------------------------------------------------------------

// Intent-relevance instruction with a single {query} slot. Byte-identical to
// assets/intent_relevance_prompt.txt.
extern const std::string_view kIntentPromptTemplate;

struct IntentPrompt {
  std::string template_text;
  std::string rendered;
};

IntentPrompt build_intent_prompt(std::string_view query);

// --- frame pool --------------------------------------------------------------

struct PoolEntry {
  FrameRef frame;
  NodeId source_node = 0;

  bool operator==(const PoolEntry&) const = default;
};

// Frames of every retrieved clip in chronological order, taking every
// stride-th frame of each clip starting from its first.
std::vector<PoolEntry> expand_frame_pool(const HopResult& hop, std::span<const Clip> clips,
                                         std::span<const FrameRef> frames, std::size_t stride);

// --- scorers ---------------------------------------------------------------

struct ScorerBackendDescriptor {
  BackendKind kind = BackendKind::kMock;
  std::optional<std::string> endpoint;
  std::optional<std::uint64_t> seed;

  static ScorerBackendDescriptor mock(std::uint64_t seed);
  static ScorerBackendDescriptor remote(std::string endpoint);

  void validate() const;
  std::string canonical() const;
};

// Produces the five level-token logits for each (query, frame) pair.
class RelevanceScorer {
 public:
  virtual ~RelevanceScorer() = default;

  virtual std::string identity() const = 0;

  // frames come from one video. Returns one row per frame, in order.
  std::vector<LevelLogits> score(std::string_view query, const IntentPrompt& prompt,
                                 std::span<const FrameRef> frames);

  std::uint64_t request_count() const noexcept { return requests_.load(); }

 protected:
  virtual std::vector<LevelLogits> do_score(std::string_view query, const IntentPrompt& prompt,
                                            std::span<const FrameRef> frames) = 0;

 private:
  std::atomic<std::uint64_t> requests_{0};
};

struct MockScorerOptions {
  std::uint64_t seed = 0;
  // Amplitude of the per-frame pseudorandom logits.
  double noise = 1.0;
  // Planted frames get +boost * (level - 3) / 2 added to their logits.
  double boost = 4.0;
  // Other frames get -tilt * (level - 3) / 2, biasing them below the middle.
  double tilt = 1.0;
  std::set<std::pair<std::string, std::int64_t>> planted;
};

// Deterministic logits from (seed, query, video, frame index), with a boost
// for frames flagged as planted evidence.
class MockRelevanceScorer final : public RelevanceScorer {
 public:
  explicit MockRelevanceScorer(MockScorerOptions options);

  std::string identity() const override;

 protected:
  std::vector<LevelLogits> do_score(std::string_view query, const IntentPrompt& prompt,
                                    std::span<const FrameRef> frames) override;

 private:
  MockScorerOptions options_;
};

// Client for POST /score. Failed batches are retried frame by frame; frames
// that still fail are reported together in one BackendError.
class RemoteRelevanceScorer final : public RelevanceScorer {
 public:
  RemoteRelevanceScorer(std::string endpoint, std::size_t batch_size = 16,
                        std::size_t parallelism = 4, std::size_t max_retries = 2);

  std::string identity() const override;

 protected:
  std::vector<LevelLogits> do_score(std::string_view query, const IntentPrompt& prompt,
                                    std::span<const FrameRef> frames) override;

 private:
  std::vector<LevelLogits> request(std::string_view query, const IntentPrompt& prompt,
                                   std::span<const FrameRef> frames) const;

  std::string endpoint_;
  std::size_t batch_size_;
  std::size_t parallelism_;
  std::size_t max_retries_;
};

class CachingRelevanceScorer final : public RelevanceScorer {
 public:
  CachingRelevanceScorer(RelevanceScorer& inner, EmbeddingCache& cache);

  std::string identity() const override { return inner_.identity(); }

 protected:
  std::vector<LevelLogits> do_score(std::string_view query, const IntentPrompt& prompt,
                                    std::span<const FrameRef> frames) override;

 private:
  RelevanceScorer& inner_;
  EmbeddingCache& cache_;
};

std::unique_ptr<RelevanceScorer> make_relevance_scorer(const ScorerBackendDescriptor& backend);

struct ScoredFrame {
  FrameRef frame;
  RelevanceDistribution distribution;
  double score = 0.0;
  NodeId source_node = 0;
};

std::vector<ScoredFrame> score_frames(RelevanceScorer& scorer, std::string_view query,
                                      std::span<const PoolEntry> pool);
std::vector<ScoredFrame> score_frames(const ScorerBackendDescriptor& backend,
                                      std::string_view query, std::span<const PoolEntry> pool);

struct FilterResult {
  std::vector<ScoredFrame> frames;
  bool fallback_used = false;
};

// Frames scoring strictly above kappa_s, in input order. When none qualify,
// the fallback_k best-scoring frames (ties to the earlier frame) are
// returned in input order and fallback_used is set.
FilterResult filter_by_threshold(std::span<const ScoredFrame> scored, double kappa_s,
                                 std::size_t fallback_k);

// Keeps the max_frames best-scoring frames, preserving input order.
std::vector<ScoredFrame> cap_frames(std::span<const ScoredFrame> frames, std::size_t max_frames);

}  // namespace stir
