#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stir/embedding.hpp"

namespace stir {

struct SegmentationResult {
  // First frame of each segment after the first; strictly increasing, each
  // inside (0, num_frames).
  std::vector<std::size_t> boundaries;
  double total_cost = 0.0;
  double penalty = 0.0;

  bool operator==(const SegmentationResult&) const = default;
};

// A contiguous frame span [begin, end) of the manifest, with the timestamps
// of its first and last frame.
struct Clip {
  std::size_t begin = 0;
  std::size_t end = 0;
  double start_time = 0.0;
  double end_time = 0.0;

  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const Clip&) const = default;
};

// Within-segment sum of squared deviations from the segment mean, answered
// in O(dim) per query from prefix sums of vectors and squared norms.
class SegmentCostModel {
 public:
  explicit SegmentCostModel(std::span<const Embedding> embeddings);

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }

  // Cost of frames [start, end). Throws InvalidInputError unless
  // start < end <= size().
  double cost(std::size_t start, std::size_t end) const;

  // Objective of a full partition: sum of segment costs plus penalty per
  // boundary, accumulated segment by segment from the left. Both solvers
  // report this exact value.
  double partition_cost(std::span<const std::size_t> boundaries, double penalty) const;

 private:
  double cost_unchecked(std::size_t start, std::size_t end) const;

  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> prefix_;     // (n + 1) * dim
  std::vector<double> prefix_sq_;  // n + 1
};

double segment_cost(std::span<const Embedding> embeddings, std::size_t start, std::size_t end);

// Optimal penalized segmentation by PELT. Ties on cost prefer fewer
// segments, then the lexicographically smallest boundary list.
// min_clip_len larger than the stream yields a single segment and a warning.
SegmentationResult pelt_segment(std::span<const Embedding> embeddings, double penalty,
                                std::size_t min_clip_len);

inline constexpr std::size_t kExhaustiveMaxFrames = 16;

// Same objective and tie-break as pelt_segment, by enumerating every
// boundary subset. Refuses streams longer than kExhaustiveMaxFrames.
SegmentationResult exhaustive_segment(std::span<const Embedding> embeddings, double penalty,
                                      std::size_t min_clip_len);

// scale * dim * log(n) * sigma^2, with the per-dimension noise variance
// sigma^2 estimated from the median absolute deviation of first differences
// and floored at kMinNoiseVariance.
inline constexpr double kMinNoiseVariance = 1e-8;
double default_penalty(std::span<const Embedding> embeddings, double scale);

std::vector<Clip> clips_from_boundaries(std::span<const FrameRef> frames,
                                        const SegmentationResult& result);

}  // namespace stir
