#include "stir/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stir/error.hpp"
#include "stir/log.hpp"
#include "stir/simd/kernels.hpp"

namespace stir {

SegmentCostModel::SegmentCostModel(std::span<const Embedding> embeddings)
    : n_(embeddings.size()) {
  if (embeddings.empty()) throw InvalidInputError("segmentation needs at least one embedding");
  dim_ = embeddings.front().dim();
  prefix_.assign((n_ + 1) * dim_, 0.0);
  prefix_sq_.assign(n_ + 1, 0.0);
  for (std::size_t t = 0; t < n_; ++t) {
    const Embedding& e = embeddings[t];
    if (e.dim() != dim_) throw InvalidInputError("embeddings have mixed dimensions");
    std::span<const double> prev(prefix_.data() + t * dim_, dim_);
    std::span<double> next(prefix_.data() + (t + 1) * dim_, dim_);
    simd::accumulate_row(next, prev, e.values());
    prefix_sq_[t + 1] = prefix_sq_[t] + simd::squared_norm(e.values());
  }
}

double SegmentCostModel::cost_unchecked(std::size_t start, std::size_t end) const {
  const std::span<const double> hi(prefix_.data() + end * dim_, dim_);
  const std::span<const double> lo(prefix_.data() + start * dim_, dim_);
  const double len = static_cast<double>(end - start);
  const double c = (prefix_sq_[end] - prefix_sq_[start]) - simd::squared_distance(hi, lo) / len;
  return c > 0.0 ? c : 0.0;
}

double SegmentCostModel::cost(std::size_t start, std::size_t end) const {
  if (start >= end || end > n_) {
    throw InvalidInputError("segment_cost: invalid range [" + std::to_string(start) + ", " +
                            std::to_string(end) + ") for " + std::to_string(n_) + " frames");
  }
  return cost_unchecked(start, end);
}

double SegmentCostModel::partition_cost(std::span<const std::size_t> boundaries,
                                        double penalty) const {
  double acc = -penalty;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= boundaries.size(); ++i) {
    const std::size_t end = i < boundaries.size() ? boundaries[i] : n_;
    acc = (acc + cost(start, end)) + penalty;
    start = end;
  }
  return acc;
}

double segment_cost(std::span<const Embedding> embeddings, std::size_t start, std::size_t end) {
  if (embeddings.empty() || start >= end || end > embeddings.size()) {
    throw InvalidInputError("segment_cost: empty or out-of-range segment");
  }
  return SegmentCostModel(embeddings.subspan(start, end - start)).cost(0, end - start);
}

namespace {

void check_args(std::span<const Embedding> embeddings, double penalty, std::size_t min_clip_len) {
  if (embeddings.empty()) throw InvalidInputError("segmentation needs at least one embedding");
  if (!(penalty >= 0.0)) throw InvalidInputError("penalty must be >= 0");
  if (min_clip_len == 0) throw InvalidInputError("min_clip_len must be positive");
}

SegmentationResult single_segment(const SegmentCostModel& model, double penalty) {
  return {{}, model.partition_cost({}, penalty), penalty};
}

// (value, segment count, boundary list) ordering used by both solvers.
struct Candidate {
  double value;
  std::size_t segments;
};

bool lex_less(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

SegmentationResult pelt_segment(std::span<const Embedding> embeddings, double penalty,
                                std::size_t min_clip_len) {
  check_args(embeddings, penalty, min_clip_len);
  const SegmentCostModel model(embeddings);
  const std::size_t n = model.size();
  if (min_clip_len > n) {
    warn("min_clip_len " + std::to_string(min_clip_len) + " exceeds stream length " +
         std::to_string(n) + "; returning a single segment");
    return single_segment(model, penalty);
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> best(n + 1, kInf);
  std::vector<std::size_t> segments(n + 1, 0);
  std::vector<std::size_t> last_change(n + 1, kNone);
  // A pruned candidate stays usable until the witness that pruned it can
  // itself close a segment of legal length.
  std::vector<std::size_t> expires(n + 1, kNone);
  best[0] = -penalty;

  // Boundaries of the best path ending at t, excluding t.
  auto path_to = [&](std::size_t t) {
    std::vector<std::size_t> out;
    for (std::size_t s = last_change[t]; s != 0 && s != kNone; s = last_change[s]) {
      out.push_back(s);
    }
    std::reverse(out.begin(), out.end());
    return out;
  };

  std::vector<std::size_t> active{0};
  std::vector<double> partial;
  for (std::size_t t = min_clip_len; t <= n; ++t) {
    partial.assign(active.size(), kInf);
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t s = active[i];
      if (t - s < min_clip_len) continue;
      partial[i] = best[s] + model.cost(s, t);
      const Candidate c{partial[i] + penalty, segments[s] + 1};
      bool better = c.value < best[t] ||
                    (c.value == best[t] && c.segments < segments[t]);
      if (!better && c.value == best[t] && c.segments == segments[t]) {
        std::vector<std::size_t> mine = path_to(s);
        if (s != 0) mine.push_back(s);
        better = lex_less(mine, path_to(t));
      }
      if (better) {
        best[t] = c.value;
        segments[t] = c.segments;
        last_change[t] = s;
      }
    }
    if (best[t] == kInf) continue;

    // Tolerance keeps rounding from pruning a candidate that ties exactly.
    const double slack = 1e-9 * (1.0 + std::abs(best[t]));
    std::vector<std::size_t> kept;
    kept.reserve(active.size() + 1);
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t s = active[i];
      if (partial[i] != kInf && partial[i] > best[t] + slack) {
        expires[s] = std::min(expires[s], t + min_clip_len);
      }
      if (expires[s] == kNone || expires[s] > t + 1) kept.push_back(s);
    }
    kept.push_back(t);
    active.swap(kept);
  }

  SegmentationResult result;
  result.penalty = penalty;
  result.boundaries = path_to(n);
  result.total_cost = best[n];
  return result;
}

SegmentationResult exhaustive_segment(std::span<const Embedding> embeddings, double penalty,
                                      std::size_t min_clip_len) {
  check_args(embeddings, penalty, min_clip_len);
  if (embeddings.size() > kExhaustiveMaxFrames) {
    throw InvalidInputError("exhaustive_segment: " + std::to_string(embeddings.size()) +
                            " frames exceeds the limit of " +
                            std::to_string(kExhaustiveMaxFrames));
  }
  const SegmentCostModel model(embeddings);
  const std::size_t n = model.size();
  if (min_clip_len > n) {
    warn("min_clip_len exceeds stream length; returning a single segment");
    return single_segment(model, penalty);
  }

  bool found = false;
  SegmentationResult best;
  best.penalty = penalty;
  std::vector<std::size_t> boundaries;
  const std::uint32_t subsets = 1u << (n - 1);
  for (std::uint32_t mask = 0; mask < subsets; ++mask) {
    boundaries.clear();
    for (std::size_t b = 1; b < n; ++b) {
      if (mask & (1u << (b - 1))) boundaries.push_back(b);
    }
    bool legal = true;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= boundaries.size() && legal; ++i) {
      const std::size_t end = i < boundaries.size() ? boundaries[i] : n;
      legal = end - start >= min_clip_len;
      start = end;
    }
    if (!legal) continue;
    const double value = model.partition_cost(boundaries, penalty);
    const bool better =
        !found || value < best.total_cost ||
        (value == best.total_cost && (boundaries.size() < best.boundaries.size() ||
                                      (boundaries.size() == best.boundaries.size() &&
                                       lex_less(boundaries, best.boundaries))));
    if (better) {
      found = true;
      best.total_cost = value;
      best.boundaries = boundaries;
    }
  }
  return best;
}

double default_penalty(std::span<const Embedding> embeddings, double scale) {
  if (embeddings.empty()) throw InvalidInputError("default_penalty: empty stream");
  const std::size_t n = embeddings.size();
  const std::size_t dim = embeddings.front().dim();
  double variance = kMinNoiseVariance;
  if (n >= 3) {
    double total = 0.0;
    std::vector<double> diffs(n - 1);
    std::vector<double> dev(n - 1);
    for (std::size_t d = 0; d < dim; ++d) {
      for (std::size_t t = 1; t < n; ++t) {
        diffs[t - 1] = static_cast<double>(embeddings[t][d]) - embeddings[t - 1][d];
      }
      auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
      std::nth_element(diffs.begin(), mid, diffs.end());
      const double median = *mid;
      for (std::size_t i = 0; i < diffs.size(); ++i) dev[i] = std::abs(diffs[i] - median);
      auto dmid = dev.begin() + static_cast<std::ptrdiff_t>(dev.size() / 2);
      std::nth_element(dev.begin(), dmid, dev.end());
      // MAD -> sd of differences; differences carry twice the noise variance.
      const double sd_diff = 1.4826 * *dmid;
      total += sd_diff * sd_diff / 2.0;
    }
    variance = std::max(kMinNoiseVariance, total / static_cast<double>(dim));
  }
  return scale * static_cast<double>(dim) * std::log(static_cast<double>(n)) * variance;
}

std::vector<Clip> clips_from_boundaries(std::span<const FrameRef> frames,
                                        const SegmentationResult& result) {
  if (frames.empty()) throw InvalidInputError("clips_from_boundaries: no frames");
  std::vector<Clip> clips;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= result.boundaries.size(); ++i) {
    const std::size_t end = i < result.boundaries.size() ? result.boundaries[i] : frames.size();
    if (end <= start || end > frames.size()) {
      throw InvalidInputError("clips_from_boundaries: boundary " + std::to_string(end) +
                              " out of range or not increasing");
    }
    clips.push_back({start, end, frames[start].timestamp, frames[end - 1].timestamp});
    start = end;
  }
  return clips;
}

}  // namespace stir
