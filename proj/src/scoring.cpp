#include "stir/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>

#include "stir/error.hpp"
#include "stir/hashing.hpp"
#include "stir/remote_backend.hpp"

namespace stir {

RelevanceDistribution::RelevanceDistribution() { probs_.fill(1.0 / kLevels); }

RelevanceDistribution::RelevanceDistribution(const std::array<double, kLevels>& probs)
    : probs_(probs) {
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw InvalidInputError("relevance probability outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInputError("relevance probabilities do not sum to 1");
}

RelevanceDistribution softmax_levels(const std::array<double, kLevels>& logits) {
  for (double l : logits) {
    if (!std::isfinite(l)) throw InvalidInputError("softmax_levels: non-finite logit");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  std::array<double, kLevels> p{};
  double total = 0.0;
  for (std::size_t i = 0; i < kLevels; ++i) {
    p[i] = std::exp(logits[i] - m);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return RelevanceDistribution(p);
}

RelevanceDistribution softmax_levels(const LevelLogits& logits) {
  std::array<double, kLevels> wide{};
  std::copy(logits.begin(), logits.end(), wide.begin());
  return softmax_levels(wide);
}

double expected_relevance(const RelevanceDistribution& dist) {
  double r = 0.0;
  for (std::size_t i = 0; i < kLevels; ++i) r += static_cast<double>(i + 1) * dist[i];
  return std::clamp(r, 1.0, 5.0);
}

double cross_entropy(const RelevanceDistribution& dist, int label) {
  if (label < 1 || label > static_cast<int>(kLevels)) {
    throw InvalidInputError("cross_entropy: label must be in 1..5, got " + std::to_string(label));
  }
  return -std::log(std::max(dist[static_cast<std::size_t>(label - 1)], kProbabilityFloor));
}

// --- prompt ----------------------------------------------------------------

const std::string_view kIntentPromptTemplate =
    "Infer the query\xe2\x80\x99s intent and evaluate how likely it is that this frame is "
    "intent-relevant for answering: \xe2\x80\x98{query}\xe2\x80\x99.\n\n"
    "Output only one number from 1 to 5, where:\n\n"
    "[1] = completely irrelevant \xe2\x80\x94 the frame provides no visual or contextual "
    "information related to the question or its answer.\n\n"
    "[2] = slightly relevant \xe2\x80\x94 the frame shows general background or context, but it "
    "is unlikely to contribute to answering.\n\n"
    "[3] = moderately relevant \xe2\x80\x94 the frame includes partial clues or indirect context "
    "that might help infer the answer, but the key evidence is missing.\n\n"
    "[4] = mostly relevant \xe2\x80\x94 the frame provides substantial visual or contextual "
    "information that can be used to answer the question, though not fully decisive.\n\n"
    "[5] = highly relevant \xe2\x80\x94 the frame clearly contains the decisive evidence or strong "
    "contextual cues that directly or indirectly support the correct answer.";

IntentPrompt build_intent_prompt(std::string_view query) {
  if (std::all_of(query.begin(), query.end(), [](unsigned char c) { return std::isspace(c); })) {
    throw InvalidInputError("build_intent_prompt: empty query");
  }
  static constexpr std::string_view kSlot = "{query}";
  IntentPrompt p;
  p.template_text = std::string(kIntentPromptTemplate);
  const std::size_t at = kIntentPromptTemplate.find(kSlot);
  p.rendered.reserve(kIntentPromptTemplate.size() + query.size());
  p.rendered.append(kIntentPromptTemplate.substr(0, at));
  p.rendered.append(query);
  p.rendered.append(kIntentPromptTemplate.substr(at + kSlot.size()));
  return p;
}

// --- frame pool --------------------------------------------------------------

std::vector<PoolEntry> expand_frame_pool(const HopResult& hop, std::span<const Clip> clips,
                                         std::span<const FrameRef> frames, std::size_t stride) {
  if (stride == 0) throw InvalidInputError("expand_frame_pool: stride must be positive");
  std::vector<PoolEntry> pool;
  for (NodeId id : hop.nodes) {
    if (id >= clips.size()) {
      throw InvalidInputError("expand_frame_pool: node " + std::to_string(id) + " has no clip");
    }
    const Clip& clip = clips[id];
    if (clip.end > frames.size() || clip.begin >= clip.end) {
      throw InvalidInputError("expand_frame_pool: clip span outside the frame list");
    }
    for (std::size_t i = clip.begin; i < clip.end; i += stride) pool.push_back({frames[i], id});
  }
  return pool;
}

// --- scorers ---------------------------------------------------------------

ScorerBackendDescriptor ScorerBackendDescriptor::mock(std::uint64_t seed) {
  ScorerBackendDescriptor d;
  d.kind = BackendKind::kMock;
  d.seed = seed;
  return d;
}

ScorerBackendDescriptor ScorerBackendDescriptor::remote(std::string endpoint) {
  ScorerBackendDescriptor d;
  d.kind = BackendKind::kRemote;
  d.endpoint = std::move(endpoint);
  return d;
}

void ScorerBackendDescriptor::validate() const {
  if (kind == BackendKind::kRemote && (!endpoint || endpoint->empty())) {
    throw InvalidInputError("remote scorer requires an endpoint");
  }
  if (kind == BackendKind::kMock && !seed) throw InvalidInputError("mock scorer requires a seed");
}

std::string ScorerBackendDescriptor::canonical() const {
  return kind == BackendKind::kMock ? "mock-scorer;seed=" + std::to_string(seed.value_or(0))
                                    : "remote-scorer;endpoint=" + endpoint.value_or("");
}

std::vector<LevelLogits> RelevanceScorer::score(std::string_view query, const IntentPrompt& prompt,
                                                std::span<const FrameRef> frames) {
  if (frames.empty()) return {};
  for (const FrameRef& f : frames) {
    if (f.video_id != frames.front().video_id) {
      throw InvalidInputError("score: frames from more than one video");
    }
  }
  ++requests_;
  std::vector<LevelLogits> out = do_score(query, prompt, frames);
  if (out.size() != frames.size()) {
    throw BackendError("scorer returned " + std::to_string(out.size()) + " rows for " +
                       std::to_string(frames.size()) + " frames");
  }
  return out;
}

MockRelevanceScorer::MockRelevanceScorer(MockScorerOptions options)
    : options_(std::move(options)) {}

std::string MockRelevanceScorer::identity() const {
  std::ostringstream os;
  os.precision(17);
  os << "mock-scorer;seed=" << options_.seed << ";noise=" << options_.noise
     << ";boost=" << options_.boost << ";tilt=" << options_.tilt << ";planted=";
  std::uint64_t h = 0;
  for (const auto& [video, index] : options_.planted) {
    h = mix64(fnv1a64(video, h) ^ static_cast<std::uint64_t>(index));
  }
  os << std::hex << h << ':' << options_.planted.size();
  return os.str();
}

std::vector<LevelLogits> MockRelevanceScorer::do_score(std::string_view query,
                                                       const IntentPrompt&,
                                                       std::span<const FrameRef> frames) {
  const std::uint64_t qh = fnv1a64(query);
  std::vector<LevelLogits> out;
  out.reserve(frames.size());
  for (const FrameRef& f : frames) {
    const std::uint64_t base = mix64(mix64(mix64(options_.seed ^ 0x73636f7265ULL) ^ qh) ^
                                     mix64(fnv1a64(f.video_id) ^ static_cast<std::uint64_t>(f.frame_index)));
    const bool planted = options_.planted.count({f.video_id, f.frame_index}) != 0;
    const double slope = planted ? options_.boost : -options_.tilt;
    LevelLogits row{};
    for (std::size_t l = 0; l < kLevels; ++l) {
      const double centered = static_cast<double>(l) - 2.0;  // level - 3
      row[l] = static_cast<float>(options_.noise * unit_interval_sym(mix64(base + l)) +
                                  slope * centered / 2.0);
    }
    out.push_back(row);
  }
  return out;
}

RemoteRelevanceScorer::RemoteRelevanceScorer(std::string endpoint, std::size_t batch_size,
                                             std::size_t parallelism, std::size_t max_retries)
    : endpoint_(std::move(endpoint)),
      batch_size_(batch_size == 0 ? 1 : batch_size),
      parallelism_(parallelism == 0 ? 1 : parallelism),
      max_retries_(max_retries) {}

std::string RemoteRelevanceScorer::identity() const {
  return ScorerBackendDescriptor::remote(endpoint_).canonical();
}

std::vector<LevelLogits> RemoteRelevanceScorer::request(std::string_view query,
                                                        const IntentPrompt& prompt,
                                                        std::span<const FrameRef> frames) const {
  nlohmann::json indices = nlohmann::json::array();
  for (const FrameRef& f : frames) indices.push_back(f.frame_index);
  const nlohmann::json body = {{"query", query},
                               {"prompt", prompt.rendered},
                               {"video_id", frames.front().video_id},
                               {"frame_indices", std::move(indices)}};
  const nlohmann::json res = JsonHttpClient(endpoint_).post("/score", body);
  if (!res.is_object() || !res.contains("logits") || !res["logits"].is_array() ||
      res["logits"].size() != frames.size()) {
    throw BackendError("score response must carry one logits row per frame");
  }
  std::vector<LevelLogits> out;
  for (const auto& row : res["logits"]) {
    if (!row.is_array() || row.size() != kLevels) {
      throw BackendError("score response row does not have 5 logits");
    }
    LevelLogits l{};
    for (std::size_t i = 0; i < kLevels; ++i) {
      if (!row[i].is_number()) throw BackendError("score response logit is not numeric");
      const double v = row[i].get<double>();
      if (!std::isfinite(v)) throw BackendError("score response logit is not finite");
      l[i] = static_cast<float>(v);
    }
    out.push_back(l);
  }
  return out;
}

std::vector<LevelLogits> RemoteRelevanceScorer::do_score(std::string_view query,
                                                         const IntentPrompt& prompt,
                                                         std::span<const FrameRef> frames) {
  auto run_batch = [&](std::span<const FrameRef> batch) -> std::vector<std::optional<LevelLogits>> {
    std::vector<std::optional<LevelLogits>> rows(batch.size());
    try {
      auto got = request(query, prompt, batch);
      for (std::size_t i = 0; i < got.size(); ++i) rows[i] = got[i];
      return rows;
    } catch (const BackendError&) {
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t attempt = 0; attempt < max_retries_ && !rows[i]; ++attempt) {
        try {
          rows[i] = request(query, prompt, batch.subspan(i, 1)).front();
        } catch (const BackendError&) {
        }
      }
    }
    return rows;
  };

  std::vector<std::span<const FrameRef>> batches;
  for (std::size_t i = 0; i < frames.size(); i += batch_size_) {
    batches.push_back(frames.subspan(i, std::min(batch_size_, frames.size() - i)));
  }
  std::vector<std::vector<std::optional<LevelLogits>>> results(batches.size());
  for (std::size_t start = 0; start < batches.size(); start += parallelism_) {
    const std::size_t stop = std::min(batches.size(), start + parallelism_);
    std::vector<std::future<std::vector<std::optional<LevelLogits>>>> inflight;
    for (std::size_t b = start; b < stop; ++b) {
      inflight.push_back(std::async(std::launch::async, run_batch, batches[b]));
    }
    for (std::size_t b = start; b < stop; ++b) results[b] = inflight[b - start].get();
  }

  std::vector<LevelLogits> out;
  std::vector<std::int64_t> failed;
  std::size_t pos = 0;
  for (const auto& batch : results) {
    for (const auto& row : batch) {
      if (row) {
        out.push_back(*row);
      } else {
        failed.push_back(frames[pos].frame_index);
      }
      ++pos;
    }
  }
  if (!failed.empty()) {
    std::ostringstream os;
    os << "scorer backend failed for " << failed.size() << " frame(s):";
    for (auto idx : failed) os << ' ' << idx;
    throw BackendError(os.str());
  }
  return out;
}

CachingRelevanceScorer::CachingRelevanceScorer(RelevanceScorer& inner, EmbeddingCache& cache)
    : inner_(inner), cache_(cache) {}

std::vector<LevelLogits> CachingRelevanceScorer::do_score(std::string_view query,
                                                          const IntentPrompt& prompt,
                                                          std::span<const FrameRef> frames) {
  std::string indices;
  for (const FrameRef& f : frames) indices += std::to_string(f.frame_index) + ',';
  const std::string id = inner_.identity();
  const std::string key =
      content_hash({"score", id, query, prompt.rendered, frames.front().video_id, indices});
  if (auto hit = cache_.get_matrix(key); hit && hit->cols == kLevels && hit->rows() == frames.size()) {
    std::vector<LevelLogits> out(frames.size());
    for (std::size_t r = 0; r < out.size(); ++r) {
      std::copy_n(hit->data.begin() + static_cast<std::ptrdiff_t>(r * kLevels), kLevels,
                  out[r].begin());
    }
    return out;
  }
  std::vector<LevelLogits> fresh = inner_.score(query, prompt, frames);
  FloatMatrix m;
  m.cols = kLevels;
  for (const auto& row : fresh) m.data.insert(m.data.end(), row.begin(), row.end());
  cache_.put_matrix(key, m);
  return fresh;
}

std::unique_ptr<RelevanceScorer> make_relevance_scorer(const ScorerBackendDescriptor& backend) {
  backend.validate();
  if (backend.kind == BackendKind::kMock) {
    MockScorerOptions opts;
    opts.seed = *backend.seed;
    return std::make_unique<MockRelevanceScorer>(std::move(opts));
  }
  return std::make_unique<RemoteRelevanceScorer>(*backend.endpoint);
}

std::vector<ScoredFrame> score_frames(RelevanceScorer& scorer, std::string_view query,
                                      std::span<const PoolEntry> pool) {
  if (pool.empty()) return {};
  const IntentPrompt prompt = build_intent_prompt(query);
  std::vector<FrameRef> frames;
  frames.reserve(pool.size());
  for (const PoolEntry& e : pool) frames.push_back(e.frame);
  const std::vector<LevelLogits> logits = scorer.score(query, prompt, frames);
  std::vector<ScoredFrame> out;
  out.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ScoredFrame s;
    s.frame = pool[i].frame;
    s.source_node = pool[i].source_node;
    s.distribution = softmax_levels(logits[i]);
    s.score = expected_relevance(s.distribution);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoredFrame> score_frames(const ScorerBackendDescriptor& backend,
                                      std::string_view query, std::span<const PoolEntry> pool) {
  return score_frames(*make_relevance_scorer(backend), query, pool);
}

namespace {

std::vector<ScoredFrame> top_by_score(std::span<const ScoredFrame> frames, std::size_t k) {
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return frames[a].score != frames[b].score ? frames[a].score > frames[b].score
                                                                : a < b;
                    });
  order.resize(take);
  std::sort(order.begin(), order.end());
  std::vector<ScoredFrame> out;
  for (std::size_t i : order) out.push_back(frames[i]);
  return out;
}

}  // namespace

FilterResult filter_by_threshold(std::span<const ScoredFrame> scored, double kappa_s,
                                 std::size_t fallback_k) {
  FilterResult r;
  for (const ScoredFrame& s : scored) {
    if (s.score > kappa_s) r.frames.push_back(s);
  }
  if (r.frames.empty() && !scored.empty()) {
    r.frames = top_by_score(scored, fallback_k);
    r.fallback_used = true;
  }
  return r;
}

std::vector<ScoredFrame> cap_frames(std::span<const ScoredFrame> frames, std::size_t max_frames) {
  if (frames.size() <= max_frames) return {frames.begin(), frames.end()};
  return top_by_score(frames, max_frames);
}

}  // namespace stir
