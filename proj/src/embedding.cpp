#include "stir/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "stir/error.hpp"
#include "stir/hashing.hpp"
#include "stir/remote_backend.hpp"
#include "stir/simd/kernels.hpp"

namespace stir {

Embedding::Embedding(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidInputError("embedding must have dim >= 1");
  for (float v : values_) {
    if (!std::isfinite(v)) throw InvalidInputError("embedding contains a non-finite value");
  }
}

bool bit_equal(const Embedding& a, const Embedding& b) {
  return a.dim() == b.dim() &&
         std::memcmp(a.values().data(), b.values().data(), a.dim() * sizeof(float)) == 0;
}

EmbeddingBackendDescriptor EmbeddingBackendDescriptor::mock(std::uint64_t seed, std::size_t dim) {
  EmbeddingBackendDescriptor d;
  d.kind = BackendKind::kMock;
  d.seed = seed;
  d.dim = dim;
  return d;
}

EmbeddingBackendDescriptor EmbeddingBackendDescriptor::remote(std::string endpoint,
                                                              std::size_t dim) {
  EmbeddingBackendDescriptor d;
  d.kind = BackendKind::kRemote;
  d.endpoint = std::move(endpoint);
  d.dim = dim;
  return d;
}

void EmbeddingBackendDescriptor::validate() const {
  if (dim == 0) throw InvalidInputError("backend dim must be positive");
  if (kind == BackendKind::kRemote && (!endpoint || endpoint->empty())) {
    throw InvalidInputError("remote backend requires an endpoint");
  }
  if (kind == BackendKind::kMock && !seed) {
    throw InvalidInputError("mock backend requires a seed");
  }
}

std::string EmbeddingBackendDescriptor::canonical() const {
  std::ostringstream os;
  if (kind == BackendKind::kMock) {
    os << "mock;seed=" << seed.value_or(0) << ";dim=" << dim;
  } else {
    os << "remote;endpoint=" << endpoint.value_or("") << ";dim=" << dim;
  }
  return os.str();
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw InvalidInputError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw InvalidInputError("cosine_similarity: empty vectors");
  const simd::DotNorms r = simd::dot_norms(a, b);
  if (r.norm_sq_a == 0.0 || r.norm_sq_b == 0.0) {
    throw DegenerateInputError("cosine_similarity: zero-norm vector");
  }
  const double c = r.dot / (std::sqrt(r.norm_sq_a) * std::sqrt(r.norm_sq_b));
  return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  return cosine_similarity(a.values(), b.values());
}

Embedding normalized_mean(std::span<const Embedding> vectors) {
  if (vectors.empty()) throw InvalidInputError("normalized_mean: no vectors");
  const std::size_t dim = vectors.front().dim();
  std::vector<double> sum(dim, 0.0);
  for (const Embedding& v : vectors) {
    if (v.dim() != dim) throw InvalidInputError("normalized_mean: dimension mismatch");
    for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
  }
  const double n = static_cast<double>(vectors.size());
  double norm_sq = 0.0;
  for (double& s : sum) {
    s /= n;
    norm_sq += s * s;
  }
  if (norm_sq == 0.0) throw DegenerateInputError("normalized_mean: mean vector is zero");
  const double norm = std::sqrt(norm_sq);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(sum[i] / norm);
  return Embedding(std::move(out));
}

namespace {

void check_frames(std::span<const FrameRef> frames, const char* op) {
  if (frames.empty()) throw InvalidInputError(std::string(op) + ": empty frame list");
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].video_id != frames[0].video_id) {
      throw InvalidInputError(std::string(op) + ": frames from more than one video");
    }
    if (frames[i].frame_index <= frames[i - 1].frame_index) {
      throw InvalidInputError(std::string(op) + ": frames not sorted by frame_index at position " +
                              std::to_string(i));
    }
  }
}

void check_dim(const Embedding& e, std::size_t dim, const char* op) {
  if (e.dim() != dim) {
    throw BackendError(std::string(op) + ": backend returned dim " + std::to_string(e.dim()) +
                       ", expected " + std::to_string(dim));
  }
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::vector<Embedding> EmbeddingProvider::embed_frames(std::span<const FrameRef> frames) {
  check_frames(frames, "embed_frames");
  ++requests_;
  std::vector<Embedding> out = do_embed_frames(frames);
  if (out.size() != frames.size()) {
    throw BackendError("embed_frames: backend returned " + std::to_string(out.size()) +
                       " vectors for " + std::to_string(frames.size()) + " frames");
  }
  for (const Embedding& e : out) check_dim(e, dim(), "embed_frames");
  return out;
}

Embedding EmbeddingProvider::embed_clip(std::span<const FrameRef> clip_frames) {
  check_frames(clip_frames, "embed_clip");
  ++requests_;
  Embedding e = do_embed_clip(clip_frames);
  check_dim(e, dim(), "embed_clip");
  return e;
}

Embedding EmbeddingProvider::embed_query(std::string_view query) {
  if (blank(query)) throw InvalidInputError("embed_query: empty query");
  ++requests_;
  Embedding e = do_embed_query(query);
  check_dim(e, dim(), "embed_query");
  return e;
}

// --- mock ------------------------------------------------------------------

namespace {

constexpr std::uint64_t kFrameDomain = 0x6672616d65ULL;  // "frame"
constexpr std::uint64_t kQueryDomain = 0x7175657279ULL;  // "query"

std::vector<float> keyed_components(std::uint64_t seed, std::uint64_t domain, std::uint64_t a,
                                    std::uint64_t b, std::size_t dim) {
  const std::uint64_t base = mix64(mix64(mix64(seed ^ domain) ^ a) ^ b);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = unit_interval_sym(mix64(base + i));
  return out;
}

}  // namespace

MockEmbeddingProvider::MockEmbeddingProvider(std::uint64_t seed, std::size_t dim)
    : seed_(seed), dim_(dim) {
  if (dim == 0) throw InvalidInputError("mock backend dim must be positive");
}

std::string MockEmbeddingProvider::identity() const {
  return EmbeddingBackendDescriptor::mock(seed_, dim_).canonical();
}

Embedding MockEmbeddingProvider::frame_embedding(std::string_view video_id,
                                                 std::int64_t frame_index) const {
  auto v = keyed_components(seed_, kFrameDomain, fnv1a64(video_id),
                            static_cast<std::uint64_t>(frame_index), dim_);
  // All-zero output would need every 24-bit draw to land on the midpoint.
  return Embedding(std::move(v));
}

std::vector<Embedding> MockEmbeddingProvider::do_embed_frames(std::span<const FrameRef> frames) {
  std::vector<Embedding> out;
  out.reserve(frames.size());
  for (const FrameRef& f : frames) out.push_back(frame_embedding(f.video_id, f.frame_index));
  return out;
}

Embedding MockEmbeddingProvider::do_embed_clip(std::span<const FrameRef> clip_frames) {
  const std::vector<Embedding> per_frame = do_embed_frames(clip_frames);
  return normalized_mean(per_frame);
}

Embedding MockEmbeddingProvider::do_embed_query(std::string_view query) {
  return Embedding(keyed_components(seed_, kQueryDomain, fnv1a64(query),
                                    fnv1a64(query, 0x84222325cbf29ce4ULL), dim_));
}

// --- fixture ---------------------------------------------------------------

FixtureEmbeddingProvider::FixtureEmbeddingProvider(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw InvalidInputError("fixture backend dim must be positive");
}

namespace {

std::uint64_t hash_embedding(std::uint64_t h, const Embedding& e) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(e.values().data()),
                                  e.dim() * sizeof(float)),
                 h);
}

}  // namespace

void FixtureEmbeddingProvider::add_video(const std::string& video_id,
                                         std::map<std::int64_t, Embedding> frames) {
  std::uint64_t h = fnv1a64(video_id, mix64(content_hash_));
  for (const auto& [index, e] : frames) {
    if (e.dim() != dim_) throw InvalidInputError("fixture frame embedding has wrong dim");
    h = hash_embedding(mix64(h ^ static_cast<std::uint64_t>(index)), e);
  }
  content_hash_ = h;
  videos_[video_id] = std::move(frames);
}

void FixtureEmbeddingProvider::add_query(const std::string& query, Embedding embedding) {
  if (embedding.dim() != dim_) throw InvalidInputError("fixture query embedding has wrong dim");
  content_hash_ = hash_embedding(fnv1a64(query, mix64(content_hash_ ^ 0x71)), embedding);
  queries_[query] = std::move(embedding);
}

std::string FixtureEmbeddingProvider::identity() const {
  std::ostringstream os;
  os << "fixture;dim=" << dim_ << ";content=" << std::hex << content_hash_;
  return os.str();
}

const Embedding& FixtureEmbeddingProvider::lookup(const FrameRef& frame) const {
  auto v = videos_.find(frame.video_id);
  if (v == videos_.end()) throw BackendError("fixture backend: unknown video " + frame.video_id);
  auto f = v->second.find(frame.frame_index);
  if (f == v->second.end()) {
    throw BackendError("fixture backend: no embedding for frame " +
                       std::to_string(frame.frame_index) + " of " + frame.video_id);
  }
  return f->second;
}

std::vector<Embedding> FixtureEmbeddingProvider::do_embed_frames(
    std::span<const FrameRef> frames) {
  std::vector<Embedding> out;
  out.reserve(frames.size());
  for (const FrameRef& f : frames) out.push_back(lookup(f));
  return out;
}

Embedding FixtureEmbeddingProvider::do_embed_clip(std::span<const FrameRef> clip_frames) {
  return normalized_mean(do_embed_frames(clip_frames));
}

Embedding FixtureEmbeddingProvider::do_embed_query(std::string_view query) {
  auto it = queries_.find(query);
  if (it == queries_.end()) {
    throw BackendError("fixture backend: unknown query '" + std::string(query) + "'");
  }
  return it->second;
}

// --- factory ---------------------------------------------------------------

std::unique_ptr<EmbeddingProvider> make_embedding_provider(
    const EmbeddingBackendDescriptor& backend) {
  backend.validate();
  if (backend.kind == BackendKind::kMock) {
    return std::make_unique<MockEmbeddingProvider>(*backend.seed, backend.dim);
  }
  return std::make_unique<RemoteEmbeddingProvider>(*backend.endpoint, backend.dim);
}

std::vector<Embedding> embed_frames(const EmbeddingBackendDescriptor& backend,
                                    std::span<const FrameRef> frames) {
  return make_embedding_provider(backend)->embed_frames(frames);
}

Embedding embed_clip(const EmbeddingBackendDescriptor& backend,
                     std::span<const FrameRef> clip_frames) {
  return make_embedding_provider(backend)->embed_clip(clip_frames);
}

Embedding embed_query(const EmbeddingBackendDescriptor& backend, std::string_view query) {
  return make_embedding_provider(backend)->embed_query(query);
}

}  // namespace stir
