#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stir {

// A finite, non-empty vector in the shared video-language space.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<float> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }
  bool empty() const noexcept { return values_.empty(); }

  bool operator==(const Embedding&) const = default;

 private:
  std::vector<float> values_;
};

// True when both vectors have identical bytes.
bool bit_equal(const Embedding& a, const Embedding& b);

struct FrameRef {
  std::string video_id;
  std::int64_t frame_index = 0;
  double timestamp = 0.0;

  bool operator==(const FrameRef&) const = default;
};

enum class BackendKind { kMock, kRemote };

struct EmbeddingBackendDescriptor {
  BackendKind kind = BackendKind::kMock;
  std::optional<std::string> endpoint;
  std::optional<std::uint64_t> seed;
  std::size_t dim = 64;

  static EmbeddingBackendDescriptor mock(std::uint64_t seed, std::size_t dim);
  static EmbeddingBackendDescriptor remote(std::string endpoint, std::size_t dim);

  // Throws InvalidInputError when the kind-specific fields are missing.
  void validate() const;
  // Stable text form used as cache-key material.
  std::string canonical() const;
};

// Cosine of the angle between a and b, clamped to [-1, 1].
// Throws InvalidInputError on dimension mismatch and DegenerateInputError on
// a zero-norm input.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const Embedding& a, const Embedding& b);

// Unit-normalized arithmetic mean, accumulated in double in input order.
Embedding normalized_mean(std::span<const Embedding> vectors);

// Common front end for every embedding source. Public calls validate their
// arguments and results; subclasses implement the do_* hooks.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t dim() const = 0;
  // Identifies the provider's content for cache keys: two providers with
  // equal identities must return identical vectors.
  virtual std::string identity() const = 0;

  std::vector<Embedding> embed_frames(std::span<const FrameRef> frames);
  Embedding embed_clip(std::span<const FrameRef> clip_frames);
  Embedding embed_query(std::string_view query);

  // Number of embed_* calls that reached the backend.
  std::uint64_t request_count() const noexcept { return requests_.load(); }

 protected:
  virtual std::vector<Embedding> do_embed_frames(std::span<const FrameRef> frames) = 0;
  virtual Embedding do_embed_clip(std::span<const FrameRef> clip_frames) = 0;
  virtual Embedding do_embed_query(std::string_view query) = 0;

 private:
  std::atomic<std::uint64_t> requests_{0};
};

// Stateless pseudorandom embeddings keyed by (seed, video_id, frame_index) or
// (seed, query bytes). Components are uniform on [-1, 1).
class MockEmbeddingProvider final : public EmbeddingProvider {
 public:
  MockEmbeddingProvider(std::uint64_t seed, std::size_t dim);

  std::size_t dim() const override { return dim_; }
  std::string identity() const override;

  Embedding frame_embedding(std::string_view video_id, std::int64_t frame_index) const;

 protected:
  std::vector<Embedding> do_embed_frames(std::span<const FrameRef> frames) override;
  Embedding do_embed_clip(std::span<const FrameRef> clip_frames) override;
  Embedding do_embed_query(std::string_view query) override;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

// Serves precomputed frame and query vectors, e.g. synthetic corpora with
// planted structure. Clip vectors are the normalized mean of frame vectors.
class FixtureEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit FixtureEmbeddingProvider(std::size_t dim);

  void add_video(const std::string& video_id, std::map<std::int64_t, Embedding> frames);
  void add_query(const std::string& query, Embedding embedding);

  std::size_t dim() const override { return dim_; }
  std::string identity() const override;

 protected:
  std::vector<Embedding> do_embed_frames(std::span<const FrameRef> frames) override;
  Embedding do_embed_clip(std::span<const FrameRef> clip_frames) override;
  Embedding do_embed_query(std::string_view query) override;

 private:
  const Embedding& lookup(const FrameRef& frame) const;

  std::size_t dim_;
  std::map<std::string, std::map<std::int64_t, Embedding>> videos_;
  std::map<std::string, Embedding, std::less<>> queries_;
  std::uint64_t content_hash_ = 0;
};

std::unique_ptr<EmbeddingProvider> make_embedding_provider(
    const EmbeddingBackendDescriptor& backend);

std::vector<Embedding> embed_frames(const EmbeddingBackendDescriptor& backend,
                                    std::span<const FrameRef> frames);
Embedding embed_clip(const EmbeddingBackendDescriptor& backend,
                     std::span<const FrameRef> clip_frames);
Embedding embed_query(const EmbeddingBackendDescriptor& backend, std::string_view query);

}  // namespace stir
