#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stir/embedding.hpp"

namespace stir {

// Row-major float32 matrix as stored in one cache file.
struct FloatMatrix {
  std::uint32_t cols = 0;
  std::vector<float> data;

  std::size_t rows() const { return cols == 0 ? 0 : data.size() / cols; }
  bool operator==(const FloatMatrix&) const = default;
};

// On-disk content-addressed store. One file per key, named by the key (a
// lowercase hex digest). File layout, all little-endian:
//   bytes 0-3   magic "STEC"
//   bytes 4-7   u32 format version
//   bytes 8-11  u32 dim (columns)
//   bytes 12-15 u32 row count
//   then rows * dim float32 values.
// A corrupted entry reads as a miss and emits a warning. Reads may run
// concurrently; writes are serialized and land atomically via rename.
class EmbeddingCache {
 public:
  static constexpr std::uint32_t kVersion = 1;

  explicit EmbeddingCache(std::filesystem::path dir);

  void put_matrix(const std::string& key, const FloatMatrix& value);
  std::optional<FloatMatrix> get_matrix(const std::string& key) const;

  void put(const std::string& key, std::span<const Embedding> rows);
  std::optional<std::vector<Embedding>> get(const std::string& key) const;

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path dir_;
  mutable std::mutex write_mutex_;
  std::uint64_t temp_counter_ = 0;
};

// Serves embed_* calls from the cache and forwards misses to `inner`.
class CachingEmbeddingProvider final : public EmbeddingProvider {
 public:
  CachingEmbeddingProvider(EmbeddingProvider& inner, EmbeddingCache& cache);

  std::size_t dim() const override { return inner_.dim(); }
  std::string identity() const override { return inner_.identity(); }

 protected:
  std::vector<Embedding> do_embed_frames(std::span<const FrameRef> frames) override;
  Embedding do_embed_clip(std::span<const FrameRef> clip_frames) override;
  Embedding do_embed_query(std::string_view query) override;

 private:
  std::string frames_key(const char* kind, std::span<const FrameRef> frames) const;

  EmbeddingProvider& inner_;
  EmbeddingCache& cache_;
};

}  // namespace stir
