#include "stir/embedding_cache.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "stir/error.hpp"
#include "stir/hashing.hpp"
#include "stir/log.hpp"

namespace stir {
namespace {

constexpr std::array<char, 4> kMagic = {'S', 'T', 'E', 'C'};
constexpr std::size_t kHeaderSize = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

float get_f32(const char* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

bool valid_key(const std::string& key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec || !std::filesystem::is_directory(dir_)) {
    throw CacheCorruptionError("cache directory unusable: " + dir_.string());
  }
}

std::filesystem::path EmbeddingCache::path_for(const std::string& key) const {
  if (!valid_key(key)) throw InvalidInputError("cache key must be lowercase hex: " + key);
  return dir_ / key;
}

void EmbeddingCache::put_matrix(const std::string& key, const FloatMatrix& value) {
  if (value.cols == 0 || value.data.size() % value.cols != 0) {
    throw InvalidInputError("cache value is not a whole number of rows");
  }
  const auto target = path_for(key);
  std::string bytes;
  bytes.reserve(kHeaderSize + value.data.size() * 4);
  bytes.append(kMagic.data(), kMagic.size());
  put_u32(bytes, kVersion);
  put_u32(bytes, value.cols);
  put_u32(bytes, static_cast<std::uint32_t>(value.rows()));
  for (float f : value.data) put_f32(bytes, f);

  std::lock_guard lock(write_mutex_);
  std::ostringstream tmp_name;
  tmp_name << key << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.'
           << temp_counter_++;
  const auto tmp = dir_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CacheCorruptionError("failed writing cache entry " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw CacheCorruptionError("failed committing cache entry " + target.string());
  }
}

std::optional<FloatMatrix> EmbeddingCache::get_matrix(const std::string& key) const {
  const auto path = path_for(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto corrupt = [&](const char* why) -> std::optional<FloatMatrix> {
    warn("ignoring corrupted cache entry " + path.string() + ": " + why);
    return std::nullopt;
  };
  if (bytes.size() < kHeaderSize) return corrupt("truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) return corrupt("bad magic");
  if (get_u32(bytes.data() + 4) != kVersion) return corrupt("unsupported version");
  FloatMatrix m;
  m.cols = get_u32(bytes.data() + 8);
  const std::uint64_t rows = get_u32(bytes.data() + 12);
  if (m.cols == 0) return corrupt("zero dim");
  if (bytes.size() != kHeaderSize + rows * m.cols * 4) return corrupt("size mismatch");
  m.data.resize(rows * m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    m.data[i] = get_f32(bytes.data() + kHeaderSize + 4 * i);
  }
  return m;
}

void EmbeddingCache::put(const std::string& key, std::span<const Embedding> rows) {
  if (rows.empty()) throw InvalidInputError("cache put: no vectors");
  FloatMatrix m;
  m.cols = static_cast<std::uint32_t>(rows.front().dim());
  m.data.reserve(rows.size() * m.cols);
  for (const Embedding& e : rows) {
    if (e.dim() != m.cols) throw InvalidInputError("cache put: mixed dimensions");
    m.data.insert(m.data.end(), e.values().begin(), e.values().end());
  }
  put_matrix(key, m);
}

std::optional<std::vector<Embedding>> EmbeddingCache::get(const std::string& key) const {
  auto m = get_matrix(key);
  if (!m) return std::nullopt;
  std::vector<Embedding> out;
  out.reserve(m->rows());
  try {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      auto first = m->data.begin() + static_cast<std::ptrdiff_t>(r * m->cols);
      out.emplace_back(std::vector<float>(first, first + m->cols));
    }
  } catch (const InvalidInputError&) {
    warn("ignoring cache entry " + key + ": non-finite values");
    return std::nullopt;
  }
  return out;
}

CachingEmbeddingProvider::CachingEmbeddingProvider(EmbeddingProvider& inner,
                                                   EmbeddingCache& cache)
    : inner_(inner), cache_(cache) {}

std::string CachingEmbeddingProvider::frames_key(const char* kind,
                                                 std::span<const FrameRef> frames) const {
  std::string indices;
  for (const FrameRef& f : frames) indices += std::to_string(f.frame_index) + ',';
  const std::string id = inner_.identity();
  return content_hash({kind, id, frames.front().video_id, indices});
}

std::vector<Embedding> CachingEmbeddingProvider::do_embed_frames(
    std::span<const FrameRef> frames) {
  const std::string key = frames_key("frames", frames);
  if (auto hit = cache_.get(key); hit && hit->size() == frames.size()) return std::move(*hit);
  auto fresh = inner_.embed_frames(frames);
  cache_.put(key, fresh);
  return fresh;
}

Embedding CachingEmbeddingProvider::do_embed_clip(std::span<const FrameRef> clip_frames) {
  const std::string key = frames_key("clip", clip_frames);
  if (auto hit = cache_.get(key); hit && hit->size() == 1) return std::move(hit->front());
  Embedding fresh = inner_.embed_clip(clip_frames);
  cache_.put(key, std::span<const Embedding>(&fresh, 1));
  return fresh;
}

Embedding CachingEmbeddingProvider::do_embed_query(std::string_view query) {
  const std::string id = inner_.identity();
  const std::string key = content_hash({"query", id, query});
  if (auto hit = cache_.get(key); hit && hit->size() == 1) return std::move(hit->front());
  Embedding fresh = inner_.embed_query(query);
  cache_.put(key, std::span<const Embedding>(&fresh, 1));
  return fresh;
}

}  // namespace stir
