#pragma once

// HTTP/JSON client for model services implementing the /embed, /score and
// /health protocol.

#include <chrono>
#include <cstddef>
#include <string>

#include <json.hpp>

#include "stir/embedding.hpp"

namespace stir {

class JsonHttpClient {
 public:
  explicit JsonHttpClient(std::string endpoint,
                          std::chrono::milliseconds timeout = std::chrono::seconds(60));

  // Throws BackendError on transport failure, non-200 status or a body that
  // is not JSON.
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  nlohmann::json get(const std::string& path) const;

  const std::string& endpoint() const noexcept { return endpoint_; }

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

struct HealthStatus {
  std::string status;
  std::size_t dim = 0;
};

HealthStatus check_health(const std::string& endpoint);

// Parses {"vectors":[[...],...]} and checks count, dim and finiteness; any
// defect rejects the whole response.
std::vector<Embedding> parse_vectors_response(const nlohmann::json& response,
                                              std::size_t expected_count,
                                              std::size_t expected_dim);

class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(std::string endpoint, std::size_t dim, std::size_t batch_size = 256,
                          std::size_t parallelism = 4);

  std::size_t dim() const override { return dim_; }
  std::string identity() const override;

 protected:
  std::vector<Embedding> do_embed_frames(std::span<const FrameRef> frames) override;
  Embedding do_embed_clip(std::span<const FrameRef> clip_frames) override;
  Embedding do_embed_query(std::string_view query) override;

 private:
  std::vector<Embedding> request_frames(std::span<const FrameRef> frames) const;

  JsonHttpClient client_;
  std::size_t dim_;
  std::size_t batch_size_;
  std::size_t parallelism_;
};

}  // namespace stir
