#include "stir/remote_backend.hpp"

#include <cmath>
#include <future>

#include <httplib.h>

#include "stir/error.hpp"

namespace stir {

JsonHttpClient::JsonHttpClient(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
}

namespace {

nlohmann::json decode(const httplib::Result& res, const std::string& where) {
  if (!res) {
    throw BackendError(where + ": request failed (" + httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) {
    throw BackendError(where + ": HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw BackendError(where + ": malformed JSON response: " + e.what());
  }
}

}  // namespace

nlohmann::json JsonHttpClient::post(const std::string& path, const nlohmann::json& body) const {
  httplib::Client cli(endpoint_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  return decode(cli.Post(path, body.dump(), "application/json"), "POST " + endpoint_ + path);
}

nlohmann::json JsonHttpClient::get(const std::string& path) const {
  httplib::Client cli(endpoint_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  return decode(cli.Get(path), "GET " + endpoint_ + path);
}

HealthStatus check_health(const std::string& endpoint) {
  const nlohmann::json j = JsonHttpClient(endpoint).get("/health");
  try {
    return HealthStatus{j.at("status").get<std::string>(), j.at("dim").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("GET /health: unexpected response shape: " + std::string(e.what()));
  }
}

std::vector<Embedding> parse_vectors_response(const nlohmann::json& response,
                                              std::size_t expected_count,
                                              std::size_t expected_dim) {
  if (!response.is_object() || !response.contains("vectors") ||
      !response["vectors"].is_array()) {
    throw BackendError("embed response lacks a \"vectors\" array");
  }
  const auto& rows = response["vectors"];
  if (rows.size() != expected_count) {
    throw BackendError("embed response has " + std::to_string(rows.size()) + " vectors, expected " +
                       std::to_string(expected_count));
  }
  std::vector<Embedding> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (!row.is_array() || row.size() != expected_dim) {
      throw BackendError("embed response vector " + std::to_string(r) + " has wrong dim");
    }
    std::vector<float> values(expected_dim);
    for (std::size_t i = 0; i < expected_dim; ++i) {
      if (!row[i].is_number()) {
        throw BackendError("embed response vector " + std::to_string(r) + " is not numeric");
      }
      const double v = row[i].get<double>();
      if (!std::isfinite(v)) throw BackendError("embed response contains a non-finite value");
      values[i] = static_cast<float>(v);
    }
    out.emplace_back(std::move(values));
  }
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string endpoint, std::size_t dim,
                                                 std::size_t batch_size, std::size_t parallelism)
    : client_(std::move(endpoint)),
      dim_(dim),
      batch_size_(batch_size == 0 ? 1 : batch_size),
      parallelism_(parallelism == 0 ? 1 : parallelism) {
  if (dim == 0) throw InvalidInputError("remote backend dim must be positive");
}

std::string RemoteEmbeddingProvider::identity() const {
  return EmbeddingBackendDescriptor::remote(client_.endpoint(), dim_).canonical();
}

namespace {

nlohmann::json frame_indices(std::span<const FrameRef> frames) {
  nlohmann::json idx = nlohmann::json::array();
  for (const FrameRef& f : frames) idx.push_back(f.frame_index);
  return idx;
}

}  // namespace

std::vector<Embedding> RemoteEmbeddingProvider::request_frames(
    std::span<const FrameRef> frames) const {
  const nlohmann::json body = {{"kind", "frames"},
                               {"video_id", frames.front().video_id},
                               {"frame_indices", frame_indices(frames)},
                               {"dim_hint", dim_}};
  return parse_vectors_response(client_.post("/embed", body), frames.size(), dim_);
}

std::vector<Embedding> RemoteEmbeddingProvider::do_embed_frames(
    std::span<const FrameRef> frames) {
  std::vector<std::span<const FrameRef>> batches;
  for (std::size_t i = 0; i < frames.size(); i += batch_size_) {
    batches.push_back(frames.subspan(i, std::min(batch_size_, frames.size() - i)));
  }
  // Each batch lands in its own slot, so completion order does not matter.
  std::vector<std::vector<Embedding>> results(batches.size());
  for (std::size_t start = 0; start < batches.size(); start += parallelism_) {
    const std::size_t stop = std::min(batches.size(), start + parallelism_);
    std::vector<std::future<std::vector<Embedding>>> inflight;
    for (std::size_t b = start; b < stop; ++b) {
      inflight.push_back(
          std::async(std::launch::async, [this, batch = batches[b]] { return request_frames(batch); }));
    }
    for (std::size_t b = start; b < stop; ++b) results[b] = inflight[b - start].get();
  }
  std::vector<Embedding> out;
  out.reserve(frames.size());
  for (auto& r : results) {
    for (auto& e : r) out.push_back(std::move(e));
  }
  return out;
}

Embedding RemoteEmbeddingProvider::do_embed_clip(std::span<const FrameRef> clip_frames) {
  const nlohmann::json body = {{"kind", "clip"},
                               {"video_id", clip_frames.front().video_id},
                               {"frame_indices", frame_indices(clip_frames)},
                               {"dim_hint", dim_}};
  return parse_vectors_response(client_.post("/embed", body), 1, dim_).front();
}

Embedding RemoteEmbeddingProvider::do_embed_query(std::string_view query) {
  const nlohmann::json body = {{"kind", "query"}, {"query", query}, {"dim_hint", dim_}};
  return parse_vectors_response(client_.post("/embed", body), 1, dim_).front();
}

}  // namespace stir
