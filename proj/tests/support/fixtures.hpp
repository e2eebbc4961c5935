#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stir/embedding.hpp"
#include "stir/graph.hpp"
#include "stir/log.hpp"
#include "stir/pipeline.hpp"

namespace stir::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Collects warnings while alive.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();

  const std::vector<std::string>& messages() const { return *messages_; }

 private:
  std::shared_ptr<std::vector<std::string>> messages_;
  WarningHandler previous_;
};

Embedding vec(std::initializer_list<float> values);
std::vector<Embedding> scalar_stream(std::initializer_list<float> values);

std::vector<Embedding> random_embeddings(std::mt19937_64& rng, std::size_t n, std::size_t dim);

// One single-frame clip per embedding, at 1 fps.
std::vector<Clip> unit_clips(std::size_t n);

SpatioTemporalGraph graph_from_embeddings(const std::vector<Embedding>& embeddings,
                                          double construction_floor);
SpatioTemporalGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                                 double construction_floor);

// Frames 0..n-1 of `video_id` at `fps`.
VideoManifest make_manifest(const std::string& video_id, std::size_t n, double fps = 3.0);

}  // namespace stir::test
