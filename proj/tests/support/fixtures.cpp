#include "support/fixtures.hpp"

#include <atomic>
#include <chrono>

namespace stir::test {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = std::filesystem::temp_directory_path() /
          ("stir_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

WarningCapture::WarningCapture() : messages_(std::make_shared<std::vector<std::string>>()) {
  previous_ = set_warning_handler(
      [sink = messages_](std::string_view m) { sink->emplace_back(m); });
}

WarningCapture::~WarningCapture() { set_warning_handler(previous_); }

Embedding vec(std::initializer_list<float> values) { return Embedding(std::vector<float>(values)); }

std::vector<Embedding> scalar_stream(std::initializer_list<float> values) {
  std::vector<Embedding> out;
  for (float v : values) out.push_back(vec({v}));
  return out;
}

std::vector<Embedding> random_embeddings(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(dim);
    for (float& x : v) x = normal(rng);
    out.emplace_back(std::move(v));
  }
  return out;
}

std::vector<Clip> unit_clips(std::size_t n) {
  std::vector<Clip> clips;
  for (std::size_t i = 0; i < n; ++i) {
    clips.push_back({i, i + 1, static_cast<double>(i), static_cast<double>(i)});
  }
  return clips;
}

SpatioTemporalGraph graph_from_embeddings(const std::vector<Embedding>& embeddings,
                                          double construction_floor) {
  return build_graph(unit_clips(embeddings.size()), embeddings, construction_floor);
}

SpatioTemporalGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                                 double construction_floor) {
  return graph_from_embeddings(random_embeddings(rng, n, dim), construction_floor);
}

VideoManifest make_manifest(const std::string& video_id, std::size_t n, double fps) {
  VideoManifest m;
  m.video_id = video_id;
  m.fps = fps;
  for (std::size_t i = 0; i < n; ++i) {
    m.frames.push_back({video_id, static_cast<std::int64_t>(i), static_cast<double>(i) / fps});
  }
  return m;
}

}  // namespace stir::test
