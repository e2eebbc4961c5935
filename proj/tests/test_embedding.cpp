#include <cmath>
#include <set>

#include <catch_amalgamated.hpp>

#include "stir/embedding.hpp"
#include "stir/error.hpp"
#include "support/fixtures.hpp"

using Catch::Matchers::WithinAbs;
using stir::test::vec;

namespace {

std::vector<stir::FrameRef> frames(const std::string& id, std::initializer_list<std::int64_t> idx) {
  std::vector<stir::FrameRef> out;
  for (auto i : idx) out.push_back({id, i, static_cast<double>(i) / 3.0});
  return out;
}

double norm(const stir::Embedding& e) {
  double s = 0.0;
  for (float x : e.values()) s += double(x) * double(x);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("cosine similarity examples") {
  CHECK(stir::cosine_similarity(vec({1, 0}), vec({1, 0})) == 1.0);
  CHECK(stir::cosine_similarity(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK_THAT(stir::cosine_similarity(vec({1, 2, 2}), vec({2, 1, 2})), WithinAbs(8.0 / 9.0, 1e-12));
  CHECK_THAT(stir::cosine_similarity(vec({1, 1}), vec({-2, -2})), WithinAbs(-1.0, 1e-15));
}

TEST_CASE("cosine similarity is symmetric and scale invariant") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto v = stir::test::random_embeddings(rng, 2, 1 + i % 40);
    const double ab = stir::cosine_similarity(v[0], v[1]);
    CHECK(ab == stir::cosine_similarity(v[1], v[0]));
    CHECK(ab >= -1.0);
    CHECK(ab <= 1.0);
    std::vector<float> scaled(v[0].values().begin(), v[0].values().end());
    for (float& x : scaled) x *= 4.0f;  // power of two keeps float products exact
    CHECK_THAT(stir::cosine_similarity(stir::Embedding(scaled), v[1]), WithinAbs(ab, 1e-12));
  }
}

TEST_CASE("cosine similarity rejects bad input") {
  CHECK_THROWS_AS(stir::cosine_similarity(vec({1, 0}), vec({1, 0, 0})), stir::InvalidInputError);
  CHECK_THROWS_AS(stir::cosine_similarity(vec({0, 0}), vec({1, 0})), stir::DegenerateInputError);
}

TEST_CASE("embeddings must be finite and non-empty") {
  CHECK_THROWS_AS(stir::Embedding(std::vector<float>{}), stir::InvalidInputError);
  CHECK_THROWS_AS(stir::Embedding(std::vector<float>{1.0f, NAN}), stir::InvalidInputError);
  CHECK_THROWS_AS(stir::Embedding(std::vector<float>{INFINITY}), stir::InvalidInputError);
}

TEST_CASE("mock frame embeddings are deterministic") {
  stir::MockEmbeddingProvider a(7, 32), b(7, 32);
  const auto f = frames("v", {0, 1, 2});
  const auto x = a.embed_frames(f);
  const auto y = b.embed_frames(f);
  REQUIRE(x.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(x[i].dim() == 32);
    CHECK(stir::bit_equal(x[i], y[i]));
  }
  CHECK_FALSE(stir::bit_equal(x[0], x[1]));
  stir::MockEmbeddingProvider other_seed(8, 32);
  CHECK_FALSE(stir::bit_equal(other_seed.embed_frames(f)[0], x[0]));
}

TEST_CASE("mock frame embedding does not depend on batch composition") {
  stir::MockEmbeddingProvider p(7, 16);
  const auto batch = p.embed_frames(frames("v", {3, 4, 5}));
  const auto single = p.embed_frames(frames("v", {4}));
  CHECK(stir::bit_equal(batch[1], single[0]));
  CHECK(stir::bit_equal(batch[2], p.frame_embedding("v", 5)));
}

TEST_CASE("embed_frames preconditions") {
  stir::MockEmbeddingProvider p(7, 8);
  CHECK_THROWS_AS(p.embed_frames({}), stir::InvalidInputError);
  auto mixed = frames("v", {0, 1});
  mixed[1].video_id = "w";
  CHECK_THROWS_AS(p.embed_frames(mixed), stir::InvalidInputError);
  CHECK_THROWS_AS(p.embed_frames(frames("v", {2, 1})), stir::InvalidInputError);
}

TEST_CASE("clip embedding is the normalized mean of frame embeddings") {
  stir::MockEmbeddingProvider p(7, 24);
  const auto f = frames("v", {10, 11, 12, 13});
  const auto per_frame = p.embed_frames(f);
  std::vector<double> mean(24, 0.0);
  for (const auto& e : per_frame) {
    for (std::size_t i = 0; i < 24; ++i) mean[i] += e[i];
  }
  double n = 0.0;
  for (double& m : mean) {
    m /= 4.0;
    n += m * m;
  }
  n = std::sqrt(n);
  const auto clip = p.embed_clip(f);
  for (std::size_t i = 0; i < 24; ++i) CHECK_THAT(clip[i], WithinAbs(mean[i] / n, 1e-6));
  CHECK_THAT(norm(clip), WithinAbs(1.0, 1e-6));
}

TEST_CASE("single-frame clip is the normalized frame") {
  stir::MockEmbeddingProvider p(7, 12);
  const auto f = frames("v", {42});
  const auto frame = p.embed_frames(f)[0];
  const auto clip = p.embed_clip(f);
  CHECK_THAT(norm(clip), WithinAbs(1.0, 1e-6));
  CHECK_THAT(stir::cosine_similarity(frame, clip), WithinAbs(1.0, 1e-6));
}

TEST_CASE("normalized mean of identical vectors keeps direction") {
  const std::vector<stir::Embedding> same{vec({3, 4}), vec({3, 4})};
  const auto m = stir::normalized_mean(same);
  CHECK_THAT(m[0], WithinAbs(0.6, 1e-7));
  CHECK_THAT(m[1], WithinAbs(0.8, 1e-7));
  const std::vector<stir::Embedding> opposite{vec({1, 0}), vec({-1, 0})};
  CHECK_THROWS_AS(stir::normalized_mean(opposite), stir::DegenerateInputError);
}

TEST_CASE("query embeddings are deterministic and distinct") {
  stir::MockEmbeddingProvider p(7, 32);
  CHECK(stir::bit_equal(p.embed_query("why is the door open"), p.embed_query("why is the door open")));
  const std::vector<std::string> queries{"a", "b", "why", "who", "where is the cat", "where is the dog"};
  for (std::size_t i = 0; i < queries.size(); ++i) {
    for (std::size_t j = i + 1; j < queries.size(); ++j) {
      CHECK_FALSE(stir::bit_equal(p.embed_query(queries[i]), p.embed_query(queries[j])));
    }
  }
  CHECK_THROWS_AS(p.embed_query(""), stir::InvalidInputError);
  CHECK_THROWS_AS(p.embed_query(" \n\t"), stir::InvalidInputError);
}

TEST_CASE("request counter counts calls") {
  stir::MockEmbeddingProvider p(1, 4);
  p.embed_frames(frames("v", {0, 1}));
  p.embed_query("q");
  p.embed_clip(frames("v", {0}));
  CHECK(p.request_count() == 3);
}

TEST_CASE("fixture provider serves stored vectors") {
  stir::FixtureEmbeddingProvider p(2);
  p.add_video("v", {{0, vec({1, 0})}, {1, vec({0, 1})}});
  p.add_query("q", vec({1, 1}));
  const auto out = p.embed_frames(frames("v", {0, 1}));
  CHECK(stir::bit_equal(out[1], vec({0, 1})));
  CHECK(stir::bit_equal(p.embed_query("q"), vec({1, 1})));
  CHECK_THROWS_AS(p.embed_frames(frames("v", {2})), stir::BackendError);
  CHECK_THROWS_AS(p.embed_query("missing"), stir::BackendError);
  CHECK_THROWS_AS(p.add_video("w", {{0, vec({1, 2, 3})}}), stir::InvalidInputError);
}

TEST_CASE("fixture identity tracks content") {
  stir::FixtureEmbeddingProvider a(2), b(2);
  a.add_video("v", {{0, vec({1, 0})}});
  b.add_video("v", {{0, vec({1, 0.5})}});
  CHECK(a.identity() != b.identity());
}

TEST_CASE("backend descriptors") {
  const auto m = stir::EmbeddingBackendDescriptor::mock(7, 16);
  CHECK_NOTHROW(m.validate());
  CHECK(m.canonical() != stir::EmbeddingBackendDescriptor::mock(8, 16).canonical());
  stir::EmbeddingBackendDescriptor bad;
  bad.kind = stir::BackendKind::kRemote;
  CHECK_THROWS_AS(bad.validate(), stir::InvalidInputError);
  const auto v = stir::embed_frames(m, frames("v", {0, 1, 2}));
  CHECK(v.size() == 3);
  CHECK(v[0].dim() == 16);
  CHECK(stir::embed_query(m, "x").dim() == 16);
}
