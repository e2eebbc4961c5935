#include <cmath>
#include <fstream>
#include <iterator>

#include <catch_amalgamated.hpp>

#include "stir/error.hpp"
#include "stir/scoring.hpp"
#include "support/fixtures.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using stir::RelevanceDistribution;

namespace {

RelevanceDistribution dist(double a, double b, double c, double d, double e) {
  return RelevanceDistribution({a, b, c, d, e});
}

std::vector<stir::ScoredFrame> scored(std::initializer_list<double> scores) {
  std::vector<stir::ScoredFrame> out;
  std::int64_t i = 0;
  for (double s : scores) {
    stir::ScoredFrame f;
    f.frame = {"v", i, static_cast<double>(i)};
    f.score = s;
    out.push_back(f);
    ++i;
  }
  return out;
}

std::vector<std::int64_t> indices(const std::vector<stir::ScoredFrame>& frames) {
  std::vector<std::int64_t> out;
  for (const auto& f : frames) out.push_back(f.frame.frame_index);
  return out;
}

}  // namespace

TEST_CASE("softmax examples") {
  const auto uniform = stir::softmax_levels(stir::LevelLogits{0, 0, 0, 0, 0});
  for (double p : uniform.probs()) CHECK(p == 0.2);

  const auto dominant = stir::softmax_levels(stir::LevelLogits{100, 0, 0, 0, 0});
  CHECK_THAT(dominant[0], WithinAbs(1.0, 1e-9));
  for (std::size_t i = 1; i < 5; ++i) CHECK_THAT(dominant[i], WithinAbs(0.0, 1e-9));

  const auto ramp = stir::softmax_levels(stir::LevelLogits{1, 2, 3, 4, 5});
  double z = 0.0;
  for (int k = 1; k <= 5; ++k) z += std::exp(double(k));
  for (int k = 1; k <= 5; ++k) CHECK_THAT(ramp[k - 1], WithinAbs(std::exp(double(k)) / z, 1e-12));
}

TEST_CASE("softmax is shift invariant and rejects non-finite logits") {
  const auto a = stir::softmax_levels(std::array<double, 5>{0.5, -1, 2, 0, 3});
  const auto b = stir::softmax_levels(std::array<double, 5>{1000.5, 999, 1002, 1000, 1003});
  for (std::size_t i = 0; i < 5; ++i) CHECK_THAT(a[i], WithinAbs(b[i], 1e-12));
  CHECK_THROWS_AS(stir::softmax_levels(std::array<double, 5>{0, NAN, 0, 0, 0}),
                  stir::InvalidInputError);
  CHECK_THROWS_AS(stir::softmax_levels(std::array<double, 5>{0, 0, INFINITY, 0, 0}),
                  stir::InvalidInputError);
}

TEST_CASE("distribution validation") {
  CHECK_THROWS_AS(dist(0.5, 0.5, 0.5, 0, 0), stir::InvalidInputError);
  CHECK_THROWS_AS(dist(-0.1, 0.3, 0.3, 0.3, 0.2), stir::InvalidInputError);
  CHECK_NOTHROW(dist(0, 0, 0, 0, 1));
}

TEST_CASE("expected relevance") {
  CHECK(stir::expected_relevance(RelevanceDistribution()) == 3.0);
  CHECK(stir::expected_relevance(dist(0, 0, 0, 0, 1)) == 5.0);
  CHECK(stir::expected_relevance(dist(1, 0, 0, 0, 0)) == 1.0);
  CHECK_THAT(stir::expected_relevance(dist(0.1, 0.2, 0.3, 0.2, 0.2)), WithinAbs(3.2, 1e-12));
}

TEST_CASE("cross entropy") {
  CHECK(stir::cross_entropy(dist(0, 0, 1, 0, 0), 3) <= 2.8e-11);
  for (int label = 1; label <= 5; ++label) {
    CHECK_THAT(stir::cross_entropy(RelevanceDistribution(), label), WithinAbs(std::log(5.0), 1e-12));
  }
  CHECK_THAT(stir::cross_entropy(dist(0.5, 0.5, 0, 0, 0), 1), WithinAbs(std::log(2.0), 1e-12));
  CHECK_THAT(stir::cross_entropy(dist(0.5, 0.5, 0, 0, 0), 3), WithinAbs(-std::log(1e-12), 1e-9));
  CHECK_THROWS_AS(stir::cross_entropy(RelevanceDistribution(), 0), stir::InvalidInputError);
  CHECK_THROWS_AS(stir::cross_entropy(RelevanceDistribution(), 6), stir::InvalidInputError);
}

TEST_CASE("prompt template matches the shipped asset") {
  std::ifstream in(STIR_PROMPT_ASSET, std::ios::binary);
  REQUIRE(in);
  const std::string asset{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  CHECK(asset == stir::kIntentPromptTemplate);
  const auto p = stir::build_intent_prompt("q");
  CHECK(p.template_text == asset);
}

TEST_CASE("prompt rendering") {
  const auto p = stir::build_intent_prompt("why is the door open");
  CHECK_THAT(p.rendered, ContainsSubstring("answering: ‘why is the door open’"));
  CHECK(p.rendered.find("{query}") == std::string::npos);
  CHECK(stir::build_intent_prompt("why is the door open").rendered == p.rendered);
  const auto nl = stir::build_intent_prompt("line one\nline two {query}");
  CHECK_THAT(nl.rendered, ContainsSubstring("‘line one\nline two {query}’"));
  CHECK_THAT(p.rendered, ContainsSubstring("[5] = highly relevant"));
}

TEST_CASE("frame pool") {
  const auto m = stir::test::make_manifest("v", 13);
  const std::vector<stir::Clip> clips{{0, 5, 0, 0}, {5, 9, 0, 0}, {9, 13, 0, 0}};
  stir::HopResult hop;
  SECTION("one clip, stride 1") {
    hop.nodes = {0};
    const auto pool = stir::expand_frame_pool(hop, clips, m.frames, 1);
    CHECK(pool.size() == 5);
    CHECK(pool.back().frame.frame_index == 4);
  }
  SECTION("two clips, stride 2") {
    hop.nodes = {1, 2};
    const auto pool = stir::expand_frame_pool(hop, clips, m.frames, 2);
    REQUIRE(pool.size() == 4);
    CHECK(pool[0].frame.frame_index == 5);
    CHECK(pool[1].frame.frame_index == 7);
    CHECK(pool[2].frame.frame_index == 9);
    CHECK(pool[2].source_node == 2);
    CHECK(pool[3].frame.frame_index == 11);
  }
  SECTION("empty hop") {
    CHECK(stir::expand_frame_pool(hop, clips, m.frames, 1).empty());
  }
  SECTION("errors") {
    hop.nodes = {3};
    CHECK_THROWS_AS(stir::expand_frame_pool(hop, clips, m.frames, 1), stir::InvalidInputError);
    hop.nodes = {0};
    CHECK_THROWS_AS(stir::expand_frame_pool(hop, clips, m.frames, 0), stir::InvalidInputError);
  }
}

TEST_CASE("threshold filter") {
  SECTION("all high") {
    const auto r = stir::filter_by_threshold(scored({5, 5, 5}), 3.25, 8);
    CHECK(r.frames.size() == 3);
    CHECK_FALSE(r.fallback_used);
  }
  SECTION("all low uses fallback") {
    const auto r = stir::filter_by_threshold(scored({1, 1, 1, 1, 1, 1}), 3.25, 4);
    CHECK(indices(r.frames) == std::vector<std::int64_t>{0, 1, 2, 3});
    CHECK(r.fallback_used);
  }
  SECTION("strict inequality") {
    const auto r = stir::filter_by_threshold(scored({3.2, 3.25, 3.3}), 3.25, 8);
    CHECK(indices(r.frames) == std::vector<std::int64_t>{2});
    CHECK_FALSE(r.fallback_used);
  }
  SECTION("fallback takes the best in chronological order") {
    const auto r = stir::filter_by_threshold(scored({2.0, 3.0, 1.0, 2.9, 3.1}), 3.25, 2);
    CHECK(indices(r.frames) == std::vector<std::int64_t>{1, 4});
    CHECK(r.fallback_used);
  }
  SECTION("empty pool") {
    const auto r = stir::filter_by_threshold({}, 3.25, 8);
    CHECK(r.frames.empty());
    CHECK_FALSE(r.fallback_used);
  }
}

TEST_CASE("frame cap keeps the best in order") {
  const auto capped = stir::cap_frames(scored({4.0, 4.5, 3.9, 5.0}), 2);
  CHECK(indices(capped) == std::vector<std::int64_t>{1, 3});
  CHECK(stir::cap_frames(scored({4.0}), 3).size() == 1);
}

TEST_CASE("mock scorer is deterministic and boosts planted frames") {
  stir::MockScorerOptions o;
  o.seed = 3;
  for (std::int64_t i = 0; i < 100; i += 2) o.planted.insert({"v", i});
  stir::MockRelevanceScorer a(o), b(o);
  std::vector<stir::PoolEntry> pool;
  for (const auto& f : stir::test::make_manifest("v", 100).frames) pool.push_back({f, 0});
  const auto x = stir::score_frames(a, "q", pool);
  const auto y = stir::score_frames(b, "q", pool);
  double planted = 0.0, other = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].score == y[i].score);
    (i % 2 == 0 ? planted : other) += x[i].score / 50.0;
  }
  CHECK(planted > 4.0);
  CHECK(other < 3.0);
  CHECK(stir::score_frames(a, "q", {}).empty());
}

TEST_CASE("caching scorer") {
  stir::test::TempDir dir;
  stir::EmbeddingCache cache(dir.path());
  stir::MockRelevanceScorer inner(stir::MockScorerOptions{.seed = 1, .planted = {}});
  stir::CachingRelevanceScorer cached(inner, cache);
  const auto frames = stir::test::make_manifest("v", 10).frames;
  const auto prompt = stir::build_intent_prompt("q");
  const auto first = cached.score("q", prompt, frames);
  const auto second = cached.score("q", prompt, frames);
  CHECK(first == second);
  CHECK(inner.request_count() == 1);
  cached.score("other", stir::build_intent_prompt("other"), frames);
  CHECK(inner.request_count() == 2);
}

TEST_CASE("scorer descriptors") {
  CHECK_NOTHROW(stir::ScorerBackendDescriptor::mock(1).validate());
  stir::ScorerBackendDescriptor remote;
  remote.kind = stir::BackendKind::kRemote;
  CHECK_THROWS_AS(remote.validate(), stir::InvalidInputError);
  std::vector<stir::PoolEntry> pool{{{"v", 0, 0.0}, 0}};
  CHECK(stir::score_frames(stir::ScorerBackendDescriptor::mock(1), "q", pool).size() == 1);
}
