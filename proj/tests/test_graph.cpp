#include <cmath>
#include <random>
#include <set>

#include <catch_amalgamated.hpp>

#include "stir/error.hpp"
#include "stir/graph.hpp"
#include "support/fixtures.hpp"

using Catch::Matchers::WithinAbs;
using stir::test::vec;

namespace {

double cosine_reference(const stir::Embedding& a, const stir::Embedding& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  return dot / std::sqrt(na * nb);
}

std::size_t count_kind(const stir::SpatioTemporalGraph& g, stir::EdgeKind kind) {
  std::size_t n = 0;
  for (const auto& e : g.edges()) n += e.kind == kind;
  return n;
}

std::set<std::pair<stir::NodeId, stir::NodeId>> spatial_pairs(const stir::SpatioTemporalGraph& g) {
  std::set<std::pair<stir::NodeId, stir::NodeId>> out;
  for (const auto& e : g.edges()) {
    if (e.kind == stir::EdgeKind::kSpatial) out.insert({e.u, e.v});
  }
  return out;
}

}  // namespace

TEST_CASE("one clip gives one node and no edges") {
  const auto g = stir::test::graph_from_embeddings({vec({1, 2})}, 0.0);
  CHECK(g.size() == 1);
  CHECK(g.edges().empty());
}

TEST_CASE("orthogonal clips get only temporal edges") {
  const auto g = stir::test::graph_from_embeddings({vec({1, 0, 0}), vec({0, 1, 0}), vec({0, 0, 1})}, 0.1);
  CHECK(count_kind(g, stir::EdgeKind::kTemporal) == 2);
  CHECK(count_kind(g, stir::EdgeKind::kSpatial) == 0);
}

TEST_CASE("identical distant clips get a unit spatial edge") {
  const auto g = stir::test::graph_from_embeddings(
      {vec({1, 0, 0}), vec({0, 1, 0}), vec({0, 0, 1}), vec({1, 0, 0})}, 0.5);
  CHECK(count_kind(g, stir::EdgeKind::kTemporal) == 3);
  REQUIRE(spatial_pairs(g) == std::set<std::pair<stir::NodeId, stir::NodeId>>{{0, 3}});
  for (const auto& e : g.edges()) {
    if (e.kind == stir::EdgeKind::kSpatial) CHECK(e.weight == 1.0);
  }
}

TEST_CASE("spatial weights equal clip cosines and respect the floor") {
  std::mt19937_64 rng(20);
  for (int i = 0; i < 50; ++i) {
    const auto emb = stir::test::random_embeddings(rng, 3 + i, 4);
    const double floor = -0.3 + 0.02 * i;
    const auto g = stir::test::graph_from_embeddings(emb, floor);
    std::set<std::pair<stir::NodeId, stir::NodeId>> expected;
    for (std::size_t a = 0; a < emb.size(); ++a) {
      for (std::size_t b = a + 2; b < emb.size(); ++b) {
        if (cosine_reference(emb[a], emb[b]) >= floor + 1e-9) expected.insert({a, b});
      }
    }
    const auto got = spatial_pairs(g);
    for (const auto& p : expected) CHECK(got.count(p) == 1);
    for (const auto& e : g.edges()) {
      if (e.kind == stir::EdgeKind::kTemporal) {
        CHECK(e.v == e.u + 1);
        CHECK(e.weight == 1.0);
      } else {
        CHECK(e.v > e.u + 1);
        CHECK(e.weight >= floor);
        CHECK_THAT(e.weight, WithinAbs(cosine_reference(emb[e.u], emb[e.v]), 1e-9));
      }
    }
  }
}

TEST_CASE("raising the floor only removes spatial edges") {
  std::mt19937_64 rng(21);
  const auto emb = stir::test::random_embeddings(rng, 30, 3);
  auto prev = spatial_pairs(stir::test::graph_from_embeddings(emb, -1.0));
  CHECK(prev.size() == 28 * 29 / 2);  // every non-adjacent pair
  for (double floor = -0.8; floor <= 1.0; floor += 0.2) {
    const auto cur = spatial_pairs(stir::test::graph_from_embeddings(emb, floor));
    CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
    prev = cur;
  }
}

TEST_CASE("build_graph preconditions") {
  CHECK_THROWS_AS(stir::build_graph({}, {}, 0.0), stir::InvalidInputError);
  const auto clips = stir::test::unit_clips(2);
  const std::vector<stir::Embedding> one{vec({1})};
  CHECK_THROWS_AS(stir::build_graph(clips, one, 0.0), stir::InvalidInputError);
  const std::vector<stir::Embedding> mixed{vec({1}), vec({1, 2})};
  CHECK_THROWS_AS(stir::build_graph(clips, mixed, 0.0), stir::InvalidInputError);
}

TEST_CASE("neighbor queries") {
  // 0 and 2 share a 0.7-cosine spatial edge; 1 is orthogonal to both.
  const float s = static_cast<float>(std::sqrt(1.0 - 0.49));
  const auto g = stir::test::graph_from_embeddings(
      {vec({1, 0, 0}), vec({0, 0, 1}), vec({0.7f, s, 0}), vec({0, -1, 0})}, 0.5);
  const auto interior = stir::neighbors(g, 1, 0.0);
  REQUIRE(interior.size() == 2);
  CHECK(interior[0].node == 0);
  CHECK(interior[1].node == 2);
  CHECK(stir::neighbors(g, 1, 2.0).empty());

  const auto with_spatial = stir::neighbors(g, 0, 0.6);
  REQUIRE(with_spatial.size() == 2);
  CHECK(with_spatial[1].node == 2);
  CHECK(with_spatial[1].edge.kind == stir::EdgeKind::kSpatial);
  CHECK_THAT(with_spatial[1].edge.weight, WithinAbs(0.7, 1e-7));
  CHECK(stir::neighbors(g, 0, 0.75).size() == 1);
  CHECK_THROWS_AS(stir::neighbors(g, 9, 0.0), stir::InvalidInputError);
}

TEST_CASE("serialization round trip") {
  SECTION("no edges") {
    const auto g = stir::test::graph_from_embeddings({vec({0.25f, 1e-20f})}, 0.3);
    CHECK(stir::load_graph(stir::serialize_graph(g)) == g);
  }
  SECTION("50 random nodes") {
    std::mt19937_64 rng(22);
    const auto g = stir::test::random_graph(rng, 50, 16, 0.0);
    const auto bytes = stir::serialize_graph(g);
    const auto back = stir::load_graph(bytes);
    CHECK(back == g);
    CHECK(back.construction_floor() == g.construction_floor());
    CHECK(stir::serialize_graph(back) == bytes);
  }
}

TEST_CASE("damaged graph streams are rejected") {
  std::mt19937_64 rng(23);
  const auto bytes = stir::serialize_graph(stir::test::random_graph(rng, 6, 3, -1.0));
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    CHECK_THROWS_AS(stir::load_graph(std::string_view(bytes).substr(0, len)), stir::FormatError);
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(stir::load_graph(bad_magic), stir::FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(stir::load_graph(bad_version), stir::FormatError);
  CHECK_THROWS_AS(stir::load_graph(bytes + "x"), stir::FormatError);
}

TEST_CASE("constructor enforces structure") {
  const std::vector<stir::ClipNode> nodes{{0, {0, 1, 0, 0}, vec({1})}, {1, {1, 2, 1, 1}, vec({1})}};
  CHECK_THROWS_AS(stir::SpatioTemporalGraph(nodes, {}, 0.0), stir::FormatError);
  CHECK_NOTHROW(stir::SpatioTemporalGraph(nodes, {{0, 1, stir::EdgeKind::kTemporal, 1.0}}, 0.0));
  CHECK_THROWS_AS(stir::SpatioTemporalGraph(nodes, {{0, 1, stir::EdgeKind::kTemporal, 0.5}}, 0.0),
                  stir::FormatError);
  CHECK_THROWS_AS(stir::SpatioTemporalGraph(nodes, {{1, 0, stir::EdgeKind::kTemporal, 1.0}}, 0.0),
                  stir::FormatError);
}

TEST_CASE("graph json lists nodes and edges") {
  const auto g = stir::test::graph_from_embeddings({vec({1, 0}), vec({0, 1}), vec({1, 0})}, 0.5);
  const auto j = stir::graph_to_json(g);
  CHECK(j.at("nodes").size() == 3);
  CHECK(j.at("edges").size() == 3);
}
