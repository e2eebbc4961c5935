#include <atomic>
#include <cmath>

#include <catch_amalgamated.hpp>

#include "stir/error.hpp"
#include "stir/pipeline.hpp"
#include "stir/remote_backend.hpp"
#include "stir/scoring.hpp"
#include "support/fixtures.hpp"
#include "support/stub_server.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using nlohmann::json;
using stir::test::StubReply;
using stir::test::StubServer;

namespace {

std::vector<stir::FrameRef> frames(std::size_t n, const std::string& id = "v") {
  std::vector<stir::FrameRef> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({id, static_cast<std::int64_t>(i), i / 3.0});
  return out;
}

// Row i is (frame_index, 1, 0, ...).
StubReply index_vectors(const json& req, std::size_t dim) {
  json rows = json::array();
  for (const auto& idx : req.at("frame_indices")) {
    std::vector<double> v(dim, 0.0);
    v[0] = idx.get<double>();
    v[1] = 1.0;
    rows.push_back(v);
  }
  return StubReply::json({{"vectors", rows}});
}

std::vector<stir::PoolEntry> pool(std::size_t n) {
  std::vector<stir::PoolEntry> out;
  for (const auto& f : frames(n)) out.push_back({f, 0});
  return out;
}

}  // namespace

TEST_CASE("health check") {
  StubServer stub;
  stub.on("/health", [](const json&) { return StubReply::json({{"status", "ok"}, {"dim", 16}}); });
  const auto h = stir::check_health(stub.endpoint());
  CHECK(h.status == "ok");
  CHECK(h.dim == 16);

  stub.on("/health", [](const json&) { return StubReply::json({{"status", "ok"}}); });
  CHECK_THROWS_AS(stir::check_health(stub.endpoint()), stir::BackendError);
}

TEST_CASE("remote frame embeddings") {
  StubServer stub;
  json seen;
  stub.on("/embed", [&](const json& req) {
    seen = req;
    return index_vectors(req, 16);
  });
  stir::RemoteEmbeddingProvider p(stub.endpoint(), 16);
  const auto out = p.embed_frames(frames(2));
  REQUIRE(out.size() == 2);
  CHECK(out[0].dim() == 16);
  CHECK(out[1][0] == 1.0f);
  CHECK(seen.at("kind") == "frames");
  CHECK(seen.at("video_id") == "v");
  CHECK(seen.at("frame_indices") == json::array({0, 1}));
  CHECK(seen.at("dim_hint") == 16);
}

TEST_CASE("remote batches keep frame order") {
  StubServer stub;
  stub.on("/embed", [](const json& req) { return index_vectors(req, 4); });
  stir::RemoteEmbeddingProvider p(stub.endpoint(), 4, /*batch_size=*/3, /*parallelism=*/2);
  const auto out = p.embed_frames(frames(10));
  REQUIRE(out.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(out[i][0] == static_cast<float>(i));
  CHECK(stub.hits("/embed") == 4);
}

TEST_CASE("remote clip and query requests") {
  StubServer stub;
  json seen;
  stub.on("/embed", [&](const json& req) {
    seen = req;
    std::vector<double> v(8, 0.5);
    return StubReply::json({{"vectors", {v}}});
  });
  stir::RemoteEmbeddingProvider p(stub.endpoint(), 8);
  CHECK(p.embed_clip(frames(3)).dim() == 8);
  CHECK(seen.at("kind") == "clip");
  CHECK(p.embed_query("who is there").dim() == 8);
  CHECK(seen.at("kind") == "query");
  CHECK(seen.at("query") == "who is there");
}

TEST_CASE("defective embed responses are rejected whole") {
  StubServer stub;
  stir::RemoteEmbeddingProvider p(stub.endpoint(), 4);
  const auto two = frames(2);

  SECTION("too few vectors") {
    stub.on("/embed", [](const json&) { return StubReply::json({{"vectors", {{1, 2, 3, 4}}}}); });
    CHECK_THROWS_AS(p.embed_frames(two), stir::BackendError);
  }
  SECTION("wrong dim") {
    stub.on("/embed", [](const json&) {
      return StubReply::json({{"vectors", {{1, 2, 3, 4}, {1, 2, 3}}}});
    });
    CHECK_THROWS_AS(p.embed_frames(two), stir::BackendError);
  }
  SECTION("non-numeric entry") {
    stub.on("/embed", [](const json&) {
      return StubReply::json({{"vectors", {{1, 2, 3, 4}, {1, "x", 3, 4}}}});
    });
    CHECK_THROWS_AS(p.embed_frames(two), stir::BackendError);
  }
  SECTION("missing field") {
    stub.on("/embed", [](const json&) { return StubReply::json({{"embeddings", json::array()}}); });
    CHECK_THROWS_AS(p.embed_frames(two), stir::BackendError);
  }
  SECTION("not json") {
    stub.on("/embed", [](const json&) { return StubReply{200, "<html>"}; });
    CHECK_THROWS_WITH(p.embed_frames(two), ContainsSubstring("malformed JSON"));
  }
  SECTION("server error") {
    stub.on("/embed", [](const json&) { return StubReply{500, R"({"error":"model crashed"})"}; });
    CHECK_THROWS_WITH(p.embed_frames(two), ContainsSubstring("HTTP 500"));
  }
}

TEST_CASE("unreachable endpoint is a backend error") {
  std::string endpoint;
  {
    StubServer closed;
    endpoint = closed.endpoint();
  }
  stir::RemoteEmbeddingProvider p(endpoint, 4);
  CHECK_THROWS_AS(p.embed_query("q"), stir::BackendError);
}

TEST_CASE("stubbed dominant top logit scores 5") {
  StubServer stub;
  json seen;
  stub.on("/score", [&](const json& req) {
    seen = req;
    json rows = json::array();
    for (std::size_t i = 0; i < req.at("frame_indices").size(); ++i) {
      rows.push_back({0, 0, 0, 0, 100});
    }
    return StubReply::json({{"logits", rows}});
  });
  stir::RemoteRelevanceScorer scorer(stub.endpoint(), 4, 2);
  const auto scored = stir::score_frames(scorer, "why is the door open", pool(9));
  REQUIRE(scored.size() == 9);
  for (const auto& s : scored) CHECK_THAT(s.score, WithinAbs(5.0, 1e-9));
  CHECK(seen.at("prompt") == stir::build_intent_prompt("why is the door open").rendered);
  CHECK(seen.at("query") == "why is the door open");
  CHECK(seen.at("video_id") == "v");
}

TEST_CASE("failed score batches are retried per frame") {
  StubServer stub;
  stub.on("/score", [](const json& req) {
    const auto& idx = req.at("frame_indices");
    if (idx.size() > 1) return StubReply{503, R"({"error":"busy"})"};
    const double i = idx[0].get<double>();
    return StubReply::json({{"logits", {{i, 0, 0, 0, 0}}}});
  });
  stir::RemoteRelevanceScorer scorer(stub.endpoint(), 4, 1);
  const auto f = frames(6);
  const auto logits = scorer.score("q", stir::build_intent_prompt("q"), f);
  REQUIRE(logits.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(logits[i][0] == static_cast<float>(i));
}

TEST_CASE("frames failing every retry are named") {
  StubServer stub;
  std::atomic<int> attempts_on_3{0};
  stub.on("/score", [&](const json& req) {
    json rows = json::array();
    for (const auto& idx : req.at("frame_indices")) {
      if (idx == 3) {
        if (req.at("frame_indices").size() == 1) ++attempts_on_3;
        return StubReply{500, "{}"};
      }
      rows.push_back({0, 0, 0, 0, 0});
    }
    return StubReply::json({{"logits", rows}});
  });
  stir::RemoteRelevanceScorer scorer(stub.endpoint(), 8, 1, /*max_retries=*/2);
  CHECK_THROWS_WITH(scorer.score("q", stir::build_intent_prompt("q"), frames(5)),
                    ContainsSubstring("1 frame(s): 3"));
  CHECK(attempts_on_3 == 2);
}

TEST_CASE("score response shape is validated") {
  StubServer stub;
  stir::RemoteRelevanceScorer scorer(stub.endpoint(), 8, 1, 0);
  const auto prompt = stir::build_intent_prompt("q");
  SECTION("four logits") {
    stub.on("/score", [](const json&) { return StubReply::json({{"logits", {{0, 0, 0, 0}}}}); });
    CHECK_THROWS_AS(scorer.score("q", prompt, frames(1)), stir::BackendError);
  }
  SECTION("row count") {
    stub.on("/score", [](const json&) { return StubReply::json({{"logits", {{0, 0, 0, 0, 0}}}}); });
    CHECK_THROWS_AS(scorer.score("q", prompt, frames(2)), stir::BackendError);
  }
}

TEST_CASE("pipeline against a stub serving mock values matches the mock pipeline") {
  constexpr std::uint64_t kSeed = 5;
  constexpr std::size_t kDim = 24;
  stir::MockEmbeddingProvider embed(kSeed, kDim);
  stir::MockRelevanceScorer score(stir::MockScorerOptions{.seed = kSeed, .planted = {}});
  std::mutex mu;  // mock providers count requests; keep the stub simple

  StubServer stub;
  stub.on("/embed", [&](const json& req) {
    std::lock_guard lock(mu);
    std::vector<stir::FrameRef> f;
    if (req.at("kind") != "query") {
      for (const auto& idx : req.at("frame_indices")) {
        f.push_back({req.at("video_id").get<std::string>(), idx.get<std::int64_t>(), 0.0});
      }
    }
    json rows = json::array();
    auto push = [&](const stir::Embedding& e) {
      rows.push_back(std::vector<float>(e.values().begin(), e.values().end()));
    };
    if (req.at("kind") == "frames") {
      for (const auto& e : embed.embed_frames(f)) push(e);
    } else if (req.at("kind") == "clip") {
      push(embed.embed_clip(f));
    } else {
      push(embed.embed_query(req.at("query").get<std::string>()));
    }
    return StubReply::json({{"vectors", rows}});
  });
  stub.on("/score", [&](const json& req) {
    std::lock_guard lock(mu);
    std::vector<stir::FrameRef> f;
    for (const auto& idx : req.at("frame_indices")) {
      f.push_back({req.at("video_id").get<std::string>(), idx.get<std::int64_t>(), 0.0});
    }
    json rows = json::array();
    const std::string q = req.at("query").get<std::string>();
    for (const auto& l : score.score(q, stir::build_intent_prompt(q), f)) {
      rows.push_back(std::vector<float>(l.begin(), l.end()));
    }
    return StubReply::json({{"logits", rows}});
  });

  const auto manifest = stir::test::make_manifest("shared", 90);
  stir::PipelineConfig mock;
  mock.set_seed(kSeed);
  mock.embed_backend.dim = kDim;
  mock.boundary_backend.dim = kDim;
  stir::PipelineConfig remote = mock;
  remote.embed_backend = stir::EmbeddingBackendDescriptor::remote(stub.endpoint(), kDim);
  remote.boundary_backend = remote.embed_backend;
  remote.scorer_backend = stir::ScorerBackendDescriptor::remote(stub.endpoint());

  const auto a = stir::to_json(stir::run_pipeline(manifest, "what falls", mock)).dump();
  const auto b = stir::to_json(stir::run_pipeline(manifest, "what falls", remote)).dump();
  CHECK(a == b);
}
