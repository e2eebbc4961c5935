// stir: segment, graph, retrieve, score, run and sweep from the command line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stir/error.hpp"
#include "stir/eval.hpp"
#include "stir/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitBackend = 3;
constexpr int kExitCache = 4;

struct GlobalOptions {
  std::string config_path;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::vector<std::string> overrides;  // key=value
  // Named hyperparameters, kept as text so PipelineConfig::set parses them.
  std::map<std::string, std::string> named;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw stir::InvalidInputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw stir::InvalidInputError("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw stir::InvalidInputError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// Precedence, lowest first: defaults, --preset, config file, --seed, named
// flags, --set, STIR_CACHE_DIR, --cache-dir.
stir::PipelineConfig resolve_config(const GlobalOptions& g) {
  stir::PipelineConfig config;
  if (!g.preset.empty()) config.apply_preset(g.preset);
  if (!g.config_path.empty()) config = stir::load_config(g.config_path, config);
  if (g.seed) config.set_seed(*g.seed);
  for (const auto& [key, value] : g.named) config.set(key, value);
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw stir::InvalidInputError("--set expects key=value, got \"" + kv + "\"");
    }
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (const char* env = std::getenv("STIR_CACHE_DIR"); env != nullptr && *env != '\0') {
    config.cache_dir = fs::path(env);
  }
  if (!g.cache_dir.empty()) config.cache_dir = fs::path(g.cache_dir);
  config.validate();
  return config;
}

// Backends for the stage verbs, wrapped in the cache when one is configured.
struct StageBackends {
  std::unique_ptr<stir::EmbeddingProvider> boundary;
  std::unique_ptr<stir::EmbeddingProvider> graph;
  std::unique_ptr<stir::RelevanceScorer> scorer;
  std::optional<stir::EmbeddingCache> cache;
  std::optional<stir::CachingEmbeddingProvider> cached_boundary;
  std::optional<stir::CachingEmbeddingProvider> cached_graph;
  std::optional<stir::CachingRelevanceScorer> cached_scorer;

  explicit StageBackends(const stir::PipelineConfig& config) {
    boundary = stir::make_embedding_provider(config.boundary_backend);
    graph = stir::make_embedding_provider(config.embed_backend);
    if (config.scorer_backend.kind == stir::BackendKind::kRemote) {
      scorer = std::make_unique<stir::RemoteRelevanceScorer>(
          *config.scorer_backend.endpoint, config.score_batch_size, config.score_parallelism);
    } else {
      scorer = stir::make_relevance_scorer(config.scorer_backend);
    }
    if (config.cache_dir) {
      cache.emplace(*config.cache_dir);
      cached_boundary.emplace(*boundary, *cache);
      cached_graph.emplace(*graph, *cache);
      cached_scorer.emplace(*scorer, *cache);
    }
  }

  stir::EmbeddingProvider& boundary_provider() {
    return cached_boundary ? static_cast<stir::EmbeddingProvider&>(*cached_boundary) : *boundary;
  }
  stir::EmbeddingProvider& graph_provider() {
    return cached_graph ? static_cast<stir::EmbeddingProvider&>(*cached_graph) : *graph;
  }
  stir::RelevanceScorer& relevance_scorer() {
    return cached_scorer ? static_cast<stir::RelevanceScorer&>(*cached_scorer) : *scorer;
  }
};

stir::SpatioTemporalGraph read_graph(const fs::path& path) {
  return stir::load_graph(read_file(path));
}

int exit_code_for(const stir::Error& e) {
  switch (e.kind()) {
    case stir::ErrorKind::kBackend: return kExitBackend;
    case stir::ErrorKind::kCacheCorruption: return kExitCache;
    default: return kExitValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-driven evidence retrieval over long videos"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Flat JSON config file");
  app.add_option("--cache-dir", g.cache_dir, "Cache directory (overrides STIR_CACHE_DIR)");
  app.add_option("--seed", g.seed, "Seed for every mock backend");
  app.add_option("--preset", g.preset, "main or ablation-best");
  app.add_option("--set", g.overrides, "Override any config key: key=value")->take_all();
  struct Named {
    const char* flag;
    const char* key;
    const char* help;
  };
  const Named named[] = {
      {"--N", "N", "Anchor count"},
      {"--L", "L", "Hop budget"},
      {"--eta", "eta", "Edge weight threshold for expansion"},
      {"--kappa-s", "kappa_s", "Relevance threshold in [1, 5]"},
      {"--penalty", "penalty", "Absolute segmentation penalty"},
      {"--penalty-scale", "penalty_scale", "Scale of the automatic penalty"},
      {"--min-clip-len", "min_clip_len", "Minimum frames per clip"},
      {"--frame-stride", "frame_stride", "Keep every k-th frame of a retrieved clip"},
      {"--fallback-k", "fallback_k", "Frames kept when nothing clears the threshold"},
      {"--max-frames", "max_frames", "Cap on evidence frames, 0 for none"},
      {"--construction-floor", "construction_floor", "Minimum spatial edge weight"},
  };
  for (const Named& n : named) {
    app.add_option_function<std::string>(
        n.flag, [&g, key = std::string(n.key)](const std::string& v) { g.named[key] = v; }, n.help);
  }

  std::string manifest_path, out_path, query, graph_path, seg_path, retrieval_path;

  auto* segment = app.add_subcommand("segment", "Segment a manifest into clips");
  segment->add_option("--manifest", manifest_path)->required();
  segment->add_option("--out", out_path, "Segmentation JSON")->required();

  bool graph_json = false;
  auto* graph = app.add_subcommand("graph", "Build the clip graph");
  graph->add_option("--manifest", manifest_path)->required();
  graph->add_option("--segmentation", seg_path, "Output of `segment`")->required();
  graph->add_option("--out", out_path, "Binary graph file")->required();
  graph->add_flag("--json", graph_json, "Write JSON instead of the binary container");

  auto* retrieve = app.add_subcommand("retrieve", "Select anchors and expand over the graph");
  retrieve->add_option("--graph", graph_path)->required();
  retrieve->add_option("--query", query)->required();
  retrieve->add_option("--out", out_path, "Anchors and hop result JSON")->required();

  auto* score = app.add_subcommand("score", "Score and filter frames of retrieved clips");
  score->add_option("--manifest", manifest_path)->required();
  score->add_option("--graph", graph_path)->required();
  score->add_option("--segmentation", seg_path)->required();
  score->add_option("--retrieval", retrieval_path, "Output of `retrieve`")->required();
  score->add_option("--query", query)->required();
  score->add_option("--out", out_path, "Evidence JSON")->required();

  auto* run = app.add_subcommand("run", "Full pipeline");
  run->add_option("--manifest", manifest_path)->required();
  run->add_option("--query", query)->required();
  run->add_option("--out", out_path, "Evidence JSON (stdout when omitted)");

  std::string grid_path, corpus_path;
  std::size_t sweep_parallelism = 1;
  auto* sweep = app.add_subcommand("sweep", "Hyperparameter sweep on a synthetic corpus");
  sweep->add_option("--grid", grid_path, "Grid JSON: {\"N\":[..],\"L\":[..],\"eta\":[..],\"kappa_s\":[..]}")
      ->required();
  sweep->add_option("--corpus", corpus_path, "Corpus config JSON")->required();
  sweep->add_option("--out", out_path, "Output directory")->required();
  sweep->add_option("--parallelism", sweep_parallelism, "Concurrent sweep cells")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    const stir::PipelineConfig config = resolve_config(g);

    if (*segment) {
      const auto manifest = stir::load_manifest(manifest_path);
      manifest.validate();
      StageBackends b(config);
      const auto stage = stir::run_segmentation(manifest, config, b.boundary_provider());
      write_json(out_path, stir::to_json(stage.segmentation));
      std::cerr << stage.clips.size() << " clips\n";
    } else if (*graph) {
      const auto manifest = stir::load_manifest(manifest_path);
      manifest.validate();
      const auto seg = stir::segmentation_from_json(read_json(seg_path));
      const auto clips = stir::clips_from_boundaries(manifest.frames, seg);
      StageBackends b(config);
      const auto g_out =
          stir::run_graph_construction(manifest, clips, config, b.graph_provider());
      if (graph_json) {
        write_json(out_path, stir::graph_to_json(g_out));
      } else {
        write_file(out_path, stir::serialize_graph(g_out));
      }
      std::cerr << g_out.nodes().size() << " nodes, " << g_out.edges().size() << " edges\n";
    } else if (*retrieve) {
      const auto g_in = read_graph(graph_path);
      StageBackends b(config);
      const auto q = b.graph_provider().embed_query(query);
      const auto anchors = stir::select_anchors(g_in, q, config.anchors);
      const auto hop = stir::multi_hop_expand(g_in, anchors, config.hops, config.eta);
      write_json(out_path, {{"anchors", stir::to_json(anchors)}, {"hop", stir::to_json(hop)}});
      std::cerr << hop.nodes.size() << " clips retrieved\n";
    } else if (*score) {
      const auto manifest = stir::load_manifest(manifest_path);
      manifest.validate();
      const auto g_in = read_graph(graph_path);
      const auto seg = stir::segmentation_from_json(read_json(seg_path));
      const json r = read_json(retrieval_path);
      if (!r.contains("anchors") || !r.contains("hop")) {
        throw stir::InvalidInputError(retrieval_path + ": expected \"anchors\" and \"hop\"");
      }
      const auto anchors = stir::anchors_from_json(r.at("anchors"));
      const auto hop = stir::hop_from_json(r.at("hop"));
      StageBackends b(config);
      const auto evidence = stir::run_scoring(manifest, query, stir::clips_of(g_in), anchors, hop,
                                              seg, config, b.relevance_scorer());
      stir::emit_evidence(evidence, out_path);
      std::cerr << evidence.frames.size() << " evidence frames"
                << (evidence.fallback_used ? " (fallback)" : "") << "\n";
    } else if (*run) {
      const auto manifest = stir::load_manifest(manifest_path);
      const auto evidence = stir::run_pipeline(manifest, query, config);
      if (out_path.empty()) {
        std::cout << stir::to_json(evidence).dump(2) << "\n";
      } else {
        stir::emit_evidence(evidence, out_path);
      }
    } else if (*sweep) {
      const auto grid = stir::eval::sweep_grid_from_json(read_json(grid_path));
      const auto corpus_config = stir::eval::corpus_config_from_json(read_json(corpus_path));
      const auto specs = stir::eval::make_corpus_specs(corpus_config);
      const auto corpus = stir::eval::generate_corpus(specs, corpus_config.seed);
      stir::eval::SweepOptions options;
      options.base = config;
      options.scorer = stir::eval::planted_scorer_options(
          corpus, corpus_config, g.seed.value_or(corpus_config.seed));
      options.parallelism = sweep_parallelism;
      options.cache_dir = config.cache_dir;
      const auto rows = stir::eval::hyperparameter_sweep(corpus, grid, options);

      const fs::path out_dir(out_path);
      fs::create_directories(out_dir);
      std::ostringstream csv;
      stir::eval::write_sweep_csv(rows, csv);
      write_file(out_dir / "sweep.csv", csv.str());
      write_json(out_dir / "sweep.json", stir::eval::sweep_to_json(rows));
      const std::string summary = stir::eval::sweep_summary(rows);
      write_file(out_dir / "summary.txt", summary);
      std::cout << summary;
      for (const auto& row : rows) {
        for (const auto& err : row.errors) std::cerr << "warning: " << err << "\n";
      }
    }
    return kExitOk;
  } catch (const stir::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
