#include "stir/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "stir/error.hpp"
#include "stir/hashing.hpp"

namespace stir::eval {
namespace {

// Counter-based generator so corpora are identical on every platform.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(mix64(key)) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(mix64(key_ + counter_++) >> 11) * (1.0 / 9007199254740992.0);
  }
  std::size_t below(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  double gaussian() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::vector<double> gaussian_unit(CounterRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

Embedding to_embedding(const std::vector<double>& v) {
  std::vector<float> f(v.begin(), v.end());
  return Embedding(std::move(f));
}

std::vector<double> normalized(std::vector<double> v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

CorpusConfig corpus_config_from_json(const nlohmann::json& j) {
  CorpusConfig c;
  if (!j.is_object()) throw InvalidInputError("corpus config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "num_videos") c.num_videos = v.get<std::size_t>();
      else if (key == "dim") c.dim = v.get<std::size_t>();
      else if (key == "fps") c.fps = v.get<double>();
      else if (key == "segments") {
        c.min_segments = v.at(0).get<std::size_t>();
        c.max_segments = v.at(1).get<std::size_t>();
      } else if (key == "segment_length") {
        c.min_segment_length = v.at(0).get<std::size_t>();
        c.max_segment_length = v.at(1).get<std::size_t>();
      } else if (key == "noise_scale") c.noise_scale = v.get<double>();
      else if (key == "min_angle_deg") c.min_angle_deg = v.get<double>();
      else if (key == "themes") c.themes = v.get<std::size_t>();
      else if (key == "theme_mix") {
        c.theme_mix_min = v.at(0).get<double>();
        c.theme_mix_max = v.at(1).get<double>();
      } else if (key == "evidence_frames") c.evidence_frames = v.get<std::size_t>();
      else if (key == "query_perturbation") c.query_perturbation = v.get<double>();
      else if (key == "boost") c.boost = v.get<double>();
      else if (key == "scorer_noise") c.scorer_noise = v.get<double>();
      else if (key == "tilt") c.tilt = v.get<double>();
      else throw InvalidInputError("corpus config: unknown key \"" + key + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("corpus config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const CorpusConfig& c) {
  return {{"seed", c.seed},
          {"num_videos", c.num_videos},
          {"dim", c.dim},
          {"fps", c.fps},
          {"segments", {c.min_segments, c.max_segments}},
          {"segment_length", {c.min_segment_length, c.max_segment_length}},
          {"noise_scale", c.noise_scale},
          {"min_angle_deg", c.min_angle_deg},
          {"themes", c.themes},
          {"theme_mix", {c.theme_mix_min, c.theme_mix_max}},
          {"evidence_frames", c.evidence_frames},
          {"query_perturbation", c.query_perturbation},
          {"boost", c.boost},
          {"scorer_noise", c.scorer_noise},
          {"tilt", c.tilt}};
}

std::vector<SyntheticVideoSpec> make_corpus_specs(const CorpusConfig& c) {
  if (c.dim == 0 || c.min_segments == 0 || c.min_segments > c.max_segments ||
      c.min_segment_length == 0 || c.min_segment_length > c.max_segment_length || c.themes == 0 ||
      c.evidence_frames == 0 || c.evidence_frames > c.min_segment_length) {
    throw InvalidInputError("corpus config: inconsistent ranges");
  }
  CounterRng rng(c.seed ^ 0x636f72707573ULL);
  std::vector<std::vector<double>> themes;
  for (std::size_t t = 0; t < c.themes; ++t) themes.push_back(gaussian_unit(rng, c.dim));
  const double max_cos = std::cos(c.min_angle_deg * std::numbers::pi / 180.0);

  std::vector<SyntheticVideoSpec> specs;
  for (std::size_t v = 0; v < c.num_videos; ++v) {
    SyntheticVideoSpec s;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", v);
    s.video_id = id;
    s.query = "what happens in " + s.video_id + "?";
    s.fps = c.fps;
    s.noise_scale = c.noise_scale;
    const std::size_t segments = rng.between(c.min_segments, c.max_segments);
    std::vector<std::vector<double>> centroids;
    for (std::size_t k = 0; k < segments; ++k) {
      s.segment_lengths.push_back(rng.between(c.min_segment_length, c.max_segment_length));
      std::vector<double> centroid;
      for (int attempt = 0;; ++attempt) {
        if (attempt == 10000) throw InvalidInputError("corpus config: min_angle_deg unsatisfiable");
        const auto& theme = themes[rng.below(c.themes)];
        const double a = c.theme_mix_min + (c.theme_mix_max - c.theme_mix_min) * rng.uniform();
        const auto own = gaussian_unit(rng, c.dim);
        std::vector<double> mixed(c.dim);
        for (std::size_t i = 0; i < c.dim; ++i) {
          mixed[i] = a * theme[i] + std::sqrt(1.0 - a * a) * own[i];
        }
        centroid = normalized(std::move(mixed));
        bool distinct = true;
        for (const auto& other : centroids) {
          double dot = 0.0;
          for (std::size_t i = 0; i < c.dim; ++i) dot += centroid[i] * other[i];
          distinct = distinct && dot <= max_cos;
        }
        if (distinct) break;
      }
      centroids.push_back(centroid);
      s.segment_centroids.push_back(to_embedding(centroid));
    }
    s.evidence_segment = rng.below(segments);
    std::vector<std::size_t> offsets(s.segment_lengths[s.evidence_segment]);
    for (std::size_t i = 0; i < offsets.size(); ++i) offsets[i] = i;
    for (std::size_t i = 0; i < c.evidence_frames; ++i) {
      std::swap(offsets[i], offsets[i + rng.below(offsets.size() - i)]);
    }
    offsets.resize(c.evidence_frames);
    std::sort(offsets.begin(), offsets.end());
    s.evidence_offsets = offsets;

    std::vector<double> q = centroids[s.evidence_segment];
    for (double& x : q) x += c.query_perturbation * rng.gaussian() / std::sqrt(double(c.dim));
    s.query_embedding = to_embedding(normalized(std::move(q)));
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<SyntheticVideo> generate_corpus(std::span<const SyntheticVideoSpec> specs,
                                            std::uint64_t seed) {
  std::vector<SyntheticVideo> corpus;
  for (const SyntheticVideoSpec& s : specs) {
    const std::size_t segments = s.segment_lengths.size();
    if (segments == 0 || s.segment_centroids.size() != segments) {
      throw InvalidInputError("synthetic spec " + s.video_id + ": centroid count mismatch");
    }
    if (std::find(s.segment_lengths.begin(), s.segment_lengths.end(), 0u) !=
        s.segment_lengths.end()) {
      throw InvalidInputError("synthetic spec " + s.video_id + ": zero-length segment");
    }
    if (s.evidence_segment >= segments) {
      throw InvalidInputError("synthetic spec " + s.video_id + ": evidence segment out of range");
    }
    if (!(s.noise_scale >= 0.0) || !(s.fps > 0.0)) {
      throw InvalidInputError("synthetic spec " + s.video_id + ": bad noise_scale or fps");
    }
    const std::size_t dim = s.segment_centroids.front().dim();
    if (s.query_embedding.dim() != dim) {
      throw InvalidInputError("synthetic spec " + s.video_id + ": query dim mismatch");
    }

    SyntheticVideo v;
    v.manifest.video_id = s.video_id;
    v.manifest.fps = s.fps;
    v.query = s.query;
    v.query_embedding = s.query_embedding;
    v.truth.video_id = s.video_id;
    CounterRng rng(seed ^ fnv1a64(s.video_id));
    std::int64_t index = 0;
    for (std::size_t k = 0; k < segments; ++k) {
      const Embedding& centroid = s.segment_centroids[k];
      if (centroid.dim() != dim) throw InvalidInputError("synthetic spec: centroid dims differ");
      if (k > 0) v.truth.true_boundaries.push_back(static_cast<std::size_t>(index));
      const std::int64_t segment_start = index;
      for (std::size_t t = 0; t < s.segment_lengths[k]; ++t, ++index) {
        FrameRef f{s.video_id, index, static_cast<double>(index) / s.fps};
        std::vector<float> values(dim);
        for (std::size_t i = 0; i < dim; ++i) {
          values[i] = static_cast<float>(centroid[i] + s.noise_scale * rng.gaussian());
        }
        v.frame_embeddings.emplace(index, Embedding(std::move(values)));
        v.manifest.frames.push_back(f);
      }
      if (k == s.evidence_segment) {
        for (std::size_t off : s.evidence_offsets) {
          if (off >= s.segment_lengths[k]) {
            throw InvalidInputError("synthetic spec " + s.video_id + ": evidence offset outside segment");
          }
          v.truth.evidence_frames.push_back(
              v.manifest.frames[static_cast<std::size_t>(segment_start) + off]);
        }
      }
    }
    corpus.push_back(std::move(v));
  }
  return corpus;
}

std::unique_ptr<FixtureEmbeddingProvider> make_fixture_provider(
    std::span<const SyntheticVideo> corpus) {
  if (corpus.empty()) throw InvalidInputError("empty corpus");
  auto p = std::make_unique<FixtureEmbeddingProvider>(corpus.front().query_embedding.dim());
  for (const SyntheticVideo& v : corpus) {
    p->add_video(v.manifest.video_id, v.frame_embeddings);
    p->add_query(v.query, v.query_embedding);
  }
  return p;
}

MockScorerOptions planted_scorer_options(std::span<const SyntheticVideo> corpus,
                                         const CorpusConfig& config, std::uint64_t seed) {
  MockScorerOptions o;
  o.seed = seed;
  o.boost = config.boost;
  o.noise = config.scorer_noise;
  o.tilt = config.tilt;
  for (const SyntheticVideo& v : corpus) {
    for (const FrameRef& f : v.truth.evidence_frames) o.planted.insert({f.video_id, f.frame_index});
  }
  return o;
}

double retrieval_accuracy(const EvidenceSet& evidence, const GroundTruth& truth,
                          std::optional<double> window_s) {
  if (evidence.video_id != truth.video_id) {
    throw InvalidInputError("retrieval_accuracy: evidence for " + evidence.video_id +
                            " scored against ground truth for " + truth.video_id);
  }
  for (const ScoredFrame& s : evidence.frames) {
    for (const FrameRef& t : truth.evidence_frames) {
      const bool hit = window_s ? std::abs(s.frame.timestamp - t.timestamp) <= *window_s
                                : s.frame.frame_index == t.frame_index;
      if (hit) return 1.0;
    }
  }
  return 0.0;
}

double retrieval_accuracy(std::span<const EvidenceSet> evidence,
                          std::span<const GroundTruth> truth, std::optional<double> window_s) {
  if (evidence.size() != truth.size() || evidence.empty()) {
    throw InvalidInputError("retrieval_accuracy: need one ground truth per evidence set");
  }
  double hits = 0.0;
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    hits += retrieval_accuracy(evidence[i], truth[i], window_s);
  }
  return hits / static_cast<double>(evidence.size());
}

double avg_clips(std::span<const HopResult> hops) {
  if (hops.empty()) throw InvalidInputError("avg_clips: no hop results");
  double total = 0.0;
  for (const HopResult& h : hops) total += static_cast<double>(h.nodes.size());
  return total / static_cast<double>(hops.size());
}

double boundary_recall(std::span<const std::size_t> detected, std::span<const std::size_t> truth,
                       std::size_t tolerance) {
  if (truth.empty()) return 1.0;
  std::size_t found = 0;
  for (std::size_t b : truth) {
    found += std::any_of(detected.begin(), detected.end(), [&](std::size_t d) {
      return (d > b ? d - b : b - d) <= tolerance;
    });
  }
  return static_cast<double>(found) / static_cast<double>(truth.size());
}

double ce_eval(std::span<const RelevanceDistribution> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw InvalidInputError("ce_eval: " + std::to_string(predictions.size()) + " predictions vs " +
                            std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw InvalidInputError("ce_eval: no samples");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    total += cross_entropy(predictions[i], labels[i]);
  }
  return total / static_cast<double>(predictions.size());
}

CorpusRun run_corpus(std::span<const SyntheticVideo> corpus, const PipelineConfig& config,
                     const MockScorerOptions& scorer_options,
                     const std::optional<std::filesystem::path>& cache_dir) {
  auto provider = make_fixture_provider(corpus);
  MockRelevanceScorer scorer(scorer_options);
  std::optional<EmbeddingCache> cache;
  if (cache_dir) cache.emplace(*cache_dir);
  PipelineBackends backends{*provider, *provider, scorer, cache ? &*cache : nullptr};
  CorpusRun run;
  for (const SyntheticVideo& v : corpus) {
    try {
      run.evidence.push_back(run_pipeline(v.manifest, v.query, config, backends));
    } catch (const Error& e) {
      run.errors.push_back(v.manifest.video_id + ": " + e.what());
    }
  }
  return run;
}

SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
  SweepGrid g;
  if (!j.is_object()) throw InvalidInputError("sweep grid must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "N") g.anchors = v.get<std::vector<std::size_t>>();
      else if (key == "L") g.hops = v.get<std::vector<std::size_t>>();
      else if (key == "eta") g.eta = v.get<std::vector<double>>();
      else if (key == "kappa_s") g.kappa_s = v.get<std::vector<double>>();
      else throw InvalidInputError("sweep grid: unknown key \"" + key + "\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("sweep grid: ") + e.what());
  }
  if (g.anchors.empty() || g.hops.empty() || g.eta.empty() || g.kappa_s.empty()) {
    throw InvalidInputError("sweep grid: every axis needs at least one value");
  }
  return g;
}

std::vector<SweepRow> hyperparameter_sweep(std::span<const SyntheticVideo> corpus,
                                           const SweepGrid& grid, const SweepOptions& options) {
  std::vector<SweepRow> rows;
  for (std::size_t n : grid.anchors) {
    for (std::size_t l : grid.hops) {
      for (double eta : grid.eta) {
        for (double kappa : grid.kappa_s) {
          SweepRow r;
          r.anchors = n;
          r.hops = l;
          r.eta = eta;
          r.kappa_s = kappa;
          rows.push_back(r);
        }
      }
    }
  }

  auto run_cell = [&](SweepRow& row) {
    const auto start = std::chrono::steady_clock::now();
    PipelineConfig config = options.base;
    config.anchors = row.anchors;
    config.hops = row.hops;
    config.eta = row.eta;
    config.kappa_s = row.kappa_s;
    config.construction_floor = std::min(config.construction_floor, row.eta);
    std::optional<std::filesystem::path> cell_cache;
    if (options.cache_dir) {
      std::ostringstream name;
      name << "cell_N" << row.anchors << "_L" << row.hops << "_eta" << row.eta << "_k"
           << row.kappa_s;
      cell_cache = *options.cache_dir / name.str();
    }
    try {
      config.validate();
      CorpusRun run = run_corpus(corpus, config, options.scorer, cell_cache);
      row.errors = std::move(run.errors);
      row.runs = run.evidence.size();
      if (!run.evidence.empty()) {
        std::vector<HopResult> hops;
        std::vector<GroundTruth> truth;
        for (const EvidenceSet& e : run.evidence) {
          hops.push_back(e.hop);
          for (const SyntheticVideo& v : corpus) {
            if (v.truth.video_id == e.video_id) truth.push_back(v.truth);
          }
        }
        row.avg_clips = avg_clips(hops);
        row.retrieval_accuracy = retrieval_accuracy(run.evidence, truth);
      }
    } catch (const Error& e) {
      row.errors.push_back(e.what());
    }
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const std::size_t width = std::max<std::size_t>(1, options.parallelism);
  for (std::size_t start = 0; start < rows.size(); start += width) {
    const std::size_t stop = std::min(rows.size(), start + width);
    if (width == 1) {
      run_cell(rows[start]);
      continue;
    }
    std::vector<std::future<void>> inflight;
    for (std::size_t i = start; i < stop; ++i) {
      inflight.push_back(std::async(std::launch::async, run_cell, std::ref(rows[i])));
    }
    for (auto& f : inflight) f.get();
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "N,L,eta,kappa_s,avg_clips,retrieval_accuracy,wall_time_s\n";
  out << std::setprecision(10);
  for (const SweepRow& r : rows) {
    out << r.anchors << ',' << r.hops << ',' << r.eta << ',' << r.kappa_s << ',' << r.avg_clips
        << ',' << r.retrieval_accuracy << ',' << r.wall_time_s << '\n';
  }
}

nlohmann::json sweep_to_json(std::span<const SweepRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const SweepRow& r : rows) {
    out.push_back({{"N", r.anchors},
                   {"L", r.hops},
                   {"eta", r.eta},
                   {"kappa_s", r.kappa_s},
                   {"avg_clips", r.avg_clips},
                   {"retrieval_accuracy", r.retrieval_accuracy},
                   {"wall_time_s", r.wall_time_s},
                   {"runs", r.runs},
                   {"errors", r.errors}});
  }
  return out;
}

std::string sweep_summary(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << std::fixed;
  os << "   N   L    eta  kappa_s  avg_clips  retrieval_acc   runs  errors\n";
  for (const SweepRow& r : rows) {
    os << std::setw(4) << r.anchors << std::setw(4) << r.hops << std::setw(7)
       << std::setprecision(2) << r.eta << std::setw(9) << r.kappa_s << std::setw(11)
       << std::setprecision(2) << r.avg_clips << std::setw(15) << std::setprecision(3)
       << r.retrieval_accuracy << std::setw(7) << r.runs << std::setw(8) << r.errors.size()
       << '\n';
  }
  return os.str();
}

// --- annotations -------------------------------------------------------------

std::string default_image_path(const FrameRef& frame) {
  char name[40];
  std::snprintf(name, sizeof name, "/frame_%06lld.jpg", static_cast<long long>(frame.frame_index));
  return frame.video_id + name;
}

namespace {

std::string json_string(std::string_view s) { return nlohmann::json(s).dump(); }

}  // namespace

std::string annotation_to_line(const IRAnnotation& a) {
  if (a.label < 1 || a.label > static_cast<int>(kLevels)) {
    throw InvalidInputError("annotation label must be in 1..5, got " + std::to_string(a.label));
  }
  std::string out;
  out += "[{\"role\": \"system\", \"content\": " + json_string(a.system_text) + "}, ";
  out += "{\"role\": \"user\", \"content\": [{\"type\": \"image\", \"image\": " +
         json_string(a.image_path) + "}, {\"type\": \"text\", \"text\": " + json_string(a.query_text) +
         "}]}, ";
  out += "{\"role\": \"assistant\", \"content\": [{\"type\": \"text\", \"text\": " +
         json_string(std::to_string(a.label)) + "}]}]";
  return out;
}

IRAnnotation annotation_from_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(std::string("annotation: ") + e.what());
  }
  try {
    if (!j.is_array() || j.size() != 3) throw InvalidInputError("annotation: expected 3 messages");
    if (j[0].at("role") != "system" || j[1].at("role") != "user" || j[2].at("role") != "assistant") {
      throw InvalidInputError("annotation: unexpected message roles");
    }
    IRAnnotation a;
    a.system_text = j[0].at("content").get<std::string>();
    const auto& user = j[1].at("content");
    if (!user.is_array() || user.size() != 2 || user[0].at("type") != "image" ||
        user[1].at("type") != "text") {
      throw InvalidInputError("annotation: user content must be [image, text]");
    }
    a.image_path = user[0].at("image").get<std::string>();
    a.query_text = user[1].at("text").get<std::string>();
    const std::string label = j[2].at("content").at(0).at("text").get<std::string>();
    if (label.size() != 1 || label[0] < '1' || label[0] > '5') {
      throw InvalidInputError("annotation: label \"" + label + "\" is not in 1..5");
    }
    a.label = label[0] - '0';
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("annotation: ") + e.what());
  }
}

void export_ir_annotations(std::span<const AnnotationSample> samples, std::ostream& out) {
  std::string buffer;
  for (const AnnotationSample& s : samples) {
    IRAnnotation a;
    a.image_path = default_image_path(s.frame);
    a.query_text = s.query;
    a.label = s.label;
    buffer += annotation_to_line(a);
    buffer += '\n';
  }
  out << buffer;
}

std::vector<IRAnnotation> read_ir_annotations(std::istream& in) {
  std::vector<IRAnnotation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(annotation_from_line(line));
  }
  return out;
}

}  // namespace stir::eval
