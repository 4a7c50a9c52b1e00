#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bgr/bgrm.hpp"
#include "bgr/errors.hpp"
#include "bgr/fusion.hpp"
#include "bgr/gradsuite.hpp"
#include "bgr/graphs.hpp"
#include "bgr/metrics.hpp"
#include "bgr/model.hpp"
#include "bgr/panoptic.hpp"
#include "bgr/toytask.hpp"
#include "bgr/train.hpp"

namespace bgr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Run config = train config plus optional "out"/"checkpoint" paths.
struct RunConfig {
  TrainConfig train;
  std::optional<fs::path> out;
};

RunConfig load_run_config(const std::optional<fs::path>& path) {
  RunConfig rc;
  if (!path) return rc;
  json doc = read_json(*path);
  if (!doc.is_object()) throw ConfigError(path->string() + ": expected a JSON object");
  if (doc.contains("out")) {
    rc.out = doc["out"].get<std::string>();
    doc.erase("out");
  }
  doc.erase("checkpoint");
  rc.train = parse_train_config(doc);
  return rc;
}

void check_inputs(const TrainConfig& cfg) {
  if (cfg.embeddings && !fs::is_regular_file(*cfg.embeddings))
    throw ConfigError("embedding file " + cfg.embeddings->string() + " does not exist");
}

nlohmann::json checkpoint_extra(const TrainConfig& cfg) {
  json extra = {{"scene", to_json(cfg.scene)}, {"train", to_json(cfg)}, {"seed", cfg.seed}};
  if (cfg.embeddings) extra["embeddings"] = fs::absolute(*cfg.embeddings).string();
  return extra;
}

struct TrainOutcome {
  TrainResult result;
  fs::path checkpoint;
};

TrainOutcome train_into(const TrainConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  std::ofstream log(out / "train.jsonl", std::ios::trunc);
  TrainOutcome o{train(cfg, &log), out / "checkpoint"};
  save_checkpoint(o.checkpoint, o.result.params, checkpoint_extra(cfg));
  return o;
}

struct LoadedCheckpoint {
  ModelParams params;
  SceneConfig scene;
  std::optional<EmbeddingTable> embeddings;
};

LoadedCheckpoint open_checkpoint(const fs::path& dir) {
  LoadedCheckpoint c{load_checkpoint(dir), {}, {}};
  const json manifest = load_manifest(dir);
  if (manifest.contains("scene")) c.scene = parse_scene_config(manifest["scene"]);
  if (c.params.config.mode == GraphMode::cosine)
    c.embeddings = manifest.contains("embeddings")
                       ? load_embeddings(manifest["embeddings"].get<std::string>())
                       : toy_embeddings(c.scene);
  return c;
}

json eval_report(const LoadedCheckpoint& c, std::size_t scenes, std::uint64_t seed) {
  const EvalResult r = evaluate_toy(c.params, c.scene, scenes, seed,
                                    c.embeddings ? &*c.embeddings : nullptr);
  json report = to_json(r.pq, toy_class_table(c.scene));
  report["scenes"] = scenes;
  report["seed"] = seed;
  report["mode"] = std::string(to_string(c.params.config.mode));
  return report;
}

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

int cmd_gradcheck(const GradcheckArgs& a) {
  if (!a.all && a.filter.empty())
    throw ConfigError("gradcheck: pass --all or an op-name pattern");
  const auto start = std::chrono::steady_clock::now();
  std::vector<GradCase> cases;
  for (auto& c : gradient_suite(a.seed))
    if (a.all || name_matches(a.filter, c.name)) cases.push_back(std::move(c));
  if (cases.empty()) {
    std::cerr << "no ops matched '" << a.filter << "'\n";
    return kUsage;
  }
  if (a.corrupt)
    for (auto& c : cases) c.op = corrupted(std::move(c.op));

  std::size_t width = 2;
  for (const auto& c : cases) width = std::max(width, c.name.size());
  std::printf("%-*s  %12s  %8s  %s\n", static_cast<int>(width), "op", "max_rel_err", "entries",
              "status");
  std::size_t failed = 0;
  for (const auto& r : run_gradient_suite(cases, a.eps, a.tol)) {
    if (!r.pass) ++failed;
    std::printf("%-*s  %12.3e  %8zu  %s\n", static_cast<int>(width), r.op.c_str(), r.max_rel_err,
                r.entries_checked, r.pass ? "ok" : "FAIL");
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%zu ops checked, %zu failed, eps=%g tol=%g, %.2fs\n", cases.size(), failed, a.eps,
              a.tol, secs);
  return failed == 0 ? kOk : kVerifyFailed;
}

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  if (a.mode) rc.train.model.mode = parse_graph_mode(*a.mode);
  rc.train.validate();
  check_inputs(rc.train);
  const fs::path out = a.out != "bgr-run" || !rc.out ? a.out : *rc.out;

  const TrainOutcome o = train_into(rc.train, out);
  const auto& r = o.result;
  const json summary = {{"iterations", r.iterations.size()},
                        {"initial_loss", r.initial_loss(rc.train)},
                        {"final_loss", r.final_loss(rc.train)},
                        {"checkpoint", o.checkpoint.string()},
                        {"diverged", r.diverged}};
  std::cout << rounded(summary).dump(2) << '\n';
  if (r.diverged) {
    std::cerr << r.diagnostic << " (last good checkpoint written)\n";
    return kVerifyFailed;
  }
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  const LoadedCheckpoint c = open_checkpoint(a.checkpoint);
  const json report = eval_report(c, a.scenes, a.seed);
  if (a.out) write_text(*a.out, report.dump(2) + "\n");
  std::cout << rounded(report).dump(2) << '\n';
  return kOk;
}

int cmd_ablate(const AblateArgs& a) {
  RunConfig rc = load_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  rc.train.validate();
  check_inputs(rc.train);

  json rows = json::array();
  for (GraphMode mode : kAllGraphModes) {
    TrainConfig cfg = rc.train;
    cfg.model.mode = mode;
    const fs::path dir = a.out / std::string(to_string(mode));
    const TrainOutcome o = train_into(cfg, dir);
    const json report = eval_report(open_checkpoint(o.checkpoint), a.scenes, a.eval_seed);
    rows.push_back({{"mode", std::string(to_string(mode))},
                    {"seed", cfg.seed},
                    {"eval_seed", a.eval_seed},
                    {"scenes", a.scenes},
                    {"PQ", report["PQ"]},
                    {"PQ_th", report["PQ_th"]},
                    {"PQ_st", report["PQ_st"]},
                    {"SQ", report["SQ"]},
                    {"RQ", report["RQ"]},
                    {"initial_loss", o.result.initial_loss(cfg)},
                    {"final_loss", o.result.final_loss(cfg)},
                    {"diverged", o.result.diverged}});
  }
  write_text(a.out / "ablation.json", json{{"rows", rows}}.dump(2) + "\n");

  std::ostringstream table;
  char line[160];
  std::snprintf(line, sizeof line, "%-15s %6s %8s %8s %8s %10s\n", "mode", "seed", "PQ", "PQ_th",
                "PQ_st", "final_loss");
  table << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-15s %6llu %8s %8s %8s %10s\n",
                  r["mode"].get<std::string>().c_str(),
                  static_cast<unsigned long long>(r["seed"].get<std::uint64_t>()),
                  fmt(100.0 * r["PQ"].get<double>(), "%.2f").c_str(),
                  fmt(100.0 * r["PQ_th"].get<double>(), "%.2f").c_str(),
                  fmt(100.0 * r["PQ_st"].get<double>(), "%.2f").c_str(),
                  fmt(r["final_loss"].get<double>()).c_str());
    table << line;
  }
  write_text(a.out / "ablation.txt", table.str());
  std::cout << table.str();
  return kOk;
}

int cmd_scene(const SceneArgs& a) {
  SceneConfig cfg = load_run_config(a.config).train.scene;
  if (a.noise) {
    cfg.feature_noise = cfg.score_noise = cfg.proposal_noise = *a.noise;
    cfg.validate();
  }
  const ToyScene s = generate_scene(cfg, a.seed);
  fs::create_directories(a.out);
  save_raster(a.out / "features.bgrm", s.features);
  save_raster(a.out / "scores.bgrm", s.coarse_scores);
  save_panoptic(a.out / "gt.bgrp", s.ground_truth);

  Mat semantic(s.height, s.width);
  for (std::size_t p = 0; p < s.stuff_labels.size(); ++p)
    semantic[p] = stuff_panoptic_id(cfg, s.stuff_labels[p]);
  save_bgrm(a.out / "semantic.bgrm", semantic);

  json instances = json::array();
  for (const auto& prop : s.regions.proposals) {
    std::vector<std::size_t> pixels;
    for (std::size_t p = 0; p < prop.mask.size(); ++p)
      if (prop.mask[p]) pixels.push_back(p);
    instances.push_back({{"class_id", thing_panoptic_id(cfg, prop.class_id.value_or(0))},
                         {"score", prop.score},
                         {"pixels", pixels}});
  }
  write_text(a.out / "instances.json",
             json{{"height", s.height}, {"width", s.width}, {"instances", instances}}.dump() + "\n");
  write_text(a.out / "scene.json", json{{"seed", a.seed}, {"scene", to_json(cfg)}}.dump(2) + "\n");
  std::cout << a.out.string() << '\n';
  return kOk;
}

int cmd_fuse(const FuseArgs& a) {
  FusionConfig cfg;
  if (a.config) {
    const json doc = read_json(*a.config);
    for (const auto& [k, v] : doc.items())
      if (k != "score_thresh" && k != "keep_frac" && k != "min_stuff_area")
        throw ConfigError(a.config->string() + ": unknown key '" + k + "'");
    cfg.score_thresh = doc.value("score_thresh", cfg.score_thresh);
    cfg.keep_frac = doc.value("keep_frac", cfg.keep_frac);
    if (doc.contains("min_stuff_area")) cfg.min_stuff_area = doc["min_stuff_area"].get<double>();
  }
  if (a.score_thresh) cfg.score_thresh = *a.score_thresh;
  if (a.keep_frac) cfg.keep_frac = *a.keep_frac;
  if (a.min_stuff_area) cfg.min_stuff_area = *a.min_stuff_area;

  const json doc = read_json(a.instances);
  std::size_t h = 0, w = 0;
  std::vector<InstancePrediction> instances;
  try {
    h = doc.at("height").get<std::size_t>();
    w = doc.at("width").get<std::size_t>();
    for (const auto& e : doc.at("instances")) {
      InstancePrediction inst;
      inst.class_id = e.at("class_id").get<int>();
      inst.score = e.at("score").get<double>();
      inst.mask.assign(h * w, 0);
      for (const auto& p : e.at("pixels")) {
        const auto idx = p.get<std::size_t>();
        if (idx >= h * w)
          throw ConfigError(a.instances.string() + ": pixel " + std::to_string(idx) +
                            " outside a " + std::to_string(h) + "x" + std::to_string(w) + " raster");
        inst.mask[idx] = 1;
      }
      instances.push_back(std::move(inst));
    }
  } catch (const json::exception& e) {
    throw ConfigError(a.instances.string() + ": " + e.what());
  }

  const Mat labels = load_bgrm(a.semantic);
  if (labels.rows() != h || labels.cols() != w)
    throw ShapeError("fuse: semantic raster is " + labels.shape_str() + ", instances declare " +
                     std::to_string(h) + "x" + std::to_string(w));
  SemanticRaster semantic{h, w, std::vector<int>(h * w)};
  for (std::size_t p = 0; p < h * w; ++p) {
    if (labels[p] != std::floor(labels[p]))
      throw ConfigError("fuse: semantic label at pixel " + std::to_string(p) + " is not an integer");
    semantic.labels[p] = static_cast<int>(labels[p]);
  }

  const PanopticMap map = fuse(instances, semantic, cfg);
  save_panoptic(a.out, map);
  std::size_t things = 0;
  for (const auto& s : map.segments) things += s.is_thing ? 1 : 0;
  std::cout << json{{"out", a.out.string()},
                    {"segments", map.segments.size()},
                    {"things", things},
                    {"stuff", map.segments.size() - things}}
                   .dump()
            << '\n';
  return kOk;
}

int cmd_pq(const PqArgs& a) {
  const PanopticMap pred = load_panoptic(a.pred);
  const PanopticMap gt = load_panoptic(a.gt);
  const ClassTable table = class_table_from(pred, gt);
  const json report = to_json(panoptic_quality(pred, gt, table), table);
  if (a.out) write_text(*a.out, report.dump(2) + "\n");
  std::cout << rounded(report).dump(2) << '\n';
  return kOk;
}

int cmd_centers(const CentersArgs& a) {
  const ChannelRaster f = load_raster(a.features);
  const ChannelRaster s = load_raster(a.scores);
  const FeatureMap features(f.values(), f.height(), f.width());
  const ScoreMap scores(s.values(), s.height(), s.width());
  const StuffNodeSet nodes = extract_class_centers(features, scores);
  const Mat sim = center_similarity_map(features, nodes, a.class_id);
  save_raster(a.out, ChannelRaster(Mat(1, sim.size(), std::vector<double>(sim.data().begin(),
                                                                          sim.data().end())),
                                   features.height(), features.width()));
  std::cout << a.out.string() << '\n';
  return kOk;
}

}  // namespace bgr::cli
