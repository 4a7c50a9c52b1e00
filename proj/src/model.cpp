#include "bgr/model.hpp"

#include <fstream>

#include "bgr/bgrm.hpp"
#include "bgr/errors.hpp"

namespace bgr {

std::string_view to_string(GraphMode mode) {
  switch (mode) {
    case GraphMode::bidirectional: return "bidirectional";
    case GraphMode::thing_to_stuff: return "thing-to-stuff";
    case GraphMode::stuff_to_thing: return "stuff-to-thing";
    case GraphMode::disconnected: return "disconnected";
    case GraphMode::thing_only: return "thing-only";
    case GraphMode::stuff_only: return "stuff-only";
    case GraphMode::cosine: return "cosine";
  }
  return "unknown";
}

GraphMode parse_graph_mode(std::string_view name) {
  for (GraphMode m : kAllGraphModes)
    if (to_string(m) == name) return m;
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected bidirectional, thing-to-stuff, stuff-to-thing, disconnected, "
                    "thing-only, stuff-only or cosine)");
}

void ModelConfig::validate() const {
  if (n == 0 || d0 == 0 || d1 == 0 || d2 == 0)
    throw ConfigError("model: N, D0, D1 and D2 must be positive");
  if (layers == 0) throw ConfigError("model: needs at least one reasoning layer");
  if (heads == 0) throw ConfigError("model: needs at least one attention head");
  if (thing_classes == 0 || stuff_classes == 0)
    throw ConfigError("model: needs at least one thing and one stuff class");
  if (!(slope > 0.0 && slope < 1.0))
    throw ConfigError("model: leaky slope must lie in (0,1), got " + std::to_string(slope));
}

std::vector<std::pair<std::string, Mat*>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, Mat*>> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    out.emplace_back(p + "w_thing", &layers[l].w_thing);
    out.emplace_back(p + "w_stuff", &layers[l].w_stuff);
    for (std::size_t h = 0; h < layers[l].heads.size(); ++h)
      out.emplace_back(p + "head" + std::to_string(h), &layers[l].heads[h].w_pair);
  }
  out.emplace_back("proj.w_intra_thing", &proj.w_intra_thing);
  out.emplace_back("proj.w_intra_stuff", &proj.w_intra_stuff);
  out.emplace_back("proj.thing_cls_w", &proj.thing_cls_w);
  out.emplace_back("proj.thing_cls_b", &proj.thing_cls_b);
  out.emplace_back("proj.stuff_cls_w", &proj.stuff_cls_w);
  out.emplace_back("proj.stuff_cls_b", &proj.stuff_cls_b);
  return out;
}

std::vector<std::pair<std::string, const Mat*>> ModelParams::named_tensors() const {
  std::vector<std::pair<std::string, const Mat*>> out;
  for (auto& [name, m] : const_cast<ModelParams*>(this)->named_tensors()) out.emplace_back(name, m);
  return out;
}

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams p;
  p.config = cfg;
  p.layers = init_reasoning_layers(cfg.n, cfg.d0, cfg.layers, cfg.heads, rng);
  p.proj = init_projection(cfg.n, cfg.graph_width(), cfg.d1, cfg.d2, cfg.thing_classes,
                           cfg.stuff_classes, rng);
  return p;
}

BoundModel bind(Tape& tape, const ModelParams& params, bool trainable) {
  BoundModel b;
  for (const auto& l : params.layers) {
    b.layers.push_back(bind(tape, l, trainable));
    b.flat.push_back(b.layers.back().w_thing);
    b.flat.push_back(b.layers.back().w_stuff);
    for (const Var& h : b.layers.back().heads) b.flat.push_back(h);
  }
  b.proj = bind(tape, params.proj, trainable);
  for (Var v : {b.proj.w_intra_thing, b.proj.w_intra_stuff, b.proj.thing_cls_w,
                b.proj.thing_cls_b, b.proj.stuff_cls_w, b.proj.stuff_cls_b})
    b.flat.push_back(v);
  return b;
}

BoundModel bind_flat(const ModelConfig& cfg, std::span<const Var> flat) {
  const std::size_t expected = cfg.layers * (2 + cfg.heads) + 6;
  if (flat.size() != expected)
    throw ShapeError("bind_flat: " + std::to_string(flat.size()) + " tensors, config needs " +
                     std::to_string(expected));
  BoundModel b;
  b.flat.assign(flat.begin(), flat.end());
  std::size_t k = 0;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    ReasoningLayerVars v{flat[k], flat[k + 1], {}};
    k += 2;
    for (std::size_t h = 0; h < cfg.heads; ++h) v.heads.push_back(flat[k++]);
    b.layers.push_back(std::move(v));
  }
  b.proj = {flat[k], flat[k + 1], flat[k + 2], flat[k + 3], flat[k + 4], flat[k + 5]};
  return b;
}

namespace {

ReasoningMode reasoning_mode_for(GraphMode mode) {
  switch (mode) {
    case GraphMode::thing_to_stuff: return ReasoningMode::thing_to_stuff;
    case GraphMode::stuff_to_thing: return ReasoningMode::stuff_to_thing;
    case GraphMode::disconnected: return ReasoningMode::disconnected;
    case GraphMode::cosine: return ReasoningMode::cosine;
    default: return ReasoningMode::bidirectional;
  }
}

Mat node_embeddings(const EmbeddingTable& table, const RegionSet& regions, bool things,
                    bool stuff, std::size_t stuff_classes) {
  const std::size_t dim = table.stuff.cols();
  if (table.thing.cols() != dim)
    throw ConfigError("embeddings: thing and stuff vectors differ in length");
  if (stuff && table.stuff.rows() != stuff_classes)
    throw ConfigError("embeddings: " + std::to_string(table.stuff.rows()) +
                      " stuff vectors for " + std::to_string(stuff_classes) + " stuff classes");
  Mat out(0, dim);
  if (things) {
    Mat rows(regions.size(), dim);
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto& cls = regions.proposals[i].class_id;
      if (!cls || *cls < 0 || static_cast<std::size_t>(*cls) >= table.thing.rows())
        throw ConfigError("cosine mode: proposal " + std::to_string(i) +
                          " has no usable predicted class");
      for (std::size_t c = 0; c < dim; ++c) rows(i, c) = table.thing(static_cast<std::size_t>(*cls), c);
    }
    out = rows;
  }
  if (stuff) out = concat_rows(out, table.stuff);
  return out;
}

}  // namespace

ModelOutput forward(Tape& tape, const BoundModel& model, const ModelConfig& cfg,
                    const FeatureMap& features, const ScoreMap& scores, const RegionSet& regions,
                    const EmbeddingTable* embeddings) {
  if (features.channels() != cfg.n)
    throw ShapeError("forward: feature map has " + std::to_string(features.channels()) +
                     " channels, model expects " + std::to_string(cfg.n));
  if (scores.classes() != cfg.stuff_classes)
    throw ShapeError("forward: score map has " + std::to_string(scores.classes()) +
                     " classes, model expects " + std::to_string(cfg.stuff_classes));
  if (scores.height() != features.height() || scores.width() != features.width())
    throw ShapeError("forward: score map and feature map differ in size");

  const std::size_t p = regions.size();
  const std::size_t hw = features.pixels();
  Var f = tape.constant(features.values());
  Var s = tape.constant(scores.values());
  Var x_stuff = class_centers(f, s);
  Var x_thing = tape.constant(p > 0 ? build_thing_nodes(regions) : Mat(0, cfg.n));
  if (x_thing.cols() != cfg.n)
    throw ShapeError("forward: proposal features have length " + std::to_string(x_thing.cols()) +
                     ", model expects " + std::to_string(cfg.n));

  const bool thing_graph = p > 0 && cfg.mode != GraphMode::stuff_only;
  const bool stuff_graph = cfg.mode != GraphMode::thing_only;

  Var f_thing = tape.constant(Mat(p, cfg.d1));
  Var f_stuff = tape.constant(Mat(cfg.d2, hw));
  if (thing_graph || stuff_graph) {
    ReasoningOptions opts;
    opts.mode = reasoning_mode_for(cfg.mode);
    opts.slope = cfg.slope;
    if (cfg.mode == GraphMode::cosine) {
      if (embeddings == nullptr) throw ConfigError("cosine mode needs class embeddings");
      opts.embeddings =
          node_embeddings(*embeddings, regions, thing_graph, stuff_graph, cfg.stuff_classes);
    }
    Var gt = thing_graph ? x_thing : tape.constant(Mat(0, cfg.n));
    Var gs = stuff_graph ? x_stuff : tape.constant(Mat(0, cfg.n));
    ReasoningOutput r = run_reasoning(gt, gs, model.layers, opts);
    if (thing_graph) f_thing = project_things(r.thing, r.a_thing, model.proj.w_intra_thing);
    if (stuff_graph) f_stuff = project_stuff(r.stuff, s, model.proj.w_intra_stuff);
  }

  ModelOutput out;
  out.thing_logits = p > 0 ? classify_regions(x_thing, f_thing, model.proj.thing_cls_w,
                                              model.proj.thing_cls_b)
                           : tape.constant(Mat(0, cfg.thing_classes));
  out.stuff_logits = segment_pixels(f, f_stuff, model.proj.stuff_cls_w, model.proj.stuff_cls_b);
  return out;
}

namespace {

nlohmann::json config_json(const ModelConfig& c) {
  return {{"N", c.n},           {"D0", c.d0},
          {"D1", c.d1},         {"D2", c.d2},
          {"T", c.layers},      {"heads", c.heads},
          {"thing_classes", c.thing_classes}, {"stuff_classes", c.stuff_classes},
          {"slope", c.slope},   {"mode", std::string(to_string(c.mode))}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                     const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json layers = nlohmann::json::object();
  nlohmann::json proj = nlohmann::json::object();
  for (const auto& [name, m] : params.named_tensors()) {
    const std::string file = name + ".bgrm";
    save_bgrm(dir / file, *m);
    const auto dot = name.find('.');
    const std::string scope = name.substr(0, dot);
    const std::string key = name.substr(dot + 1);
    if (scope == "proj")
      proj[key] = file;
    else
      layers[scope.substr(5)][key] = file;
  }
  const auto& c = params.config;
  nlohmann::json manifest = {{"format", "bgr-checkpoint"},
                             {"T", c.layers},
                             {"D0", c.d0},
                             {"heads", c.heads},
                             {"mode", std::string(to_string(c.mode))},
                             {"model", config_json(c)},
                             {"layers", layers},
                             {"projection", proj}};
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

nlohmann::json load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

ModelParams load_checkpoint(const std::filesystem::path& dir) {
  const nlohmann::json m = load_manifest(dir);
  ModelConfig c;
  try {
    const auto& mc = m.at("model");
    c.n = mc.at("N").get<std::size_t>();
    c.d0 = mc.at("D0").get<std::size_t>();
    c.d1 = mc.at("D1").get<std::size_t>();
    c.d2 = mc.at("D2").get<std::size_t>();
    c.layers = mc.at("T").get<std::size_t>();
    c.heads = mc.at("heads").get<std::size_t>();
    c.thing_classes = mc.at("thing_classes").get<std::size_t>();
    c.stuff_classes = mc.at("stuff_classes").get<std::size_t>();
    c.slope = mc.at("slope").get<double>();
    c.mode = parse_graph_mode(mc.at("mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + dir.string() + ": bad manifest: " + e.what());
  }
  c.validate();
  if (m.value("T", c.layers) != c.layers || m.value("heads", c.heads) != c.heads)
    throw ConfigError("checkpoint " + dir.string() + ": manifest T/heads disagree with model block");

  // Shapes come from a fresh init; the files must match them exactly.
  ModelParams p = init_model(c, 0);
  for (auto& [name, mat] : p.named_tensors()) {
    const auto dot = name.find('.');
    const std::string scope = name.substr(0, dot);
    const std::string key = name.substr(dot + 1);
    std::string file;
    try {
      file = scope == "proj" ? m.at("projection").at(key).get<std::string>()
                             : m.at("layers").at(scope.substr(5)).at(key).get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("checkpoint " + dir.string() + ": manifest lacks " + name);
    }
    Mat loaded = load_bgrm(dir / file);
    if (loaded.rows() != mat->rows() || loaded.cols() != mat->cols())
      throw ConfigError("checkpoint " + dir.string() + ": " + name + " is " + loaded.shape_str() +
                        ", config implies " + mat->shape_str());
    *mat = std::move(loaded);
  }
  return p;
}

}  // namespace bgr
