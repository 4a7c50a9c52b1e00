#include "bgr/train.hpp"

#include <cmath>
#include <exception>
#include <set>
#include <string>

#include "bgr/errors.hpp"
#include "bgr/kernels.hpp"

namespace bgr {

void sgd_step(std::span<Mat* const> params, std::span<const Mat> grads, SgdState& state,
              const SgdConfig& cfg) {
  if (params.size() != grads.size())
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " tensors but " +
                     std::to_string(grads.size()) + " gradients");
  if (state.velocity.empty())
    for (const Mat* p : params) state.velocity.emplace_back(p->rows(), p->cols());
  if (state.velocity.size() != params.size())
    throw ShapeError("sgd_step: optimizer state holds " + std::to_string(state.velocity.size()) +
                     " tensors, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat& g = grads[i];
    if (g.rows() != params[i]->rows() || g.cols() != params[i]->cols() ||
        state.velocity[i].rows() != g.rows() || state.velocity[i].cols() != g.cols())
      throw ShapeError("sgd_step: tensor " + std::to_string(i) + " is " +
                       params[i]->shape_str() + ", gradient " + g.shape_str());
    if (!g.all_finite())
      throw NumericError("sgd_step: non-finite gradient for tensor " + std::to_string(i));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->data();
    auto v = state.velocity[i].data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      v[k] = cfg.momentum * v[k] + (g[k] + cfg.weight_decay * theta[k]);
      theta[k] -= cfg.lr * v[k];
    }
  }
}

void TrainConfig::validate() const {
  model.validate();
  scene.validate();
  if (!(sgd.lr >= 0.0) || !(sgd.momentum >= 0.0 && sgd.momentum < 1.0) ||
      !(sgd.weight_decay >= 0.0))
    throw ConfigError("train: need lr >= 0, momentum in [0,1), weight_decay >= 0");
  if (iterations == 0 || batch_size == 0)
    throw ConfigError("train: iterations and batch_size must be positive");
  if (!lr_drops.empty() && lr_drops.size() != 2)
    throw ConfigError("train: lr_drops must list exactly two iterations");
  if (lr_drops.size() == 2 && lr_drops[0] >= lr_drops[1])
    throw ConfigError("train: lr_drops must be increasing");
  if (model.n != scene.channels)
    throw ConfigError("train: model N=" + std::to_string(model.n) + " but scenes have " +
                      std::to_string(scene.channels) + " feature channels");
  if (model.thing_classes != scene.thing_classes || model.stuff_classes != scene.stuff_classes)
    throw ConfigError("train: model and scene class counts differ");
  if (!(thing_loss_weight >= 0.0) || !(stuff_loss_weight >= 0.0))
    throw ConfigError("train: loss weights must be >= 0");
}

std::vector<std::size_t> TrainConfig::resolved_drops() const {
  if (!lr_drops.empty()) return lr_drops;
  return {iterations * 2 / 3, iterations * 11 / 12};
}

double TrainConfig::lr_at(std::size_t iter) const {
  double lr = sgd.lr;
  for (std::size_t d : resolved_drops())
    if (iter >= d) lr /= 10.0;
  return lr;
}

namespace {

void reject_unknown(const nlohmann::json& doc, const std::set<std::string>& known,
                    const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [k, v] : doc.items())
    if (!known.contains(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
void read(const nlohmann::json& doc, const char* key, T& out, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

SceneConfig parse_scene_config(const nlohmann::json& doc) {
  reject_unknown(doc,
                 {"height", "width", "channels", "stuff_classes", "thing_classes", "host_stuff",
                  "min_bands", "max_bands", "min_things", "max_things", "feature_noise",
                  "thing_signal", "score_signal", "score_noise", "proposal_noise",
                  "duplicate_prob", "label_flip_prob", "embedding_seed"},
                 "scene config");
  SceneConfig c;
  const std::string w = "scene config";
  read(doc, "height", c.height, w);
  read(doc, "width", c.width, w);
  read(doc, "channels", c.channels, w);
  read(doc, "stuff_classes", c.stuff_classes, w);
  read(doc, "thing_classes", c.thing_classes, w);
  read(doc, "host_stuff", c.host_stuff, w);
  read(doc, "min_bands", c.min_bands, w);
  read(doc, "max_bands", c.max_bands, w);
  read(doc, "min_things", c.min_things, w);
  read(doc, "max_things", c.max_things, w);
  read(doc, "feature_noise", c.feature_noise, w);
  read(doc, "thing_signal", c.thing_signal, w);
  read(doc, "score_signal", c.score_signal, w);
  read(doc, "score_noise", c.score_noise, w);
  read(doc, "proposal_noise", c.proposal_noise, w);
  read(doc, "duplicate_prob", c.duplicate_prob, w);
  read(doc, "label_flip_prob", c.label_flip_prob, w);
  read(doc, "embedding_seed", c.embedding_seed, w);
  c.validate();
  return c;
}

nlohmann::json to_json(const SceneConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"channels", c.channels},
          {"stuff_classes", c.stuff_classes},
          {"thing_classes", c.thing_classes},
          {"host_stuff", c.host_stuff},
          {"min_bands", c.min_bands},
          {"max_bands", c.max_bands},
          {"min_things", c.min_things},
          {"max_things", c.max_things},
          {"feature_noise", c.feature_noise},
          {"thing_signal", c.thing_signal},
          {"score_signal", c.score_signal},
          {"score_noise", c.score_noise},
          {"proposal_noise", c.proposal_noise},
          {"duplicate_prob", c.duplicate_prob},
          {"label_flip_prob", c.label_flip_prob},
          {"embedding_seed", c.embedding_seed}};
}

TrainConfig parse_train_config(const nlohmann::json& doc) {
  const std::string w = "train config";
  reject_unknown(doc,
                 {"lr", "momentum", "weight_decay", "lr_drops", "iterations", "batch_size", "seed",
                  "mode", "T", "heads", "N", "D0", "D1", "D2", "slope", "thing_loss_weight",
                  "stuff_loss_weight", "eval_every", "eval_scenes", "embeddings", "scene"},
                 w);
  TrainConfig c;
  read(doc, "lr", c.sgd.lr, w);
  read(doc, "momentum", c.sgd.momentum, w);
  read(doc, "weight_decay", c.sgd.weight_decay, w);
  read(doc, "lr_drops", c.lr_drops, w);
  read(doc, "iterations", c.iterations, w);
  read(doc, "batch_size", c.batch_size, w);
  read(doc, "seed", c.seed, w);
  if (doc.contains("mode")) {
    if (!doc["mode"].is_string()) throw ConfigError(w + ": 'mode' must be a string");
    c.model.mode = parse_graph_mode(doc["mode"].get<std::string>());
  }
  read(doc, "T", c.model.layers, w);
  read(doc, "heads", c.model.heads, w);
  read(doc, "D0", c.model.d0, w);
  read(doc, "D1", c.model.d1, w);
  read(doc, "D2", c.model.d2, w);
  read(doc, "slope", c.model.slope, w);
  read(doc, "thing_loss_weight", c.thing_loss_weight, w);
  read(doc, "stuff_loss_weight", c.stuff_loss_weight, w);
  read(doc, "eval_every", c.eval_every, w);
  read(doc, "eval_scenes", c.eval_scenes, w);
  if (doc.contains("embeddings")) {
    std::string path;
    read(doc, "embeddings", path, w);
    c.embeddings = path;
  }
  if (doc.contains("scene")) c.scene = parse_scene_config(doc["scene"]);
  // N is shared by the model and the scene generator
  if (doc.contains("N")) {
    read(doc, "N", c.model.n, w);
    c.scene.channels = c.model.n;
  } else {
    c.model.n = c.scene.channels;
  }
  c.model.thing_classes = c.scene.thing_classes;
  c.model.stuff_classes = c.scene.stuff_classes;
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json doc = {{"lr", c.sgd.lr},
                        {"momentum", c.sgd.momentum},
                        {"weight_decay", c.sgd.weight_decay},
                        {"lr_drops", c.resolved_drops()},
                        {"iterations", c.iterations},
                        {"batch_size", c.batch_size},
                        {"seed", c.seed},
                        {"mode", std::string(to_string(c.model.mode))},
                        {"T", c.model.layers},
                        {"heads", c.model.heads},
                        {"N", c.model.n},
                        {"D0", c.model.d0},
                        {"D1", c.model.d1},
                        {"D2", c.model.d2},
                        {"slope", c.model.slope},
                        {"thing_loss_weight", c.thing_loss_weight},
                        {"stuff_loss_weight", c.stuff_loss_weight},
                        {"eval_every", c.eval_every},
                        {"eval_scenes", c.eval_scenes},
                        {"scene", to_json(c.scene)}};
  if (c.embeddings) doc["embeddings"] = c.embeddings->string();
  return doc;
}

double TrainResult::initial_loss(const TrainConfig& cfg) const {
  if (iterations.empty()) return 0.0;
  const auto& it = iterations.front();
  return cfg.thing_loss_weight * it.loss_thing + cfg.stuff_loss_weight * it.loss_stuff;
}

double TrainResult::final_loss(const TrainConfig& cfg) const {
  if (iterations.empty()) return 0.0;
  const std::size_t k = std::min<std::size_t>(10, iterations.size());
  double acc = 0.0;
  for (std::size_t i = iterations.size() - k; i < iterations.size(); ++i)
    acc += cfg.thing_loss_weight * iterations[i].loss_thing +
           cfg.stuff_loss_weight * iterations[i].loss_stuff;
  return acc / static_cast<double>(k);
}

std::uint64_t training_scene_seed(std::uint64_t seed, std::size_t iter, std::size_t batch,
                                  std::size_t b) {
  return (seed << 32) + (std::uint64_t{1} << 31) + iter * batch + b;
}

EmbeddingTable resolve_embeddings(const TrainConfig& cfg) {
  return cfg.embeddings ? load_embeddings(*cfg.embeddings) : toy_embeddings(cfg.scene);
}

namespace {

// Per-pixel stuff labels (also under things) as the stuff head's targets.
Var stuff_loss(Var stuff_logits, const ToyScene& scene) {
  return ad::cross_entropy(ad::transpose(stuff_logits), scene.stuff_labels);
}

nlohmann::json pq_line(std::size_t iter, const PQResult& r) {
  return {{"iter", iter}, {"PQ", r.all.pq}, {"PQ_th", r.things.pq}, {"PQ_st", r.stuff.pq}};
}

}  // namespace

TrainResult train(const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  TrainResult result;
  result.params = init_model(cfg.model, cfg.seed);
  const bool cosine = cfg.model.mode == GraphMode::cosine;
  const EmbeddingTable emb = cosine ? resolve_embeddings(cfg) : EmbeddingTable{};
  const EmbeddingTable* emb_ptr = cosine ? &emb : nullptr;

  SgdState state;
  ModelParams& params = result.params;
  std::vector<Mat*> tensors;
  for (auto& [name, m] : params.named_tensors()) tensors.push_back(m);

  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<Mat> grads;
    for (const Mat* m : tensors) grads.emplace_back(m->rows(), m->cols());
    IterationLog entry;
    entry.iter = iter;
    entry.lr = cfg.lr_at(iter);
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
    try {
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const ToyScene scene =
            generate_scene(cfg.scene, training_scene_seed(cfg.seed, iter, cfg.batch_size, b));
        Tape tape;
        const BoundModel bm = bind(tape, params, true);
        const ModelOutput out = forward(tape, bm, cfg.model, scene.features, scene.coarse_scores,
                                        scene.regions, emb_ptr);
        Var lt = ad::cross_entropy(out.thing_logits, scene.proposal_labels);
        Var ls = stuff_loss(out.stuff_logits, scene);
        Var total = ad::scale_add(lt, ls, cfg.thing_loss_weight, cfg.stuff_loss_weight);
        tape.backward(total);
        for (std::size_t i = 0; i < tensors.size(); ++i)
          grads[i] = scale_add(grads[i], bm.flat[i].grad(), 1.0, inv_batch);
        entry.loss_thing += inv_batch * lt.value()(0, 0);
        entry.loss_stuff += inv_batch * ls.value()(0, 0);
      }
      if (!std::isfinite(entry.loss_thing) || !std::isfinite(entry.loss_stuff))
        throw NumericError("non-finite loss at iteration " + std::to_string(iter));
      // Step on a copy so a failing step leaves the last good parameters intact.
      ModelParams next = params;
      std::vector<Mat*> next_tensors;
      for (auto& [name, m] : next.named_tensors()) next_tensors.push_back(m);
      SgdState next_state = state;
      sgd_step(next_tensors, grads, next_state, SgdConfig{entry.lr, cfg.sgd.momentum,
                                                          cfg.sgd.weight_decay});
      params = std::move(next);
      state = std::move(next_state);
      tensors.clear();
      for (auto& [name, m] : params.named_tensors()) tensors.push_back(m);
    } catch (const NumericError& e) {
      result.diverged = true;
      result.diagnostic = "diverged at iteration " + std::to_string(iter) + ": " + e.what();
      if (log) *log << nlohmann::json{{"iter", iter}, {"error", result.diagnostic}}.dump() << '\n';
      return result;
    }
    result.iterations.push_back(entry);
    if (log)
      *log << nlohmann::json{{"iter", iter},
                             {"loss_thing", entry.loss_thing},
                             {"loss_stuff", entry.loss_stuff},
                             {"lr", entry.lr}}
                  .dump()
           << '\n';
    if (cfg.eval_every > 0 && ((iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.iterations)) {
      EvalLog e{iter + 1, evaluate_toy(params, cfg.scene, cfg.eval_scenes, cfg.seed, emb_ptr).pq};
      if (log) *log << pq_line(e.iter, e.pq).dump() << '\n';
      result.evals.push_back(std::move(e));
    }
  }
  return result;
}

Prediction predict(const ModelParams& params, const SceneConfig& scene_cfg, const ToyScene& scene,
                   const FusionConfig& fusion, const EmbeddingTable* embeddings) {
  Tape tape;
  const BoundModel bm = bind(tape, params, false);
  const ModelOutput out = forward(tape, bm, params.config, scene.features, scene.coarse_scores,
                                  scene.regions, embeddings);
  Prediction pred;
  pred.thing_probs = softmax_axis(out.thing_logits.value(), Axis::rows);
  pred.stuff_logits = out.stuff_logits.value();

  std::vector<InstancePrediction> instances;
  for (std::size_t i = 0; i < scene.regions.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < pred.thing_probs.cols(); ++c)
      if (pred.thing_probs(i, c) > pred.thing_probs(i, best)) best = c;
    instances.push_back({scene.regions.proposals[i].mask,
                         thing_panoptic_id(scene_cfg, static_cast<int>(best)),
                         scene.regions.proposals[i].score * pred.thing_probs(i, best)});
  }
  SemanticRaster semantic{scene.height, scene.width, std::vector<int>(scene.height * scene.width)};
  for (std::size_t px = 0; px < semantic.labels.size(); ++px) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < pred.stuff_logits.rows(); ++c)
      if (pred.stuff_logits(c, px) > pred.stuff_logits(best, px)) best = c;
    semantic.labels[px] = stuff_panoptic_id(scene_cfg, static_cast<int>(best));
  }
  pred.panoptic = fuse(instances, semantic, fusion);
  return pred;
}

EvalResult evaluate_toy(const ModelParams& params, const SceneConfig& scene_cfg,
                        std::size_t n_scenes, std::uint64_t seed, const EmbeddingTable* embeddings,
                        const FusionConfig& fusion) {
  if (params.config.n != scene_cfg.channels ||
      params.config.thing_classes != scene_cfg.thing_classes ||
      params.config.stuff_classes != scene_cfg.stuff_classes)
    throw ConfigError("evaluate: checkpoint dimensions do not match the scene config");
  const ClassTable table = toy_class_table(scene_cfg);
  EvalResult r;
  r.per_scene.resize(n_scenes);
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(n_scenes);
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const ToyScene scene = generate_scene(scene_cfg, seed + static_cast<std::uint64_t>(i));
      const Prediction p = predict(params, scene_cfg, scene, fusion, embeddings);
      r.per_scene[static_cast<std::size_t>(i)] = panoptic_stats(p.panoptic, scene.ground_truth, table);
    } catch (...) {
#pragma omp critical(bgr_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (const auto& s : r.per_scene) r.total += s;
  r.pq = summarize(r.total, table);
  return r;
}

}  // namespace bgr
