#pragma once

// Optimizer, toy training loop, prediction and evaluation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "bgr/fusion.hpp"
#include "bgr/metrics.hpp"
#include "bgr/model.hpp"
#include "bgr/toytask.hpp"

namespace bgr {

struct SgdConfig {
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct SgdState {
  std::vector<Mat> velocity;  // lazily sized on the first step
};

/// v <- momentum*v + (g + weight_decay*theta); theta <- theta - lr*v.
/// Throws NumericError naming the tensor index on a non-finite gradient.
void sgd_step(std::span<Mat* const> params, std::span<const Mat> grads, SgdState& state,
              const SgdConfig& cfg);

struct TrainConfig {
  SgdConfig sgd;
  // Iterations at which lr is divided by 10; empty means 2/3 and 11/12 of the run.
  std::vector<std::size_t> lr_drops;
  std::size_t iterations = 200;
  std::size_t batch_size = 2;
  std::uint64_t seed = 1;
  ModelConfig model;
  SceneConfig scene;
  double thing_loss_weight = 1.0;
  double stuff_loss_weight = 1.0;
  std::size_t eval_every = 50;  // 0 disables periodic evaluation
  std::size_t eval_scenes = 4;
  std::optional<std::filesystem::path> embeddings;  // cosine mode; builtin table if unset

  void validate() const;
  std::vector<std::size_t> resolved_drops() const;
  double lr_at(std::size_t iter) const;
};

// JSON config: unknown keys are rejected with ConfigError.
TrainConfig parse_train_config(const nlohmann::json& doc);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const SceneConfig& cfg);
SceneConfig parse_scene_config(const nlohmann::json& doc);

struct IterationLog {
  std::size_t iter = 0;
  double loss_thing = 0.0;
  double loss_stuff = 0.0;
  double lr = 0.0;
  double loss() const { return loss_thing + loss_stuff; }
};

struct EvalLog {
  std::size_t iter = 0;
  PQResult pq;
};

struct TrainResult {
  ModelParams params;  // last parameters with finite loss
  std::vector<IterationLog> iterations;
  std::vector<EvalLog> evals;
  bool diverged = false;
  std::string diagnostic;

  // Weighted loss at iteration 0 and the mean over the last 10 iterations.
  double initial_loss(const TrainConfig& cfg) const;
  double final_loss(const TrainConfig& cfg) const;
};

// Seed of the b-th scene of iteration `iter`, disjoint from evaluation seeds
// for any realistic run length.
std::uint64_t training_scene_seed(std::uint64_t seed, std::size_t iter, std::size_t batch,
                                  std::size_t b);

EmbeddingTable resolve_embeddings(const TrainConfig& cfg);

/// Trains from init_model(cfg.model, cfg.seed). Log lines go to `log` when
/// given, one JSON object per line.
TrainResult train(const TrainConfig& cfg, std::ostream* log = nullptr);

struct Prediction {
  Mat thing_probs;  // proposals x thing classes
  Mat stuff_logits;
  PanopticMap panoptic;
};

/// Full pipeline for one scene through fusion. Thing classes map to panoptic
/// ids via the scene config.
Prediction predict(const ModelParams& params, const SceneConfig& scene_cfg, const ToyScene& scene,
                   const FusionConfig& fusion = {}, const EmbeddingTable* embeddings = nullptr);

struct EvalResult {
  std::vector<PQStats> per_scene;
  PQStats total;
  PQResult pq;
};

/// Scenes use seeds seed, seed+1, ..., seed+n-1 and may run in parallel;
/// stats are summed in scene order.
EvalResult evaluate_toy(const ModelParams& params, const SceneConfig& scene_cfg,
                        std::size_t n_scenes, std::uint64_t seed,
                        const EmbeddingTable* embeddings = nullptr,
                        const FusionConfig& fusion = {});

}  // namespace bgr
