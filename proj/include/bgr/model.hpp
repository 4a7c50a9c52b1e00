#pragma once

// The full pipeline: node construction, graph reasoning, re-projection and the
// two classification heads, plus its checkpoint directory format.

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bgr/graphs.hpp"
#include "bgr/projection.hpp"
#include "bgr/reasoning.hpp"
#include "bgr/toytask.hpp"

namespace bgr {

// Reasoning directions plus the two single-branch ablations.
enum class GraphMode {
  bidirectional,
  thing_to_stuff,
  stuff_to_thing,
  disconnected,
  thing_only,  // graph over proposals only; the stuff head gets no graph feature
  stuff_only,  // graph over class centers only; the thing head gets no graph feature
  cosine,
};

inline constexpr std::array<GraphMode, 7> kAllGraphModes = {
    GraphMode::bidirectional, GraphMode::thing_to_stuff, GraphMode::stuff_to_thing,
    GraphMode::disconnected,  GraphMode::thing_only,     GraphMode::stuff_only,
    GraphMode::cosine};

std::string_view to_string(GraphMode mode);
GraphMode parse_graph_mode(std::string_view name);

struct ModelConfig {
  std::size_t n = 16;  // feature channels
  std::size_t d0 = 16;
  std::size_t d1 = 16;
  std::size_t d2 = 16;
  std::size_t layers = 2;  // T
  std::size_t heads = 3;
  std::size_t thing_classes = 4;
  std::size_t stuff_classes = 4;
  double slope = kDefaultLeakySlope;
  GraphMode mode = GraphMode::bidirectional;

  void validate() const;
  std::size_t graph_width() const { return n + layers * d0; }
};

struct ModelParams {
  ModelConfig config;
  std::vector<ReasoningLayerParams> layers;
  ProjectionParams proj;

  // Every tensor in a fixed order, with stable names ("layer0.w_thing",
  // "layer1.head2", "proj.thing_cls_w", ...).
  std::vector<std::pair<std::string, Mat*>> named_tensors();
  std::vector<std::pair<std::string, const Mat*>> named_tensors() const;
};

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);

struct BoundModel {
  std::vector<ReasoningLayerVars> layers;
  ProjectionVars proj;
  std::vector<Var> flat;  // same order as named_tensors()
};

BoundModel bind(Tape& tape, const ModelParams& params, bool trainable);
// Rebuilds the structured view from vars in named_tensors() order.
BoundModel bind_flat(const ModelConfig& cfg, std::span<const Var> flat);

struct ModelOutput {
  Var thing_logits;  // proposals x thing classes
  Var stuff_logits;  // stuff classes x HW
};

/// Runs the pipeline on one image. `embeddings` is needed in cosine mode only;
/// thing nodes take the row of their proposal's predicted class.
ModelOutput forward(Tape& tape, const BoundModel& model, const ModelConfig& cfg,
                    const FeatureMap& features, const ScoreMap& scores, const RegionSet& regions,
                    const EmbeddingTable* embeddings = nullptr);

/// Writes one BGRM file per tensor plus manifest.json; `extra` keys are merged
/// into the manifest.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params,
                     const nlohmann::json& extra = nlohmann::json::object());
ModelParams load_checkpoint(const std::filesystem::path& dir);
nlohmann::json load_manifest(const std::filesystem::path& dir);

}  // namespace bgr
