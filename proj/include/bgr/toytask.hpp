#pragma once

// Synthetic panoptic scenes with known ground truth.
//
// Stuff classes are laid out as horizontal bands. Each thing class has a
// host stuff class and is only ever placed fully inside a band of that class,
// so thing/stuff co-occurrence follows a fixed rule table. Features are a
// fixed linear embedding of the one-hot label map plus Gaussian noise, which
// stands in for a trained backbone; coarse scores are a blurred, noisy copy of
// the stuff labels; proposals are the ground-truth shapes plus shifted
// duplicates with pooled features.

#include <cstdint>
#include <string>
#include <vector>

#include "bgr/graphs.hpp"
#include "bgr/metrics.hpp"
#include "bgr/panoptic.hpp"

namespace bgr {

struct SceneConfig {
  std::size_t height = 12;
  std::size_t width = 12;
  std::size_t channels = 16;  // N
  std::size_t stuff_classes = 4;
  std::size_t thing_classes = 4;
  // Host stuff class per thing class; empty means thing a lives on stuff a % S.
  std::vector<int> host_stuff;
  std::size_t min_bands = 2;
  std::size_t max_bands = 3;
  std::size_t min_things = 1;
  std::size_t max_things = 3;
  double feature_noise = 0.5;
  double thing_signal = 0.5;
  double score_signal = 3.0;
  double score_noise = 1.0;
  double proposal_noise = 0.1;
  double duplicate_prob = 1.0;
  double label_flip_prob = 0.0;
  std::uint64_t embedding_seed = 7;

  // Throws ConfigError on degenerate dimensions or a bad host table.
  void validate() const;
  int host_of(std::size_t thing_class) const;
};

struct ToyThing {
  int class_id = 0;  // thing class index in [0, thing_classes)
  std::vector<std::uint8_t> mask;
};

struct ToyScene {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> stuff_labels;  // H*W stuff class per pixel, also under things
  std::vector<ToyThing> things;
  FeatureMap features;
  ScoreMap coarse_scores;
  RegionSet regions;
  std::vector<int> proposal_labels;  // ground-truth thing class per proposal
  PanopticMap ground_truth;
};

// Panoptic class ids: stuff class s -> s, thing class a -> S + a.
int stuff_panoptic_id(const SceneConfig& cfg, int stuff_class);
int thing_panoptic_id(const SceneConfig& cfg, int thing_class);
ClassTable toy_class_table(const SceneConfig& cfg);

/// N x (S + T) class embedding used to synthesize features. Columns are
/// orthonormal when N >= S + T.
Mat class_embedding_matrix(const SceneConfig& cfg);

ToyScene generate_scene(const SceneConfig& cfg, std::uint64_t seed);

/// Class "word" embeddings for the cosine-similarity connection variant.
struct EmbeddingTable {
  std::vector<std::string> thing_names;
  std::vector<std::string> stuff_names;
  Mat thing;  // thing classes x d
  Mat stuff;  // stuff classes x d
};

/// Built-in embeddings derived from the host table: each thing vector leans
/// toward its host stuff vector.
EmbeddingTable toy_embeddings(const SceneConfig& cfg);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

}  // namespace bgr
