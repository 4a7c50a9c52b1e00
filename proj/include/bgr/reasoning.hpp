#pragma once

// Joint thing+stuff graph reasoning.
//
// Thing rows come first in the joint node matrix, stuff rows after, so the
// joint adjacency splits into
//
//   [ A_th   A_s-t ]   thing rows
//   [ A_t-s  A_st  ]   stuff rows
//
// and one layer computes X~ = X ++ relu(A * [X_th W_th ; X_st W_st]).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bgr/autodiff.hpp"
#include "bgr/mat.hpp"
#include "bgr/random.hpp"

namespace bgr {

enum class ReasoningMode {
  bidirectional,
  thing_to_stuff,  // stuff rows may read thing nodes, not the reverse
  stuff_to_thing,  // thing rows may read stuff nodes, not the reverse
  disconnected,    // both cross blocks masked
  cosine,          // fixed adjacency from class-embedding cosine similarity
};

std::string_view to_string(ReasoningMode mode);
// Throws ConfigError on an unknown name.
ReasoningMode parse_reasoning_mode(std::string_view name);

inline constexpr double kDefaultLeakySlope = 0.2;

struct AttentionHead {
  Mat w_pair;  // 1 x 2d; logit(i,j) = leaky(w_pair . [x_i ++ x_j])
};

struct ReasoningLayerParams {
  Mat w_thing;  // d_in x D0
  Mat w_stuff;  // d_in x D0
  std::vector<AttentionHead> heads;

  std::size_t input_width() const { return w_thing.rows(); }
  std::size_t output_width() const { return w_thing.cols(); }
};

// The same parameters bound to a tape.
struct ReasoningLayerVars {
  Var w_thing;
  Var w_stuff;
  std::vector<Var> heads;
};

ReasoningLayerVars bind(Tape& tape, const ReasoningLayerParams& p, bool trainable);

// Random init for a stack of `layers` layers starting at width `input_width`.
std::vector<ReasoningLayerParams> init_reasoning_layers(std::size_t input_width,
                                                        std::size_t d0, std::size_t layers,
                                                        std::size_t heads, Rng& rng);

struct JointGraph {
  Mat features;  // (n_thing + n_stuff) x d
  std::size_t n_thing = 0;
  std::size_t n_stuff = 0;
  Mat adjacency;  // n x n, row-stochastic

  std::size_t size() const noexcept { return n_thing + n_stuff; }
};

struct AdjacencyBlocks {
  Mat thing_thing;     // A_th,  n_thing x n_thing
  Mat stuff_to_thing;  // A_s-t, n_thing x n_stuff
  Mat thing_to_stuff;  // A_t-s, n_stuff x n_thing
  Mat stuff_stuff;     // A_st,  n_stuff x n_stuff
};

/// Allowed-entry mask (row-major n x n) for the attention softmax in `mode`.
std::vector<std::uint8_t> direction_mask(std::size_t n_thing, std::size_t n_stuff,
                                         ReasoningMode mode);

/// Multi-head attention adjacency: per head a masked row softmax of
/// leaky(w_pair . [x_i ++ x_j]), then the mean of the heads.
Var attention_adjacency(Var nodes, std::span<const Var> heads,
                        const std::vector<std::uint8_t>& allowed, double slope);
Mat attention_adjacency(const Mat& nodes, std::span<const AttentionHead> heads,
                        const std::vector<std::uint8_t>& allowed,
                        double slope = kDefaultLeakySlope);

JointGraph build_joint_graph(const Mat& x_thing, const Mat& x_stuff,
                             std::span<const AttentionHead> heads, ReasoningMode mode,
                             double slope = kDefaultLeakySlope);

AdjacencyBlocks split_blocks(const JointGraph& g);
Mat assemble_blocks(const AdjacencyBlocks& blocks);

/// X_{t-s} = A_t-s * X_th * W_st
Mat connect_thing_to_stuff(const Mat& x_thing, const Mat& a_thing_to_stuff,
                           const Mat& w_stuff);

Var reasoning_layer(Var nodes, Var adjacency, std::size_t n_thing, Var w_thing, Var w_stuff);
Mat reasoning_layer(const JointGraph& g, const ReasoningLayerParams& p);

struct ReasoningOptions {
  ReasoningMode mode = ReasoningMode::bidirectional;
  double slope = kDefaultLeakySlope;
  // Per-node class embeddings, (n_thing + n_stuff) rows; required in cosine mode.
  std::optional<Mat> embeddings;
};

struct ReasoningOutput {
  Var thing;    // n_thing x (d + T*D0)
  Var stuff;    // n_stuff x (d + T*D0)
  Var a_thing;  // thing-thing block of the last layer's adjacency
  std::vector<Var> adjacencies;  // one per layer
};

ReasoningOutput run_reasoning(Var x_thing, Var x_stuff, std::span<const ReasoningLayerVars> layers,
                              const ReasoningOptions& options);

struct ReasoningResult {
  Mat thing;
  Mat stuff;
  Mat a_thing;
  std::vector<Mat> adjacencies;
};

ReasoningResult run_reasoning(const Mat& x_thing, const Mat& x_stuff,
                              std::span<const ReasoningLayerParams> layers,
                              const ReasoningOptions& options);

}  // namespace bgr
