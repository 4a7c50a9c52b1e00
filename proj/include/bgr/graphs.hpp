#pragma once

// Node construction for the two intra-branch graphs.
//
// Thing nodes are pooled proposal features. Stuff nodes are class centers:
// each coarse score channel is softmax-normalized over all H*W pixels and the
// resulting weights average the pixel features, so every center is a convex
// combination of pixel features.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bgr/autodiff.hpp"
#include "bgr/mat.hpp"

namespace bgr {

struct Proposal {
  std::vector<double> feature;  // length N
  double score = 0.0;           // detector confidence in [0, 1]
  std::optional<int> class_id;  // detector's predicted thing class
  std::vector<std::uint8_t> mask;  // H*W binary raster, empty when unknown
};

struct RegionSet {
  std::vector<Proposal> proposals;

  std::size_t size() const noexcept { return proposals.size(); }
  bool empty() const noexcept { return proposals.empty(); }
};

/// Per-channel raster in CHW order, held as Mat[channels x (height*width)].
class ChannelRaster {
 public:
  ChannelRaster() = default;
  ChannelRaster(Mat values, std::size_t height, std::size_t width);

  std::size_t channels() const noexcept { return values_.rows(); }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  const Mat& values() const noexcept { return values_; }

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_(c, y * width_ + x);
  }

 private:
  Mat values_;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
};

// Backbone features F, N x H x W.
struct FeatureMap : ChannelRaster {
  using ChannelRaster::ChannelRaster;
};

// Coarse stuff logits S, |V_st| x H x W.
struct ScoreMap : ChannelRaster {
  using ChannelRaster::ChannelRaster;
  std::size_t classes() const noexcept { return channels(); }
};

struct StuffNodeSet {
  Mat centers;  // |V_st| x N
  std::vector<std::string> class_names;
};

/// Stacks proposal features into X_th, one row per proposal in input order.
Mat build_thing_nodes(const RegionSet& regions);

StuffNodeSet extract_class_centers(const FeatureMap& features, const ScoreMap& scores,
                                   std::vector<std::string> class_names = {});

/// Differentiable class centers: features[N x HW], scores[C x HW] -> [C x N].
Var class_centers(Var features, Var scores);

/// Cosine similarity between every pixel feature and one class center, as an
/// H x W raster. Zero-norm vectors give 0.
Mat center_similarity_map(const FeatureMap& features, const StuffNodeSet& nodes,
                          std::size_t class_id);

/// Pairwise cosine similarities of embedding rows (zero-norm rows give 0).
Mat cosine_similarity_matrix(const Mat& embeddings);

/// Cosine similarities with negatives clamped to 0 and rows renormalized to
/// sum to 1; an all-zero row becomes uniform.
Mat cosine_adjacency(const Mat& embeddings);

// FeatureMap/ScoreMap files: a BGRM matrix [C x H*W] plus a JSON sidecar at
// "<path>.json" holding {"layout":"CHW","channels":C,"height":H,"width":W}.
std::filesystem::path sidecar_path(const std::filesystem::path& path);
void save_raster(const std::filesystem::path& path, const ChannelRaster& raster);
ChannelRaster load_raster(const std::filesystem::path& path);

}  // namespace bgr
