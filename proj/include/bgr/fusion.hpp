#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bgr/panoptic.hpp"

namespace bgr {

struct InstancePrediction {
  std::vector<std::uint8_t> mask;  // H*W, nonzero = inside
  int class_id = 0;
  double score = 0.0;
};

struct FusionConfig {
  double score_thresh = 0.5;
  double keep_frac = 0.5;
  // Unset: 4096, or 0.01*H*W for rasters smaller than 4096 pixels.
  std::optional<double> min_stuff_area;

  double resolved_min_stuff_area(std::size_t height, std::size_t width) const;
};

/// Per-pixel stuff labels; negative values are void.
struct SemanticRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> labels;
};

/// Greedy score-ordered combination of instance masks and stuff labels.
///
/// Instances below score_thresh are dropped. Survivors are visited by
/// descending score; exact score ties are ordered by mask content, then class
/// id, so the result does not depend on input order. Each instance claims its
/// still-unclaimed pixels unless fewer than keep_frac of its mask is
/// unclaimed, in which case it is discarded. Remaining pixels form one segment
/// per stuff class; stuff segments smaller than the minimum area become void.
/// Segment ids: things in visit order, then stuff by ascending class id.
PanopticMap fuse(std::span<const InstancePrediction> instances, const SemanticRaster& semantic,
                 const FusionConfig& cfg);

}  // namespace bgr
