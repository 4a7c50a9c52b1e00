#pragma once

// Re-projection of reasoned node features back onto proposals and pixels,
// and the two classification heads that consume them.
//
// Concatenation order is always [visual ++ graph-derived].

#include "bgr/autodiff.hpp"
#include "bgr/graphs.hpp"
#include "bgr/mat.hpp"
#include "bgr/random.hpp"

namespace bgr {

struct ProjectionParams {
  Mat w_intra_thing;  // (N + T*D0) x D1
  Mat w_intra_stuff;  // (N + T*D0) x D2
  Mat thing_cls_w;    // (N + D1) x thing classes
  Mat thing_cls_b;    // 1 x thing classes
  Mat stuff_cls_w;    // (N + D2) x stuff classes
  Mat stuff_cls_b;    // 1 x stuff classes
};

struct ProjectionVars {
  Var w_intra_thing;
  Var w_intra_stuff;
  Var thing_cls_w;
  Var thing_cls_b;
  Var stuff_cls_w;
  Var stuff_cls_b;
};

ProjectionVars bind(Tape& tape, const ProjectionParams& p, bool trainable);

ProjectionParams init_projection(std::size_t n, std::size_t graph_width, std::size_t d1,
                                 std::size_t d2, std::size_t thing_classes,
                                 std::size_t stuff_classes, Rng& rng);

/// f_th = A_th * X~_th * W_intra_th
Var project_things(Var thing_nodes, Var a_thing, Var w_intra_thing);
Mat project_things(const Mat& thing_nodes, const Mat& a_thing, const ProjectionParams& p);

/// logits = [region_features ++ f_th] * W + b
Var classify_regions(Var region_features, Var f_thing, Var w, Var b);
Mat classify_regions(const Mat& region_features, const Mat& f_thing, const ProjectionParams& p);

/// f_st = softmax_HW(S)^T * X~_st * W_intra_st, returned channel-major [D2 x HW].
Var project_stuff(Var stuff_nodes, Var scores, Var w_intra_stuff);
Mat project_stuff(const Mat& stuff_nodes, const ScoreMap& scores, const ProjectionParams& p);

/// Per-pixel linear map over [F ++ f_st] channels (a 1x1 convolution), [C x HW].
Var segment_pixels(Var features, Var f_stuff, Var w, Var b);
ScoreMap segment_pixels(const FeatureMap& features, const Mat& f_stuff, const ProjectionParams& p);

/// The heads with the graph path removed: only the visual rows of the
/// classifier weights are used.
Mat baseline_thing_logits(const Mat& region_features, const ProjectionParams& p);
Mat baseline_stuff_logits(const FeatureMap& features, const ProjectionParams& p);

}  // namespace bgr
