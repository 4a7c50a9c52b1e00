#include "bgr/projection.hpp"

#include <cmath>

#include "bgr/errors.hpp"

namespace bgr {

ProjectionVars bind(Tape& tape, const ProjectionParams& p, bool trainable) {
  auto make = [&](const Mat& m) { return trainable ? tape.variable(m) : tape.constant(m); };
  return {make(p.w_intra_thing), make(p.w_intra_stuff), make(p.thing_cls_w),
          make(p.thing_cls_b),   make(p.stuff_cls_w),   make(p.stuff_cls_b)};
}

ProjectionParams init_projection(std::size_t n, std::size_t graph_width, std::size_t d1,
                                 std::size_t d2, std::size_t thing_classes,
                                 std::size_t stuff_classes, Rng& rng) {
  auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return rng.uniform_mat(fan_in, fan_out, -s, s);
  };
  ProjectionParams p;
  p.w_intra_thing = glorot(graph_width, d1);
  p.w_intra_stuff = glorot(graph_width, d2);
  p.thing_cls_w = glorot(n + d1, thing_classes);
  p.thing_cls_b = Mat(1, thing_classes);
  p.stuff_cls_w = glorot(n + d2, stuff_classes);
  p.stuff_cls_b = Mat(1, stuff_classes);
  return p;
}

Var project_things(Var thing_nodes, Var a_thing, Var w_intra_thing) {
  if (a_thing.rows() != thing_nodes.rows() || a_thing.cols() != thing_nodes.rows())
    throw ShapeError("project_things: A_th " + a_thing.value().shape_str() + " for " +
                     std::to_string(thing_nodes.rows()) + " thing nodes");
  return ad::matmul(ad::matmul(a_thing, thing_nodes), w_intra_thing);
}

Mat project_things(const Mat& thing_nodes, const Mat& a_thing, const ProjectionParams& p) {
  Tape tape;
  return project_things(tape.constant(thing_nodes), tape.constant(a_thing),
                        tape.constant(p.w_intra_thing))
      .value();
}

Var classify_regions(Var region_features, Var f_thing, Var w, Var b) {
  if (region_features.rows() != f_thing.rows())
    throw ShapeError("classify_regions: " + std::to_string(region_features.rows()) +
                     " regions but " + std::to_string(f_thing.rows()) + " projected rows");
  return ad::add_row(ad::matmul(ad::concat_cols(region_features, f_thing), w), b);
}

Mat classify_regions(const Mat& region_features, const Mat& f_thing, const ProjectionParams& p) {
  Tape tape;
  return classify_regions(tape.constant(region_features), tape.constant(f_thing),
                          tape.constant(p.thing_cls_w), tape.constant(p.thing_cls_b))
      .value();
}

Var project_stuff(Var stuff_nodes, Var scores, Var w_intra_stuff) {
  if (scores.rows() != stuff_nodes.rows())
    throw ShapeError("project_stuff: score map has " + std::to_string(scores.rows()) +
                     " classes, graph has " + std::to_string(stuff_nodes.rows()) + " stuff nodes");
  Var weights = ad::transpose(ad::softmax(scores, Axis::rows));  // HW x C
  Var pixel_major = ad::matmul(ad::matmul(weights, stuff_nodes), w_intra_stuff);
  return ad::transpose(pixel_major);
}

Mat project_stuff(const Mat& stuff_nodes, const ScoreMap& scores, const ProjectionParams& p) {
  Tape tape;
  return project_stuff(tape.constant(stuff_nodes), tape.constant(scores.values()),
                       tape.constant(p.w_intra_stuff))
      .value();
}

Var segment_pixels(Var features, Var f_stuff, Var w, Var b) {
  if (features.cols() != f_stuff.cols())
    throw ShapeError("segment_pixels: " + std::to_string(features.cols()) + " feature pixels vs " +
                     std::to_string(f_stuff.cols()) + " projected pixels");
  if (w.rows() != features.rows() + f_stuff.rows())
    throw ShapeError("segment_pixels: classifier expects " + std::to_string(w.rows()) +
                     " channels, got " + std::to_string(features.rows() + f_stuff.rows()));
  Var pixels = ad::concat_cols(ad::transpose(features), ad::transpose(f_stuff));
  return ad::transpose(ad::add_row(ad::matmul(pixels, w), b));
}

ScoreMap segment_pixels(const FeatureMap& features, const Mat& f_stuff, const ProjectionParams& p) {
  Tape tape;
  Mat logits = segment_pixels(tape.constant(features.values()), tape.constant(f_stuff),
                              tape.constant(p.stuff_cls_w), tape.constant(p.stuff_cls_b))
                   .value();
  return ScoreMap(std::move(logits), features.height(), features.width());
}

Mat baseline_thing_logits(const Mat& region_features, const ProjectionParams& p) {
  Tape tape;
  Var w = tape.constant(slice_rows(p.thing_cls_w, 0, region_features.cols()));
  return ad::add_row(ad::matmul(tape.constant(region_features), w), tape.constant(p.thing_cls_b))
      .value();
}

Mat baseline_stuff_logits(const FeatureMap& features, const ProjectionParams& p) {
  Tape tape;
  Var w = tape.constant(slice_rows(p.stuff_cls_w, 0, features.channels()));
  Var pixels = ad::transpose(tape.constant(features.values()));
  return ad::transpose(ad::add_row(ad::matmul(pixels, w), tape.constant(p.stuff_cls_b))).value();
}

}  // namespace bgr
