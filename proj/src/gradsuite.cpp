#include "bgr/gradsuite.hpp"

#include <cmath>
#include <fnmatch.h>

#include "bgr/graphs.hpp"
#include "bgr/model.hpp"
#include "bgr/projection.hpp"
#include "bgr/random.hpp"
#include "bgr/reasoning.hpp"

namespace bgr {

namespace {

using Build = std::function<Var(Tape&, std::span<const Var>)>;

constexpr std::size_t kShapeVariants = 5;

// Keeps entries clear of the ReLU kink, where central differences are meaningless.
Mat away_from_zero(Mat m, Rng& rng) {
  for (auto& v : m.data())
    while (std::abs(v) < 0.05) v = rng.uniform(-1.0, 1.0);
  return m;
}

std::size_t dim(Rng& rng) { return static_cast<std::size_t>(rng.uniform_int(1, 5)); }

std::vector<ReasoningLayerVars> layer_vars(std::span<const Var> in, std::size_t first,
                                           std::size_t layers, std::size_t heads) {
  std::vector<ReasoningLayerVars> out;
  std::size_t k = first;
  for (std::size_t l = 0; l < layers; ++l) {
    ReasoningLayerVars v{in[k], in[k + 1], {}};
    k += 2;
    for (std::size_t h = 0; h < heads; ++h) v.heads.push_back(in[k++]);
    out.push_back(std::move(v));
  }
  return out;
}

void add_tensor_ops(std::vector<GradCase>& cases, Rng& rng) {
  auto add = [&cases](std::string name, std::size_t k, Build b, std::vector<Mat> in) {
    name += "/" + std::to_string(k);
    cases.push_back({name, make_diff_op(name, std::move(b)), std::move(in)});
  };
  for (std::size_t k = 0; k < kShapeVariants; ++k) {
    const std::size_t m = dim(rng), n = dim(rng), p = dim(rng);
    add("matmul", k, [](Tape&, std::span<const Var> x) { return ad::matmul(x[0], x[1]); },
        {rng.uniform_mat(m, n), rng.uniform_mat(n, p)});
    add("transpose", k, [](Tape&, std::span<const Var> x) { return ad::transpose(x[0]); },
        {rng.uniform_mat(m, n)});
    add("scale_add", k,
        [](Tape&, std::span<const Var> x) { return ad::scale_add(x[0], x[1], 0.7, -1.3); },
        {rng.uniform_mat(m, n), rng.uniform_mat(m, n)});
    add("add", k, [](Tape&, std::span<const Var> x) { return ad::add(x[0], x[1]); },
        {rng.uniform_mat(m, n), rng.uniform_mat(m, n)});
    add("scale", k, [](Tape&, std::span<const Var> x) { return ad::scale(x[0], 2.5); },
        {rng.uniform_mat(m, n)});
    add("softmax_rows", k,
        [](Tape&, std::span<const Var> x) { return ad::softmax(x[0], Axis::rows); },
        {rng.uniform_mat(m, n, -2.0, 2.0)});
    add("softmax_cols", k,
        [](Tape&, std::span<const Var> x) { return ad::softmax(x[0], Axis::cols); },
        {rng.uniform_mat(m, n, -2.0, 2.0)});
    add("leaky_relu", k,
        [](Tape&, std::span<const Var> x) { return ad::leaky_relu(x[0], kDefaultLeakySlope); },
        {away_from_zero(rng.uniform_mat(m, n), rng)});
    add("relu", k, [](Tape&, std::span<const Var> x) { return ad::relu(x[0]); },
        {away_from_zero(rng.uniform_mat(m, n), rng)});
    add("concat_cols", k, [](Tape&, std::span<const Var> x) { return ad::concat_cols(x[0], x[1]); },
        {rng.uniform_mat(m, n), rng.uniform_mat(m, p)});
    add("concat_rows", k, [](Tape&, std::span<const Var> x) { return ad::concat_rows(x[0], x[1]); },
        {rng.uniform_mat(m, n), rng.uniform_mat(p, n)});
    add("slice_rows", k,
        [m](Tape&, std::span<const Var> x) { return ad::slice_rows(x[0], 1, m + 1); },
        {rng.uniform_mat(m + 2, n)});
    add("slice_cols", k,
        [n](Tape&, std::span<const Var> x) { return ad::slice_cols(x[0], 1, n + 1); },
        {rng.uniform_mat(m, n + 2)});
    add("add_row", k, [](Tape&, std::span<const Var> x) { return ad::add_row(x[0], x[1]); },
        {rng.uniform_mat(m, n), rng.uniform_mat(1, n)});
    add("outer_sum", k, [](Tape&, std::span<const Var> x) { return ad::outer_sum(x[0], x[1]); },
        {rng.uniform_mat(m, 1), rng.uniform_mat(p, 1)});
    std::vector<std::uint8_t> mask(n * n);
    for (auto& v : mask) v = rng.bernoulli(0.6) ? 1 : 0;
    add("masked_softmax_rows", k,
        [mask](Tape&, std::span<const Var> x) { return ad::masked_softmax_rows(x[0], mask); },
        {rng.uniform_mat(n, n, -2.0, 2.0)});
    add("sum", k, [](Tape&, std::span<const Var> x) { return ad::sum(x[0]); },
        {rng.uniform_mat(m, n)});
    const std::size_t classes = n + 1;
    std::vector<int> labels(m);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(classes - 1)));
    add("cross_entropy", k,
        [labels](Tape&, std::span<const Var> x) { return ad::cross_entropy(x[0], labels); },
        {rng.uniform_mat(m, classes, -2.0, 2.0)});
  }
}

void add_graph_ops(std::vector<GradCase>& cases, Rng& rng) {
  auto add = [&cases](std::string name, Build b, std::vector<Mat> in) {
    cases.push_back({name, make_diff_op(name, std::move(b)), std::move(in)});
  };
  const std::size_t n_th = 3, n_st = 2, d = 4, hw = 9, heads = 3;

  add("class_centers",
      [](Tape&, std::span<const Var> x) { return class_centers(x[0], x[1]); },
      {rng.uniform_mat(d, hw), rng.uniform_mat(n_st, hw, -2.0, 2.0)});

  for (ReasoningMode mode : {ReasoningMode::bidirectional, ReasoningMode::thing_to_stuff,
                             ReasoningMode::stuff_to_thing, ReasoningMode::disconnected}) {
    const auto allowed = direction_mask(n_th, n_st, mode);
    std::vector<Mat> in{rng.uniform_mat(n_th + n_st, d)};
    for (std::size_t h = 0; h < heads; ++h) in.push_back(rng.uniform_mat(1, 2 * d));
    add("attention." + std::string(to_string(mode)),
        [allowed](Tape&, std::span<const Var> x) {
          return attention_adjacency(x[0], x.subspan(1), allowed, kDefaultLeakySlope);
        },
        std::move(in));
  }

  add("reasoning_layer",
      [](Tape&, std::span<const Var> x) { return reasoning_layer(x[0], x[1], 3, x[2], x[3]); },
      {rng.uniform_mat(n_th + n_st, d), rng.uniform_mat(n_th + n_st, n_th + n_st, 0.0, 1.0),
       rng.uniform_mat(d, 3), rng.uniform_mat(d, 3)});

  const std::size_t layers = 2;
  for (ReasoningMode mode : {ReasoningMode::bidirectional, ReasoningMode::thing_to_stuff,
                             ReasoningMode::stuff_to_thing, ReasoningMode::disconnected,
                             ReasoningMode::cosine}) {
    std::vector<Mat> in{rng.uniform_mat(n_th, d), rng.uniform_mat(n_st, d)};
    for (const auto& l : init_reasoning_layers(d, 3, layers, heads, rng)) {
      in.push_back(l.w_thing);
      in.push_back(l.w_stuff);
      for (const auto& h : l.heads) in.push_back(h.w_pair);
    }
    ReasoningOptions opts;
    opts.mode = mode;
    if (mode == ReasoningMode::cosine) opts.embeddings = rng.uniform_mat(n_th + n_st, 5);
    add("run_reasoning." + std::string(to_string(mode)),
        [opts](Tape&, std::span<const Var> x) {
          const auto lv = layer_vars(x, 2, 2, 3);
          ReasoningOutput r = run_reasoning(x[0], x[1], lv, opts);
          return ad::concat_rows(r.thing, r.stuff);
        },
        std::move(in));
  }

  add("project_things",
      [](Tape&, std::span<const Var> x) { return project_things(x[0], x[1], x[2]); },
      {rng.uniform_mat(n_th, 6), rng.uniform_mat(n_th, n_th, 0.0, 1.0), rng.uniform_mat(6, 2)});
  add("classify_regions",
      [](Tape&, std::span<const Var> x) { return classify_regions(x[0], x[1], x[2], x[3]); },
      {rng.uniform_mat(n_th, d), rng.uniform_mat(n_th, 2), rng.uniform_mat(d + 2, 3),
       rng.uniform_mat(1, 3)});
  add("project_stuff",
      [](Tape&, std::span<const Var> x) { return project_stuff(x[0], x[1], x[2]); },
      {rng.uniform_mat(n_st, 6), rng.uniform_mat(n_st, hw, -2.0, 2.0), rng.uniform_mat(6, 3)});
  add("segment_pixels",
      [](Tape&, std::span<const Var> x) { return segment_pixels(x[0], x[1], x[2], x[3]); },
      {rng.uniform_mat(d, hw), rng.uniform_mat(3, hw), rng.uniform_mat(d + 3, 2),
       rng.uniform_mat(1, 2)});
}

// Whole pipeline on a 6x6 image with 3 proposals and 2 stuff classes; the
// inputs are every model parameter and the output is the training loss.
void add_pipeline(std::vector<GradCase>& cases, Rng& rng) {
  const std::size_t h = 6, w = 6, n = 4;
  ModelConfig cfg;
  cfg.n = n;
  cfg.d0 = cfg.d1 = cfg.d2 = 3;
  cfg.layers = 2;
  cfg.heads = 3;
  cfg.thing_classes = 3;
  cfg.stuff_classes = 2;

  FeatureMap features(rng.uniform_mat(n, h * w), h, w);
  ScoreMap scores(rng.uniform_mat(cfg.stuff_classes, h * w, -2.0, 2.0), h, w);
  RegionSet regions;
  std::vector<int> thing_labels;
  for (int i = 0; i < 3; ++i) {
    Proposal p;
    const Mat f = rng.uniform_mat(1, n);
    p.feature.assign(f.data().begin(), f.data().end());
    p.score = rng.uniform(0.5, 1.0);
    p.class_id = i;
    regions.proposals.push_back(std::move(p));
    thing_labels.push_back(static_cast<int>(rng.uniform_int(0, 2)));
  }
  std::vector<int> pixel_labels(h * w);
  for (auto& l : pixel_labels) l = static_cast<int>(rng.uniform_int(0, 1));
  EmbeddingTable emb;
  emb.thing = rng.uniform_mat(cfg.thing_classes, 5, 0.0, 1.0);
  emb.stuff = rng.uniform_mat(cfg.stuff_classes, 5, 0.0, 1.0);

  for (GraphMode mode : kAllGraphModes) {
    cfg.mode = mode;
    const ModelParams params = init_model(cfg, rng.next());
    std::vector<Mat> in;
    for (const auto& [name, m] : params.named_tensors()) in.push_back(*m);
    const std::string name = "pipeline." + std::string(to_string(mode));
    Build b = [=](Tape& tape, std::span<const Var> x) {
      const BoundModel bm = bind_flat(cfg, x);
      const ModelOutput out = forward(tape, bm, cfg, features, scores, regions, &emb);
      return ad::add(ad::cross_entropy(out.thing_logits, thing_labels),
                     ad::cross_entropy(ad::transpose(out.stuff_logits), pixel_labels));
    };
    cases.push_back({name, make_diff_op(name, std::move(b)), std::move(in)});
  }
}

}  // namespace

std::vector<GradCase> gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> cases;
  add_tensor_ops(cases, rng);
  add_graph_ops(cases, rng);
  add_pipeline(cases, rng);
  return cases;
}

bool name_matches(std::string_view pattern, std::string_view name) {
  const std::string pat(pattern);
  if (pat.find_first_of("*?[") == std::string::npos) return name.find(pattern) != name.npos;
  return fnmatch(pat.c_str(), std::string(name).c_str(), 0) == 0;
}

DiffOp corrupted(DiffOp op, double factor) {
  auto inner = op.backward;
  op.backward = [inner, factor](std::span<const Mat> inputs, const Mat& upstream) {
    auto grads = inner(inputs, upstream);
    for (auto& g : grads)
      for (auto& v : g.data()) v *= factor;
    return grads;
  };
  op.name += " (corrupted)";
  return op;
}

std::vector<GradCheckReport> run_gradient_suite(const std::vector<GradCase>& cases, double eps,
                                                double tol) {
  std::vector<GradCheckReport> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    GradCheckReport r = grad_check(c.op, c.inputs, eps, tol);
    r.op = c.name;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bgr
