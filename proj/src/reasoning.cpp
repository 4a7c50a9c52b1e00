#include "bgr/reasoning.hpp"

#include <cmath>
#include <iostream>

#include "bgr/errors.hpp"
#include "bgr/graphs.hpp"

namespace bgr {

std::string_view to_string(ReasoningMode mode) {
  switch (mode) {
    case ReasoningMode::bidirectional: return "bidirectional";
    case ReasoningMode::thing_to_stuff: return "thing-to-stuff";
    case ReasoningMode::stuff_to_thing: return "stuff-to-thing";
    case ReasoningMode::disconnected: return "disconnected";
    case ReasoningMode::cosine: return "cosine";
  }
  return "unknown";
}

ReasoningMode parse_reasoning_mode(std::string_view name) {
  for (auto m : {ReasoningMode::bidirectional, ReasoningMode::thing_to_stuff,
                 ReasoningMode::stuff_to_thing, ReasoningMode::disconnected,
                 ReasoningMode::cosine})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown reasoning mode '" + std::string(name) + "'");
}

ReasoningLayerVars bind(Tape& tape, const ReasoningLayerParams& p, bool trainable) {
  auto make = [&](const Mat& m) { return trainable ? tape.variable(m) : tape.constant(m); };
  ReasoningLayerVars v{make(p.w_thing), make(p.w_stuff), {}};
  for (const auto& h : p.heads) v.heads.push_back(make(h.w_pair));
  return v;
}

std::vector<ReasoningLayerParams> init_reasoning_layers(std::size_t input_width,
                                                        std::size_t d0, std::size_t layers,
                                                        std::size_t heads, Rng& rng) {
  std::vector<ReasoningLayerParams> out;
  std::size_t width = input_width;
  for (std::size_t t = 0; t < layers; ++t) {
    const double ws = std::sqrt(6.0 / static_cast<double>(width + d0));
    const double hs = std::sqrt(6.0 / static_cast<double>(2 * width + 1));
    ReasoningLayerParams p;
    p.w_thing = rng.uniform_mat(width, d0, -ws, ws);
    p.w_stuff = rng.uniform_mat(width, d0, -ws, ws);
    for (std::size_t h = 0; h < heads; ++h) p.heads.push_back({rng.uniform_mat(1, 2 * width, -hs, hs)});
    out.push_back(std::move(p));
    width += d0;
  }
  return out;
}

std::vector<std::uint8_t> direction_mask(std::size_t n_thing, std::size_t n_stuff,
                                         ReasoningMode mode) {
  const std::size_t n = n_thing + n_stuff;
  std::vector<std::uint8_t> allowed(n * n, 1);
  const bool block_thing_rows = mode == ReasoningMode::thing_to_stuff ||
                                mode == ReasoningMode::disconnected;
  const bool block_stuff_rows = mode == ReasoningMode::stuff_to_thing ||
                                mode == ReasoningMode::disconnected;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool row_thing = i < n_thing;
      const bool col_thing = j < n_thing;
      if (row_thing && !col_thing && block_thing_rows) allowed[i * n + j] = 0;
      if (!row_thing && col_thing && block_stuff_rows) allowed[i * n + j] = 0;
    }
  }
  return allowed;
}

Var attention_adjacency(Var nodes, std::span<const Var> heads,
                        const std::vector<std::uint8_t>& allowed, double slope) {
  check_leaky_slope(slope);
  const std::size_t n = nodes.rows();
  const std::size_t d = nodes.cols();
  if (n == 0) throw ShapeError("attention_adjacency: graph has no nodes");
  if (heads.empty()) throw ConfigError("attention_adjacency: needs at least one head");
  if (allowed.size() != n * n)
    throw ShapeError("attention_adjacency: mask for " + std::to_string(allowed.size()) +
                     " entries, graph has " + std::to_string(n) + " nodes");
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) any = any || allowed[i * n + j];
    if (!any)
      std::clog << "attention_adjacency: row " << i
                << " fully masked, using self-loop\n";
  }
  Var total;
  for (const Var& w : heads) {
    if (w.rows() != 1 || w.cols() != 2 * d)
      throw ShapeError("attention_adjacency: head weight " + w.value().shape_str() +
                       " for node width " + std::to_string(d));
    // w . [x_i ++ x_j] = a . x_i + b . x_j
    Var src = ad::matmul(nodes, ad::transpose(ad::slice_cols(w, 0, d)));
    Var dst = ad::matmul(nodes, ad::transpose(ad::slice_cols(w, d, 2 * d)));
    Var logits = ad::leaky_relu(ad::outer_sum(src, dst), slope);
    Var head = ad::masked_softmax_rows(logits, allowed);
    total = total.valid() ? ad::add(total, head) : head;
  }
  return heads.size() == 1 ? total : ad::scale(total, 1.0 / static_cast<double>(heads.size()));
}

Mat attention_adjacency(const Mat& nodes, std::span<const AttentionHead> heads,
                        const std::vector<std::uint8_t>& allowed, double slope) {
  Tape tape;
  std::vector<Var> hv;
  for (const auto& h : heads) hv.push_back(tape.constant(h.w_pair));
  return attention_adjacency(tape.constant(nodes), hv, allowed, slope).value();
}

JointGraph build_joint_graph(const Mat& x_thing, const Mat& x_stuff,
                             std::span<const AttentionHead> heads, ReasoningMode mode,
                             double slope) {
  if (mode == ReasoningMode::cosine)
    throw ConfigError("build_joint_graph: cosine mode takes its adjacency from embeddings");
  JointGraph g;
  g.n_thing = x_thing.rows();
  g.n_stuff = x_stuff.rows();
  g.features = concat_rows(x_thing, x_stuff);
  g.adjacency =
      attention_adjacency(g.features, heads, direction_mask(g.n_thing, g.n_stuff, mode), slope);
  return g;
}

AdjacencyBlocks split_blocks(const JointGraph& g) {
  const std::size_t n = g.size();
  const std::size_t k = g.n_thing;
  if (g.adjacency.rows() != n || g.adjacency.cols() != n)
    throw ShapeError("split_blocks: adjacency " + g.adjacency.shape_str() + " for " +
                     std::to_string(n) + " nodes");
  const Mat top = slice_rows(g.adjacency, 0, k);
  const Mat bottom = slice_rows(g.adjacency, k, n);
  return {slice_cols(top, 0, k), slice_cols(top, k, n), slice_cols(bottom, 0, k),
          slice_cols(bottom, k, n)};
}

Mat assemble_blocks(const AdjacencyBlocks& b) {
  const std::size_t k = b.thing_thing.rows();
  const std::size_t s = b.stuff_stuff.rows();
  const std::size_t n = k + s;
  Mat a(n, n);
  auto put = [&a](const Mat& blk, std::size_t r0, std::size_t c0) {
    for (std::size_t r = 0; r < blk.rows(); ++r)
      for (std::size_t c = 0; c < blk.cols(); ++c) a(r0 + r, c0 + c) = blk(r, c);
  };
  put(b.thing_thing, 0, 0);
  put(b.stuff_to_thing, 0, k);
  put(b.thing_to_stuff, k, 0);
  put(b.stuff_stuff, k, k);
  return a;
}

Mat connect_thing_to_stuff(const Mat& x_thing, const Mat& a_thing_to_stuff,
                           const Mat& w_stuff) {
  return matmul(matmul(a_thing_to_stuff, x_thing), w_stuff);
}

Var reasoning_layer(Var nodes, Var adjacency, std::size_t n_thing, Var w_thing, Var w_stuff) {
  const std::size_t n = nodes.rows();
  if (n_thing > n) throw ShapeError("reasoning_layer: partition index beyond node count");
  if (adjacency.rows() != n || adjacency.cols() != n)
    throw ShapeError("reasoning_layer: adjacency " + adjacency.value().shape_str() + " for " +
                     std::to_string(n) + " nodes");
  if (w_thing.rows() != nodes.cols() || w_stuff.rows() != nodes.cols() ||
      w_thing.cols() != w_stuff.cols())
    throw ShapeError("reasoning_layer: weights " + w_thing.value().shape_str() + "/" +
                     w_stuff.value().shape_str() + " for node width " +
                     std::to_string(nodes.cols()));
  Var thing = ad::matmul(ad::slice_rows(nodes, 0, n_thing), w_thing);
  Var stuff = ad::matmul(ad::slice_rows(nodes, n_thing, n), w_stuff);
  Var message = ad::relu(ad::matmul(adjacency, ad::concat_rows(thing, stuff)));
  return ad::concat_cols(nodes, message);
}

Mat reasoning_layer(const JointGraph& g, const ReasoningLayerParams& p) {
  Tape tape;
  return reasoning_layer(tape.constant(g.features), tape.constant(g.adjacency), g.n_thing,
                         tape.constant(p.w_thing), tape.constant(p.w_stuff))
      .value();
}

ReasoningOutput run_reasoning(Var x_thing, Var x_stuff, std::span<const ReasoningLayerVars> layers,
                              const ReasoningOptions& options) {
  if (layers.empty()) throw ConfigError("run_reasoning: needs T >= 1 layers");
  const std::size_t n_thing = x_thing.rows();
  const std::size_t n_stuff = x_stuff.rows();
  const std::size_t n = n_thing + n_stuff;
  if (n == 0) throw ShapeError("run_reasoning: graph has no nodes");
  if (n_thing > 0 && n_stuff > 0 && x_thing.cols() != x_stuff.cols())
    throw ShapeError("run_reasoning: thing width " + std::to_string(x_thing.cols()) +
                     " differs from stuff width " + std::to_string(x_stuff.cols()));

  Tape& tape = *x_thing.tape();
  Var fixed;
  if (options.mode == ReasoningMode::cosine) {
    if (!options.embeddings)
      throw ConfigError("run_reasoning: cosine mode requires per-node class embeddings");
    if (options.embeddings->rows() != n)
      throw ConfigError("run_reasoning: " + std::to_string(options.embeddings->rows()) +
                        " embeddings for " + std::to_string(n) + " nodes");
    fixed = tape.constant(cosine_adjacency(*options.embeddings));
  }
  const auto allowed = direction_mask(n_thing, n_stuff, options.mode);

  ReasoningOutput out;
  Var nodes = ad::concat_rows(x_thing, x_stuff);
  for (const auto& layer : layers) {
    Var adjacency = fixed.valid() ? fixed
                                  : attention_adjacency(nodes, layer.heads, allowed, options.slope);
    out.adjacencies.push_back(adjacency);
    nodes = reasoning_layer(nodes, adjacency, n_thing, layer.w_thing, layer.w_stuff);
  }
  out.thing = ad::slice_rows(nodes, 0, n_thing);
  out.stuff = ad::slice_rows(nodes, n_thing, n);
  out.a_thing =
      ad::slice_cols(ad::slice_rows(out.adjacencies.back(), 0, n_thing), 0, n_thing);
  return out;
}

ReasoningResult run_reasoning(const Mat& x_thing, const Mat& x_stuff,
                              std::span<const ReasoningLayerParams> layers,
                              const ReasoningOptions& options) {
  Tape tape;
  std::vector<ReasoningLayerVars> vars;
  for (const auto& p : layers) vars.push_back(bind(tape, p, false));
  // A missing branch arrives as an empty matrix; give it the other branch's width.
  const std::size_t width = x_thing.rows() > 0 ? x_thing.cols() : x_stuff.cols();
  Var xt = tape.constant(x_thing.rows() > 0 ? x_thing : Mat(0, width));
  Var xs = tape.constant(x_stuff.rows() > 0 ? x_stuff : Mat(0, width));
  ReasoningOutput o = run_reasoning(xt, xs, vars, options);
  ReasoningResult r{o.thing.value(), o.stuff.value(), o.a_thing.value(), {}};
  for (const Var& a : o.adjacencies) r.adjacencies.push_back(a.value());
  return r;
}

}  // namespace bgr
