#include <gtest/gtest.h>

#include "bgr/errors.hpp"
#include "bgr/graphs.hpp"
#include "bgr/reasoning.hpp"
#include "oracles.hpp"

using namespace bgr;

namespace {

constexpr ReasoningMode kAttentionModes[] = {
    ReasoningMode::bidirectional, ReasoningMode::thing_to_stuff, ReasoningMode::stuff_to_thing,
    ReasoningMode::disconnected};

std::vector<AttentionHead> random_heads(Rng& rng, std::size_t d, std::size_t count) {
  std::vector<AttentionHead> heads;
  for (std::size_t h = 0; h < count; ++h) heads.push_back({rng.normal_mat(1, 2 * d)});
  return heads;
}

// Ground truth for which entries a mode allows, written out by block.
bool allowed_by_mode(ReasoningMode mode, bool row_thing, bool col_thing) {
  if (row_thing == col_thing) return true;
  switch (mode) {
    case ReasoningMode::bidirectional:
    case ReasoningMode::cosine:
      return true;
    case ReasoningMode::thing_to_stuff:
      return !row_thing;  // stuff row reading a thing column
    case ReasoningMode::stuff_to_thing:
      return row_thing;
    case ReasoningMode::disconnected:
      return false;
  }
  return false;
}

}  // namespace

TEST(ReasoningMode, NamesRoundTrip) {
  for (auto m : kAttentionModes) EXPECT_EQ(parse_reasoning_mode(to_string(m)), m);
  EXPECT_EQ(parse_reasoning_mode(to_string(ReasoningMode::cosine)), ReasoningMode::cosine);
  EXPECT_THROW(parse_reasoning_mode("sideways"), ConfigError);
}

TEST(DirectionMask, MatchesBlockTable) {
  for (auto mode : kAttentionModes)
    for (std::size_t k = 0; k <= 3; ++k)
      for (std::size_t s = 0; s <= 3; ++s) {
        const std::size_t n = k + s;
        const auto mask = direction_mask(k, s, mode);
        ASSERT_EQ(mask.size(), n * n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            EXPECT_EQ(mask[i * n + j] != 0, allowed_by_mode(mode, i < k, j < k))
                << to_string(mode) << " " << i << "," << j;
      }
}

TEST(Attention, MatchesPerHeadOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, 5));
    const auto s = static_cast<std::size_t>(rng.uniform_int(k == 0 ? 1 : 0, 5));
    const auto d = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto mode = kAttentionModes[trial % 4];
    const Mat x = rng.normal_mat(k + s, d);
    const auto heads = random_heads(rng, d, 3);
    const auto mask = direction_mask(k, s, mode);
    std::vector<Mat> hw;
    for (const auto& h : heads) hw.push_back(h.w_pair);
    EXPECT_LT(oracle::max_diff(attention_adjacency(x, heads, mask), oracle::attention(x, hw, mask, 0.2)),
              1e-13);
  }
}

TEST(Attention, RowsSumToOneAndMaskedEntriesAreZero) {
  Rng rng(22);
  for (int trial = 0; trial < 40; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto s = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto mode = kAttentionModes[trial % 4];
    const JointGraph g =
        build_joint_graph(rng.normal_mat(k, 4, 3.0), rng.normal_mat(s, 4, 3.0),
                          random_heads(rng, 4, 3), mode);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double a = g.adjacency(i, j);
        EXPECT_GE(a, 0.0);
        if (!allowed_by_mode(mode, i < k, j < k)) {
          EXPECT_EQ(a, 0.0);
        }
        sum += a;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Attention, LayerIsNotSymmetricInGeneral) {
  Rng rng(23);
  const JointGraph g = build_joint_graph(rng.normal_mat(3, 4), rng.normal_mat(2, 4),
                                         random_heads(rng, 4, 3), ReasoningMode::bidirectional);
  EXPECT_NE(g.adjacency, oracle::transpose(g.adjacency));
}

TEST(Attention, BadInputsAreRejected) {
  Rng rng(24);
  const auto heads = random_heads(rng, 3, 1);
  EXPECT_THROW(attention_adjacency(rng.normal_mat(2, 4), heads, direction_mask(1, 1, ReasoningMode::bidirectional)),
               ShapeError);
  EXPECT_THROW(attention_adjacency(rng.normal_mat(2, 3), heads, std::vector<std::uint8_t>(3, 1)),
               ShapeError);
  EXPECT_THROW(attention_adjacency(rng.normal_mat(2, 3), std::span<const AttentionHead>{},
                                   std::vector<std::uint8_t>(4, 1)),
               ConfigError);
  EXPECT_THROW(build_joint_graph(rng.normal_mat(1, 3), rng.normal_mat(1, 3), heads,
                                 ReasoningMode::cosine),
               ConfigError);
}

TEST(ReasoningLayer, MatchesBlockwiseOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, 5));
    const auto s = static_cast<std::size_t>(rng.uniform_int(k == 0 ? 1 : 0, 5));
    const auto d = static_cast<std::size_t>(rng.uniform_int(1, 5));
    const auto d0 = static_cast<std::size_t>(rng.uniform_int(1, 5));
    JointGraph g;
    g.n_thing = k;
    g.n_stuff = s;
    g.features = rng.normal_mat(k + s, d);
    g.adjacency = rng.uniform_mat(k + s, k + s, 0.0, 1.0);
    ReasoningLayerParams p{rng.normal_mat(d, d0), rng.normal_mat(d, d0), {}};
    const Mat expect = oracle::reasoning_layer_blockwise(g.features, g.adjacency, k, p.w_thing, p.w_stuff);
    EXPECT_LT(oracle::max_diff(reasoning_layer(g, p), expect), 1e-12) << "trial " << trial;
  }
}

// With one shared weight the layer reduces to X ++ relu(A X W).
TEST(ReasoningLayer, SharedWeightsCollapseToPlainGraphConvolution) {
  Rng rng(32);
  JointGraph g;
  g.n_thing = 3;
  g.n_stuff = 4;
  g.features = rng.normal_mat(7, 5);
  g.adjacency = rng.uniform_mat(7, 7, 0.0, 1.0);
  const Mat w = rng.normal_mat(5, 6);
  const Mat out = reasoning_layer(g, {w, w, {}});
  const Mat ax = oracle::matmul(oracle::matmul(g.adjacency, g.features), w);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out(i, j), g.features(i, j));
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out(i, 5 + j), std::max(0.0, ax(i, j)), 1e-12);
  }
}

TEST(ReasoningLayer, ShapeErrors) {
  Tape t;
  Var x = t.constant(Mat(3, 2));
  Var a = t.constant(Mat(3, 3));
  Var w = t.constant(Mat(2, 4));
  EXPECT_THROW(reasoning_layer(x, a, 4, w, w), ShapeError);
  EXPECT_THROW(reasoning_layer(x, t.constant(Mat(2, 3)), 1, w, w), ShapeError);
  EXPECT_THROW(reasoning_layer(x, a, 1, w, t.constant(Mat(2, 3))), ShapeError);
}

TEST(Blocks, SplitThenAssembleIsIdentity) {
  Rng rng(41);
  for (std::size_t k = 0; k <= 3; ++k)
    for (std::size_t s = 0; s <= 3; ++s) {
      if (k + s == 0) continue;
      JointGraph g;
      g.n_thing = k;
      g.n_stuff = s;
      g.adjacency = rng.uniform_mat(k + s, k + s);
      const AdjacencyBlocks b = split_blocks(g);
      EXPECT_EQ(b.thing_thing.rows(), k);
      EXPECT_EQ(b.stuff_to_thing.cols(), s);
      EXPECT_EQ(b.thing_to_stuff.rows(), s);
      EXPECT_EQ(assemble_blocks(b), g.adjacency);
    }
}

TEST(Blocks, ThingToStuffMessage) {
  Rng rng(42);
  const Mat xth = rng.normal_mat(3, 4);
  const Mat a = rng.uniform_mat(2, 3, 0.0, 1.0);
  const Mat w = rng.normal_mat(4, 5);
  EXPECT_LT(oracle::max_diff(connect_thing_to_stuff(xth, a, w),
                             oracle::matmul(oracle::matmul(a, xth), w)),
            1e-12);
}

TEST(RunReasoning, WidthGrowsByD0PerLayer) {
  Rng rng(51);
  auto layers = init_reasoning_layers(6, 4, 3, 2, rng);
  ASSERT_EQ(layers.size(), 3u);
  EXPECT_EQ(layers[0].input_width(), 6u);
  EXPECT_EQ(layers[2].input_width(), 14u);
  const auto r = run_reasoning(rng.normal_mat(2, 6), rng.normal_mat(3, 6), layers, {});
  EXPECT_EQ(r.thing.cols(), 18u);
  EXPECT_EQ(r.stuff.rows(), 3u);
  EXPECT_EQ(r.a_thing.rows(), 2u);
  ASSERT_EQ(r.adjacencies.size(), 3u);
  // attention is recomputed on each layer's input
  EXPECT_NE(r.adjacencies[0], r.adjacencies[1]);
}

// In a one-directional or disconnected mode, perturbing the nodes a branch
// may not read leaves that branch's output bit-identical.
TEST(RunReasoning, MaskedDirectionsCarryNoInformation) {
  Rng rng(52);
  for (int trial = 0; trial < 10; ++trial) {
    auto layers = init_reasoning_layers(4, 3, 2, 3, rng);
    const Mat xt = rng.normal_mat(3, 4), xs = rng.normal_mat(2, 4);
    const Mat xt2 = oracle::plus(xt, rng.normal_mat(3, 4));
    const Mat xs2 = oracle::plus(xs, rng.normal_mat(2, 4));
    for (auto mode : kAttentionModes) {
      ReasoningOptions o;
      o.mode = mode;
      const auto base = run_reasoning(xt, xs, layers, o);
      const auto pt = run_reasoning(xt2, xs, layers, o);
      const auto ps = run_reasoning(xt, xs2, layers, o);
      const bool stuff_reads_thing = allowed_by_mode(mode, false, true);
      const bool thing_reads_stuff = allowed_by_mode(mode, true, false);
      EXPECT_EQ(pt.stuff == base.stuff, !stuff_reads_thing) << to_string(mode);
      EXPECT_EQ(ps.thing == base.thing, !thing_reads_stuff) << to_string(mode);
    }
  }
}

TEST(RunReasoning, CosineUsesFixedEmbeddingAdjacency) {
  Rng rng(53);
  auto layers = init_reasoning_layers(4, 3, 2, 3, rng);
  ReasoningOptions o;
  o.mode = ReasoningMode::cosine;
  EXPECT_THROW(run_reasoning(rng.normal_mat(2, 4), rng.normal_mat(2, 4), layers, o), ConfigError);
  o.embeddings = rng.normal_mat(3, 5);
  EXPECT_THROW(run_reasoning(rng.normal_mat(2, 4), rng.normal_mat(2, 4), layers, o), ConfigError);
  o.embeddings = rng.normal_mat(4, 5);
  const auto r = run_reasoning(rng.normal_mat(2, 4), rng.normal_mat(2, 4), layers, o);
  const Mat fixed = cosine_adjacency(*o.embeddings);
  for (const Mat& a : r.adjacencies) EXPECT_EQ(a, fixed);
}

TEST(RunReasoning, SingleBranchGraphs) {
  Rng rng(54);
  auto layers = init_reasoning_layers(4, 3, 2, 3, rng);
  const auto only_stuff = run_reasoning(Mat(0, 0), rng.normal_mat(3, 4), layers, {});
  EXPECT_EQ(only_stuff.thing.rows(), 0u);
  EXPECT_EQ(only_stuff.stuff.cols(), 10u);
  const auto only_thing = run_reasoning(rng.normal_mat(2, 4), Mat(0, 0), layers, {});
  EXPECT_EQ(only_thing.thing.cols(), 10u);
  EXPECT_THROW(run_reasoning(Mat(0, 4), Mat(0, 4), layers, {}), ShapeError);
  EXPECT_THROW(run_reasoning(rng.normal_mat(1, 4), rng.normal_mat(1, 4), {}, {}), ConfigError);
}
