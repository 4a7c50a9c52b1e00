#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "bgr/errors.hpp"
#include "bgr/kernels.hpp"
#include "bgr/mat.hpp"
#include "bgr/random.hpp"
#include "oracles.hpp"

using namespace bgr;

TEST(Mat, ConstructionValidatesLength) {
  EXPECT_THROW(Mat(2, 3, std::vector<double>(5)), ShapeError);
  Mat m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m.row(1)[2], 6.0);
}

TEST(Mat, EqualityIsBitwise) {
  Mat a(1, 2, std::vector<double>{0.0, 1.0});
  Mat b(1, 2, std::vector<double>{-0.0, 1.0});
  EXPECT_FALSE(a == b);
  Mat c(1, 2, std::vector<double>{0.0, 1.0});
  EXPECT_TRUE(a == c);
  EXPECT_FALSE(a == Mat(2, 1, std::vector<double>{0.0, 1.0}));
}

TEST(Mat, MatmulMatchesNaiveOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const Mat a = rng.uniform_mat(m, k), b = rng.uniform_mat(k, n);
    EXPECT_LT(oracle::max_diff(matmul(a, b), oracle::matmul(a, b)), 1e-13);
  }
  EXPECT_THROW(matmul(Mat(2, 3), Mat(2, 3)), ShapeError);
}

TEST(Mat, HandComputedProduct) {
  const Mat a = Mat::from_rows({{1, 2}, {3, 4}});
  const Mat b = Mat::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b), Mat::from_rows({{19, 22}, {43, 50}}));
  EXPECT_EQ(transpose(a), Mat::from_rows({{1, 3}, {2, 4}}));
}

TEST(Mat, SoftmaxRowsAndColumnsNormalize) {
  Rng rng(3);
  const Mat a = rng.uniform_mat(4, 6, -30.0, 30.0);
  const Mat r = softmax_axis(a, Axis::rows);
  const Mat c = softmax_axis(a, Axis::cols);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += r(i, j);
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  for (std::size_t j = 0; j < 6; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += c(i, j);
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  // large logits do not overflow
  const Mat big = softmax_axis(Mat::from_rows({{1000.0, 1000.0}}), Axis::rows);
  EXPECT_EQ(big(0, 0), 0.5);
}

TEST(Mat, LeakySlopeOutsideOpenIntervalIsRejected) {
  EXPECT_THROW(leaky_relu(Mat(1, 1), 0.0), ConfigError);
  EXPECT_THROW(leaky_relu(Mat(1, 1), 1.0), ConfigError);
  EXPECT_THROW(leaky_relu(Mat(1, 1), -0.2), ConfigError);
  const Mat y = leaky_relu(Mat::from_rows({{-2.0, 3.0}}), 0.2);
  EXPECT_DOUBLE_EQ(y(0, 0), -0.4);
  EXPECT_EQ(y(0, 1), 3.0);
}

TEST(Mat, ConcatAndSliceRoundTrip) {
  Rng rng(5);
  const Mat a = rng.uniform_mat(3, 2), b = rng.uniform_mat(3, 4);
  const Mat ab = concat_cols(a, b);
  EXPECT_EQ(slice_cols(ab, 0, 2), a);
  EXPECT_EQ(slice_cols(ab, 2, 6), b);
  const Mat c = rng.uniform_mat(5, 2);
  const Mat ac = concat_rows(a, c);
  EXPECT_EQ(slice_rows(ac, 0, 3), a);
  EXPECT_EQ(slice_rows(ac, 3, 8), c);
  EXPECT_EQ(concat_rows(Mat(0, 7), c), c);
  EXPECT_THROW(concat_cols(a, c), ShapeError);
  EXPECT_THROW(slice_rows(a, 2, 4), ShapeError);
}

TEST(Mat, AllFiniteDetectsNanAndInf) {
  Mat m(2, 2);
  EXPECT_TRUE(m.all_finite());
  m(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(m.all_finite());
  m(1, 1) = std::nan("");
  EXPECT_FALSE(m.all_finite());
}

// The parallel kernels promise the serial accumulation order per element.
class KernelParity : public ::testing::TestWithParam<std::size_t> {};

TEST_P(KernelParity, OmpMatchesSerialBitForBit) {
  const std::size_t n = GetParam();
  Rng rng(n);
  const Mat a = rng.uniform_mat(n, n + 3), b = rng.uniform_mat(n + 3, n + 1);
  Mat c1(n, n + 1), c2(n, n + 1);
  kernels::serial::gemm(a.data(), b.data(), c1.data(), n, n + 3, n + 1);
  kernels::omp::gemm(a.data(), b.data(), c2.data(), n, n + 3, n + 1);
  EXPECT_EQ(c1, c2);

  const Mat at = rng.uniform_mat(n + 3, n);
  Mat t1(n, n + 1), t2(n, n + 1);
  kernels::serial::gemm_tn(at.data(), b.data(), t1.data(), n, n + 3, n + 1);
  kernels::omp::gemm_tn(at.data(), b.data(), t2.data(), n, n + 3, n + 1);
  EXPECT_EQ(t1, t2);

  const Mat bt = rng.uniform_mat(n + 1, n + 3);
  Mat u1(n, n + 1), u2(n, n + 1);
  kernels::serial::gemm_nt(a.data(), bt.data(), u1.data(), n, n + 3, n + 1);
  kernels::omp::gemm_nt(a.data(), bt.data(), u2.data(), n, n + 3, n + 1);
  EXPECT_EQ(u1, u2);

  Mat s1(n, n + 3), s2(n, n + 3);
  kernels::serial::softmax_rows(a.data(), s1.data(), n, n + 3);
  kernels::omp::softmax_rows(a.data(), s2.data(), n, n + 3);
  EXPECT_EQ(s1, s2);

  Mat l1(n, n + 3), l2(n, n + 3);
  kernels::serial::leaky_relu(a.data(), l1.data(), 0.2);
  kernels::omp::leaky_relu(a.data(), l2.data(), 0.2);
  EXPECT_EQ(l1, l2);

  Mat k1(n, n + 1), k2(n, n + 1);
  kernels::serial::cosine_rows(a.data(), bt.data(), k1.data(), n, n + 1, n + 3);
  kernels::omp::cosine_rows(a.data(), bt.data(), k2.data(), n, n + 1, n + 3);
  EXPECT_EQ(k1, k2);
}

INSTANTIATE_TEST_SUITE_P(Sizes, KernelParity, ::testing::Values(1, 7, 64, 130));

TEST(Kernels, CosineRowsHandlesZeroNorm) {
  const Mat a = Mat::from_rows({{0, 0}, {1, 0}});
  const Mat b = Mat::from_rows({{1, 0}, {-2, 0}});
  Mat out(2, 2);
  kernels::cosine_rows(a.data(), b.data(), out.data(), 2, 2, 2);
  EXPECT_EQ(out, Mat::from_rows({{0, 0}, {1, -1}}));
}

TEST(Kernels, ThreadCapIsRespected) {
  const int before = kernels::max_threads();
  kernels::set_thread_cap(1);
  EXPECT_EQ(kernels::max_threads(), 1);
  kernels::set_thread_cap(0);  // ignored
  EXPECT_EQ(kernels::max_threads(), 1);
  kernels::set_thread_cap(before);
}
