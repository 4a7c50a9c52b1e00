#pragma once

// Dense inner loops used by Mat and the autodiff tape.
//
// Each kernel exists twice: `serial` is the reference implementation kept for
// testing, `omp` splits the outer loop across OpenMP threads. Both variants
// accumulate every output element in the same order, so they agree bit for
// bit; the unqualified dispatchers pick one by problem size.

#include <cstddef>
#include <span>

namespace bgr::kernels {

namespace serial {

// c[m x n] = a[m x k] * b[k x n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);
void leaky_relu(std::span<const double> in, std::span<double> out, double slope);
// out[m x n] = cosine(a row i, b row j); zero-norm rows give 0.
void cosine_rows(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t d);

}  // namespace serial

namespace omp {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);
void leaky_relu(std::span<const double> in, std::span<double> out, double slope);
void cosine_rows(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t d);

}  // namespace omp

// Problem sizes (multiply-adds) at or above which the dispatchers go parallel.
inline constexpr std::size_t kParallelWork = 1u << 15;

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);
void leaky_relu(std::span<const double> in, std::span<double> out, double slope);
void cosine_rows(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t d);

// Threads available to parallel regions (1 when built without OpenMP).
int max_threads();
// Caps OpenMP threads; values < 1 are ignored.
void set_thread_cap(int threads);
// Applies BGR_THREADS from the environment, if set.
void apply_env_thread_cap();

}  // namespace bgr::kernels
