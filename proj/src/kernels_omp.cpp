#include "bgr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bgr::kernels {

namespace omp {

// Outer loops are split across threads; inner accumulation order matches the
// serial kernels exactly.

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c.data() + i * n;
    std::fill(c_row, c_row + n, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double a_it = a[i * k + t];
      const double* b_row = b.data() + t * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_it * b_row[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c.data() + i * n;
    std::fill(c_row, c_row + n, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double a_ti = a[t * m + i];
      const double* b_row = b.data() + t * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ti * b_row[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b_row = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a_row[t] * b_row[t];
      c[i * n + j] = acc;
    }
  }
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = x[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= sum;
  }
}

void leaky_relu(std::span<const double> in, std::span<double> out, double slope) {
  const std::size_t n = in.size();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] >= 0.0 ? in[i] : slope * in[i];
}

void cosine_rows(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t d) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data() + i * d;
    double nx = 0.0;
    for (std::size_t t = 0; t < d; ++t) nx += x[t] * x[t];
    for (std::size_t j = 0; j < n; ++j) {
      const double* y = b.data() + j * d;
      double ny = 0.0;
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        ny += y[t] * y[t];
        dot += x[t] * y[t];
      }
      const double denom = std::sqrt(nx) * std::sqrt(ny);
      out[i * n + j] = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
    }
  }
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_thread_cap(int threads) {
  if (threads < 1) return;
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
}

void apply_env_thread_cap() {
  if (const char* env = std::getenv("BGR_THREADS")) {
    try {
      set_thread_cap(std::stoi(env));
    } catch (const std::exception&) {
      // unparsable values leave the OpenMP default in place
    }
  }
}

namespace {

bool go_parallel(std::size_t work) { return work >= kParallelWork && max_threads() > 1; }

}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n))
    omp::gemm(a, b, c, m, k, n);
  else
    serial::gemm(a, b, c, m, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n))
    omp::gemm_tn(a, b, c, m, k, n);
  else
    serial::gemm_tn(a, b, c, m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  if (go_parallel(m * k * n))
    omp::gemm_nt(a, b, c, m, k, n);
  else
    serial::gemm_nt(a, b, c, m, k, n);
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols) {
  if (go_parallel(rows * cols * 8))
    omp::softmax_rows(in, out, rows, cols);
  else
    serial::softmax_rows(in, out, rows, cols);
}

void leaky_relu(std::span<const double> in, std::span<double> out, double slope) {
  if (go_parallel(in.size()))
    omp::leaky_relu(in, out, slope);
  else
    serial::leaky_relu(in, out, slope);
}

void cosine_rows(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t d) {
  if (go_parallel(m * n * d))
    omp::cosine_rows(a, b, out, m, n, d);
  else
    serial::cosine_rows(a, b, out, m, n, d);
}

}  // namespace bgr::kernels
