#include "bgr/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace bgr::kernels::serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c.data() + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double a_it = a[i * k + t];
      const double* b_row = b.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_it * b_row[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c.data() + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double a_ti = a[t * m + i];
      const double* b_row = b.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ti * b_row[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
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
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] >= 0.0 ? in[i] : slope * in[i];
}

void cosine_rows(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t d) {
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

}  // namespace bgr::kernels::serial
