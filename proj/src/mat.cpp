#include "bgr/mat.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bgr/errors.hpp"
#include "bgr/kernels.hpp"

namespace bgr {

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw ShapeError("Mat: data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Mat::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Mat(r, c, std::move(data));
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Mat::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Mat::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool operator==(const Mat& a, const Mat& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) return false;
  // bitwise, so that 0.0 and -0.0 differ and NaN payloads compare
  return a.data_.empty() ||
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " * " + b.shape_str());
  Mat c(a.rows(), b.cols());
  kernels::gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

Mat scale_add(const Mat& a, const Mat& b, double alpha, double beta) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("scale_add: " + a.shape_str() + " vs " + b.shape_str());
  Mat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i] + beta * b[i];
  return out;
}

Mat softmax_axis(const Mat& a, Axis axis) {
  if (a.empty()) return a;
  if (axis == Axis::rows) {
    Mat out(a.rows(), a.cols());
    kernels::softmax_rows(a.data(), out.data(), a.rows(), a.cols());
    return out;
  }
  const Mat t = transpose(a);
  Mat out(t.rows(), t.cols());
  kernels::softmax_rows(t.data(), out.data(), t.rows(), t.cols());
  return transpose(out);
}

void check_leaky_slope(double slope) {
  if (!(slope > 0.0 && slope < 1.0))
    throw ConfigError("leaky_relu: slope must lie in (0,1), got " + std::to_string(slope));
}

Mat leaky_relu(const Mat& a, double slope) {
  check_leaky_slope(slope);
  Mat out(a.rows(), a.cols());
  kernels::leaky_relu(a.data(), out.data(), slope);
  return out;
}

Mat relu(const Mat& a) {
  Mat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

Mat concat_cols(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows())
    throw ShapeError("concat_cols: row counts differ, " + a.shape_str() + " vs " + b.shape_str());
  Mat out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Mat concat_rows(const Mat& a, const Mat& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols())
    throw ShapeError("concat_rows: column counts differ, " + a.shape_str() + " vs " +
                     b.shape_str());
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Mat(a.rows() + b.rows(), a.cols(), std::move(data));
}

Mat slice_rows(const Mat& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of " + a.shape_str());
  auto first = a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols());
  auto last = a.data().begin() + static_cast<std::ptrdiff_t>(end * a.cols());
  return Mat(end - begin, a.cols(), std::vector<double>(first, last));
}

Mat slice_cols(const Mat& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of " + a.shape_str());
  Mat out(a.rows(), end - begin);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = a(r, c);
  return out;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("max_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const Mat& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace bgr
