#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace bgr {

/// Dense row-major matrix of doubles.
///
/// Every node-feature matrix, adjacency block and weight in the engine is a
/// Mat; rasters are carried as Mat[channels x (H*W)] in CHW order.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Mat identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool all_finite() const noexcept;
  std::string shape_str() const;

  // Bit-exact comparison (shape and every value).
  friend bool operator==(const Mat& a, const Mat& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Axis {
  rows,  // normalize each row
  cols,  // normalize each column
};

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
/// alpha*a + beta*b
Mat scale_add(const Mat& a, const Mat& b, double alpha, double beta);
Mat softmax_axis(const Mat& a, Axis axis);
Mat leaky_relu(const Mat& a, double slope);
Mat relu(const Mat& a);
Mat concat_cols(const Mat& a, const Mat& b);
Mat concat_rows(const Mat& a, const Mat& b);
Mat slice_rows(const Mat& a, std::size_t begin, std::size_t end);
Mat slice_cols(const Mat& a, std::size_t begin, std::size_t end);

double max_abs_diff(const Mat& a, const Mat& b);
double frobenius_norm(const Mat& a);

// Throws ConfigError unless slope lies in (0, 1).
void check_leaky_slope(double slope);

}  // namespace bgr
