#include "bgr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bgr/errors.hpp"
#include "bgr/random.hpp"

namespace bgr {

namespace {

double contract(const Mat& out, const Mat& cotangent) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * cotangent[i];
  return s;
}

}  // namespace

GradCheckReport grad_check(const DiffOp& op, std::span<const Mat> inputs, double eps,
                           double tol, std::uint64_t seed) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  for (std::size_t k = 0; k < inputs.size(); ++k)
    if (!inputs[k].all_finite())
      throw NumericError("grad_check(" + op.name + "): input " + std::to_string(k) +
                         " is not finite");

  std::vector<Mat> x(inputs.begin(), inputs.end());
  const Mat out = op.forward(x);
  Rng rng(seed);
  const Mat cotangent = rng.uniform_mat(out.rows(), out.cols(), -1.0, 1.0);
  const std::vector<Mat> analytic = op.backward(x, cotangent);
  if (analytic.size() != x.size())
    throw ShapeError("grad_check(" + op.name + "): backward returned " +
                     std::to_string(analytic.size()) + " gradients for " +
                     std::to_string(x.size()) + " inputs");

  GradCheckReport report;
  report.op = op.name;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (analytic[k].rows() != x[k].rows() || analytic[k].cols() != x[k].cols())
      throw ShapeError("grad_check(" + op.name + "): gradient " + analytic[k].shape_str() +
                       " for input " + x[k].shape_str());
    for (std::size_t i = 0; i < x[k].size(); ++i) {
      const double orig = x[k][i];
      x[k][i] = orig + eps;
      const double up = contract(op.forward(x), cotangent);
      x[k][i] = orig - eps;
      const double down = contract(op.forward(x), cotangent);
      x[k][i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw NumericError("grad_check(" + op.name + "): non-finite gradient at input " +
                           std::to_string(k) + " entry " + std::to_string(i));
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > report.max_rel_err || report.entries_checked == 0) {
        report.max_rel_err = std::max(report.max_rel_err, err);
        report.worst_input = k;
        report.worst_entry = i;
      }
      ++report.entries_checked;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace bgr
