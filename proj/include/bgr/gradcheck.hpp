#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "bgr/autodiff.hpp"
#include "bgr/mat.hpp"

namespace bgr {

struct GradCheckReport {
  std::string op;
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t worst_input = 0;
  std::size_t worst_entry = 0;
  std::size_t entries_checked = 0;
};

/// Compares op.backward against central finite differences.
///
/// The output is reduced to a scalar by contracting it with a random fixed
/// cotangent drawn from `seed`. Every entry of every input is perturbed by
/// +-eps. The error for one entry is |analytic - numeric| / max(1, |analytic|,
/// |numeric|), i.e. relative for large gradients and absolute near zero.
/// Non-finite values inside the op surface as NumericError naming the op.
GradCheckReport grad_check(const DiffOp& op, std::span<const Mat> inputs, double eps,
                           double tol, std::uint64_t seed = 0x6772616463686bULL);

}  // namespace bgr
