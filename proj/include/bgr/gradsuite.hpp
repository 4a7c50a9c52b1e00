#pragma once

// The named finite-difference suite behind `bgr gradcheck`: every tensor
// operation on several random shapes, the graph building blocks, and the
// whole 3-thing/2-stuff pipeline.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bgr/autodiff.hpp"
#include "bgr/gradcheck.hpp"

namespace bgr {

struct GradCase {
  std::string name;  // "<op>/<k>" for shape variants, plain name otherwise
  DiffOp op;
  std::vector<Mat> inputs;
};

std::vector<GradCase> gradient_suite(std::uint64_t seed = 1);

// '*' and '?' wildcards; a pattern without wildcards matches as a substring.
bool name_matches(std::string_view pattern, std::string_view name);

// The same op with its backward scaled by `factor`, to show the checker bites.
DiffOp corrupted(DiffOp op, double factor = 1.01);

std::vector<GradCheckReport> run_gradient_suite(const std::vector<GradCase>& cases, double eps,
                                                double tol);

}  // namespace bgr
