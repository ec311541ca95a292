#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "alrgan/tensor.hpp"

namespace alrgan {

/// One differentiable function of a single tensor, checked at random points.
/// Other operands are fixed inside `f`.
struct GradientCase {
  std::string name;
  bool composite = false;
  Shape shape;
  std::function<Tensor(const Tensor&)> f;
};

/// Every differentiable primitive and every composite loss of the library.
std::vector<GradientCase> gradient_cases();

struct GradientCaseResult {
  std::string name;
  bool composite = false;
  double max_rel_err = 0;  // worst over all points
  double tolerance = 0;
  bool passed = false;
};

struct GradientSuiteOptions {
  double op_tolerance = 1e-4;
  double composite_tolerance = 1e-3;
  std::size_t points = 10;
  std::uint64_t seed = 2024;
};

/// Runs every case at `points` seeded standard-normal inputs.
std::vector<GradientCaseResult> run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace alrgan
