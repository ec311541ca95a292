#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "alrgan/tensor.hpp"

namespace alrgan {

/// Outcome of comparing reverse-mode gradients with central differences.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps coordinates
/// whose true gradient is ~0 from being judged on rounding noise alone.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Checks d f / d x for a scalar-valued f of one tensor, over every coordinate
/// of x, using (f(x + eps e_i) - f(x - eps e_i)) / 2 eps. Throws ContractError
/// when f is not scalar-valued or eps <= 0.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

/// One coordinate of one of the `params` passed to grad_check_params.
struct Coordinate {
  std::size_t tensor = 0;
  std::size_t index = 0;
};

/// General form: `loss` closes over `params` (which must be leaves requiring
/// gradients) and is re-evaluated with each listed coordinate perturbed in
/// place. An empty `coordinates` span means every coordinate of every param.
GradCheckReport grad_check_params(const std::function<Tensor()>& loss, std::span<Tensor> params,
                                  std::span<const Coordinate> coordinates = {}, double eps = 1e-5,
                                  double floor = 1e-6);

}  // namespace alrgan
