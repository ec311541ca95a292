#include "alrgan/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "alrgan/errors.hpp"

namespace alrgan {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  Tensor value = loss();
  if (value.size() != 1) {
    throw ContractError("grad_check: function must be scalar-valued, got shape " + to_string(value.shape()));
  }
  return value.item();
}

}  // namespace

GradCheckReport grad_check_params(const std::function<Tensor()>& loss, std::span<Tensor> params,
                                  std::span<const Coordinate> coordinates, double eps, double floor) {
  if (!(eps > 0)) throw ContractError("grad_check: eps must be positive");

  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor value = loss();
  if (value.size() != 1) {
    throw ContractError("grad_check: function must be scalar-valued, got shape " + to_string(value.shape()));
  }
  value.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  std::vector<Coordinate> all;
  if (coordinates.empty()) {
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].size(); ++i) all.push_back({t, i});
    coordinates = all;
  }

  GradCheckReport report;
  for (const auto& c : coordinates) {
    auto values = params[c.tensor].mutable_data();
    const double original = values[c.index];
    values[c.index] = original + eps;
    const double plus = evaluate(loss);
    values[c.index] = original - eps;
    const double minus = evaluate(loss);
    values[c.index] = original;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double a = analytic[c.tensor][c.index];
    const double err = relative_error(a, numeric, floor);
    ++report.coordinates_checked;
    if (report.coordinates_checked == 1 || err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_tensor = c.tensor;
      report.worst_index = c.index;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  for (auto& p : params) p.zero_grad();
  return report;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor leaf = x.clone();
  leaf.set_requires_grad(true);
  std::vector<Tensor> params{leaf};
  return grad_check_params([&] { return f(leaf); }, params, {}, eps).max_rel_err;
}

}  // namespace alrgan
