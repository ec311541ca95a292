#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <gtest/gtest.h>

#include "alrgan/random.hpp"
#include "alrgan/ssm.hpp"
#include "alrgan/tensor.hpp"

namespace alrgan::test {

inline Tensor param(Shape shape, std::vector<double> values) {
  Tensor t = Tensor::from(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

inline Tensor random_param(Rng& rng, Shape shape, double sd = 1.0) {
  Tensor t = rng.normal_tensor(std::move(shape));
  for (double& v : t.mutable_data()) v *= sd;
  t.set_requires_grad(true);
  return t;
}

/// Column-stochastic [t, n] matrix with random softmax columns.
inline SemMatrix random_theta(Rng& rng, std::size_t t, std::size_t n, double spread = 1.0) {
  std::vector<double> v(t * n);
  for (std::size_t k = 0; k < n; ++k) {
    double total = 0;
    for (std::size_t j = 0; j < t; ++j) {
      v[j * n + k] = std::exp(spread * rng.normal());
      total += v[j * n + k];
    }
    for (std::size_t j = 0; j < t; ++j) v[j * n + k] /= total;
  }
  return SemMatrix{Tensor::from({t, n}, v), GridDims{1, n}};
}

inline void expect_values_near(const Tensor& t, const std::vector<double>& expected, double tol) {
  ASSERT_EQ(t.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t.data()[i], expected[i], tol) << "index " << i;
}

}  // namespace alrgan::test
