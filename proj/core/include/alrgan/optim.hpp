#pragma once

#include <cstddef>
#include <vector>

#include "alrgan/tensor.hpp"

namespace alrgan {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed list of leaf tensors. step() reads each parameter's
/// gradient, updates the values in place and leaves the gradient untouched;
/// call zero_grad() before the next backward pass.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step();
  void zero_grad();

  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& parameters() const { return params_; }

  // Moment buffers, exposed for checkpointing.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::size_t t) { t_ = t; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace alrgan
