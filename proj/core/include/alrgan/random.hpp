#pragma once

#include <cstdint>
#include <random>

#include "alrgan/tensor.hpp"

namespace alrgan {

/// Seeded random stream. Every stochastic draw in the library goes through
/// one of these so that runs are reproducible from (seed, step).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Stream derived from a base seed and a sub-index (e.g. training step).
  static Rng derive(std::uint64_t seed, std::uint64_t index);

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }
  std::uint64_t next() { return engine_(); }

  Tensor normal_tensor(Shape shape);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace alrgan
