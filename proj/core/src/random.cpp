#include "alrgan/random.hpp"

namespace alrgan {

Rng Rng::derive(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finaliser over the pair keeps nearby (seed, index) streams apart.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Rng(z ^ (z >> 31));
}

Tensor Rng::normal_tensor(Shape shape) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = normal();
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace alrgan
