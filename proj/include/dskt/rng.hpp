#pragma once

#include <cstdint>
#include <random>

#include "dskt/tensor.hpp"

namespace dskt {

// Seeded RNG wrapper. All randomness in the project flows through this so
// that a fixed seed gives bit-identical runs on a given platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Derive an independent stream, e.g. one per image index.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return eng_(); }

  double uniform(double lo = 0.0, double hi = 1.0) {
    // 53-bit mantissa construction; avoids distribution-object state.
    double u = static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
    return lo + u * (hi - lo);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller, one value per call (cached pair would add hidden state).
    double u1 = uniform(1e-12, 1.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586 * u2);
  }

  Tensor tensor_uniform(std::vector<int> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = uniform(lo, hi);
    return t;
  }

  Tensor tensor_normal(std::vector<int> shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = normal(mean, stddev);
    return t;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dskt
