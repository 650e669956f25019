#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "wbmr/common.hpp"

namespace wbmr {

// Deterministic random source. mt19937_64 output is pinned by the standard,
// but the std::*_distribution adapters are not, so the few distributions we
// need are implemented here to keep results bit-identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(eng_() % static_cast<uint64_t>(hi - lo + 1));
  }

  // Box-Muller; one fresh pair of uniforms per sample.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mu, double sigma) { return mu + sigma * gaussian(); }

  Vec3 gaussian_vec3(double sigma) {
    return Vec3(gaussian() * sigma, gaussian() * sigma, gaussian() * sigma);
  }

  VecX gaussian_vec(int n, double sigma) {
    VecX v(n);
    for (int i = 0; i < n; ++i) v[i] = gaussian() * sigma;
    return v;
  }

  // Independent child stream; splitmix64 keeps streams decorrelated.
  Rng fork(uint64_t stream) {
    uint64_t z = eng_() + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  static uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace wbmr
