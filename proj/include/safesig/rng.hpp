#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace safesig::rng {

// SplitMix64 finalizer. Used as the mixing function of a counter-based
// stream: output i depends only on (seed, i), never on call history, so
// identical seeds give identical draws on every platform.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derive an independent child seed from a parent seed and a tag.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag + 0xA0761D6478BD642FULL));
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() { return splitmix64(seed_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_unit_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Standard normal via Box-Muller (two uniforms per draw).
  double next_gaussian() {
    const double u1 = next_unit_pos();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index d) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = next_gaussian();
    return v;
  }

  // Uniform on the unit sphere in R^d.
  Eigen::VectorXd sphere_vector(Eigen::Index d) {
    for (;;) {
      Eigen::VectorXd v = gaussian_vector(d);
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace safesig::rng
