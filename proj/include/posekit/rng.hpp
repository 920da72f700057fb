#pragma once

// Seeded random number utilities. All distributions are implemented on top
// of the (standardized) mt19937_64 bit stream, so equal seeds reproduce
// byte-identical results on every platform; the implementation-defined
// behavior of <random> distributions is deliberately avoided.

#include "posekit/geom.hpp"

#include <cstdint>
#include <random>

namespace posekit {

/// splitmix64 mix; used to derive independent stream seeds from a master
/// seed plus a salt (correspondence index, trial index, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t x;
    do {
      x = bits();
    } while (x > limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (no state carried between calls).
  double gaussian() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

  /// Uniform direction on the unit sphere.
  Vec3 unit_vector() {
    // Rejection from the cube avoids trig and stays exactly uniform.
    for (;;) {
      const Vec3 v(uniform(-1.0, 1.0), uniform(-1.0, 1.0), uniform(-1.0, 1.0));
      const double n2 = v.squaredNorm();
      if (n2 > 1e-12 && n2 <= 1.0) return v / std::sqrt(n2);
    }
  }

  /// Uniform point in the solid ball of the given radius.
  Vec3 in_ball(double radius) {
    for (;;) {
      const Vec3 v(uniform(-1.0, 1.0), uniform(-1.0, 1.0), uniform(-1.0, 1.0));
      if (v.squaredNorm() <= 1.0) return v * radius;
    }
  }

  /// Uniform point in an axis-aligned box.
  Vec3 in_box(const Vec3& lo, const Vec3& hi) {
    return Vec3(uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()), uniform(lo.z(), hi.z()));
  }

  /// Uniform random rotation (uniform w.r.t. the Haar measure on SO(3)),
  /// built from a uniformly distributed unit quaternion.
  Rotation rotation() {
    double q[4];
    double n2;
    do {
      n2 = 0.0;
      for (double& c : q) {
        c = gaussian();
        n2 += c * c;
      }
    } while (n2 < 1e-12);
    const double inv = 1.0 / std::sqrt(n2);
    const double w = q[0] * inv, x = q[1] * inv, y = q[2] * inv, z = q[3] * inv;
    Mat3 m;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return Rotation{m};
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace posekit
