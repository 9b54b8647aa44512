#pragma once

#include <cmath>
#include <cstdint>

#include "expr.hpp"

namespace daeopt {

/// Deterministic splitmix64 generator. Identical seeds give identical streams
/// on every platform, which the byte-stable report requirement relies on.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  Vector uniform_vector(int n, double lo, double hi) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

  /// Standard normal via Box-Muller (deterministic).
  double normal() {
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Uniform point in the Euclidean ball of given radius.
  Vector ball(int n, double radius) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    const double nrm = v.norm();
    if (nrm == 0.0) return Vector::Zero(n);
    const double r = radius * std::pow(uniform(), 1.0 / n);
    return (r / nrm) * v;
  }

  /// Deterministic sub-stream (e.g. one per mesh node).
  Rng fork(uint64_t salt) const {
    Rng t(state_ ^ (0x632be59bd9b4e019ULL * (salt + 1)));
    t.next();
    return t;
  }

 private:
  uint64_t state_;
};

}  // namespace daeopt
