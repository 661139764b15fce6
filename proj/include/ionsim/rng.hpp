#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>

#include "ionsim/error.hpp"

namespace ionsim {

/// Deterministic splitmix64 generator with hand-rolled distribution
/// transforms. std:: distributions are implementation-defined, so all
/// sampling goes through this class to keep outputs byte-identical across
/// platforms and library versions. Independent streams are derived by
/// hashing a (seed, path...) tuple, which makes parallel or reordered
/// evaluation reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Substream addressed by (seed, path). Same address, same sequence.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = seed;
    for (std::uint64_t p : path) {
      h = mix(h ^ (p + 0x9e3779b97f4a7c15ull));
    }
    return Rng(h);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix_final(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; second value cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(kTau * u2);
    have_cached_ = true;
    return r * std::cos(kTau * u2);
  }

  /// Index into a cumulative distribution (cdf non-decreasing, last = total).
  int discrete_cdf(std::span<const double> cdf) {
    if (cdf.empty() || cdf.back() <= 0.0) {
      throw Error(ErrorCode::SamplingError, "empty or zero-mass distribution");
    }
    const double u = uniform() * cdf.back();
    int lo = 0, hi = static_cast<int>(cdf.size()) - 1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (cdf[mid] <= u) lo = mid + 1; else hi = mid;
    }
    return lo;
  }

 private:
  static constexpr double kTau = 6.283185307179586476925286766559;

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    return mix_final(z);
  }

  static std::uint64_t mix_final(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace ionsim
