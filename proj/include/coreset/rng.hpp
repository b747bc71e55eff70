#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace coreset {

// splitmix64 finalizer; used both as a seed mixer and to derive child streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_stream(std::uint64_t master, std::uint64_t tag) {
  return mix64(master ^ mix64(tag));
}

// Seeded generator with platform-independent output. The standard library
// distributions are implementation-defined, so uniforms are produced directly
// from the raw 64-bit stream; everything else is built on top of them.
// Child streams derived from the same (seed, tag) pair are reproducible
// regardless of the order in which they are consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(mix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng child(std::uint64_t tag) const { return Rng(derive_stream(seed_, tag)); }

  std::uint64_t next_u64() { return eng_(); }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // uniform on the open interval (0, 1); safe to pass through quantile
  // transforms with poles at the endpoints
  double uniform_open() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // index draw from the CDF given as inclusive partial sums (last entry ~ 1)
  std::size_t categorical_from_cdf(std::span<const double> cdf) {
    if (cdf.empty()) throw std::invalid_argument("categorical: empty cdf");
    const double u = uniform() * cdf.back();
    std::size_t lo = 0, hi = cdf.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf[mid] <= u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline std::vector<double> inclusive_prefix_sums(std::span<const double> p) {
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    cdf[i] = acc;
  }
  return cdf;
}

}  // namespace coreset
