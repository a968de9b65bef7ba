#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace lskkf {

/// Counter-based pseudo-random stream: output i is the SplitMix64 hash of
/// seed + i * golden gamma. Fully specified here so every stochastic result
/// in this project is bit-reproducible from (seed) alone.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (pairs cached).
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // 1 - u in (0, 1] keeps the log argument positive.
    const double u1 = 1.0 - next_unit();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = next_normal();
    return v;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Derives an independent stream seed for a named purpose ("enkf-member",
/// "measurement-noise", ...) so substreams never overlap by construction.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t tag) {
  SplitMix64 mix(seed ^ (tag * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
  return mix.next_u64();
}

}  // namespace lskkf
