#pragma once

#include <cmath>
#include <cstdint>

namespace patchdrop {

// Counter-based pseudo-random stream. Every consumer derives its generator
// from (seed, stream, a, b) instead of sharing mutable stream state, so runs
// are reproducible and resumable regardless of which draws actually happen.
class Rng {
 public:
  explicit Rng(std::uint64_t state) : state_(state) {}

  /// splitmix64 step: golden-ratio increment followed by an avalanche mix.
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random mantissa bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Multiply-shift; bias is below n / 2^64.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Marsaglia polar rejection (no trig functions).
  double next_gaussian();

  /// Normal(0, sigma) re-drawn until within +/- 2 sigma.
  double next_trunc_normal(double sigma);

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stream tags keep independent consumers of the same seed decorrelated.
enum class Stream : std::uint64_t {
  kParamInit = 1,
  kKeepSet = 2,
  kRate = 3,
  kShuffle = 4,
  kAugment = 5,
  kEvalKeep = 6,
  kDataGen = 7,
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Generator keyed by (seed, stream, a, b); same key, same draws.
inline Rng rng_at(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                  std::uint64_t b = 0) {
  std::uint64_t h = detail::mix64(seed ^ 0x2545f4914f6cdd1dULL);
  h = detail::mix64(h ^ static_cast<std::uint64_t>(stream));
  h = detail::mix64(h ^ a);
  h = detail::mix64(h ^ b);
  return Rng(h);
}

inline double Rng::next_gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * next_double() - 1.0;
    v = 2.0 * next_double() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  have_spare_ = true;
  return u * m;
}

inline double Rng::next_trunc_normal(double sigma) {
  double z;
  do {
    z = next_gaussian();
  } while (z < -2.0 || z > 2.0);
  return z * sigma;
}

}  // namespace patchdrop
