#ifndef PROTOMOCO_RNG_HPP
#define PROTOMOCO_RNG_HPP

#include <cmath>
#include <cstdint>

namespace protomoco {

/// SplitMix64 counter-based pseudo-random generator.
///
/// The algorithm is fully specified so that any implementation reproduces the
/// same stream for the same seed:
///
///   state_0 = seed
///   state_{n+1} = state_n + 0x9E3779B97F4A7C15          (64-bit wraparound)
///   output_n: z = state_{n+1}
///             z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///             z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///             return z ^ (z >> 31)
///
/// Derived streams mix a stream index into the base seed with the same
/// finalizer, so substreams are independent of how much of the parent stream
/// has been consumed. uniform() takes the top 53 bits, uniform_int(n) is
/// floor(uniform() * n), and normal() is one Box-Muller value from two
/// uniforms; each of these consumption rules is part of the contract.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive and far below 2^53.
  std::uint64_t uniform_int(std::uint64_t n) {
    std::uint64_t v = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Independent substream for the given index, derived from the base seed
  /// (not the current state), so derivation order never matters.
  SplitMix64 derived(std::uint64_t stream) const {
    return SplitMix64(mix(seed_ + 0x9E3779B97F4A7C15ull * (stream + 1)));
  }

  std::uint64_t seed() const { return seed_; }

  /// The SplitMix64 finalizer, exposed for seed derivation.
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace protomoco

#endif  // PROTOMOCO_RNG_HPP
