#pragma once

#include <cstdint>

namespace dsekit {

// SplitMix64: counter-based generator with the published Vigna constants.
// The integer stream is platform-exact; floating transforms built on it
// inherit the platform's libm in the last ulp (documented in docs/formats.md).
inline constexpr std::uint64_t kSplitMix64Gamma = 0x9E3779B97F4A7C15ULL;

/** @brief SplitMix64 output finalizer (bijective 64-bit mix). */
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

/**
 * @brief Seedable counter-based stream: state walks a Weyl sequence, each
 *        output is the finalizer of the counter. Value-type, copyable.
 */
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kSplitMix64Gamma;
    return splitmix64_mix(state_);
  }

  /** Uniform double on the open interval (0, 1): ((u64 >> 11) + 0.5)·2⁻⁵³. */
  double next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /** Uniform double on the open interval (−1, 1); never exactly 0 or ±1. */
  double next_symmetric_open() { return 2.0 * next_open01() - 1.0; }

 private:
  std::uint64_t state_;
};

/** @brief Order-sensitive seed hash used to split independent substreams. */
inline std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64_mix(a ^ splitmix64_mix(b + kSplitMix64Gamma));
}

/**
 * @brief Disjoint per-channel substream: hash(master, run seed, channel tag).
 *
 * Distinct tags give independently seeded streams, so the order in which
 * channels are processed cannot change any channel's samples.
 */
inline SplitMix64 channel_stream(std::uint64_t master_seed, std::uint64_t run_seed,
                                 std::uint64_t channel_tag) {
  return SplitMix64(combine_seed(combine_seed(master_seed, run_seed), channel_tag));
}

}  // namespace dsekit
