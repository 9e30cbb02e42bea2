#pragma once

#include <cstddef>
#include <cstdint>

namespace protonet {

/// SplitMix64 generator.
///
/// The whole state is one 64-bit counter advanced by the golden-ratio
/// increment 0x9E3779B97F4A7C15 and passed through the SplitMix64 finalizer
/// (shifts 30/27/31, multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).
/// Every derived quantity below is defined in terms of next_u64() only, so
/// a stream can be reproduced bit-for-bit in any language:
///
///   uniform()        = (next_u64() >> 11) * 2^-53           in [0, 1)
///   uniform_below(n) = rejection: draw r until r >= (2^64 - n) mod n,
///                      return r mod n
///   normal()         = Box-Muller cosine branch with
///                      u1 = 1 - uniform(), u2 = uniform():
///                      sqrt(-2 ln u1) * cos(2 pi u2)
///   derive(key)      = Rng(finalize(seed ^ (key * increment + increment)))
///                      where seed is the construction seed; derive() does not
///                      advance the parent stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t uniform_below(std::uint64_t n);
  double normal();

  // Independent child stream keyed by `key`.
  Rng derive(std::uint64_t key) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace protonet
