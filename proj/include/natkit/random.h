#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace natkit {

/// xoshiro256** seeded through SplitMix64. All sampling helpers are defined
/// here rather than through <random> distributions so that streams are
/// identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream for a named unit of work (e.g. a sentence id):
  /// the state is seeded from SplitMix64(seed XOR FNV-1a-64(stream)).
  static Rng ForStream(std::uint64_t seed, std::string_view stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return Next(); }

  std::uint64_t Next();
  /// Uniform double in [0, 1) with 53 bits of precision.
  double Uniform();
  /// Uniform integer in [0, n); n must be > 0. Unbiased (rejection).
  std::uint64_t UniformInt(std::uint64_t n);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t UniformRange(std::int64_t lo, std::int64_t hi);
  bool Bernoulli(double p);
  /// Standard normal via Box-Muller (no cached second value).
  double Normal();

 private:
  std::uint64_t s_[4];
};

std::uint64_t SplitMix64(std::uint64_t& state);
std::uint64_t Fnv1a64(std::string_view bytes);

}  // namespace natkit
