#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nidda {

/// Seeded pseudo-random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard, and all variates below are derived from its raw 64-bit words,
/// so a given seed reproduces the same draws on every conforming platform.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0);

  /// Child stream keyed by a name, independent of how much of this stream
  /// has been consumed.
  static RandomSource derive(std::uint64_t seed, std::string_view tag);

  /// Child stream seeded from the next word of this stream.
  RandomSource split();

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Gamma variate with density b^a / Gamma(a) * x^(a-1) * exp(-b x).
double sample_gamma(RandomSource& rng, double shape, double rate);
/// Poisson variate with mean lambda.
std::uint64_t sample_poisson(RandomSource& rng, double lambda);
double sample_gaussian(RandomSource& rng, double mu, double sigma);

}  // namespace nidda
