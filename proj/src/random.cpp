#include "nidda/random.hpp"

#include <cmath>
#include <string>

#include "nidda/error.hpp"

namespace nidda {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RandomSource::RandomSource(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

RandomSource RandomSource::derive(std::uint64_t seed, std::string_view tag) {
  return RandomSource(splitmix64(seed ^ fnv1a64(tag)));
}

RandomSource RandomSource::split() { return RandomSource(splitmix64(next_u64())); }

double RandomSource::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RandomSource::uniform_open() {
  return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
}

std::uint64_t RandomSource::below(std::uint64_t n) {
  if (n == 0) throw DomainError("RandomSource::below: n must be positive");
  // Rejection keeps the result unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

namespace {

double standard_normal(RandomSource& rng) {
  // Marsaglia polar method; the second variate is discarded so that the
  // sampler carries no hidden state.
  double u, v, s;
  do {
    u = 2.0 * rng.uniform() - 1.0;
    v = 2.0 * rng.uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return u * std::sqrt(-2.0 * std::log(s) / s);
}

// Marsaglia-Tsang for shape >= 1, unit rate.
double standard_gamma(RandomSource& rng, double shape) {
  if (shape < 1.0) {
    const double u = rng.uniform_open();
    return standard_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::uint64_t poisson_inversion(RandomSource& rng, double lambda) {
  const double u = rng.uniform();
  double p = std::exp(-lambda);
  double cdf = p;
  std::uint64_t x = 0;
  while (u > cdf) {
    ++x;
    p *= lambda / static_cast<double>(x);
    const double next = cdf + p;
    if (next == cdf) break;  // tail exhausted in floating point
    cdf = next;
  }
  return x;
}

// Hormann's transformed rejection with squeeze (PTRS), lambda >= 10.
std::uint64_t poisson_ptrs(RandomSource& rng, double lambda) {
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

}  // namespace

double sample_gamma(RandomSource& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw DomainError("sample_gamma: shape and rate must be positive and finite (shape=" +
                      std::to_string(shape) + ", rate=" + std::to_string(rate) + ")");
  }
  return standard_gamma(rng, shape) / rate;
}

std::uint64_t sample_poisson(RandomSource& rng, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DomainError("sample_poisson: lambda must be finite and >= 0 (lambda=" +
                      std::to_string(lambda) + ")");
  }
  if (lambda == 0.0) return 0;
  return lambda < 10.0 ? poisson_inversion(rng, lambda) : poisson_ptrs(rng, lambda);
}

double sample_gaussian(RandomSource& rng, double mu, double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("sample_gaussian: sigma must be >= 0");
  if (sigma == 0.0) return mu;
  return mu + sigma * standard_normal(rng);
}

}  // namespace nidda
