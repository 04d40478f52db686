#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "proxprior/common.hpp"

namespace proxprior {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream splitting: stream `id` of `master` is
/// splitmix64(splitmix64(master) + id). Distinct ids give unrelated seeds.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t id) {
  return splitmix64(splitmix64(master) + id);
}

/// Named streams used by the command-line runs.
namespace streams {
inline constexpr std::uint64_t calibration = 1;
inline constexpr std::uint64_t lambda_draw = 2;
inline constexpr std::uint64_t synthetic_data = 3;
inline constexpr std::uint64_t bayes_factor_prior = 4;
inline constexpr std::uint64_t bootstrap = 5;
inline constexpr std::uint64_t balanced_lambda = 6;
inline constexpr std::uint64_t chain_base = 1000;  // chain k uses chain_base + k
}  // namespace streams

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline Vector standard_normal(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  for (Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// ±1 with equal probability.
inline double rademacher(Rng& rng) { return (rng() >> 63) ? 1.0 : -1.0; }

inline double gamma_draw(double shape, Rng& rng) {
  return std::gamma_distribution<double>(shape, 1.0)(rng);
}

inline double beta_draw(double a, double b, Rng& rng) {
  const double x = gamma_draw(a, rng);
  const double y = gamma_draw(b, rng);
  return x / (x + y);
}

}  // namespace proxprior
