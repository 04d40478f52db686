#pragma once

// Hyper-prior on λ through the deformation ratio
//
//   ω_λ = E‖β − prox_λ(β)‖ / E‖β − lim_{λ*→∞} prox_{λ*}(β)‖,
//
// estimated by Monte Carlo on a λ grid, made monotone, and inverted.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "proxprior/prox_operator.hpp"
#include "proxprior/rng.hpp"

namespace proxprior {

/// Draws β from its prior.
using PriorSampler = std::function<Vector(Rng&)>;

/// β ~ N(0, sd² I_p).
PriorSampler isotropic_normal_sampler(Index p, double sd = 1.0);

struct DeformationCurve {
  std::vector<double> lambdas;     // strictly increasing, positive
  std::vector<double> omegas;      // non-decreasing, in [0, 1]
  std::vector<double> raw_omegas;  // Monte Carlo estimates before isotonic cleanup
  Index n_mc = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return lambdas.size(); }
  /// Checks the grid and monotonicity invariants.
  void validate() const;
};

/// Ratio-of-means estimate over a fixed set of draws (common random numbers).
double estimate_deformation(const ProxOperator& op, const std::vector<Vector>& draws);

/// Same, drawing n_mc prior samples from `seed`.
double estimate_deformation(const ProxOperator& op, const PriorSampler& sampler, Index n_mc, std::uint64_t seed);

/// Pool-adjacent-violators fit of a non-decreasing sequence (equal weights).
std::vector<double> isotonic_regression(const std::vector<double>& values);

/// ω at every grid point from one shared set of n_mc draws, followed by
/// isotonic cleanup. Grid points are evaluated on `threads` workers; the
/// result does not depend on the thread count.
DeformationCurve build_curve(const ProxOperator& family, const PriorSampler& sampler,
                             const std::vector<double>& lambda_grid, Index n_mc, std::uint64_t seed,
                             unsigned threads = 1);

/// `count` log-spaced points from `lo` to the first cap (doubling from 1)
/// where ω̂ ≥ `omega_cap`.
std::vector<double> default_lambda_grid(const ProxOperator& family, const PriorSampler& sampler, Index n_mc,
                                        std::uint64_t seed, std::size_t count = 50, double lo = 1e-3,
                                        double omega_cap = 0.999);

std::vector<double> log_spaced(double lo, double hi, std::size_t count);

/// Smallest λ with ω_λ = ω on the piecewise-linear curve; ω outside the
/// curve's range clamps to the end knots.
double lambda_from_omega(const DeformationCurve& curve, double omega);

/// ω ~ Beta(a, b), then λ = lambda_from_omega(curve, ω).
double sample_lambda(const DeformationCurve& curve, double a_omega, double b_omega, Rng& rng);

/// Two-column table (`lambda\tomega` header); doubles at 17 significant digits.
void write_curve(std::ostream& out, const DeformationCurve& curve);
DeformationCurve read_curve(std::istream& in);

}  // namespace proxprior
