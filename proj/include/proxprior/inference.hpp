#pragma once

// Posterior summaries, Bayes factors for set-expansion priors, and the
// factor-count posterior of the flow model.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "proxprior/sampler.hpp"

namespace proxprior {

/// BF₀₁ for H₀: θ ∈ C against H₁: θ ∉ C under prox = set_expansion(C, λ),
///
///   BF₀₁ = [pr(dist < λ | y) / pr(dist ≥ λ | y)] · [pr(dist ≥ λ) / pr(dist < λ)].
struct HypothesisResult {
  double bf01 = 0.0;
  std::size_t posterior_in = 0;
  std::size_t posterior_out = 0;
  double prior_in = 0.0;
  double prior_out = 0.0;
  double lambda = 0.0;
  std::size_t prior_mc = 0;
  bool infinite = false;    // no posterior draw outside C
  bool zero = false;        // no posterior draw inside C
  bool degenerate = false;  // both posterior counts positive but a prior mass is zero; bf01 is NaN
};

/// Posterior membership counts dist_C(β) < λ over the chain (every draw when
/// λ = 0, where the prox is the projection onto C); prior masses use
/// `prior_mc` fresh draws from the β prior. Throws ConfigError when the
/// chain's recorded λ differs from `lambda`.
HypothesisResult bayes_factor_set_expansion(const Chain& chain, const ConvexSet& C, double lambda,
                                            const BetaPrior& prior, Index prior_mc = 100000,
                                            std::uint64_t seed = 0);

/// pr(dist_C(β) < λ) under the β prior.
double prior_mass_in_set(const ConvexSet& C, double lambda, const BetaPrior& prior, Index n_mc, std::uint64_t seed);

/// Median of dist_C(β) over n_mc ≥ 1000 prior draws, which splits the
/// prior mass evenly between C and its complement.
double balanced_lambda(const ConvexSet& C, const BetaPrior& prior, Index n_mc, std::uint64_t seed);

struct CoordinateSummary {
  double mean = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double sd = 0.0;
  double zero_rate = 0.0;  // fraction with |x| ≤ 1e-12
};

struct PosteriorSummary {
  double level = 0.95;
  std::vector<CoordinateSummary> beta;
  std::vector<CoordinateSummary> theta;
};

inline constexpr double kExactZeroTol = 1e-12;

/// Type-7 (linear interpolation) quantile of unsorted values.
double quantile(std::vector<double> values, double q);

/// Equal-tailed intervals at `level`; throws InvalidInput on an empty chain.
PosteriorSummary summarize(const Chain& chain, double level = 0.95);
/// Draws pooled across chains.
PosteriorSummary summarize(const std::vector<Chain>& chains, double level = 0.95);

/// Factor-count posterior of a flow-factor chain. Factor l counts as present
/// in a draw when both its loading row γ_l and its flow F^(l) have norm above
/// `threshold`; either one being zero removes it from the likelihood.
struct FactorCountPosterior {
  std::vector<double> probabilities;  // index 0..d
  std::vector<int> counts;            // per draw
  int mode = 0;
  std::size_t mode_draw = 0;  // highest log posterior among draws with the modal count
};

FactorCountPosterior factor_count_posterior(const Chain& chain, const FlowLayout& layout,
                                            double threshold = 1e-6);
FactorCountPosterior factor_count_posterior(const std::vector<Chain>& chains, const FlowLayout& layout,
                                            double threshold = 1e-6);

/// Empirical check of tr Cov(θ | y) ≤ tr Cov(β | y) with a moving-block
/// bootstrap standard error of the difference.
struct TraceContraction {
  double trace_theta = 0.0;
  double trace_beta = 0.0;
  double se = 0.0;  // bootstrap sd of trace_theta − trace_beta
  bool holds = false;  // trace_theta − trace_beta ≤ 3·se (exactly ≤ when se = 0)
};

TraceContraction covariance_contraction(const Chain& chain, int n_bootstrap = 200, std::uint64_t seed = 0);

void write_hypothesis(std::ostream& out, const HypothesisResult& result);
void write_summary(std::ostream& out, const PosteriorSummary& summary);
void write_factor_counts(std::ostream& out, const FactorCountPosterior& counts);

}  // namespace proxprior
