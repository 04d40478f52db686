#include "proxprior/inference.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace proxprior {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// prox(β) lands in C exactly when dist_C(β) < λ; at λ = 0 the prox is the
// projection and every β lands in C.
bool lands_in_set(double dist, double lambda) { return lambda == 0.0 || dist < lambda; }

CoordinateSummary summarize_values(std::vector<double> x, double level) {
  CoordinateSummary s;
  const double n = double(x.size());
  std::size_t zeros = 0;
  for (double v : x) {
    s.mean += v;
    zeros += std::abs(v) <= kExactZeroTol;
  }
  s.mean /= n;
  s.zero_rate = double(zeros) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.sd = x.size() > 1 && ss > 0.0 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double tail = 0.5 * (1.0 - level);
  std::sort(x.begin(), x.end());
  auto sorted_quantile = [&](double q) {
    const double h = (n - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - double(lo)) * (x[hi] - x[lo]);
  };
  s.median = sorted_quantile(0.5);
  s.lower = sorted_quantile(tail);
  s.upper = sorted_quantile(1.0 - tail);
  return s;
}

std::vector<CoordinateSummary> summarize_draws(const std::vector<const std::vector<Vector>*>& sets, double level) {
  std::vector<CoordinateSummary> out;
  const Index p = sets.front()->front().size();
  for (Index j = 0; j < p; ++j) {
    std::vector<double> col;
    for (const auto* draws : sets)
      for (const Vector& d : *draws) col.push_back(d[j]);
    out.push_back(summarize_values(std::move(col), level));
  }
  return out;
}

double trace_cov(const std::vector<Vector>& draws, const std::vector<std::size_t>& idx) {
  const Index p = draws.front().size();
  Vector mean = Vector::Zero(p), sq = Vector::Zero(p);
  for (std::size_t i : idx) mean += draws[i];
  mean /= double(idx.size());
  for (std::size_t i : idx) sq += (draws[i] - mean).cwiseAbs2();
  return sq.sum() / double(idx.size() - 1);
}

}  // namespace

double prior_mass_in_set(const ConvexSet& C, double lambda, const BetaPrior& prior, Index n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw InvalidInput("prior_mass_in_set: n_mc must be positive");
  if (prior.dim() != C.dim()) throw ShapeError("prior_mass_in_set: prior and set dimensions differ");
  Rng rng(seed);
  Index inside = 0;
  for (Index k = 0; k < n_mc; ++k) inside += lands_in_set(C.distance(prior.sample(rng)), lambda);
  return double(inside) / double(n_mc);
}

HypothesisResult bayes_factor_set_expansion(const Chain& chain, const ConvexSet& C, double lambda,
                                            const BetaPrior& prior, Index prior_mc, std::uint64_t seed) {
  if (chain.size() == 0) throw InvalidInput("bayes factor: empty chain");
  if (!(lambda >= 0.0)) throw InvalidInput("bayes factor: lambda must be >= 0");
  if (!chain.lambda_used.empty() &&
      std::abs(chain.lambda_used.front() - lambda) > 1e-12 * std::max(1.0, std::abs(lambda)))
    throw ConfigError("bayes factor: chain was run with lambda " + std::to_string(chain.lambda_used.front()) +
                      ", not " + std::to_string(lambda));
  HypothesisResult r;
  r.lambda = lambda;
  r.prior_mc = static_cast<std::size_t>(prior_mc);
  for (const Vector& b : chain.beta_draws) {
    if (lands_in_set(C.distance(b), lambda))
      ++r.posterior_in;
    else
      ++r.posterior_out;
  }
  r.prior_in = prior_mass_in_set(C, lambda, prior, prior_mc, seed);
  r.prior_out = 1.0 - r.prior_in;
  if (r.posterior_out == 0) {
    r.infinite = true;
    r.bf01 = std::numeric_limits<double>::infinity();
  } else if (r.posterior_in == 0) {
    r.zero = true;
    r.bf01 = 0.0;
  } else if (r.prior_in == 0.0 || r.prior_out == 0.0) {
    r.degenerate = true;
    r.bf01 = kNaN;
  } else {
    r.bf01 = (double(r.posterior_in) / double(r.posterior_out)) * (r.prior_out / r.prior_in);
  }
  return r;
}

double balanced_lambda(const ConvexSet& C, const BetaPrior& prior, Index n_mc, std::uint64_t seed) {
  if (n_mc < 1000) throw InvalidInput("balanced_lambda: n_mc must be >= 1000");
  if (prior.dim() != C.dim()) throw ShapeError("balanced_lambda: prior and set dimensions differ");
  Rng rng(seed);
  std::vector<double> dist(static_cast<std::size_t>(n_mc));
  for (double& d : dist) d = C.distance(prior.sample(rng));
  return quantile(std::move(dist), 0.5);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInput("quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = double(values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - double(lo)) * (values[hi] - values[lo]);
}

PosteriorSummary summarize(const std::vector<Chain>& chains, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidInput("credible level must be in (0, 1)");
  std::vector<const std::vector<Vector>*> beta, theta;
  for (const Chain& c : chains) {
    if (c.size() == 0) continue;
    beta.push_back(&c.beta_draws);
    if (!c.theta_draws.empty()) theta.push_back(&c.theta_draws);
  }
  if (beta.empty()) throw InvalidInput("summarize: empty chain");
  PosteriorSummary s;
  s.level = level;
  s.beta = summarize_draws(beta, level);
  if (!theta.empty()) s.theta = summarize_draws(theta, level);
  return s;
}

PosteriorSummary summarize(const Chain& chain, double level) { return summarize(std::vector<Chain>{chain}, level); }

FactorCountPosterior factor_count_posterior(const std::vector<Chain>& chains, const FlowLayout& layout,
                                            double threshold) {
  FactorCountPosterior out;
  const Index d = layout.n_factors;
  out.probabilities.assign(std::size_t(d + 1), 0.0);
  std::vector<double> log_post;
  for (const Chain& c : chains) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      const Vector& theta = c.theta_draws.at(k);
      if (theta.size() != layout.dim()) throw ShapeError("factor_count_posterior: draw does not match the layout");
      const FlowFactorState state = decode_flow_theta(layout, theta);
      int count = 0;
      for (Index l = 0; l < d; ++l)
        count += state.gamma.row(l).norm() > threshold && state.factors[std::size_t(l)].lower.norm() > threshold;
      out.counts.push_back(count);
      log_post.push_back(k < c.log_posterior.size() ? c.log_posterior[k] : 0.0);
    }
  }
  if (out.counts.empty()) throw InvalidInput("factor_count_posterior: empty chain");
  std::vector<std::size_t> hist(out.probabilities.size(), 0);
  for (int c : out.counts) ++hist[std::size_t(c)];
  for (std::size_t k = 0; k < hist.size(); ++k) out.probabilities[k] = double(hist[k]) / double(out.counts.size());
  out.mode = int(std::max_element(out.probabilities.begin(), out.probabilities.end()) - out.probabilities.begin());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < out.counts.size(); ++k) {
    if (out.counts[k] == out.mode && log_post[k] > best) {
      best = log_post[k];
      out.mode_draw = k;
    }
  }
  return out;
}

FactorCountPosterior factor_count_posterior(const Chain& chain, const FlowLayout& layout, double threshold) {
  return factor_count_posterior(std::vector<Chain>{chain}, layout, threshold);
}

TraceContraction covariance_contraction(const Chain& chain, int n_bootstrap, std::uint64_t seed) {
  const std::size_t n = chain.size();
  if (n < 4 || chain.theta_draws.size() != n) throw InvalidInput("covariance_contraction: need >= 4 paired draws");
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  TraceContraction tc;
  tc.trace_theta = trace_cov(chain.theta_draws, all);
  tc.trace_beta = trace_cov(chain.beta_draws, all);

  // Moving blocks of length ≈ √n keep the chain's autocorrelation inside each block.
  const auto block = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(double(n))));
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> start(0, n - block);
  std::vector<double> diffs;
  std::vector<std::size_t> idx;
  for (int b = 0; b < n_bootstrap; ++b) {
    idx.clear();
    while (idx.size() < n) {
      const std::size_t s = start(rng);
      for (std::size_t i = s; i < s + block && idx.size() < n; ++i) idx.push_back(i);
    }
    diffs.push_back(trace_cov(chain.theta_draws, idx) - trace_cov(chain.beta_draws, idx));
  }
  double mean = 0.0, ss = 0.0;
  for (double d : diffs) mean += d / double(diffs.size());
  for (double d : diffs) ss += (d - mean) * (d - mean);
  tc.se = diffs.size() > 1 ? std::sqrt(ss / double(diffs.size() - 1)) : 0.0;
  tc.holds = tc.trace_theta - tc.trace_beta <= 3.0 * tc.se;
  return tc;
}

void write_hypothesis(std::ostream& out, const HypothesisResult& r) {
  out << std::setprecision(17);
  out << "bf01=" << r.bf01 << '\n';
  out << "posterior_in_C=" << r.posterior_in << '\n';
  out << "posterior_out_C=" << r.posterior_out << '\n';
  out << "prior_in_C=" << r.prior_in << '\n';
  out << "prior_out_C=" << r.prior_out << '\n';
  out << "lambda=" << r.lambda << '\n';
  out << "prior_mc=" << r.prior_mc << '\n';
  out << "bf_infinite=" << (r.infinite ? "true" : "false") << '\n';
  out << "bf_zero=" << (r.zero ? "true" : "false") << '\n';
  out << "degenerate=" << (r.degenerate ? "true" : "false") << '\n';
}

void write_summary(std::ostream& out, const PosteriorSummary& s) {
  out << "parameter\tmean\tsd\tmedian\tlower\tupper\tzero_rate\n" << std::setprecision(17);
  auto rows = [&](const std::vector<CoordinateSummary>& cs, const char* prefix) {
    for (std::size_t j = 0; j < cs.size(); ++j) {
      const auto& c = cs[j];
      out << prefix << j + 1 << '\t' << c.mean << '\t' << c.sd << '\t' << c.median << '\t' << c.lower << '\t'
          << c.upper << '\t' << c.zero_rate << '\n';
    }
  };
  rows(s.beta, "beta_");
  rows(s.theta, "theta_");
}

void write_factor_counts(std::ostream& out, const FactorCountPosterior& f) {
  out << "n_factors\tprobability\n" << std::setprecision(17);
  for (std::size_t k = 0; k < f.probabilities.size(); ++k) out << k << '\t' << f.probabilities[k] << '\n';
}

}  // namespace proxprior
