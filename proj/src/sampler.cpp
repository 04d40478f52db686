#include "proxprior/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "proxprior/parallel.hpp"

namespace proxprior {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool finite_eval(const TargetEval& e) { return std::isfinite(e.log_density) && e.grad.allFinite(); }

/// Evaluates the target; solver failures count as a non-finite point.
TargetEval safe_eval(const Target& target, const Vector& beta, std::uint64_t seed) {
  try {
    return target.eval(beta, seed);
  } catch (const ConvergenceError&) {
  } catch (const NumericalError&) {
  }
  return {kNaN, Vector()};
}

double kinetic(const Vector& v, const Vector& inv_mass) { return 0.5 * v.dot(inv_mass.cwiseProduct(v)); }

Vector draw_momentum(const Vector& inv_mass, Rng& rng) {
  return (standard_normal(inv_mass.size(), rng).array() / inv_mass.array().sqrt()).matrix();
}

/// One leapfrog step on a full state; returns false when the new point is not finite.
bool leapfrog_step(HMCState& s, Vector& v, const Target& target, double eps, const Vector& inv_mass,
                   std::uint64_t seed) {
  v += 0.5 * eps * s.grad;
  s.beta += eps * inv_mass.cwiseProduct(v);
  if (!s.beta.allFinite()) return false;
  TargetEval e = safe_eval(target, s.beta, seed);
  if (!finite_eval(e)) return false;
  s.log_density = e.log_density;
  s.grad = std::move(e.grad);
  v += 0.5 * eps * s.grad;
  return true;
}

bool no_u_turn(const Vector& minus, const Vector& plus, const Vector& v_minus, const Vector& v_plus,
               const Vector& inv_mass) {
  const Vector span = plus - minus;
  return span.dot(inv_mass.cwiseProduct(v_minus)) >= 0.0 && span.dot(inv_mass.cwiseProduct(v_plus)) >= 0.0;
}

struct Tree {
  HMCState minus, plus, proposal;
  Vector v_minus, v_plus, v_proposal;
  double n = 0.0;         // slice-admissible leaves
  bool ok = true;         // no U-turn, no divergence
  bool divergent = false;
  double alpha = 0.0;     // Σ min(1, e^{H0 − H})
  int n_alpha = 0;
  int n_grad = 0;
};

struct TreeContext {
  const Target& target;
  const Vector& inv_mass;
  double eps;
  double log_u;
  double H0;
  double threshold;
  std::uint64_t seed;
  Rng& rng;
};

Tree build_tree(const HMCState& start, const Vector& v_start, int direction, int depth, TreeContext& ctx) {
  if (depth == 0) {
    Tree t;
    HMCState s = start;
    Vector v = v_start;
    const bool finite = leapfrog_step(s, v, ctx.target, direction * ctx.eps, ctx.inv_mass, ctx.seed);
    t.n_grad = 1;
    t.n_alpha = 1;
    const double H = finite ? -s.log_density + kinetic(v, ctx.inv_mass) : std::numeric_limits<double>::infinity();
    t.n = (ctx.log_u <= -H) ? 1.0 : 0.0;
    t.divergent = !finite || std::abs(H - ctx.H0) > ctx.threshold;
    t.ok = !t.divergent && (ctx.log_u < ctx.threshold - H);
    t.alpha = finite ? std::min(1.0, std::exp(ctx.H0 - H)) : 0.0;
    if (!finite) {
      // Keep the last finite state at the leaf so callers never see NaNs.
      s = start;
      v = v_start;
    }
    t.minus = t.plus = t.proposal = s;
    t.v_minus = t.v_plus = t.v_proposal = v;
    return t;
  }
  Tree t = build_tree(start, v_start, direction, depth - 1, ctx);
  if (!t.ok) return t;
  Tree u = direction < 0 ? build_tree(t.minus, t.v_minus, direction, depth - 1, ctx)
                         : build_tree(t.plus, t.v_plus, direction, depth - 1, ctx);
  if (direction < 0) {
    t.minus = std::move(u.minus);
    t.v_minus = std::move(u.v_minus);
  } else {
    t.plus = std::move(u.plus);
    t.v_plus = std::move(u.v_plus);
  }
  if (u.n > 0.0 && uniform01(ctx.rng) < u.n / (t.n + u.n)) {
    t.proposal = std::move(u.proposal);
    t.v_proposal = std::move(u.v_proposal);
  }
  t.n += u.n;
  t.alpha += u.alpha;
  t.n_alpha += u.n_alpha;
  t.n_grad += u.n_grad;
  t.divergent = t.divergent || u.divergent;
  t.ok = u.ok && no_u_turn(t.minus.beta, t.plus.beta, t.v_minus, t.v_plus, ctx.inv_mass);
  return t;
}

HMCState evaluate_state(const Target& target, const Vector& beta, std::uint64_t seed) {
  TargetEval e = safe_eval(target, beta, seed);
  if (!finite_eval(e)) throw InvalidInput("sampler: log density or gradient not finite at the initial point");
  return {beta, e.log_density, std::move(e.grad)};
}

/// Hoffman–Gelman step-size heuristic: double or halve ε until the one-step
/// acceptance probability crosses 1/2.
double reasonable_step_size(const HMCState& state, const Target& target, double eps, const Vector& inv_mass,
                            std::uint64_t seed, Rng& rng) {
  auto log_ratio = [&](double e) {
    HMCState s = state;
    Vector v = draw_momentum(inv_mass, rng);
    const double H0 = -s.log_density + kinetic(v, inv_mass);
    if (!leapfrog_step(s, v, target, e, inv_mass, seed)) return -std::numeric_limits<double>::infinity();
    return H0 - (-s.log_density + kinetic(v, inv_mass));
  };
  double lr = log_ratio(eps);
  const double a = lr > std::log(0.5) ? 1.0 : -1.0;
  for (int it = 0; it < 100; ++it) {
    if (!(a * lr > -a * std::log(2.0))) break;
    const double next = eps * std::pow(2.0, a);
    if (!(next > 1e-12 && next < 1e6)) break;
    eps = next;
    lr = log_ratio(eps);
  }
  return eps;
}

std::vector<double> column(const std::vector<Vector>& draws, Index j) {
  std::vector<double> out;
  out.reserve(draws.size());
  for (const Vector& d : draws) out.push_back(d[j]);
  return out;
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / double(x.size());
}

}  // namespace

// ---------------------------------------------------------------- targets

Target model_target(const Model& model, const SPSAConfig& spsa) {
  model.validate();
  Target t;
  t.dim = model.dim();
  for (const ProxOperator& op : model.prox.operators())
    if (op.kind() != ProxKind::identity && !op.has_exact_jacobian()) t.uses_seed = true;
  t.eval = [model, spsa](const Vector& beta, std::uint64_t seed) {
    SPSAConfig cfg = spsa;
    cfg.seed = seed;
    PosteriorPoint pt = log_posterior_and_grad(model, beta, cfg);
    return TargetEval{pt.log_posterior(), std::move(pt.grad)};
  };
  return t;
}

Target make_target(Index dim, std::function<double(const Vector&)> log_density,
                   std::function<Vector(const Vector&)> grad) {
  Target t;
  t.dim = dim;
  t.eval = [log_density = std::move(log_density), grad = std::move(grad)](const Vector& beta, std::uint64_t) {
    return TargetEval{log_density(beta), grad(beta)};
  };
  return t;
}

// ---------------------------------------------------------------- config

void HMCConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
  if (n_leapfrog < 1) throw ConfigError("n_leapfrog must be >= 1");
  if (algorithm == SamplerAlgorithm::nuts && n_leapfrog > 30) throw ConfigError("NUTS max depth must be <= 30");
  if (mass.size() > 0 && !(mass.array() > 0.0).all()) throw ConfigError("mass entries must be positive");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (n_burnin < 0 || n_burnin >= n_samples) throw ConfigError("n_burnin must be in [0, n_samples)");
  if (thin < 1) throw ConfigError("thin must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target_accept must be in (0, 1)");
  if (!(divergence_threshold > 0.0)) throw ConfigError("divergence_threshold must be positive");
  if (!(max_divergent_fraction >= 0.0 && max_divergent_fraction <= 1.0))
    throw ConfigError("max_divergent_fraction must be in [0, 1]");
  spsa.validate();
}

LambdaPolicy LambdaPolicy::fixed(double lambda) {
  if (!(lambda >= 0.0)) throw InvalidInput("fixed lambda must be >= 0");
  LambdaPolicy p;
  p.mode = Mode::fixed;
  p.value = lambda;
  return p;
}

LambdaPolicy LambdaPolicy::from_curve(DeformationCurve curve, double a_omega, double b_omega) {
  curve.validate();
  LambdaPolicy p;
  p.mode = Mode::curve;
  p.curve = std::move(curve);
  p.a_omega = a_omega;
  p.b_omega = b_omega;
  return p;
}

// ---------------------------------------------------------------- integrator and transitions

LeapfrogResult leapfrog(const Vector& beta, const Vector& v, const std::function<Vector(const Vector&)>& grad,
                        double eps, int L, const Vector& inv_mass) {
  if (v.size() != beta.size() || inv_mass.size() != beta.size()) throw ShapeError("leapfrog: dimension mismatch");
  LeapfrogResult r{beta, v, true};
  Vector g = grad(r.beta);
  for (int step = 0; step < L; ++step) {
    if (!g.allFinite()) {
      r.finite = false;
      return r;
    }
    r.v += 0.5 * eps * g;
    r.beta += eps * inv_mass.cwiseProduct(r.v);
    g = grad(r.beta);
    if (!g.allFinite() || !r.beta.allFinite()) {
      r.finite = false;
      return r;
    }
    r.v += 0.5 * eps * g;
  }
  return r;
}

StepInfo hmc_step(HMCState& state, const Target& target, double eps, int L, const Vector& inv_mass,
                  std::uint64_t seed, Rng& rng, double divergence_threshold) {
  StepInfo info;
  Vector v = draw_momentum(inv_mass, rng);
  const double H0 = -state.log_density + kinetic(v, inv_mass);
  HMCState s = state;
  bool finite = true;
  for (int step = 0; step < L && finite; ++step) {
    finite = leapfrog_step(s, v, target, eps, inv_mass, seed);
    ++info.n_grad;
  }
  const double H1 = finite ? -s.log_density + kinetic(v, inv_mass) : std::numeric_limits<double>::infinity();
  const double dH = H1 - H0;
  const double u = uniform01(rng);
  if (!finite || !std::isfinite(dH) || std::abs(dH) > divergence_threshold) {
    info.divergent = true;
    info.accept_stat = 0.0;
    info.energy = H0;
    return info;
  }
  info.accept_stat = std::min(1.0, std::exp(-dH));
  if (u < info.accept_stat) {
    state = std::move(s);
    info.accepted = true;
    info.energy = H1;
  } else {
    info.energy = H0;
  }
  return info;
}

StepInfo nuts_step(HMCState& state, const Target& target, double eps, int max_depth, const Vector& inv_mass,
                   std::uint64_t seed, Rng& rng, double divergence_threshold) {
  StepInfo info;
  const Vector v0 = draw_momentum(inv_mass, rng);
  const double H0 = -state.log_density + kinetic(v0, inv_mass);
  const double log_u = -H0 + std::log(1.0 - uniform01(rng));  // u ~ U(0, e^{−H0}]
  TreeContext ctx{target, inv_mass, eps, log_u, H0, divergence_threshold, seed, rng};

  HMCState minus = state, plus = state, proposal = state;
  Vector v_minus = v0, v_plus = v0, v_proposal = v0;
  double n = 1.0;
  bool moved = false;
  double alpha = 0.0;
  int n_alpha = 0;
  for (int depth = 0; depth < max_depth; ++depth) {
    const int direction = uniform01(rng) < 0.5 ? -1 : 1;
    Tree t = direction < 0 ? build_tree(minus, v_minus, -1, depth, ctx) : build_tree(plus, v_plus, 1, depth, ctx);
    if (direction < 0) {
      minus = t.minus;
      v_minus = t.v_minus;
    } else {
      plus = t.plus;
      v_plus = t.v_plus;
    }
    info.n_grad += t.n_grad;
    alpha += t.alpha;
    n_alpha += t.n_alpha;
    info.depth = depth + 1;
    if (t.divergent) info.divergent = true;
    if (t.ok && uniform01(rng) < std::min(1.0, t.n / n)) {
      proposal = std::move(t.proposal);
      v_proposal = std::move(t.v_proposal);
      moved = true;
    }
    n += t.n;
    if (!t.ok || !no_u_turn(minus.beta, plus.beta, v_minus, v_plus, inv_mass)) break;
  }
  info.accept_stat = n_alpha > 0 ? alpha / n_alpha : 0.0;
  info.accepted = moved;
  if (moved) state = std::move(proposal);
  info.energy = -state.log_density + kinetic(moved ? v_proposal : v0, inv_mass);
  return info;
}

// ---------------------------------------------------------------- dual averaging

DualAveraging::DualAveraging(double initial_step, double target, double gamma, double t0, double kappa)
    : target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {
  restart(initial_step);
}

void DualAveraging::restart(double initial_step) {
  if (!(initial_step > 0.0)) throw InvalidInput("dual averaging: step must be positive");
  mu_ = std::log(10.0 * initial_step);
  h_bar_ = 0.0;
  log_step_ = std::log(initial_step);
  log_step_bar_ = 0.0;
  m_ = 0;
}

double DualAveraging::update(double accept_stat) {
  ++m_;
  const double m = double(m_);
  const double w = 1.0 / (m + t0_);
  h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - accept_stat);
  log_step_ = mu_ - std::sqrt(m) / gamma_ * h_bar_;
  const double eta = std::pow(m, -kappa_);
  log_step_bar_ = eta * log_step_ + (1.0 - eta) * log_step_bar_;
  return std::exp(log_step_);
}

// ---------------------------------------------------------------- chains

Chain run_sampler(const Target& target, const HMCConfig& cfg, Rng& rng,
                  const std::function<Vector(const Vector&)>& theta_map,
                  const std::function<Vector(Rng&)>& init_sampler) {
  cfg.validate();
  const Index p = target.dim;
  Vector inv_mass = cfg.mass.size() == 0 ? Vector::Ones(p) : Vector(cfg.mass.cwiseInverse());
  if (inv_mass.size() != p) throw ShapeError("mass has the wrong length");

  std::uint64_t seed = rng();
  HMCState state;
  if (cfg.init) {
    if (cfg.init->size() != p) throw ShapeError("init has the wrong length");
    state = evaluate_state(target, *cfg.init, seed);
  } else {
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      const Vector start = init_sampler ? init_sampler(rng) : Vector(Vector::Zero(p));
      TargetEval e = safe_eval(target, start, seed);
      if (finite_eval(e)) {
        state = {start, e.log_density, std::move(e.grad)};
        found = true;
      }
      if (!init_sampler) break;
    }
    if (!found) throw InvalidInput("sampler: no finite initial point found");
  }

  const bool adapt = cfg.adapt_step_size && cfg.n_burnin > 0;
  double eps = cfg.step_size;
  if (adapt && cfg.find_initial_step_size) eps = reasonable_step_size(state, target, eps, inv_mass, seed, rng);
  DualAveraging da(eps, cfg.target_accept);

  const int window_begin = cfg.n_burnin / 4;
  const int window_end = (3 * cfg.n_burnin) / 4;
  std::vector<Vector> window;

  Chain chain;
  chain.algorithm = cfg.algorithm;
  chain.seed = cfg.seed;
  chain.energies.reserve(std::size_t(cfg.n_samples));
  double accept_sum = 0.0;
  for (int it = 0; it < cfg.n_samples; ++it) {
    const std::uint64_t iter_seed = rng();
    if (target.uses_seed) state = evaluate_state(target, state.beta, iter_seed);
    const StepInfo info = cfg.algorithm == SamplerAlgorithm::hmc
                              ? hmc_step(state, target, eps, cfg.n_leapfrog, inv_mass, iter_seed, rng,
                                         cfg.divergence_threshold)
                              : nuts_step(state, target, eps, cfg.n_leapfrog, inv_mass, iter_seed, rng,
                                          cfg.divergence_threshold);
    chain.energies.push_back(info.energy);
    if (info.divergent) ++chain.n_divergent;

    if (it < cfg.n_burnin) {
      if (adapt) {
        eps = da.update(info.accept_stat);
        if (it == cfg.n_burnin - 1) eps = da.final_step();
      }
      if (cfg.adapt_mass && it >= window_begin && it < window_end) window.push_back(state.beta);
      if (cfg.adapt_mass && it == window_end - 1 && window.size() >= 10) {
        Vector mean = Vector::Zero(p), sq = Vector::Zero(p);
        for (const Vector& b : window) mean += b;
        mean /= double(window.size());
        for (const Vector& b : window) sq += (b - mean).cwiseAbs2();
        const double n = double(window.size());
        const Vector var = sq / (n - 1.0);
        inv_mass = (n / (n + 5.0)) * var + Vector::Constant(p, 1e-3 * 5.0 / (n + 5.0));
        if (adapt) {
          eps = reasonable_step_size(state, target, eps, inv_mass, iter_seed, rng);
          da.restart(eps);
        }
      }
      continue;
    }
    accept_sum += info.accept_stat;
    if ((it - cfg.n_burnin + 1) % cfg.thin == 0) {
      chain.beta_draws.push_back(state.beta);
      chain.log_posterior.push_back(state.log_density);
    }
  }
  chain.n_iterations = cfg.n_samples;
  chain.accept_rate = std::clamp(accept_sum / double(cfg.n_samples - cfg.n_burnin), 0.0, 1.0);
  chain.step_size = eps;
  chain.inv_mass = inv_mass;
  if (double(chain.n_divergent) > cfg.max_divergent_fraction * double(cfg.n_samples))
    throw ChainFailure("chain " + std::to_string(cfg.seed) + ": " + std::to_string(chain.n_divergent) + " of " +
                       std::to_string(cfg.n_samples) + " iterations diverged");
  chain.theta_draws.reserve(chain.beta_draws.size());
  for (const Vector& b : chain.beta_draws) chain.theta_draws.push_back(theta_map ? theta_map(b) : b);
  return chain;
}

Chain nuts_run(const Model& model, const HMCConfig& cfg, const LambdaPolicy& policy) {
  Model m = model;
  switch (policy.mode) {
    case LambdaPolicy::Mode::model:
      break;
    case LambdaPolicy::Mode::fixed:
      m = model.with_lambda(policy.value);
      break;
    case LambdaPolicy::Mode::curve: {
      Rng lambda_rng(stream_seed(cfg.seed, streams::lambda_draw));
      m = model.with_lambda(sample_lambda(*policy.curve, policy.a_omega, policy.b_omega, lambda_rng));
      break;
    }
  }
  Rng rng(cfg.seed);
  const BetaPrior prior = m.beta_prior;
  Chain chain = run_sampler(
      model_target(m, cfg.spsa), cfg, rng, [&m](const Vector& b) { return m.theta(b); },
      [prior](Rng& r) { return prior.sample(r); });
  chain.lambda_used = {m.lambda()};
  return chain;
}

std::vector<Chain> run_chains(const Model& model, const HMCConfig& cfg, const LambdaPolicy& policy, int n_chains,
                              std::uint64_t master_seed, unsigned threads) {
  if (n_chains < 1) throw ConfigError("need at least one chain");
  std::vector<Chain> chains(static_cast<std::size_t>(n_chains));
  parallel_for(chains.size(), threads, [&](std::size_t k) {
    HMCConfig c = cfg;
    c.seed = stream_seed(master_seed, streams::chain_base + k);
    chains[k] = nuts_run(model, c, policy);
  });
  return chains;
}

// ---------------------------------------------------------------- diagnostics

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw InvalidInput("effective_sample_size: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw ShapeError("effective_sample_size: chains differ in length");
  if (n < 4) return kNaN;
  const std::size_t m = chains.size();

  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    double s = 0.0;
    for (double x : chains[c]) s += (x - means[c]) * (x - means[c]);
    vars[c] = s / double(n - 1);
  }
  const double W = mean_of(vars);
  const double grand = mean_of(means);
  double B_over_n = 0.0;
  if (m > 1) {
    for (double mu : means) B_over_n += (mu - grand) * (mu - grand);
    B_over_n /= double(m - 1);
  }
  const double var_plus = W * double(n - 1) / double(n) + B_over_n;
  if (!(var_plus > 0.0) || !(W > 0.0)) return kNaN;

  auto rho = [&](std::size_t t) {
    double acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) s += (x[i] - means[c]) * (x[i + t] - means[c]);
      acov += s / double(n);
    }
    acov /= double(m);
    return 1.0 - (W - acov) / var_plus;
  };

  // Geyer's initial monotone sequence on pair sums.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  const double total = double(n * m);
  tau = std::max(tau, 1.0 / std::log10(std::max(total, 10.0)));
  return total / tau;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw InvalidInput("split_rhat: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw ShapeError("split_rhat: chains differ in length");
  const std::size_t half = n / 2;
  if (half < 2) return kNaN;
  std::vector<std::vector<double>> splits;
  for (const auto& c : chains) {
    splits.emplace_back(c.begin(), c.begin() + long(half));
    splits.emplace_back(c.end() - long(half), c.end());
  }
  const double nh = double(half);
  std::vector<double> means, vars;
  for (const auto& s : splits) {
    const double mu = mean_of(s);
    double v = 0.0;
    for (double x : s) v += (x - mu) * (x - mu);
    means.push_back(mu);
    vars.push_back(v / (nh - 1.0));
  }
  const double W = mean_of(vars);
  const double grand = mean_of(means);
  double B = 0.0;
  for (double mu : means) B += (mu - grand) * (mu - grand);
  B *= nh / double(means.size() - 1);
  if (!(W > 0.0)) return kNaN;
  const double var_plus = (nh - 1.0) / nh * W + B / nh;
  return std::sqrt(var_plus / W);
}

Diagnostics diagnostics(const std::vector<Chain>& chains, bool use_theta) {
  if (chains.empty()) throw InvalidInput("diagnostics: no chains");
  const std::size_t n = chains.front().size();
  const Index p = chains.front().dim();
  for (const Chain& c : chains) {
    if (c.size() != n) throw ShapeError("diagnostics: chains differ in length");
    if (c.dim() != p) throw ShapeError("diagnostics: chains differ in dimension");
  }
  Diagnostics d;
  d.n_draws = n * chains.size();
  d.min_ess = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < p; ++j) {
    std::vector<std::vector<double>> cols;
    for (const Chain& c : chains) cols.push_back(column(use_theta ? c.theta_draws : c.beta_draws, j));
    const double ess = effective_sample_size(cols);
    const double rhat = split_rhat(cols);
    d.ess.push_back(ess);
    d.rhat.push_back(rhat);
    d.degenerate.push_back(std::isnan(ess));
    if (!std::isnan(ess)) d.min_ess = std::min(d.min_ess, ess);
    if (!std::isnan(rhat)) d.max_rhat = std::max(d.max_rhat, rhat);
  }
  if (!std::isfinite(d.min_ess)) d.min_ess = kNaN;
  for (const Chain& c : chains) {
    d.accept_rate += c.accept_rate / double(chains.size());
    d.n_divergent += c.n_divergent;
  }
  return d;
}

// ---------------------------------------------------------------- serialization

std::string to_string(SamplerAlgorithm a) { return a == SamplerAlgorithm::hmc ? "hmc" : "nuts"; }

SamplerAlgorithm sampler_algorithm_from_string(const std::string& name) {
  if (name == "hmc") return SamplerAlgorithm::hmc;
  if (name == "nuts") return SamplerAlgorithm::nuts;
  throw ConfigError("unknown sampler algorithm '" + name + "'");
}

void write_chain_csv(std::ostream& out, const Chain& chain) {
  const Index p = chain.dim();
  const Index q = chain.theta_draws.empty() ? 0 : chain.theta_draws.front().size();
  for (Index j = 0; j < p; ++j) out << (j ? "," : "") << "beta_" << j + 1;
  for (Index j = 0; j < q; ++j) out << (p + j ? "," : "") << "theta_" << j + 1;
  out << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < chain.size(); ++k) {
    for (Index j = 0; j < p; ++j) out << (j ? "," : "") << chain.beta_draws[k][j];
    for (Index j = 0; j < q; ++j) out << (p + j ? "," : "") << chain.theta_draws[k][j];
    out << '\n';
  }
}

Chain read_chain_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("chain file: empty");
  Index p = 0, q = 0;
  {
    std::istringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("beta_", 0) == 0) {
        if (q > 0) throw InvalidInput("chain file: beta columns must precede theta columns");
        ++p;
      } else if (col.rfind("theta_", 0) == 0) {
        ++q;
      } else {
        throw InvalidInput("chain file: unexpected column '" + col + "'");
      }
    }
  }
  Chain chain;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream rs(line);
    std::string cell;
    Vector values(p + q);
    Index k = 0;
    while (std::getline(rs, cell, ',')) {
      if (k >= p + q) throw InvalidInput("chain file row " + std::to_string(row) + ": too many columns");
      try {
        values[k++] = std::stod(cell);
      } catch (...) {
        throw InvalidInput("chain file row " + std::to_string(row) + ": bad number '" + cell + "'");
      }
    }
    if (k != p + q) throw InvalidInput("chain file row " + std::to_string(row) + ": too few columns");
    chain.beta_draws.push_back(values.head(p));
    if (q > 0) chain.theta_draws.push_back(values.tail(q));
  }
  return chain;
}

void write_chain_metadata(std::ostream& out, const Chain& chain, const HMCConfig& cfg) {
  out << std::setprecision(17);
  out << "algorithm=" << to_string(chain.algorithm) << '\n';
  out << "seed=" << chain.seed << '\n';
  out << "lambda=";
  for (std::size_t k = 0; k < chain.lambda_used.size(); ++k) out << (k ? " " : "") << chain.lambda_used[k];
  out << '\n';
  out << "accept_rate=" << chain.accept_rate << '\n';
  out << "n_divergent=" << chain.n_divergent << '\n';
  out << "n_iterations=" << chain.n_iterations << '\n';
  out << "n_retained=" << chain.size() << '\n';
  out << "step_size=" << chain.step_size << '\n';
  out << "n_samples=" << cfg.n_samples << '\n';
  out << "n_burnin=" << cfg.n_burnin << '\n';
  out << "thin=" << cfg.thin << '\n';
  out << "n_leapfrog=" << cfg.n_leapfrog << '\n';
  out << "target_accept=" << cfg.target_accept << '\n';
  out << "spsa_epsilon=" << cfg.spsa.epsilon << '\n';
  out << "spsa_m=" << cfg.spsa.m << '\n';
}

}  // namespace proxprior
