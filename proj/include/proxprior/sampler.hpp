#pragma once

// Hamiltonian Monte Carlo in β-space: leapfrog integration with a
// Metropolis–Hastings correction, and the No-U-Turn sampler with
// dual-averaging step-size adaptation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "proxprior/calibration.hpp"
#include "proxprior/gradient.hpp"

namespace proxprior {

struct TargetEval {
  double log_density = 0.0;
  Vector grad;
};

/// A log density with gradient. `eval` receives a per-iteration seed, which
/// only matters when `uses_seed` (SPSA gradients); within one iteration the
/// gradient is therefore a fixed deterministic function of β.
struct Target {
  Index dim = 0;
  std::function<TargetEval(const Vector& beta, std::uint64_t seed)> eval;
  bool uses_seed = false;
};

Target model_target(const Model& model, const SPSAConfig& spsa = {});

/// Target from plain log-density and gradient functions.
Target make_target(Index dim, std::function<double(const Vector&)> log_density,
                   std::function<Vector(const Vector&)> grad);

enum class SamplerAlgorithm { hmc, nuts };

struct HMCConfig {
  SamplerAlgorithm algorithm = SamplerAlgorithm::nuts;
  double step_size = 0.1;  // initial ε; refined by dual averaging when adapting
  int n_leapfrog = 10;     // L for plain HMC, maximum tree depth for NUTS
  Vector mass;             // diagonal of M; empty means identity
  int n_samples = 2000;    // total iterations, burn-in included
  int n_burnin = 1000;
  int thin = 1;
  double target_accept = 0.8;
  bool adapt_step_size = true;
  bool adapt_mass = false;            // diagonal M⁻¹ from burn-in draws
  bool find_initial_step_size = true;  // doubling/halving heuristic before adapting
  double divergence_threshold = 1000.0;
  double max_divergent_fraction = 0.5;
  std::uint64_t seed = 0;
  SPSAConfig spsa;
  std::optional<Vector> init;  // default: a draw from the β prior

  void validate() const;
  /// ⌊(n_samples − n_burnin) / thin⌋.
  int n_retained() const { return (n_samples - n_burnin) / thin; }
};

/// How the prox scale is chosen for a chain.
struct LambdaPolicy {
  enum class Mode { model, fixed, curve };
  Mode mode = Mode::model;  // keep the model's own λ
  double value = 0.0;
  std::optional<DeformationCurve> curve;
  double a_omega = 1.0;
  double b_omega = 1.0;

  static LambdaPolicy keep() { return {}; }
  static LambdaPolicy fixed(double lambda);
  static LambdaPolicy from_curve(DeformationCurve curve, double a_omega = 1.0, double b_omega = 1.0);
};

struct LeapfrogResult {
  Vector beta;
  Vector v;
  bool finite = true;
};

/// L steps of v ← v + (ε/2)∇, β ← β + εM⁻¹v, v ← v + (ε/2)∇. A non-finite
/// gradient or position stops the trajectory with finite = false.
LeapfrogResult leapfrog(const Vector& beta, const Vector& v, const std::function<Vector(const Vector&)>& grad,
                        double eps, int L, const Vector& inv_mass);

struct HMCState {
  Vector beta;
  double log_density = 0.0;
  Vector grad;
};

struct StepInfo {
  bool accepted = false;
  bool divergent = false;
  double accept_stat = 0.0;  // min(1, e^{−ΔH}) or its NUTS tree average
  double energy = 0.0;       // H at the returned state with the drawn momentum
  int n_grad = 0;
  int depth = 0;             // NUTS tree depth
};

/// One HMC transition: v ~ N(0, M), L leapfrog steps, MH accept/reject.
/// `state` is replaced in place; its gradient must match `seed`.
StepInfo hmc_step(HMCState& state, const Target& target, double eps, int L, const Vector& inv_mass,
                  std::uint64_t seed, Rng& rng, double divergence_threshold = 1000.0);

/// One NUTS transition (slice variable, doubling tree up to max_depth).
StepInfo nuts_step(HMCState& state, const Target& target, double eps, int max_depth, const Vector& inv_mass,
                   std::uint64_t seed, Rng& rng, double divergence_threshold = 1000.0);

/// Nesterov dual averaging of log ε towards a target acceptance statistic.
class DualAveraging {
 public:
  explicit DualAveraging(double initial_step, double target = 0.8, double gamma = 0.05, double t0 = 10.0,
                         double kappa = 0.75);
  /// Records one acceptance statistic and returns the next step size.
  double update(double accept_stat);
  double step() const { return std::exp(log_step_); }
  /// The averaged step to use after adaptation.
  double final_step() const { return std::exp(log_step_bar_); }
  void restart(double initial_step);

 private:
  double target_, gamma_, t0_, kappa_;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_step_ = 0.0;
  double log_step_bar_ = 0.0;
  int m_ = 0;
};

struct Chain {
  std::vector<Vector> beta_draws;
  std::vector<Vector> theta_draws;
  std::vector<double> log_posterior;  // per retained draw
  std::vector<double> energies;       // H per iteration, burn-in included
  double accept_rate = 0.0;           // mean acceptance statistic after burn-in
  int n_divergent = 0;                // over all iterations
  int n_iterations = 0;
  double step_size = 0.0;             // after adaptation
  Vector inv_mass;
  std::uint64_t seed = 0;
  std::vector<double> lambda_used;
  SamplerAlgorithm algorithm = SamplerAlgorithm::nuts;

  std::size_t size() const { return beta_draws.size(); }
  Index dim() const { return beta_draws.empty() ? 0 : beta_draws.front().size(); }
};

/// Samples `target`; θ draws are produced from the retained β draws by
/// `theta_map` (identity when empty). Throws ChainFailure when more than
/// max_divergent_fraction of iterations diverge.
Chain run_sampler(const Target& target, const HMCConfig& cfg, Rng& rng,
                  const std::function<Vector(const Vector&)>& theta_map = {},
                  const std::function<Vector(Rng&)>& init_sampler = {});

/// Full run on a model. λ follows `policy` (drawn once per chain from the
/// curve when given). Chain seed is cfg.seed.
Chain nuts_run(const Model& model, const HMCConfig& cfg, const LambdaPolicy& policy = {});

/// Independent chains with seeds stream_seed(master_seed, chain_base + k),
/// run on up to `threads` workers.
std::vector<Chain> run_chains(const Model& model, const HMCConfig& cfg, const LambdaPolicy& policy, int n_chains,
                              std::uint64_t master_seed, unsigned threads = 1);

struct Diagnostics {
  std::vector<double> ess;    // per β coordinate; NaN when degenerate
  std::vector<double> rhat;   // split R-hat per β coordinate; NaN when degenerate
  std::vector<bool> degenerate;  // zero variance
  double min_ess = 0.0;       // over non-degenerate coordinates
  double max_rhat = 0.0;
  std::size_t n_draws = 0;    // total retained across chains
  double accept_rate = 0.0;   // mean over chains
  int n_divergent = 0;
};

/// ESS of a set of equal-length scalar sequences (initial monotone sequence
/// estimator on the multi-chain autocorrelation). NaN when the variance is 0.
double effective_sample_size(const std::vector<std::vector<double>>& chains);
/// Split R-hat; NaN when every split has zero variance.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Uses the β draws; `use_theta` switches to θ.
Diagnostics diagnostics(const std::vector<Chain>& chains, bool use_theta = false);

/// CSV with header beta_1..beta_p,theta_1..theta_p; 17 significant digits.
void write_chain_csv(std::ostream& out, const Chain& chain);
Chain read_chain_csv(std::istream& in);
/// key=value sidecar (seed, λ, acceptance, step size, ...).
void write_chain_metadata(std::ostream& out, const Chain& chain, const HMCConfig& cfg);

std::string to_string(SamplerAlgorithm a);
SamplerAlgorithm sampler_algorithm_from_string(const std::string& name);

}  // namespace proxprior
