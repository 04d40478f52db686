#pragma once

// Likelihood + proximal prior bundles. The posterior is sampled in β-space,
//
//   log Π(β | y) = log L(y; prox(β)) + log Π⁰_β(β) + const,
//
// and θ = prox(β) is recovered from each draw.

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "proxprior/prox_operator.hpp"
#include "proxprior/rng.hpp"

namespace proxprior {

/// A named contiguous slice of the flat parameter vector, read as a
/// column-major rows×cols matrix.
struct ParameterBlock {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 1;
  Index size() const { return rows * cols; }
};

/// Block-separable prox: each block of the flat vector goes through its own
/// operator. Blocks flagged `tunable` are rescaled by with_lambda.
class BlockProx {
 public:
  BlockProx() = default;
  explicit BlockProx(ProxOperator op, std::string name = "theta");

  void add(std::string name, ProxOperator op, bool tunable = true, Index rows = -1, Index cols = -1);

  Index dim() const { return dim_; }
  std::size_t n_blocks() const { return ops_.size(); }
  const std::vector<ParameterBlock>& layout() const { return layout_; }
  const std::vector<ProxOperator>& operators() const { return ops_; }
  const ProxOperator& op(std::size_t block) const { return ops_.at(block); }
  bool tunable(std::size_t block) const { return tunable_.at(block); }
  /// Index of the block called `name`; throws InvalidInput if absent.
  std::size_t block_index(const std::string& name) const;

  /// λ of the first tunable block (0 when there is none).
  double lambda() const;
  BlockProx with_lambda(double lambda) const;

  Vector evaluate(const Vector& beta) const;
  Vector operator()(const Vector& beta) const { return evaluate(beta); }

 private:
  std::vector<ProxOperator> ops_;
  std::vector<ParameterBlock> layout_;
  std::vector<bool> tunable_;
  Index dim_ = 0;
};

/// Gaussian prior on β, with optional coordinates that instead carry
/// log σ² for σ² ~ Inverse-Gamma(a, b): log p(s) = −a·s − b·e^{−s} + const.
class BetaPrior {
 public:
  struct LogInverseGamma {
    Index index;
    double shape;
    double scale;
  };

  static BetaPrior standard_normal(Index p);
  static BetaPrior isotropic(Index p, double sd);
  static BetaPrior diagonal(Vector mean, Vector variance);
  static BetaPrior gaussian(Vector mean, Matrix covariance);

  /// Replace coordinate `index` by a log-inverse-gamma term.
  BetaPrior with_log_inverse_gamma(Index index, double shape, double scale) const;

  Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  /// Diagonal of Σ.
  Vector variance() const;
  bool is_diagonal() const { return !chol_; }
  const std::vector<LogInverseGamma>& log_inverse_gamma() const { return inv_gamma_; }

  double log_density(const Vector& beta) const;
  Vector grad_log_density(const Vector& beta) const;
  /// Exact draw; log-inverse-gamma coordinates get log of an IG draw.
  Vector sample(Rng& rng) const;

 private:
  bool is_inv_gamma(Index i) const;

  Vector mean_;
  Vector variance_;  // diagonal case
  std::shared_ptr<const Eigen::LLT<Matrix>> chol_;
  std::vector<LogInverseGamma> inv_gamma_;
};

/// Shape of a flow-factor model's parameter vector: d flow blocks of E edges,
/// ρ as d×T, then log σ².
struct FlowLayout {
  Index n_nodes = 0;
  Index n_edges = 0;
  Index n_factors = 0;  // d
  Index n_times = 0;    // T
  Index loading_offset() const { return n_factors * n_edges; }
  Index log_sigma2_index() const { return loading_offset() + n_factors * n_times; }
  Index dim() const { return log_sigma2_index() + 1; }
};

struct Model {
  std::string name;
  std::function<double(const Vector&)> log_lik;        // θ ↦ log L(y; θ)
  std::function<Vector(const Vector&)> grad_log_lik;   // θ ↦ ∇_θ log L
  BlockProx prox;
  BetaPrior beta_prior;
  std::optional<FlowLayout> flow;

  Index dim() const { return prox.dim(); }
  double lambda() const { return prox.lambda(); }
  Model with_lambda(double lambda) const;

  Vector theta(const Vector& beta) const { return prox(beta); }
  double log_posterior(const Vector& beta) const;
  /// Checks that likelihood, prox and prior agree on the dimension.
  void validate() const;
};

/// n×p observations yᵢ ~ N(θ, σ²I); prox = set_expansion(C, λ); β ~ N(0, prior_sd² I).
Model make_gaussian_mean_model(const Matrix& Y, double sigma, ConvexSet C, double lambda, double prior_sd = 3.0);

/// y ~ N(Xθ, σ²I); prox = soft threshold at λ; β ~ N(0, I).
Model make_sparse_regression_model(const Matrix& X, const Vector& y, double sigma, double lambda = 1.0);

/// n×p observations yᵢ ~ N(θ, σ²I) with θ restricted to {Aᵀθ = b}; β ~ N(0, prior_sd² I).
/// The constraint may have zero columns (no restriction).
Model make_affine_mean_model(const Matrix& Y, AffineConstraint constraint, double sigma = 1.0,
                             double prior_sd = 1.0);

struct FlowModelOptions {
  double beta_sd = 1.0;        // prior sd of the flow pre-images
  double rho_sd = 1.0;         // prior sd of the loading pre-images
  double sigma2_shape = 2.0;   // Inverse-Gamma on σ²_E
  double sigma2_scale = 0.01;
  bool nonnegative_loadings = false;
  JacobianMethod flow_jacobian = JacobianMethod::active_set;
};

/// Y holds T square n×n matrices; only entries i ≤ j enter the likelihood.
Model make_flow_factor_model(const std::vector<Matrix>& Y, Index d, double lambda1, double lambda2,
                             double lambda_load, const ADMMConfig& cfg = {}, const FlowModelOptions& options = {});

/// Upper-inclusive entries (i ≤ j, row-major over i) of a square matrix.
Vector upper_inclusive(const Matrix& Y);
/// Linear map from a lower-triangular edge vector to the upper-inclusive
/// entries of its flow matrix (diagonal = net flow Cz, F(i, j) = −z_(j,i)).
Matrix flow_observation_matrix(Index n_nodes);

/// Decoded flow-factor parameters.
struct FlowFactorState {
  std::vector<Vector> beta_factors;  // β^(l)
  Matrix rho;                        // d×T
  double log_sigma2 = 0.0;
  std::vector<FlowNetwork> factors;  // F^(l) = prox_flow(β^(l))
  Matrix gamma;                      // prox of ρ
};
FlowFactorState decode_flow_state(const Model& model, const Vector& beta);
/// Same split applied to an already-proxed θ vector.
FlowFactorState decode_flow_theta(const FlowLayout& layout, const Vector& theta);
/// Σ_l γ_l^(t) F^(l) for each t.
std::vector<Matrix> flow_reconstruction(const FlowFactorState& state);

/// Synthetic feasible-flow data: k factors, each a random simple cycle of
/// length cycle_len carrying one positive flow value, random positive loadings,
/// plus Gaussian noise of sd `noise_sd` on every entry.
struct SyntheticFlowData {
  std::vector<Matrix> Y;             // noisy observations
  std::vector<Matrix> mean;          // noiseless Σ_l γ F
  std::vector<FlowNetwork> factors;  // true F^(l)
  Matrix loadings;                   // k×T
};
SyntheticFlowData make_synthetic_flows(Index n_nodes, Index T, Index k, double noise_sd, Rng& rng,
                                       Index cycle_len = 4, double flow_scale = 1.0);

struct FlowTable {
  std::vector<Matrix> Y;
  bool raw = false;                   // i < j rows were present
  std::vector<std::string> warnings;  // skipped rows
};

/// Reads rows "t i j flow" (1-based, whitespace or comma separated, '#'
/// comments, optional header line). With only i > j rows the input is a
/// feasible lower triangle: F(j, i) = −F(i, j) and a missing diagonal is the
/// net flow. Any i < j row switches to raw mode, where the off-diagonal part
/// is antisymmetrized as (Y − Yᵀ)/2 and the diagonal is kept as given.
/// Sizes are inferred when n_nodes / n_times are 0. Malformed rows throw
/// InvalidInput; rows with a non-integer node index are skipped with a warning.
FlowTable read_flow_table(std::istream& in, Index n_nodes = 0, Index n_times = 0);
void write_flow_table(std::ostream& out, const std::vector<Matrix>& Y);

}  // namespace proxprior
