#pragma once

// β-space gradients through the proximal map:
//
//   ∇_β log Π(β | y) = (∂prox/∂β)ᵀ ∇_θ log L(y; θ) + ∇_β log Π⁰_β(β).
//
// The Jacobian is the closed form or active-set projector when the operator
// has one, and an SPSA estimate otherwise.

#include <cstdint>

#include "proxprior/models.hpp"

namespace proxprior {

enum class SPSADesign {
  /// Δ^(k) with iid ±1 entries.
  independent,
  /// Rows of a Sylvester–Hadamard matrix on randomly chosen, randomly signed
  /// columns. Uses N = 2^⌈log₂ max(m, p)⌉ perturbations so that
  /// Σ_k Δ^(k) Δ^(k)ᵀ = N·I, which makes the estimate exact for linear maps.
  orthogonal,
};

struct SPSAConfig {
  double epsilon = 1e-7;
  Index m = 20;
  std::uint64_t seed = 0;
  SPSADesign design = SPSADesign::independent;

  void validate() const;
};

/// Perturbation directions, one per row.
Matrix spsa_perturbations(Index p, const SPSAConfig& cfg);

/// J(i, j) ≈ ∂θ_i/∂β_j with column j = mean_k {prox(β + εΔ^(k)) − prox(β)} / (εΔ^(k)_j).
/// prox(β) is evaluated once.
Matrix spsa_jacobian(const ProxOperator& op, const Vector& beta, const SPSAConfig& cfg);
/// Same, reusing a known θ = prox(β).
Matrix spsa_jacobian(const ProxOperator& op, const Vector& beta, const Vector& theta, const SPSAConfig& cfg);

/// Central differences, one coordinate at a time (2p prox calls).
Matrix finite_diff_jacobian(const ProxOperator& op, const Vector& beta, double h = 1e-6);

/// Power-iteration estimate of the spectral norm.
double spectral_norm(const Matrix& J, int iterations = 200);

struct PosteriorPoint {
  Vector theta;
  double log_lik = 0.0;
  double log_prior = 0.0;
  Vector grad;
  double log_posterior() const { return log_lik + log_prior; }
};

/// Log posterior and its gradient at β. Blocks without an exact Jacobian
/// use SPSA, each with its own stream derived from spsa.seed.
PosteriorPoint log_posterior_and_grad(const Model& model, const Vector& beta, const SPSAConfig& spsa = {});

Vector log_posterior_grad(const Model& model, const Vector& beta, const SPSAConfig& spsa = {});

/// Central-difference gradient of model.log_posterior; test oracle.
Vector finite_diff_log_posterior_grad(const Model& model, const Vector& beta, double h = 1e-6);

}  // namespace proxprior
