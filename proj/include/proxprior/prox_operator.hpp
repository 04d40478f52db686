#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "proxprior/admm.hpp"
#include "proxprior/common.hpp"
#include "proxprior/convex_set.hpp"

namespace proxprior {

enum class ProxKind {
  identity,
  ridge,  // g(z) = ½‖z‖²
  soft_threshold,
  affine_projection,
  nuclear,
  group_row,
  set_expansion,
  fused_l1,
  flow,
};

std::string to_string(ProxKind kind);
ProxKind prox_kind_from_string(const std::string& name);

/// How a Jacobian of the map is obtained for gradient computations.
enum class JacobianMethod {
  analytic,    // closed form
  active_set,  // exact projector built from the ADMM solution's active set
  spsa,        // simultaneous perturbation estimate
};

/// Large finite stand-in for +∞ so objective comparisons stay total.
inline constexpr double kInfeasibleObjective = 1e300;

/// A proximal map prox_{λg} acting on flat vectors. Matrix-valued kinds
/// (nuclear, group_row) read the vector as a column-major rows×cols matrix.
/// Immutable; copies share parameters.
class ProxOperator {
 public:
  static ProxOperator identity(Index p);
  static ProxOperator ridge(Index p, double lambda);
  static ProxOperator soft_threshold(Index p, double lambda);
  /// λ-invariant: g is the indicator of {θ : Aᵀθ = b}.
  static ProxOperator affine_projection(AffineConstraint constraint);
  static ProxOperator nuclear(Index rows, Index cols, double lambda);
  /// With `nonnegative`, g also carries the indicator of the nonnegative
  /// orthant; each row is clipped at zero and then shrunk.
  static ProxOperator group_row(Index rows, Index cols, double lambda, bool nonnegative = false);
  static ProxOperator set_expansion(ConvexSet set, double lambda);
  static ProxOperator fused_l1(Matrix D, double lambda, ADMMConfig cfg = {});
  /// λ₁‖z‖₁ + λ₂‖Cz‖₁ on lower-triangular edge vectors of an n-node network.
  /// `lambda()` is a common scale (1 here); with_lambda(s) gives sλ₁, sλ₂.
  static ProxOperator flow(Index n_nodes, double lambda1, double lambda2, ADMMConfig cfg = {});

  ProxKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  double lambda() const { return lambda_; }
  /// Effective ℓ1 and ℓ1∘D weights for ADMM-backed kinds.
  double lambda1() const { return lambda_ * weight1_; }
  double lambda2() const { return lambda_ * weight2_; }
  bool nonnegative() const { return nonnegative_; }
  const ConvexSet* set() const { return set_.get(); }
  const AffineConstraint* constraint() const { return constraint_.get(); }
  const L1SplitSolver* solver() const { return solver_.get(); }

  /// Same g at a different scale.
  ProxOperator with_lambda(double lambda) const;

  Vector operator()(const Vector& beta) const { return evaluate(beta); }
  Vector evaluate(const Vector& beta) const;

  /// g(z) without the λ factor; kInfeasibleObjective outside dom g.
  double penalty(const Vector& z) const;
  /// λ·g(z) + ½‖z − β‖².
  double objective(const Vector& z, const Vector& beta) const;

  /// lim_{λ→∞} prox_{λg}(β). Throws DegenerateOperator for λ-invariant kinds.
  Vector limit_point(const Vector& beta) const;

  JacobianMethod jacobian_method() const { return jacobian_method_; }
  /// Only fused_l1 and flow accept active_set; analytic requires a closed form.
  ProxOperator with_jacobian_method(JacobianMethod method) const;
  /// True when jacobian() is available (closed form or active set).
  bool has_exact_jacobian() const;
  /// ∂prox(β)/∂β with J(i, j) = ∂θ_i/∂β_j, from the closed form or the
  /// active set. Throws InvalidInput when neither exists.
  Matrix jacobian(const Vector& beta) const;
  /// prox(β) and jacobian(β) from a single solve.
  std::pair<Vector, Matrix> evaluate_with_jacobian(const Vector& beta) const;

 private:
  ProxOperator(ProxKind kind, Index dim, double lambda) : kind_(kind), dim_(dim), rows_(dim), cols_(1), lambda_(lambda) {}

  ProxKind kind_;
  Index dim_;
  Index rows_;
  Index cols_;
  double lambda_;
  double weight1_ = 0.0;
  double weight2_ = 0.0;
  bool nonnegative_ = false;
  JacobianMethod jacobian_method_ = JacobianMethod::analytic;
  std::shared_ptr<const ConvexSet> set_;
  std::shared_ptr<const AffineConstraint> constraint_;
  std::shared_ptr<const L1SplitSolver> solver_;
};

/// λ·g(z) + ½‖z − β‖² for `op`.
inline double prox_objective(const Vector& z, const Vector& beta, const ProxOperator& op) {
  return op.objective(z, beta);
}

}  // namespace proxprior
