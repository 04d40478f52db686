#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "proxprior/common.hpp"

namespace proxprior {

/// The affine set {θ : Aᵀθ = b} with A of size p×m. Construction checks
/// that b lies in the range of Aᵀ and precomputes the projector
/// P_{A⊥} = I − A(AᵀA)⁻Aᵀ and the minimum-norm point A(AᵀA)⁻b.
class AffineConstraint {
 public:
  static constexpr double kFeasibilityTol = 1e-8;
  static constexpr double kRankTol = 1e-10;

  AffineConstraint(Matrix A, Vector b);

  /// No constraint at all in ℝ^p (m = 0).
  static AffineConstraint unconstrained(Index p);

  /// The single hyperplane {θ : aᵀθ = offset}.
  static AffineConstraint hyperplane(const Vector& a, double offset);

  Index dim() const { return A_.rows(); }
  Index n_constraints() const { return A_.cols(); }
  Index rank() const { return rank_; }
  const Matrix& A() const { return A_; }
  const Vector& b() const { return b_; }

  /// θ = β − A(AᵀA)⁻(Aᵀβ − b).
  Vector project(const Vector& beta) const;

  /// Aᵀθ − b.
  Vector residual(const Vector& theta) const;

  /// I − A(AᵀA)⁻Aᵀ, the (constant) Jacobian of the projection.
  const Matrix& null_projector() const { return null_projector_; }

 private:
  Matrix A_;
  Vector b_;
  Matrix null_projector_;
  Vector min_norm_point_;
  Index rank_ = 0;
};

/// A closed convex set given through its Euclidean projector.
class ConvexSet {
 public:
  using Projector = std::function<Vector(const Vector&)>;

  static ConvexSet whole_space(Index p);
  static ConvexSet affine(AffineConstraint constraint);
  /// The singleton {c}.
  static ConvexSet point(const Vector& c);
  static ConvexSet nonnegative_orthant(Index p);
  /// Arbitrary projector; no analytic Jacobian is available.
  static ConvexSet custom(Index p, Projector projector, std::string name);

  Index dim() const { return dim_; }
  const std::string& name() const { return name_; }

  Vector project(const Vector& beta) const;
  double distance(const Vector& beta) const { return (beta - project(beta)).norm(); }

  /// Jacobian of the projection at β when known in closed form.
  std::optional<Matrix> projection_jacobian(const Vector& beta) const;

  /// Present for affine sets; lets callers reach A and b.
  const AffineConstraint* affine_constraint() const { return affine_.get(); }

 private:
  enum class Kind { whole_space, affine, orthant, custom };

  ConvexSet(Kind kind, Index dim, std::string name) : kind_(kind), dim_(dim), name_(std::move(name)) {}

  Kind kind_;
  Index dim_;
  std::string name_;
  std::shared_ptr<const AffineConstraint> affine_;
  Projector custom_;
};

}  // namespace proxprior
