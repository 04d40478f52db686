#include "proxprior/convex_set.hpp"

#include <Eigen/Eigenvalues>

namespace proxprior {

AffineConstraint::AffineConstraint(Matrix A, Vector b) : A_(std::move(A)), b_(std::move(b)) {
  require_finite(A_, "AffineConstraint A");
  require_finite(b_, "AffineConstraint b");
  if (A_.cols() != b_.size())
    throw ShapeError("AffineConstraint: A has " + std::to_string(A_.cols()) +
                     " columns but b has length " + std::to_string(b_.size()));
  const Index p = A_.rows();
  null_projector_ = Matrix::Identity(p, p);
  min_norm_point_ = Vector::Zero(p);
  if (A_.cols() == 0) return;

  // Moore-Penrose inverse of AᵀA, dropping directions with eigenvalue below
  // kRankTol relative to the largest.
  const Matrix gram = A_.transpose() * A_;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("AffineConstraint: eigensolver failed");
  const Vector& values = eig.eigenvalues();
  const double cutoff = kRankTol * values.cwiseAbs().maxCoeff();
  Vector inv_values = Vector::Zero(values.size());
  for (Index i = 0; i < values.size(); ++i) {
    if (values[i] > cutoff && values[i] > 0.0) {
      inv_values[i] = 1.0 / values[i];
      ++rank_;
    }
  }
  const Matrix gram_pinv = eig.eigenvectors() * inv_values.asDiagonal() * eig.eigenvectors().transpose();

  null_projector_ -= A_ * gram_pinv * A_.transpose();
  min_norm_point_ = A_ * (gram_pinv * b_);

  const double residual = (A_.transpose() * min_norm_point_ - b_).norm();
  if (residual > kFeasibilityTol * std::max(1.0, b_.norm()))
    throw InfeasibleConstraint("AffineConstraint: b is not in the column space of A^T (residual " +
                               std::to_string(residual) + ")");
}

AffineConstraint AffineConstraint::unconstrained(Index p) {
  return AffineConstraint(Matrix(p, 0), Vector(0));
}

AffineConstraint AffineConstraint::hyperplane(const Vector& a, double offset) {
  return AffineConstraint(Matrix(a), Vector::Constant(1, offset));
}

Vector AffineConstraint::project(const Vector& beta) const {
  if (beta.size() != dim()) throw ShapeError("AffineConstraint::project: dimension mismatch");
  return null_projector_ * beta + min_norm_point_;
}

Vector AffineConstraint::residual(const Vector& theta) const {
  return A_.transpose() * theta - b_;
}

ConvexSet ConvexSet::whole_space(Index p) { return ConvexSet(Kind::whole_space, p, "whole_space"); }

ConvexSet ConvexSet::affine(AffineConstraint constraint) {
  const Index p = constraint.dim();
  ConvexSet set(Kind::affine, p, "affine");
  set.affine_ = std::make_shared<const AffineConstraint>(std::move(constraint));
  return set;
}

ConvexSet ConvexSet::point(const Vector& c) {
  ConvexSet set = affine(AffineConstraint(Matrix::Identity(c.size(), c.size()), c));
  set.name_ = "point";
  return set;
}

ConvexSet ConvexSet::nonnegative_orthant(Index p) { return ConvexSet(Kind::orthant, p, "nonnegative_orthant"); }

ConvexSet ConvexSet::custom(Index p, Projector projector, std::string name) {
  ConvexSet set(Kind::custom, p, std::move(name));
  set.custom_ = std::move(projector);
  return set;
}

Vector ConvexSet::project(const Vector& beta) const {
  if (beta.size() != dim_) throw ShapeError("ConvexSet::project: dimension mismatch");
  switch (kind_) {
    case Kind::whole_space:
      return beta;
    case Kind::affine:
      return affine_->project(beta);
    case Kind::orthant:
      return beta.cwiseMax(0.0);
    case Kind::custom:
      return custom_(beta);
  }
  return beta;
}

std::optional<Matrix> ConvexSet::projection_jacobian(const Vector& beta) const {
  switch (kind_) {
    case Kind::whole_space:
      return Matrix::Identity(dim_, dim_);
    case Kind::affine:
      return affine_->null_projector();
    case Kind::orthant: {
      Vector mask = (beta.array() > 0.0).cast<double>();
      return Matrix(mask.asDiagonal());
    }
    case Kind::custom:
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace proxprior
