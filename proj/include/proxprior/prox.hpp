#pragma once

// Closed-form proximal kernels prox_{λg}(β) = argmin_z λ g(z) + ½‖z − β‖².
// All kernels take Eigen expressions and return plain objects of the same
// scalar type.

#include <Eigen/SVD>

#include <cmath>

#include "proxprior/common.hpp"

namespace proxprior {

namespace detail {

template <typename T>
void check_lambda(T lambda) {
  if (!(lambda >= T(0)) || !std::isfinite(static_cast<double>(lambda)))
    throw InvalidInput("lambda must be finite and non-negative");
}

}  // namespace detail

/// Elementwise sign(β)·max(|β| − λ, 0), the prox of the ℓ1 norm.
template <typename Derived>
typename Derived::PlainObject soft_threshold(const Eigen::MatrixBase<Derived>& beta,
                                             typename Derived::Scalar lambda) {
  using T = typename Derived::Scalar;
  detail::check_lambda(lambda);
  require_finite(beta, "soft_threshold");
  return beta.unaryExpr([lambda](T b) {
    const T shrunk = std::abs(b) - lambda;
    return shrunk > T(0) ? std::copysign(shrunk, b) : T(0);
  });
}

/// Prox of g(z) = ½‖z‖²: β / (1 + λ).
template <typename Derived>
typename Derived::PlainObject ridge_shrink(const Eigen::MatrixBase<Derived>& beta,
                                           typename Derived::Scalar lambda) {
  using T = typename Derived::Scalar;
  detail::check_lambda(lambda);
  require_finite(beta, "ridge_shrink");
  return beta / (T(1) + lambda);
}

/// Prox of the (2,1) norm Σᵢ‖Bᵢ‖₂: every row is scaled by max(1 − λ/‖Bᵢ‖, 0).
template <typename Derived>
typename Derived::PlainObject group_row_shrink(const Eigen::MatrixBase<Derived>& B,
                                               typename Derived::Scalar lambda) {
  using T = typename Derived::Scalar;
  detail::check_lambda(lambda);
  require_finite(B, "group_row_shrink");
  typename Derived::PlainObject out = B;
  for (Index i = 0; i < out.rows(); ++i) {
    const T norm = out.row(i).norm();
    if (norm <= lambda) {
      out.row(i).setZero();
    } else {
      out.row(i) *= (T(1) - lambda / norm);
    }
  }
  return out;
}

/// Singular value soft-thresholding, the prox of the nuclear norm, for
/// general rectangular B.
template <typename Derived>
typename Derived::PlainObject nuclear_shrink(const Eigen::MatrixBase<Derived>& B,
                                             typename Derived::Scalar lambda) {
  using T = typename Derived::Scalar;
  using PlainMatrix = MatrixX<T>;
  detail::check_lambda(lambda);
  require_finite(B, "nuclear_shrink");
  if (lambda == T(0)) return B;
  Eigen::JacobiSVD<PlainMatrix> svd(PlainMatrix(B), Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("nuclear_shrink: SVD did not converge (" +
                         std::to_string(B.rows()) + "x" + std::to_string(B.cols()) + ")");
  const VectorX<T> shrunk = (svd.singularValues().array() - lambda).max(T(0)).matrix();
  return svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();
}

/// Prox of λ·dist_C: points within λ of C land on P_C(β); the rest move a
/// distance λ towards C. `project` must be the Euclidean projector onto C.
template <typename Derived, typename Projector>
typename Derived::PlainObject set_expansion(const Eigen::MatrixBase<Derived>& beta,
                                            const Projector& project,
                                            typename Derived::Scalar lambda) {
  using T = typename Derived::Scalar;
  using Plain = typename Derived::PlainObject;
  detail::check_lambda(lambda);
  require_finite(beta, "set_expansion");
  if (lambda == T(0)) return beta;
  const Plain projected = project(beta.eval());
  const T dist = (projected - beta).norm();
  if (dist < lambda) return projected;
  return beta + (lambda / dist) * (projected - beta);
}

}  // namespace proxprior
