#include "proxprior/prox_operator.hpp"

#include <Eigen/SVD>

#include "proxprior/prox.hpp"

namespace proxprior {

namespace {

using MatrixMap = Eigen::Map<const Matrix>;

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and non-negative");
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix null_space_projector(const Matrix& D) {
  const Index p = D.cols();
  if (D.rows() == 0) return Matrix::Identity(p, p);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(D);
  return Matrix::Identity(p, p) - cod.solve(D);
}

}  // namespace

std::string to_string(ProxKind kind) {
  switch (kind) {
    case ProxKind::identity: return "identity";
    case ProxKind::ridge: return "ridge";
    case ProxKind::soft_threshold: return "soft_threshold";
    case ProxKind::affine_projection: return "affine_projection";
    case ProxKind::nuclear: return "nuclear";
    case ProxKind::group_row: return "group_row";
    case ProxKind::set_expansion: return "set_expansion";
    case ProxKind::fused_l1: return "fused_l1";
    case ProxKind::flow: return "flow";
  }
  return "unknown";
}

ProxKind prox_kind_from_string(const std::string& name) {
  for (ProxKind k : {ProxKind::identity, ProxKind::ridge, ProxKind::soft_threshold, ProxKind::affine_projection,
                     ProxKind::nuclear, ProxKind::group_row, ProxKind::set_expansion, ProxKind::fused_l1,
                     ProxKind::flow})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown proximal operator kind '" + name + "'");
}

ProxOperator ProxOperator::identity(Index p) { return ProxOperator(ProxKind::identity, p, 0.0); }

ProxOperator ProxOperator::ridge(Index p, double lambda) {
  check_lambda(lambda);
  return ProxOperator(ProxKind::ridge, p, lambda);
}

ProxOperator ProxOperator::soft_threshold(Index p, double lambda) {
  check_lambda(lambda);
  return ProxOperator(ProxKind::soft_threshold, p, lambda);
}

ProxOperator ProxOperator::affine_projection(AffineConstraint constraint) {
  ProxOperator op(ProxKind::affine_projection, constraint.dim(), 1.0);
  op.constraint_ = std::make_shared<const AffineConstraint>(std::move(constraint));
  return op;
}

ProxOperator ProxOperator::nuclear(Index rows, Index cols, double lambda) {
  check_lambda(lambda);
  ProxOperator op(ProxKind::nuclear, rows * cols, lambda);
  op.rows_ = rows;
  op.cols_ = cols;
  op.jacobian_method_ = JacobianMethod::spsa;
  return op;
}

ProxOperator ProxOperator::group_row(Index rows, Index cols, double lambda, bool nonnegative) {
  check_lambda(lambda);
  ProxOperator op(ProxKind::group_row, rows * cols, lambda);
  op.rows_ = rows;
  op.cols_ = cols;
  op.nonnegative_ = nonnegative;
  return op;
}

ProxOperator ProxOperator::set_expansion(ConvexSet set, double lambda) {
  check_lambda(lambda);
  ProxOperator op(ProxKind::set_expansion, set.dim(), lambda);
  op.set_ = std::make_shared<const ConvexSet>(std::move(set));
  return op;
}

ProxOperator ProxOperator::fused_l1(Matrix D, double lambda, ADMMConfig cfg) {
  check_lambda(lambda);
  ProxOperator op(ProxKind::fused_l1, D.cols(), lambda);
  op.weight2_ = 1.0;
  op.jacobian_method_ = JacobianMethod::spsa;
  op.solver_ = std::make_shared<const L1SplitSolver>(std::move(D), cfg);
  return op;
}

ProxOperator ProxOperator::flow(Index n_nodes, double lambda1, double lambda2, ADMMConfig cfg) {
  check_lambda(lambda1);
  check_lambda(lambda2);
  ProxOperator op(ProxKind::flow, FlowNetwork::n_edges(n_nodes), 1.0);
  op.weight1_ = lambda1;
  op.weight2_ = lambda2;
  op.jacobian_method_ = JacobianMethod::spsa;
  op.solver_ = std::make_shared<const L1SplitSolver>(build_flow_constraint_matrix(n_nodes), cfg);
  return op;
}

ProxOperator ProxOperator::with_lambda(double lambda) const {
  check_lambda(lambda);
  ProxOperator op = *this;
  op.lambda_ = lambda;
  return op;
}

ProxOperator ProxOperator::with_jacobian_method(JacobianMethod method) const {
  const bool admm_kind = kind_ == ProxKind::fused_l1 || kind_ == ProxKind::flow;
  if (method == JacobianMethod::active_set && !admm_kind)
    throw InvalidInput("active-set Jacobian is only defined for fused_l1 and flow");
  if (method == JacobianMethod::analytic && (admm_kind || kind_ == ProxKind::nuclear))
    throw InvalidInput(to_string(kind_) + " has no closed-form Jacobian");
  if (method == JacobianMethod::analytic && kind_ == ProxKind::set_expansion &&
      !set_->projection_jacobian(Vector::Zero(dim_)).has_value())
    throw InvalidInput("set projector has no closed-form Jacobian");
  ProxOperator op = *this;
  op.jacobian_method_ = method;
  return op;
}

Vector ProxOperator::evaluate(const Vector& beta) const {
  if (beta.size() != dim_)
    throw ShapeError("prox " + to_string(kind_) + ": expected length " + std::to_string(dim_) + ", got " +
                     std::to_string(beta.size()));
  require_finite(beta, "prox");
  switch (kind_) {
    case ProxKind::identity:
      return beta;
    case ProxKind::ridge:
      return ridge_shrink(beta, lambda_);
    case ProxKind::soft_threshold:
      return proxprior::soft_threshold(beta, lambda_);
    case ProxKind::affine_projection:
      return constraint_->project(beta);
    case ProxKind::nuclear:
      return flatten(nuclear_shrink(MatrixMap(beta.data(), rows_, cols_), lambda_));
    case ProxKind::group_row: {
      const MatrixMap B(beta.data(), rows_, cols_);
      return nonnegative_ ? flatten(group_row_shrink(B.cwiseMax(0.0), lambda_))
                          : flatten(group_row_shrink(B, lambda_));
    }
    case ProxKind::set_expansion:
      return proxprior::set_expansion(beta, [this](const Vector& b) { return set_->project(b); }, lambda_);
    case ProxKind::fused_l1:
    case ProxKind::flow:
      if (lambda1() == 0.0 && lambda2() == 0.0) return beta;
      return solver_->solve(beta, lambda1(), lambda2()).z;
  }
  return beta;
}

double ProxOperator::penalty(const Vector& z) const {
  switch (kind_) {
    case ProxKind::identity:
      return 0.0;
    case ProxKind::ridge:
      return 0.5 * z.squaredNorm();
    case ProxKind::soft_threshold:
      return z.lpNorm<1>();
    case ProxKind::affine_projection: {
      const double tol = AffineConstraint::kFeasibilityTol * std::max(1.0, constraint_->b().norm());
      return constraint_->residual(z).norm() <= tol ? 0.0 : kInfeasibleObjective;
    }
    case ProxKind::nuclear: {
      Eigen::JacobiSVD<Matrix> svd(MatrixMap(z.data(), rows_, cols_));
      return svd.singularValues().sum();
    }
    case ProxKind::group_row: {
      const MatrixMap Z(z.data(), rows_, cols_);
      if (nonnegative_ && (Z.array() < 0.0).any()) return kInfeasibleObjective;
      return Z.rowwise().norm().sum();
    }
    case ProxKind::set_expansion:
      return set_->distance(z);
    case ProxKind::fused_l1:
    case ProxKind::flow:
      return solver_->penalty(z, weight1_, weight2_);
  }
  return 0.0;
}

double ProxOperator::objective(const Vector& z, const Vector& beta) const {
  if (z.size() != dim_ || beta.size() != dim_) throw ShapeError("prox_objective: dimension mismatch");
  const double g = penalty(z);
  if (g >= kInfeasibleObjective) return kInfeasibleObjective;
  return lambda_ * g + 0.5 * (z - beta).squaredNorm();
}

Vector ProxOperator::limit_point(const Vector& beta) const {
  switch (kind_) {
    case ProxKind::identity:
    case ProxKind::affine_projection:
      throw DegenerateOperator("prox " + to_string(kind_) + " does not depend on lambda");
    case ProxKind::ridge:
    case ProxKind::soft_threshold:
    case ProxKind::nuclear:
      return Vector::Zero(dim_);
    case ProxKind::group_row:
      return Vector::Zero(dim_);
    case ProxKind::set_expansion:
      return set_->project(beta);
    case ProxKind::fused_l1:
      return null_space_projector(solver_->D()) * beta;
    case ProxKind::flow:
      if (weight1_ > 0.0) return Vector::Zero(dim_);
      if (weight2_ > 0.0) return null_space_projector(solver_->D()) * beta;
      throw DegenerateOperator("flow prox with zero weights does not depend on lambda");
  }
  return beta;
}

bool ProxOperator::has_exact_jacobian() const {
  switch (kind_) {
    case ProxKind::nuclear:
      return false;
    case ProxKind::fused_l1:
    case ProxKind::flow:
      return jacobian_method_ == JacobianMethod::active_set;
    case ProxKind::set_expansion:
      return set_->projection_jacobian(Vector::Zero(dim_)).has_value();
    default:
      return true;
  }
}

Matrix ProxOperator::jacobian(const Vector& beta) const {
  if (beta.size() != dim_) throw ShapeError("prox jacobian: dimension mismatch");
  require_finite(beta, "prox jacobian");
  const Index p = dim_;
  switch (kind_) {
    case ProxKind::identity:
      return Matrix::Identity(p, p);
    case ProxKind::ridge:
      return Matrix::Identity(p, p) / (1.0 + lambda_);
    case ProxKind::soft_threshold: {
      const Vector mask = (beta.array().abs() > lambda_).cast<double>();
      return Matrix(mask.asDiagonal());
    }
    case ProxKind::affine_projection:
      return constraint_->null_projector();
    case ProxKind::group_row: {
      Matrix J = Matrix::Zero(p, p);
      const MatrixMap B(beta.data(), rows_, cols_);
      for (Index i = 0; i < rows_; ++i) {
        Vector row = B.row(i).transpose();
        Vector mask = Vector::Ones(cols_);
        if (nonnegative_) {
          mask = (row.array() > 0.0).cast<double>();
          row = row.cwiseMax(0.0);
        }
        const double norm = row.norm();
        if (norm <= lambda_) continue;
        Matrix block = (1.0 - lambda_ / norm) * Matrix::Identity(cols_, cols_) +
                       (lambda_ / (norm * norm * norm)) * row * row.transpose();
        block = block * mask.asDiagonal();
        for (Index a = 0; a < cols_; ++a)
          for (Index b = 0; b < cols_; ++b) J(i + rows_ * a, i + rows_ * b) = block(a, b);
      }
      return J;
    }
    case ProxKind::set_expansion: {
      if (lambda_ == 0.0) return Matrix::Identity(p, p);
      const auto JP = set_->projection_jacobian(beta);
      if (!JP) throw InvalidInput("set projector has no closed-form Jacobian");
      const Vector r = beta - set_->project(beta);
      const double dist = r.norm();
      if (dist < lambda_) return *JP;
      const Vector unit = r / dist;
      const Matrix tangent = Matrix::Identity(p, p) - unit * unit.transpose();
      return Matrix::Identity(p, p) - (lambda_ / dist) * tangent * (Matrix::Identity(p, p) - *JP);
    }
    case ProxKind::nuclear:
      throw InvalidInput("nuclear prox has no closed-form Jacobian; use SPSA");
    case ProxKind::fused_l1:
    case ProxKind::flow: {
      if (jacobian_method_ != JacobianMethod::active_set)
        throw InvalidInput(to_string(kind_) + " Jacobian requires the active-set method or SPSA");
      if (lambda1() == 0.0 && lambda2() == 0.0) return Matrix::Identity(p, p);
      const ADMMResult res = solver_->solve(beta, lambda1(), lambda2());
      return solver_->active_set_jacobian(res.active);
    }
  }
  return Matrix::Identity(p, p);
}

std::pair<Vector, Matrix> ProxOperator::evaluate_with_jacobian(const Vector& beta) const {
  const bool admm_kind = kind_ == ProxKind::fused_l1 || kind_ == ProxKind::flow;
  if (admm_kind && jacobian_method_ == JacobianMethod::active_set && (lambda1() != 0.0 || lambda2() != 0.0)) {
    if (beta.size() != dim_) throw ShapeError("prox jacobian: dimension mismatch");
    require_finite(beta, "prox jacobian");
    ADMMResult res = solver_->solve(beta, lambda1(), lambda2());
    Matrix J = solver_->active_set_jacobian(res.active);
    return {std::move(res.z), std::move(J)};
  }
  return {evaluate(beta), jacobian(beta)};
}

}  // namespace proxprior
