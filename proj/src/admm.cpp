#include "proxprior/admm.hpp"

#include <Eigen/QR>

#include <cmath>

#include "proxprior/prox.hpp"

namespace proxprior {

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Matrix z_system(const Matrix& D, double gamma) {
  Matrix K = gamma * D.transpose() * D;
  K.diagonal().array() += 1.0 + gamma;
  return K;
}

}  // namespace

void ADMMConfig::validate() const {
  if (!(gamma > 0.0)) throw ConfigError("ADMMConfig: gamma must be positive");
  if (!(tol_primal > 0.0) || !(tol_dual > 0.0)) throw ConfigError("ADMMConfig: tolerances must be positive");
  if (max_iters < 1) throw ConfigError("ADMMConfig: max_iters must be at least 1");
  if (polish_interval < 1) throw ConfigError("ADMMConfig: polish_interval must be at least 1");
}

L1SplitSolver::L1SplitSolver(Matrix D, ADMMConfig config) : D_(std::move(D)), config_(config) {
  config_.validate();
  require_finite(D_, "L1SplitSolver D");
  factor_.compute(z_system(D_, config_.gamma));
  if (factor_.info() != Eigen::Success) throw NumericalError("L1SplitSolver: factorization failed");
}

double L1SplitSolver::penalty(const Vector& z, double lambda1, double lambda2) const {
  double value = 0.0;
  if (lambda1 != 0.0) value += lambda1 * z.lpNorm<1>();
  if (lambda2 != 0.0 && D_.rows() > 0) value += lambda2 * (D_ * z).lpNorm<1>();
  return value;
}

ADMMResult L1SplitSolver::solve(const Vector& beta, double lambda1, double lambda2) const {
  require_finite(beta, "L1SplitSolver::solve");
  if (beta.size() != dim()) throw ShapeError("L1SplitSolver::solve: beta has wrong length");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InvalidInput("L1SplitSolver: negative lambda");

  ADMMResult result;
  if (lambda2 == 0.0 || D_.rows() == 0) {
    // Separable case: the ℓ1 prox in closed form.
    result.z = soft_threshold(beta, lambda1);
    result.Dz = D_ * result.z;
    result.polished = true;
    result.active = active_set_of(result.z, lambda1, lambda2);
    return result;
  }

  const double gamma = config_.gamma;
  Vector z = beta;
  Vector w = beta;
  Vector x = D_ * beta;
  Vector uw = Vector::Zero(beta.size());
  Vector ux = Vector::Zero(x.size());
  Vector Dz = x;
  Vector z_prev;
  int converged_at = -1;

  for (int it = 1; it <= config_.max_iters; ++it) {
    z_prev = z;
    const Vector rhs = beta + gamma * (w - uw) + gamma * (D_.transpose() * (x - ux));
    if (config_.refactor_each_iteration) {
      z = Eigen::LLT<Matrix>(z_system(D_, gamma)).solve(rhs);
    } else {
      z = factor_.solve(rhs);
    }
    Dz.noalias() = D_ * z;
    w = soft_threshold(z + uw, lambda1 / gamma);
    x = soft_threshold(Dz + ux, lambda2 / gamma);
    uw += z - w;
    ux += Dz - x;

    const double primal = std::max((z - w).lpNorm<Eigen::Infinity>(),
                                   x.size() ? (Dz - x).lpNorm<Eigen::Infinity>() : 0.0);
    const double dual = (z - z_prev).lpNorm<Eigen::Infinity>();
    result.iterations = it;
    result.primal_residual = primal;
    result.dual_residual = dual;

    const bool converged = primal <= config_.tol_primal && dual <= config_.tol_dual;
    // Near degenerate optima the dual estimate needs more iterations than the
    // primal before the certificate goes through, so keep going for a while.
    if (converged && config_.polish && converged_at < 0) converged_at = it;
    const bool try_polish = config_.polish && (converged_at == it || it % config_.polish_interval == 0);
    if (try_polish) {
      auto exact = converged_at > 0 ? polish(beta, lambda1, lambda2, w, x, ux)
                                    : polish_guess(beta, lambda1, lambda2, w, x, ux);
      if (exact) {
        result.z = std::move(*exact);
        result.Dz = D_ * result.z;
        result.primal_residual = 0.0;
        result.polished = true;
        result.active = active_set_of(result.z, lambda1, lambda2);
        return result;
      }
    }
    const bool keep_polishing = converged_at > 0 && it < std::min(config_.max_iters, converged_at + 50);
    if ((converged || converged_at > 0) && !keep_polishing) {
      // Report the thresholded iterate so exact zeros survive.
      result.z = lambda1 > 0.0 ? w : z;
      result.Dz = D_ * result.z;
      result.active = active_set_of(result.z, lambda1, lambda2);
      return result;
    }
  }
  throw ConvergenceError("ADMM did not converge", result.iterations, result.primal_residual,
                         result.dual_residual);
}

std::optional<Vector> L1SplitSolver::polish(const Vector& beta, double lambda1, double lambda2,
                                            const Vector& w, const Vector& x, const Vector& ux) const {
  // The iterate can carry tiny nonzeros where the solution is exactly zero,
  // so small entries are also tried as zeros. The certificate decides.
  if (auto z = polish_guess(beta, lambda1, lambda2, w, x, ux)) return z;
  const double scale = std::max(1.0, beta.lpNorm<Eigen::Infinity>());
  for (double cut : {1e-9, 1e-7, 1e-5}) {
    const auto drop = [&](const Vector& v) {
      return Vector(v.unaryExpr([&](double e) { return std::abs(e) <= cut * scale ? 0.0 : e; }));
    };
    const Vector w_cut = drop(w), x_cut = drop(x);
    if (w_cut == w && x_cut == x) continue;
    if (auto z = polish_guess(beta, lambda1, lambda2, w_cut, x_cut, ux)) return z;
  }
  return std::nullopt;
}

std::optional<Vector> L1SplitSolver::polish_guess(const Vector& beta, double lambda1, double lambda2,
                                                  const Vector& w, const Vector& x, const Vector& ux) const {
  const Index p = dim();
  const Index k = D_.rows();
  const bool use_l1 = lambda1 > 0.0;
  const bool use_d = lambda2 > 0.0 && k > 0;

  std::vector<Index> support;
  for (Index i = 0; i < p; ++i)
    if (!use_l1 || w[i] != 0.0) support.push_back(i);
  std::vector<Index> zero_rows, free_rows;
  if (use_d) {
    for (Index j = 0; j < k; ++j) (x[j] == 0.0 ? zero_rows : free_rows).push_back(j);
  }

  const Index ns = static_cast<Index>(support.size());
  const Index nz = static_cast<Index>(zero_rows.size());

  // Reduced problem on the support with fixed signs:
  //   min ½‖z_S − r‖² s.t. D_{Z,S} z_S = 0.
  Vector r(ns);
  Matrix M(nz, ns);
  for (Index a = 0; a < ns; ++a) {
    const Index i = support[a];
    double ri = beta[i];
    if (use_l1) ri -= lambda1 * sign_of(w[i]);
    for (Index j : free_rows) ri -= lambda2 * D_(j, i) * sign_of(x[j]);
    r[a] = ri;
    for (Index b = 0; b < nz; ++b) M(b, a) = D_(zero_rows[b], i);
  }

  Vector zs = r;
  if (nz > 0 && ns > 0) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(M);
    zs = r - cod.solve(M * r);
  }

  Vector z = Vector::Zero(p);
  for (Index a = 0; a < ns; ++a) z[support[a]] = zs[a];
  const Vector Dz = D_ * z;

  const double scale = std::max(1.0, beta.lpNorm<Eigen::Infinity>());
  const double tol = 1e-9;

  // Primal sign consistency.
  if (use_l1) {
    for (Index a = 0; a < ns; ++a)
      if (!(zs[a] * sign_of(w[support[a]]) > 0.0)) return std::nullopt;
  }
  if (use_d) {
    for (Index j : free_rows)
      if (!(Dz[j] * sign_of(x[j]) > 0.0)) return std::nullopt;
    for (Index j : zero_rows)
      if (std::abs(Dz[j]) > 1e-12 * scale) return std::nullopt;
  }

  // Dual certificate: β − z = λ₁ s + λ₂ Dᵀ t with s ∈ ∂‖z‖₁, t ∈ ∂‖Dz‖₁.
  Vector t = Vector::Zero(k);
  if (use_d) {
    for (Index j : free_rows) t[j] = sign_of(x[j]);
    if (nz > 0) {
      Vector t0(nz);
      for (Index b = 0; b < nz; ++b) t0[b] = config_.gamma * ux[zero_rows[b]] / lambda2;
      const Vector q = r - zs;  // must equal λ₂ M ᵀ t_Z
      const Matrix Mt = lambda2 * M.transpose();
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Mt);
      const Vector tz = t0 + cod.solve(q - Mt * t0);
      if ((Mt * tz - q).lpNorm<Eigen::Infinity>() > tol * scale) return std::nullopt;
      if (tz.lpNorm<Eigen::Infinity>() > 1.0 + tol) return std::nullopt;
      for (Index b = 0; b < nz; ++b) t[zero_rows[b]] = tz[b];
    }
  }
  if (use_l1) {
    const Vector dual_part = use_d ? Vector(lambda2 * (D_.transpose() * t)) : Vector::Zero(p);
    std::vector<bool> in_support(p, false);
    for (Index i : support) in_support[i] = true;
    for (Index i = 0; i < p; ++i) {
      if (in_support[i]) continue;
      const double s = (beta[i] - dual_part[i]) / lambda1;
      if (std::abs(s) > 1.0 + tol) return std::nullopt;
    }
  } else if (!use_d && (zs - beta).lpNorm<Eigen::Infinity>() > tol * scale) {
    return std::nullopt;
  }
  return z;
}

ActiveSet L1SplitSolver::active_set_of(const Vector& z, double lambda1, double lambda2) const {
  ActiveSet active;
  const double scale = std::max(1.0, z.lpNorm<Eigen::Infinity>());
  const double zero_tol = 1e-12 * scale;
  for (Index i = 0; i < z.size(); ++i)
    if (lambda1 == 0.0 || std::abs(z[i]) > zero_tol) active.support.push_back(i);
  if (lambda2 > 0.0) {
    const Vector Dz = D_ * z;
    for (Index j = 0; j < Dz.size(); ++j)
      if (std::abs(Dz[j]) <= std::max(zero_tol, config_.tol_primal)) active.zero_rows.push_back(j);
  }
  return active;
}

Matrix L1SplitSolver::active_set_jacobian(const ActiveSet& active) const {
  const Index p = dim();
  const Index ns = static_cast<Index>(active.support.size());
  const Index nz = static_cast<Index>(active.zero_rows.size());
  Matrix reduced = Matrix::Identity(ns, ns);
  if (nz > 0 && ns > 0) {
    Matrix M(nz, ns);
    for (Index b = 0; b < nz; ++b)
      for (Index a = 0; a < ns; ++a) M(b, a) = D_(active.zero_rows[b], active.support[a]);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(M);
    reduced -= cod.solve(M);
  }
  Matrix J = Matrix::Zero(p, p);
  for (Index a = 0; a < ns; ++a)
    for (Index b = 0; b < ns; ++b) J(active.support[a], active.support[b]) = reduced(a, b);
  return J;
}

Matrix first_difference_matrix(Index p) {
  if (p < 1) throw InvalidInput("first_difference_matrix: p must be positive");
  Matrix D = Matrix::Zero(p - 1, p);
  for (Index k = 0; k + 1 < p; ++k) {
    D(k, k) = -1.0;
    D(k, k + 1) = 1.0;
  }
  return D;
}

Vector prox_fused_l1(const Vector& beta, const Matrix& D, double lambda, const ADMMConfig& cfg) {
  cfg.validate();
  if (!(lambda >= 0.0)) throw InvalidInput("prox_fused_l1: lambda must be non-negative");
  require_finite(beta, "prox_fused_l1");
  if (D.cols() != beta.size()) throw ShapeError("prox_fused_l1: D has wrong number of columns");
  if (lambda == 0.0) return beta;
  return L1SplitSolver(D, cfg).solve(beta, 0.0, lambda).z;
}

Index FlowNetwork::nodes_for_edges(Index n_edges) {
  const auto n = static_cast<Index>(std::llround((1.0 + std::sqrt(1.0 + 8.0 * double(n_edges))) / 2.0));
  if (n < 2 || n * (n - 1) / 2 != n_edges)
    throw ShapeError("edge vector length " + std::to_string(n_edges) + " is not n(n-1)/2 for any n >= 2");
  return n;
}

FlowNetwork FlowNetwork::from_lower(Vector lower) {
  FlowNetwork net;
  net.n_nodes = nodes_for_edges(lower.size());
  net.diag = build_flow_constraint_matrix(net.n_nodes) * lower;
  net.lower = std::move(lower);
  return net;
}

FlowNetwork FlowNetwork::from_matrix(const Matrix& F) {
  if (F.rows() != F.cols() || F.rows() < 2) throw ShapeError("FlowNetwork::from_matrix: need a square matrix, n >= 2");
  FlowNetwork net;
  net.n_nodes = F.rows();
  net.lower.resize(n_edges(net.n_nodes));
  for (Index i = 1; i < net.n_nodes; ++i)
    for (Index j = 0; j < i; ++j) net.lower[edge_index(i, j)] = F(i, j);
  net.diag = F.diagonal();
  return net;
}

Matrix FlowNetwork::to_matrix() const {
  Matrix F = Matrix::Zero(n_nodes, n_nodes);
  for (Index i = 1; i < n_nodes; ++i) {
    for (Index j = 0; j < i; ++j) {
      const double v = lower[edge_index(i, j)];
      F(i, j) = v;
      F(j, i) = -v;
    }
  }
  F.diagonal() = diag;
  return F;
}

double FlowNetwork::conservation_residual() const {
  const Matrix F = to_matrix();
  double worst = 0.0;
  for (Index j = 0; j < n_nodes; ++j) {
    const double off = F.col(j).sum() - F(j, j);
    worst = std::max(worst, std::abs(diag[j] - off));
  }
  return worst;
}

Matrix build_flow_constraint_matrix(Index n_nodes) {
  if (n_nodes < 2) throw InvalidInput("build_flow_constraint_matrix: need at least 2 nodes");
  Matrix C = Matrix::Zero(n_nodes, FlowNetwork::n_edges(n_nodes));
  for (Index i = 1; i < n_nodes; ++i) {
    for (Index j = 0; j < i; ++j) {
      const Index e = FlowNetwork::edge_index(i, j);
      C(j, e) = 1.0;   // z_{i,j} enters node j
      C(i, e) = -1.0;  // and leaves node i
    }
  }
  return C;
}

FlowNetwork prox_flow(const Vector& beta_lower, double lambda1, double lambda2, const ADMMConfig& cfg) {
  const Index n = FlowNetwork::nodes_for_edges(beta_lower.size());
  require_finite(beta_lower, "prox_flow");
  if (lambda1 == 0.0 && lambda2 == 0.0) return FlowNetwork::from_lower(beta_lower);
  L1SplitSolver solver(build_flow_constraint_matrix(n), cfg);
  return FlowNetwork::from_lower(solver.solve(beta_lower, lambda1, lambda2).z);
}

}  // namespace proxprior
