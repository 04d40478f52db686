#include "proxprior/gradient.hpp"

#include <algorithm>
#include <numeric>

namespace proxprior {

namespace {

Index next_pow2(Index n) {
  Index N = 1;
  while (N < n) N *= 2;
  return N;
}

/// Entry (r, c) of the Sylvester–Hadamard matrix: (−1)^popcount(r & c).
double hadamard(Index r, Index c) {
  return (__builtin_popcountll(static_cast<unsigned long long>(r & c)) & 1) ? -1.0 : 1.0;
}

}  // namespace

void SPSAConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("SPSA epsilon must be positive");
  if (m < 1) throw ConfigError("SPSA m must be >= 1");
}

Matrix spsa_perturbations(Index p, const SPSAConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  if (cfg.design == SPSADesign::independent) {
    Matrix delta(cfg.m, p);
    for (Index k = 0; k < cfg.m; ++k)
      for (Index j = 0; j < p; ++j) delta(k, j) = rademacher(rng);
    return delta;
  }
  const Index N = next_pow2(std::max(cfg.m, p));
  std::vector<Index> cols(static_cast<std::size_t>(N));
  std::iota(cols.begin(), cols.end(), Index(0));
  std::shuffle(cols.begin(), cols.end(), rng);
  Matrix delta(N, p);
  for (Index j = 0; j < p; ++j) {
    const double sign = rademacher(rng);
    for (Index k = 0; k < N; ++k) delta(k, j) = sign * hadamard(k, cols[std::size_t(j)]);
  }
  return delta;
}

Matrix spsa_jacobian(const ProxOperator& op, const Vector& beta, const Vector& theta, const SPSAConfig& cfg) {
  if (beta.size() != op.dim() || theta.size() != op.dim()) throw ShapeError("spsa_jacobian: dimension mismatch");
  const Index p = op.dim();
  const Matrix delta = spsa_perturbations(p, cfg);
  const Index m = delta.rows();
  Matrix J = Matrix::Zero(p, p);
  for (Index k = 0; k < m; ++k) {
    const Vector dk = delta.row(k).transpose();
    const Vector diff = (op(beta + cfg.epsilon * dk) - theta) / cfg.epsilon;
    // 1/Δ_j = Δ_j for ±1 entries.
    J.noalias() += diff * dk.transpose();
  }
  return J / double(m);
}

Matrix spsa_jacobian(const ProxOperator& op, const Vector& beta, const SPSAConfig& cfg) {
  return spsa_jacobian(op, beta, op(beta), cfg);
}

Matrix finite_diff_jacobian(const ProxOperator& op, const Vector& beta, double h) {
  if (!(h > 0.0)) throw InvalidInput("finite_diff_jacobian: h must be positive");
  const Index p = op.dim();
  Matrix J(p, p);
  Vector b = beta;
  for (Index j = 0; j < p; ++j) {
    b[j] = beta[j] + h;
    const Vector plus = op(b);
    b[j] = beta[j] - h;
    const Vector minus = op(b);
    b[j] = beta[j];
    J.col(j) = (plus - minus) / (2.0 * h);
  }
  return J;
}

double spectral_norm(const Matrix& J, int iterations) {
  if (J.size() == 0) return 0.0;
  Vector v = Vector::Ones(J.cols()).normalized();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector w = J.transpose() * (J * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    sigma = std::sqrt(norm);
  }
  return sigma;
}

PosteriorPoint log_posterior_and_grad(const Model& model, const Vector& beta, const SPSAConfig& spsa) {
  if (beta.size() != model.dim()) throw ShapeError("log_posterior_and_grad: dimension mismatch");
  const BlockProx& prox = model.prox;
  PosteriorPoint pt;
  pt.theta.resize(beta.size());
  std::vector<Matrix> jacobians(prox.n_blocks());
  std::vector<bool> identity_block(prox.n_blocks(), false);
  for (std::size_t k = 0; k < prox.n_blocks(); ++k) {
    const ParameterBlock& blk = prox.layout()[k];
    const ProxOperator& op = prox.op(k);
    const Vector b = beta.segment(blk.offset, blk.size());
    if (op.kind() == ProxKind::identity) {
      pt.theta.segment(blk.offset, blk.size()) = b;
      identity_block[k] = true;
    } else if (op.has_exact_jacobian()) {
      auto [theta, J] = op.evaluate_with_jacobian(b);
      pt.theta.segment(blk.offset, blk.size()) = theta;
      jacobians[k] = std::move(J);
    } else {
      const Vector theta = op(b);
      SPSAConfig block_cfg = spsa;
      block_cfg.seed = stream_seed(spsa.seed, k);
      jacobians[k] = spsa_jacobian(op, b, theta, block_cfg);
      pt.theta.segment(blk.offset, blk.size()) = theta;
    }
  }
  pt.log_lik = model.log_lik(pt.theta);
  pt.log_prior = model.beta_prior.log_density(beta);
  const Vector g_theta = model.grad_log_lik(pt.theta);
  if (g_theta.size() != beta.size()) throw ShapeError("likelihood gradient has the wrong length");
  pt.grad = model.beta_prior.grad_log_density(beta);
  for (std::size_t k = 0; k < prox.n_blocks(); ++k) {
    const ParameterBlock& blk = prox.layout()[k];
    if (identity_block[k])
      pt.grad.segment(blk.offset, blk.size()) += g_theta.segment(blk.offset, blk.size());
    else
      pt.grad.segment(blk.offset, blk.size()).noalias() +=
          jacobians[k].transpose() * g_theta.segment(blk.offset, blk.size());
  }
  return pt;
}

Vector log_posterior_grad(const Model& model, const Vector& beta, const SPSAConfig& spsa) {
  return log_posterior_and_grad(model, beta, spsa).grad;
}

Vector finite_diff_log_posterior_grad(const Model& model, const Vector& beta, double h) {
  Vector g(beta.size());
  Vector b = beta;
  for (Index j = 0; j < beta.size(); ++j) {
    b[j] = beta[j] + h;
    const double plus = model.log_posterior(b);
    b[j] = beta[j] - h;
    const double minus = model.log_posterior(b);
    b[j] = beta[j];
    g[j] = (plus - minus) / (2.0 * h);
  }
  return g;
}

}  // namespace proxprior
