#include "proxprior/models.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace proxprior {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2π)

struct GaussianStats {
  Index n = 0;
  Vector mean;
  double within = 0.0;  // Σ‖yᵢ − ȳ‖²
};

GaussianStats gaussian_stats(const Matrix& Y) {
  if (Y.rows() < 1) throw InvalidInput("need at least one observation");
  require_finite(Y, "observations");
  GaussianStats s;
  s.n = Y.rows();
  s.mean = Y.colwise().mean().transpose();
  s.within = (Y.rowwise() - s.mean.transpose()).squaredNorm();
  return s;
}

/// log_lik / grad for yᵢ ~ N(θ, σ²I).
void attach_gaussian_mean(Model& model, const Matrix& Y, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  const GaussianStats s = gaussian_stats(Y);
  const double var = sigma * sigma;
  const double log_norm = -0.5 * double(s.n * s.mean.size()) * (kLog2Pi + std::log(var));
  model.log_lik = [s, var, log_norm](const Vector& theta) {
    if (theta.size() != s.mean.size()) throw ShapeError("gaussian mean log_lik: dimension mismatch");
    return log_norm - (double(s.n) * (theta - s.mean).squaredNorm() + s.within) / (2.0 * var);
  };
  model.grad_log_lik = [s, var](const Vector& theta) {
    if (theta.size() != s.mean.size()) throw ShapeError("gaussian mean gradient: dimension mismatch");
    return Vector(double(s.n) * (s.mean - theta) / var);
  };
}

Index upper_size(Index n) { return n * (n + 1) / 2; }

}  // namespace

// ---------------------------------------------------------------- BlockProx

BlockProx::BlockProx(ProxOperator op, std::string name) { add(std::move(name), std::move(op)); }

void BlockProx::add(std::string name, ProxOperator op, bool tunable, Index rows, Index cols) {
  if (rows < 0) rows = op.rows();
  if (cols < 0) cols = op.cols();
  if (rows * cols != op.dim()) throw ShapeError("block " + name + ": rows*cols must equal the operator dimension");
  for (const auto& b : layout_)
    if (b.name == name) throw InvalidInput("duplicate block name " + name);
  layout_.push_back({std::move(name), dim_, rows, cols});
  dim_ += op.dim();
  ops_.push_back(std::move(op));
  tunable_.push_back(tunable);
}

std::size_t BlockProx::block_index(const std::string& name) const {
  for (std::size_t k = 0; k < layout_.size(); ++k)
    if (layout_[k].name == name) return k;
  throw InvalidInput("no parameter block named " + name);
}

double BlockProx::lambda() const {
  for (std::size_t k = 0; k < ops_.size(); ++k)
    if (tunable_[k]) return ops_[k].lambda();
  return 0.0;
}

BlockProx BlockProx::with_lambda(double lambda) const {
  BlockProx out = *this;
  bool any = false;
  for (std::size_t k = 0; k < ops_.size(); ++k) {
    if (!tunable_[k]) continue;
    out.ops_[k] = ops_[k].with_lambda(lambda);
    any = true;
  }
  if (!any) throw ConfigError("prox has no tunable scale to set");
  return out;
}

Vector BlockProx::evaluate(const Vector& beta) const {
  if (beta.size() != dim_) throw ShapeError("block prox: expected length " + std::to_string(dim_));
  Vector theta(dim_);
  for (std::size_t k = 0; k < ops_.size(); ++k) {
    const auto& b = layout_[k];
    theta.segment(b.offset, b.size()) = ops_[k](beta.segment(b.offset, b.size()));
  }
  return theta;
}

// ---------------------------------------------------------------- BetaPrior

BetaPrior BetaPrior::standard_normal(Index p) { return isotropic(p, 1.0); }

BetaPrior BetaPrior::isotropic(Index p, double sd) {
  if (!(sd > 0.0)) throw InvalidInput("prior sd must be positive");
  return diagonal(Vector::Zero(p), Vector::Constant(p, sd * sd));
}

BetaPrior BetaPrior::diagonal(Vector mean, Vector variance) {
  if (mean.size() != variance.size()) throw ShapeError("BetaPrior: mean and variance differ in length");
  if (!(variance.array() > 0.0).all()) throw InvalidInput("BetaPrior: variances must be positive");
  BetaPrior prior;
  prior.mean_ = std::move(mean);
  prior.variance_ = std::move(variance);
  return prior;
}

BetaPrior BetaPrior::gaussian(Vector mean, Matrix covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
    throw ShapeError("BetaPrior: covariance must be p×p");
  auto chol = std::make_shared<Eigen::LLT<Matrix>>(covariance);
  if (chol->info() != Eigen::Success) throw InvalidInput("BetaPrior: covariance is not positive definite");
  BetaPrior prior;
  prior.mean_ = std::move(mean);
  prior.variance_ = covariance.diagonal();
  prior.chol_ = std::move(chol);
  return prior;
}

BetaPrior BetaPrior::with_log_inverse_gamma(Index index, double shape, double scale) const {
  if (chol_) throw InvalidInput("log-inverse-gamma coordinates need a diagonal Gaussian part");
  if (index < 0 || index >= dim()) throw ShapeError("log-inverse-gamma index out of range");
  if (!(shape > 0.0) || !(scale > 0.0)) throw InvalidInput("inverse-gamma shape and scale must be positive");
  BetaPrior out = *this;
  out.inv_gamma_.push_back({index, shape, scale});
  return out;
}

Vector BetaPrior::variance() const { return variance_; }

bool BetaPrior::is_inv_gamma(Index i) const {
  return std::any_of(inv_gamma_.begin(), inv_gamma_.end(), [i](const auto& t) { return t.index == i; });
}

double BetaPrior::log_density(const Vector& beta) const {
  if (beta.size() != dim()) throw ShapeError("BetaPrior: dimension mismatch");
  const Vector r = beta - mean_;
  if (chol_) {
    const Vector w = chol_->matrixL().solve(r);
    const double log_det = 2.0 * chol_->matrixLLT().diagonal().array().log().sum();
    return -0.5 * (w.squaredNorm() + log_det + double(dim()) * kLog2Pi);
  }
  double lp = 0.0;
  for (Index i = 0; i < dim(); ++i) {
    if (is_inv_gamma(i)) continue;
    lp -= 0.5 * (r[i] * r[i] / variance_[i] + std::log(variance_[i]) + kLog2Pi);
  }
  for (const auto& t : inv_gamma_) {
    const double s = beta[t.index];
    lp += t.shape * std::log(t.scale) - std::lgamma(t.shape) - t.shape * s - t.scale * std::exp(-s);
  }
  return lp;
}

Vector BetaPrior::grad_log_density(const Vector& beta) const {
  if (beta.size() != dim()) throw ShapeError("BetaPrior: dimension mismatch");
  if (chol_) return -chol_->solve(beta - mean_);
  Vector g = -((beta - mean_).array() / variance_.array()).matrix();
  for (const auto& t : inv_gamma_) g[t.index] = -t.shape + t.scale * std::exp(-beta[t.index]);
  return g;
}

Vector BetaPrior::sample(Rng& rng) const {
  const Vector z = proxprior::standard_normal(dim(), rng);
  if (chol_) return mean_ + chol_->matrixL() * z;
  Vector out = mean_ + (variance_.array().sqrt() * z.array()).matrix();
  for (const auto& t : inv_gamma_) out[t.index] = std::log(t.scale) - std::log(gamma_draw(t.shape, rng));
  return out;
}

// ---------------------------------------------------------------- Model

Model Model::with_lambda(double lambda) const {
  Model out = *this;
  out.prox = prox.with_lambda(lambda);
  return out;
}

double Model::log_posterior(const Vector& beta) const {
  return log_lik(prox(beta)) + beta_prior.log_density(beta);
}

void Model::validate() const {
  if (!log_lik || !grad_log_lik) throw ConfigError("model " + name + " lacks a likelihood");
  if (prox.dim() < 1) throw ConfigError("model " + name + " has no parameters");
  if (beta_prior.dim() != prox.dim()) throw ShapeError("model " + name + ": prior and prox dimensions differ");
  if (flow && flow->dim() != prox.dim()) throw ShapeError("model " + name + ": flow layout does not match");
}

Model make_gaussian_mean_model(const Matrix& Y, double sigma, ConvexSet C, double lambda, double prior_sd) {
  if (Y.cols() != C.dim()) throw ShapeError("gaussian mean model: observations and set differ in dimension");
  Model model;
  model.name = "gaussian_mean";
  attach_gaussian_mean(model, Y, sigma);
  model.prox = BlockProx(ProxOperator::set_expansion(std::move(C), lambda));
  model.beta_prior = BetaPrior::isotropic(Y.cols(), prior_sd);
  return model;
}

Model make_sparse_regression_model(const Matrix& X, const Vector& y, double sigma, double lambda) {
  if (X.rows() != y.size()) throw ShapeError("sparse regression: X rows and y length differ");
  if (X.rows() < 1 || X.cols() < 1) throw InvalidInput("sparse regression: empty design");
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  require_finite(X, "design");
  require_finite(y, "response");
  Model model;
  model.name = "sparse_regression";
  const double var = sigma * sigma;
  const double log_norm = -0.5 * double(y.size()) * (kLog2Pi + std::log(var));
  model.log_lik = [X, y, var, log_norm](const Vector& theta) {
    return log_norm - (y - X * theta).squaredNorm() / (2.0 * var);
  };
  model.grad_log_lik = [X, y, var](const Vector& theta) { return Vector(X.transpose() * (y - X * theta) / var); };
  model.prox = BlockProx(ProxOperator::soft_threshold(X.cols(), lambda));
  model.beta_prior = BetaPrior::standard_normal(X.cols());
  return model;
}

Model make_affine_mean_model(const Matrix& Y, AffineConstraint constraint, double sigma, double prior_sd) {
  if (Y.cols() != constraint.dim()) throw ShapeError("affine mean model: observations and constraint differ in dimension");
  Model model;
  model.name = "affine_mean";
  attach_gaussian_mean(model, Y, sigma);
  BlockProx prox;
  prox.add("theta", ProxOperator::affine_projection(std::move(constraint)), false);
  model.prox = std::move(prox);
  model.beta_prior = BetaPrior::isotropic(Y.cols(), prior_sd);
  return model;
}

// ---------------------------------------------------------------- flow factor model

Vector upper_inclusive(const Matrix& Y) {
  if (Y.rows() != Y.cols()) throw ShapeError("upper_inclusive: matrix must be square");
  const Index n = Y.rows();
  Vector out(upper_size(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) out[k++] = Y(i, j);
  return out;
}

Matrix flow_observation_matrix(Index n_nodes) {
  const Matrix C = build_flow_constraint_matrix(n_nodes);
  Matrix G = Matrix::Zero(upper_size(n_nodes), FlowNetwork::n_edges(n_nodes));
  Index k = 0;
  for (Index i = 0; i < n_nodes; ++i) {
    for (Index j = i; j < n_nodes; ++j, ++k) {
      if (i == j)
        G.row(k) = C.row(i);
      else
        G(k, FlowNetwork::edge_index(j, i)) = -1.0;
    }
  }
  return G;
}

Model make_flow_factor_model(const std::vector<Matrix>& Y, Index d, double lambda1, double lambda2,
                             double lambda_load, const ADMMConfig& cfg, const FlowModelOptions& options) {
  if (Y.empty()) throw InvalidInput("flow model: no observations");
  if (d < 1) throw InvalidInput("flow model: factor budget d must be >= 1");
  const Index n = Y.front().rows();
  if (n < 2) throw InvalidInput("flow model: need at least 2 nodes");
  for (const Matrix& Yt : Y)
    if (Yt.rows() != n || Yt.cols() != n) throw ShapeError("flow model: every Y^(t) must be n×n with a common n");

  FlowLayout layout;
  layout.n_nodes = n;
  layout.n_edges = FlowNetwork::n_edges(n);
  layout.n_factors = d;
  layout.n_times = static_cast<Index>(Y.size());
  const Index E = layout.n_edges, T = layout.n_times, U = upper_size(n);

  Matrix Yu(U, T);
  for (Index t = 0; t < T; ++t) Yu.col(t) = upper_inclusive(Y[t]);
  require_finite(Yu, "flow observations");
  const Matrix G = flow_observation_matrix(n);
  const double N = double(U * T);

  Model model;
  model.name = "flow_factor";
  model.flow = layout;
  auto residual = [Yu, G, layout](const Vector& theta, Matrix& GZ) {
    const Eigen::Map<const Matrix> Z(theta.data(), layout.n_edges, layout.n_factors);
    const Eigen::Map<const Matrix> Gamma(theta.data() + layout.loading_offset(), layout.n_factors, layout.n_times);
    GZ = G * Z;
    return Matrix(Yu - GZ * Gamma);
  };
  model.log_lik = [residual, layout, N](const Vector& theta) {
    if (theta.size() != layout.dim()) throw ShapeError("flow log_lik: dimension mismatch");
    Matrix GZ;
    const Matrix R = residual(theta, GZ);
    const double s = theta[layout.log_sigma2_index()];
    return -0.5 * std::exp(-s) * R.squaredNorm() - 0.5 * N * (s + kLog2Pi);
  };
  model.grad_log_lik = [residual, G, layout, N](const Vector& theta) {
    if (theta.size() != layout.dim()) throw ShapeError("flow gradient: dimension mismatch");
    Matrix GZ;
    const Matrix R = residual(theta, GZ);
    const double s = theta[layout.log_sigma2_index()];
    const double prec = std::exp(-s);
    const Eigen::Map<const Matrix> Gamma(theta.data() + layout.loading_offset(), layout.n_factors, layout.n_times);
    Vector g(layout.dim());
    Eigen::Map<Matrix>(g.data(), layout.n_edges, layout.n_factors) = prec * G.transpose() * R * Gamma.transpose();
    Eigen::Map<Matrix>(g.data() + layout.loading_offset(), layout.n_factors, layout.n_times) =
        prec * GZ.transpose() * R;
    g[layout.log_sigma2_index()] = 0.5 * prec * R.squaredNorm() - 0.5 * N;
    return g;
  };

  BlockProx prox;
  const ProxOperator flow_op = ProxOperator::flow(n, lambda1, lambda2, cfg).with_jacobian_method(options.flow_jacobian);
  for (Index l = 0; l < d; ++l) prox.add("flow_" + std::to_string(l + 1), flow_op, true);
  prox.add("loadings", ProxOperator::group_row(d, T, lambda_load, options.nonnegative_loadings), false);
  prox.add("log_sigma2", ProxOperator::identity(1), false);
  model.prox = std::move(prox);

  Vector variance(layout.dim());
  variance.head(d * E).setConstant(options.beta_sd * options.beta_sd);
  variance.segment(layout.loading_offset(), d * T).setConstant(options.rho_sd * options.rho_sd);
  variance[layout.log_sigma2_index()] = 1.0;
  model.beta_prior = BetaPrior::diagonal(Vector::Zero(layout.dim()), variance)
                         .with_log_inverse_gamma(layout.log_sigma2_index(), options.sigma2_shape,
                                                 options.sigma2_scale);
  return model;
}

FlowFactorState decode_flow_theta(const FlowLayout& layout, const Vector& theta) {
  if (theta.size() != layout.dim()) throw ShapeError("flow state: dimension mismatch");
  FlowFactorState state;
  for (Index l = 0; l < layout.n_factors; ++l)
    state.factors.push_back(FlowNetwork::from_lower(theta.segment(l * layout.n_edges, layout.n_edges)));
  state.gamma = Eigen::Map<const Matrix>(theta.data() + layout.loading_offset(), layout.n_factors, layout.n_times);
  state.log_sigma2 = theta[layout.log_sigma2_index()];
  return state;
}

FlowFactorState decode_flow_state(const Model& model, const Vector& beta) {
  if (!model.flow) throw InvalidInput("decode_flow_state: not a flow-factor model");
  const FlowLayout& layout = *model.flow;
  FlowFactorState state = decode_flow_theta(layout, model.theta(beta));
  for (Index l = 0; l < layout.n_factors; ++l)
    state.beta_factors.push_back(beta.segment(l * layout.n_edges, layout.n_edges));
  state.rho = Eigen::Map<const Matrix>(beta.data() + layout.loading_offset(), layout.n_factors, layout.n_times);
  return state;
}

std::vector<Matrix> flow_reconstruction(const FlowFactorState& state) {
  std::vector<Matrix> out;
  if (state.factors.empty()) return out;
  const Index n = state.factors.front().n_nodes;
  std::vector<Matrix> F;
  for (const auto& f : state.factors) F.push_back(f.to_matrix());
  for (Index t = 0; t < state.gamma.cols(); ++t) {
    Matrix M = Matrix::Zero(n, n);
    for (std::size_t l = 0; l < F.size(); ++l) M += state.gamma(Index(l), t) * F[l];
    out.push_back(std::move(M));
  }
  return out;
}

SyntheticFlowData make_synthetic_flows(Index n_nodes, Index T, Index k, double noise_sd, Rng& rng, Index cycle_len,
                                       double flow_scale) {
  if (cycle_len < 3 || cycle_len > n_nodes) throw InvalidInput("synthetic flows: need 3 <= cycle_len <= n_nodes");
  if (T < 1 || k < 0 || noise_sd < 0.0) throw InvalidInput("synthetic flows: bad sizes");
  SyntheticFlowData data;
  std::vector<Index> nodes(n_nodes);
  for (Index i = 0; i < n_nodes; ++i) nodes[i] = i;
  for (Index l = 0; l < k; ++l) {
    std::shuffle(nodes.begin(), nodes.end(), rng);
    Matrix F = Matrix::Zero(n_nodes, n_nodes);
    // Conservation forces one flow value around the whole cycle.
    const double f = flow_scale * (0.5 + uniform01(rng));
    for (Index a = 0; a < cycle_len; ++a) {
      const Index from = nodes[a], to = nodes[(a + 1) % cycle_len];
      F(to, from) += f;
      F(from, to) -= f;
    }
    data.factors.push_back(FlowNetwork::from_lower(FlowNetwork::from_matrix(F).lower));
  }
  data.loadings.resize(k, T);
  for (Index l = 0; l < k; ++l)
    for (Index t = 0; t < T; ++t) data.loadings(l, t) = 0.5 + uniform01(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index t = 0; t < T; ++t) {
    Matrix M = Matrix::Zero(n_nodes, n_nodes);
    for (Index l = 0; l < k; ++l) M += data.loadings(l, t) * data.factors[l].to_matrix();
    Matrix Yt = M;
    for (Index j = 0; j < n_nodes; ++j)
      for (Index i = 0; i < n_nodes; ++i) Yt(i, j) += noise_sd * noise(rng);
    data.mean.push_back(std::move(M));
    data.Y.push_back(std::move(Yt));
  }
  return data;
}

// ---------------------------------------------------------------- flow tables

FlowTable read_flow_table(std::istream& in, Index n_nodes, Index n_times) {
  struct Row {
    Index t, i, j;
    double v;
  };
  std::vector<Row> rows;
  FlowTable table;
  std::string line;
  int line_no = 0;
  bool first = true;
  auto parse_index = [](const std::string& tok, Index& out) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &pos);
    } catch (...) {
      return false;
    }
    if (pos != tok.size() || v != std::floor(v)) return false;
    out = static_cast<Index>(v);
    return true;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string s; ss >> s;) tok.push_back(s);
    if (tok.empty()) continue;
    const bool is_first = first;
    first = false;
    if (tok.size() != 4) throw InvalidInput("flow table line " + std::to_string(line_no) + ": expected 4 columns");
    Row r{};
    bool ok = parse_index(tok[0], r.t) && parse_index(tok[1], r.i) && parse_index(tok[2], r.j);
    if (!ok) {
      if (is_first) continue;  // header
      table.warnings.push_back("line " + std::to_string(line_no) + ": non-integer index, row skipped");
      continue;
    }
    try {
      std::size_t pos = 0;
      r.v = std::stod(tok[3], &pos);
      if (pos != tok[3].size()) throw std::invalid_argument("trailing");
    } catch (...) {
      throw InvalidInput("flow table line " + std::to_string(line_no) + ": flow value is not a number");
    }
    if (!std::isfinite(r.v)) throw InvalidInput("flow table line " + std::to_string(line_no) + ": non-finite flow");
    if (r.t < 1 || r.i < 1 || r.j < 1)
      throw InvalidInput("flow table line " + std::to_string(line_no) + ": indices are 1-based");
    if (r.i < r.j) table.raw = true;
    rows.push_back(r);
  }
  Index n = n_nodes, T = n_times;
  for (const Row& r : rows) {
    if (n_nodes == 0) n = std::max({n, r.i, r.j});
    if (n_times == 0) T = std::max(T, r.t);
    if (r.i > n || r.j > n || r.t > T) throw InvalidInput("flow table: index exceeds the declared size");
  }
  if (n < 2 || T < 1) throw InvalidInput("flow table: no usable rows");

  table.Y.assign(static_cast<std::size_t>(T), Matrix::Zero(n, n));
  std::vector<std::vector<bool>> has_diag(static_cast<std::size_t>(T), std::vector<bool>(std::size_t(n), false));
  for (const Row& r : rows) {
    Matrix& Yt = table.Y[std::size_t(r.t - 1)];
    const Index i = r.i - 1, j = r.j - 1;
    if (i == j) {
      Yt(i, i) = r.v;
      has_diag[std::size_t(r.t - 1)][std::size_t(i)] = true;
    } else if (table.raw) {
      Yt(i, j) = r.v;
    } else {
      Yt(i, j) = r.v;
      Yt(j, i) = -r.v;
    }
  }
  for (std::size_t t = 0; t < table.Y.size(); ++t) {
    Matrix& Yt = table.Y[t];
    if (table.raw) {
      const Vector diag = Yt.diagonal();
      Yt = 0.5 * (Yt - Yt.transpose()).eval();
      Yt.diagonal() = diag;
    } else {
      const Vector net = FlowNetwork::from_matrix(Yt).lower;
      const Vector implied = build_flow_constraint_matrix(n) * net;
      for (Index i = 0; i < n; ++i)
        if (!has_diag[t][std::size_t(i)]) Yt(i, i) = implied[i];
    }
  }
  return table;
}

void write_flow_table(std::ostream& out, const std::vector<Matrix>& Y) {
  out << "t\ti\tj\tflow\n" << std::setprecision(17);
  for (std::size_t t = 0; t < Y.size(); ++t) {
    const Matrix& Yt = Y[t];
    for (Index i = 0; i < Yt.rows(); ++i)
      for (Index j = 0; j <= i; ++j) out << t + 1 << '\t' << i + 1 << '\t' << j + 1 << '\t' << Yt(i, j) << '\n';
  }
}

}  // namespace proxprior
