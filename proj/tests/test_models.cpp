#include "doctest.h"

#include <numbers>
#include <sstream>

#include "proxprior/models.hpp"
#include "test_support.hpp"

using namespace proxprior;
using namespace proxprior::testing;

namespace {

const Vector kTheta0 = (Vector(3) << -0.5, 0.3, 1.2).finished();

Matrix paper_data(Rng& rng) {
  Matrix Y(20, 3);
  for (Index i = 0; i < 20; ++i) Y.row(i) = (kTheta0 + 3.0 * standard_normal(3, rng)).transpose();
  return Y;
}

ConvexSet paper_plane() { return ConvexSet::affine(AffineConstraint::hyperplane(Vector::Ones(3), 1.0)); }

double fd_derivative(const std::function<double(const Vector&)>& f, Vector x, Index j, double h) {
  const double x0 = x[j];
  x[j] = x0 + h;
  const double plus = f(x);
  x[j] = x0 - h;
  const double minus = f(x);
  return (plus - minus) / (2.0 * h);
}

void check_likelihood_gradient(const Model& model, Rng& rng, double scale, double tol) {
  for (int k = 0; k < 10; ++k) {
    Vector theta = random_vector(model.dim(), rng, scale);
    if (model.flow) theta[model.flow->log_sigma2_index()] = -0.5;
    const Vector g = model.grad_log_lik(theta);
    for (Index j = 0; j < model.dim(); ++j) {
      const double fd = fd_derivative(model.log_lik, theta, j, 1e-5);
      CHECK(std::abs(g[j] - fd) <= tol * std::max(1.0, std::abs(fd)));
    }
  }
}

}  // namespace

TEST_CASE("block prox layout") {
  BlockProx prox;
  prox.add("a", ProxOperator::soft_threshold(3, 0.5));
  prox.add("b", ProxOperator::group_row(2, 2, 1.0), false);
  prox.add("c", ProxOperator::identity(1), false);
  CHECK(prox.dim() == 8);
  CHECK(prox.layout()[1].offset == 3);
  CHECK(prox.layout()[1].rows == 2);
  CHECK(prox.block_index("c") == 2);
  CHECK_THROWS_AS(prox.block_index("d"), InvalidInput);
  CHECK_THROWS_AS(prox.add("a", ProxOperator::identity(1)), InvalidInput);

  const Vector beta = (Vector(8) << 1.0, -0.2, 0.7, 3.0, 0.0, 4.0, 0.0, -5.0).finished();
  const Vector theta = prox(beta);
  CHECK(theta.head(3) == ProxOperator::soft_threshold(3, 0.5)(beta.head(3)));
  CHECK(theta.segment(3, 4) == ProxOperator::group_row(2, 2, 1.0)(beta.segment(3, 4)));
  CHECK(theta[7] == -5.0);

  const BlockProx scaled = prox.with_lambda(2.0);
  CHECK(scaled.op(0).lambda() == 2.0);
  CHECK(scaled.op(1).lambda() == 1.0);
  CHECK(scaled.lambda() == 2.0);
  BlockProx fixed;
  fixed.add("x", ProxOperator::identity(2), false);
  CHECK_THROWS_AS(fixed.with_lambda(1.0), ConfigError);
}

TEST_CASE("beta prior densities") {
  Rng rng(3);
  const BetaPrior diag = BetaPrior::diagonal(Vector::Constant(2, 1.0), (Vector(2) << 4.0, 0.25).finished());
  const Matrix cov = (Matrix(2, 2) << 4.0, 0.0, 0.0, 0.25).finished();
  const BetaPrior dense = BetaPrior::gaussian(Vector::Constant(2, 1.0), cov);
  for (int k = 0; k < 5; ++k) {
    const Vector b = random_vector(2, rng);
    // N(1, 4) × N(1, 0.25) written out by hand.
    const double expected = -0.5 * std::pow(b[0] - 1.0, 2) / 4.0 - 0.5 * std::log(2 * std::numbers::pi * 4.0) -
                            0.5 * std::pow(b[1] - 1.0, 2) / 0.25 - 0.5 * std::log(2 * std::numbers::pi * 0.25);
    CHECK(diag.log_density(b) == doctest::Approx(expected).epsilon(1e-13));
    CHECK(dense.log_density(b) == doctest::Approx(expected).epsilon(1e-13));
    CHECK((diag.grad_log_density(b) - dense.grad_log_density(b)).norm() <= 1e-13);
  }
  CHECK_THROWS_AS(BetaPrior::gaussian(Vector::Zero(2), -cov), InvalidInput);
  CHECK_THROWS_AS(dense.with_log_inverse_gamma(0, 2.0, 0.01), InvalidInput);
}

TEST_CASE("log inverse gamma term") {
  const BetaPrior prior = BetaPrior::standard_normal(2).with_log_inverse_gamma(1, 2.0, 0.01);
  Vector b = (Vector(2) << 0.3, std::log(0.02)).finished();
  const double s = b[1];
  const double expected = -0.5 * 0.09 - 0.5 * std::log(2 * std::numbers::pi) + 2.0 * std::log(0.01) -
                          std::lgamma(2.0) - 2.0 * s - 0.01 * std::exp(-s);
  CHECK(prior.log_density(b) == doctest::Approx(expected).epsilon(1e-13));
  const Vector g = prior.grad_log_density(b);
  CHECK(g[1] == doctest::Approx(fd_derivative([&](const Vector& x) { return prior.log_density(x); }, b, 1, 1e-6))
                    .epsilon(1e-7));
  // E[1/σ²] = a/b for σ² ~ IG(a, b).
  Rng rng(10);
  double mean_precision = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) mean_precision += std::exp(-prior.sample(rng)[1]);
  CHECK(mean_precision / n == doctest::Approx(200.0).epsilon(0.01));
}

TEST_CASE("gaussian mean model, experiment setup") {
  Rng rng(1);
  const Matrix Y = paper_data(rng);
  const Model model = make_gaussian_mean_model(Y, 3.0, paper_plane(), 2.0);
  CHECK_NOTHROW(model.validate());
  CHECK(model.dim() == 3);
  CHECK(model.lambda() == 2.0);
  CHECK(model.beta_prior.variance() == Vector::Constant(3, 9.0));
  const Vector ybar = Y.colwise().mean().transpose();
  CHECK(model.grad_log_lik(ybar).norm() <= 1e-12);
  check_likelihood_gradient(model, rng, 2.0, 1e-6);
  // Direct sum over observations.
  const Vector theta = random_vector(3, rng);
  double direct = 0.0;
  for (Index i = 0; i < 20; ++i)
    direct += -0.5 * (Y.row(i).transpose() - theta).squaredNorm() / 9.0 - 1.5 * std::log(2 * std::numbers::pi * 9.0);
  CHECK(model.log_lik(theta) == doctest::Approx(direct).epsilon(1e-12));
  CHECK_THROWS_AS(make_gaussian_mean_model(Matrix::Zero(5, 2), 1.0, paper_plane(), 1.0), ShapeError);
}

TEST_CASE("log posterior factorizes") {
  Rng rng(4);
  const Matrix Y = paper_data(rng);
  const Model model = make_gaussian_mean_model(Y, 3.0, paper_plane(), 2.0);
  double constant = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Vector beta = random_vector(3, rng, 3.0);
    const Vector theta = model.prox(beta);
    double log_lik = 0.0;
    for (Index i = 0; i < Y.rows(); ++i) log_lik -= (Y.row(i).transpose() - theta).squaredNorm() / 18.0;
    const double log_prior = -beta.squaredNorm() / 18.0;
    const double c = model.log_posterior(beta) - log_lik - log_prior;
    if (k == 0) constant = c;
    CHECK(c == doctest::Approx(constant).epsilon(1e-12));
  }
}

TEST_CASE("sparse regression model") {
  Rng rng(2);
  const Matrix X = random_matrix(15, 4, rng);
  const Vector y = random_vector(15, rng);
  const Model model = make_sparse_regression_model(X, y, 0.7, 1.5);
  CHECK(model.prox.op(0).kind() == ProxKind::soft_threshold);
  CHECK(model.lambda() == 1.5);
  check_likelihood_gradient(model, rng, 1.0, 1e-6);
  CHECK(model.with_lambda(0.2).lambda() == 0.2);
  CHECK_THROWS_AS(make_sparse_regression_model(X, Vector::Zero(3), 1.0), ShapeError);
}

TEST_CASE("affine mean model draws stay on the plane") {
  Rng rng(7);
  const Matrix Y = paper_data(rng);
  const Model model = make_affine_mean_model(Y, AffineConstraint::hyperplane(Vector::Ones(3), 1.0));
  for (int k = 0; k < 50; ++k) CHECK(std::abs(model.theta(random_vector(3, rng, 5.0)).sum() - 1.0) < 1e-8);
  CHECK_THROWS_AS(model.with_lambda(1.0), ConfigError);
  const Model free = make_affine_mean_model(Y, AffineConstraint::unconstrained(3));
  const Vector b = random_vector(3, rng);
  CHECK(free.theta(b) == b);
}

TEST_CASE("flow observation map") {
  Rng rng(5);
  const Index n = 5;
  const Matrix G = flow_observation_matrix(n);
  CHECK(G.rows() == 15);
  CHECK(G.cols() == 10);
  for (int k = 0; k < 5; ++k) {
    const FlowNetwork net = FlowNetwork::from_lower(random_vector(10, rng));
    CHECK((G * net.lower - upper_inclusive(net.to_matrix())).norm() <= 1e-13);
  }
}

TEST_CASE("flow factor model") {
  Rng rng(11);
  const SyntheticFlowData data = make_synthetic_flows(5, 4, 2, 0.1, rng, 3);
  const Model model = make_flow_factor_model(data.Y, 3, 0.2, 0.2, 0.8);
  CHECK_NOTHROW(model.validate());
  const FlowLayout& L = *model.flow;
  CHECK(L.n_edges == 10);
  CHECK(model.dim() == 3 * 10 + 3 * 4 + 1);
  CHECK(model.prox.n_blocks() == 5);
  CHECK(model.prox.op(0).jacobian_method() == JacobianMethod::active_set);
  check_likelihood_gradient(model, rng, 1.0, 1e-5);

  SUBCASE("a zero loading row switches its factor off") {
    Vector beta = random_vector(model.dim(), rng, 2.0);
    for (Index t = 0; t < L.n_times; ++t) beta[L.loading_offset() + 0 + t * L.n_factors] = 0.0;
    const double base = model.log_lik(model.theta(beta));
    for (Index e = 0; e < L.n_edges; ++e) beta[e] += 3.0 * standard_normal(1, rng)[0];
    CHECK(model.log_lik(model.theta(beta)) == base);
  }

  SUBCASE("decoded factors are feasible flows") {
    const Vector beta = random_vector(model.dim(), rng, 2.0);
    const FlowFactorState state = decode_flow_state(model, beta);
    REQUIRE(state.factors.size() == 3);
    for (const FlowNetwork& f : state.factors) {
      const Matrix F = f.to_matrix();
      const Matrix off = F - Matrix(F.diagonal().asDiagonal());
      CHECK((off + off.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(f.conservation_residual() <= 1e-6);
    }
    const std::vector<Matrix> recon = flow_reconstruction(state);
    REQUIRE(recon.size() == 4);
    // Reconstruction reproduces the model mean on the observed triangle.
    double direct = 0.0;
    for (Index t = 0; t < 4; ++t) direct += (upper_inclusive(data.Y[t]) - upper_inclusive(recon[t])).squaredNorm();
    const Vector theta = model.theta(beta);
    const double s = theta[L.log_sigma2_index()];
    const double expected = -0.5 * std::exp(-s) * direct - 0.5 * 60.0 * (s + std::log(2 * std::numbers::pi));
    CHECK(model.log_lik(theta) == doctest::Approx(expected).epsilon(1e-12));
  }

  CHECK_THROWS_AS(make_flow_factor_model({Matrix::Zero(4, 4), Matrix::Zero(3, 3)}, 2, 0.1, 0.1, 0.1), ShapeError);
  CHECK_THROWS_AS(make_flow_factor_model(data.Y, 0, 0.1, 0.1, 0.1), InvalidInput);
}

TEST_CASE("synthetic flows are feasible cycles") {
  Rng rng(19);
  const SyntheticFlowData data = make_synthetic_flows(10, 8, 2, 0.05, rng);
  REQUIRE(data.factors.size() == 2);
  for (const FlowNetwork& f : data.factors) {
    CHECK(f.diag.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(f.conservation_residual() <= 1e-12);
    CHECK((f.lower.array() != 0.0).count() == 4);
  }
  CHECK((data.loadings.array() > 0.0).all());
  const Matrix expected = data.loadings(0, 3) * data.factors[0].to_matrix() + data.loadings(1, 3) * data.factors[1].to_matrix();
  CHECK((data.mean[3] - expected).norm() <= 1e-12);
  CHECK((data.Y[3] - data.mean[3]).norm() > 0.0);
}

TEST_CASE("flow table round trip") {
  Rng rng(23);
  const SyntheticFlowData data = make_synthetic_flows(6, 3, 1, 0.0, rng);
  std::stringstream ss;
  write_flow_table(ss, data.Y);
  const FlowTable back = read_flow_table(ss);
  CHECK_FALSE(back.raw);
  REQUIRE(back.Y.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) CHECK((back.Y[t] - data.Y[t]).norm() == 0.0);
}

TEST_CASE("flow table parsing") {
  SUBCASE("feasible rows fill the upper triangle and the net flow") {
    std::stringstream ss("t,i,j,flow\n1,2,1,1.5\n1,3,2,-0.5  # comment\n");
    const FlowTable table = read_flow_table(ss);
    REQUIRE(table.Y.size() == 1);
    const Matrix& Y = table.Y[0];
    CHECK(Y(1, 0) == 1.5);
    CHECK(Y(0, 1) == -1.5);
    CHECK(Y(1, 2) == 0.5);
    CHECK(FlowNetwork::from_matrix(Y).conservation_residual() <= 1e-15);
  }
  SUBCASE("raw rows are antisymmetrized") {
    std::stringstream ss("1 2 1 3.0\n1 1 2 -1.0\n1 1 1 0.25\n");
    const FlowTable table = read_flow_table(ss);
    CHECK(table.raw);
    CHECK(table.Y[0](1, 0) == 2.0);
    CHECK(table.Y[0](0, 1) == -2.0);
    CHECK(table.Y[0](0, 0) == 0.25);
  }
  SUBCASE("bad rows") {
    std::stringstream skip("1 2 1 1.0\n1 2.5 1 1.0\n");
    const FlowTable table = read_flow_table(skip);
    CHECK(table.warnings.size() == 1);
    std::stringstream cols("1 2 1\n");
    CHECK_THROWS_AS(read_flow_table(cols), InvalidInput);
    std::stringstream value("1 2 1 abc\n");
    CHECK_THROWS_AS(read_flow_table(value), InvalidInput);
    std::stringstream zero("1 0 1 1.0\n");
    CHECK_THROWS_AS(read_flow_table(zero), InvalidInput);
    std::stringstream big("1 5 1 1.0\n");
    CHECK_THROWS_AS(read_flow_table(big, 3), InvalidInput);
  }
}
