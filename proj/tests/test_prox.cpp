#include "doctest.h"

#include <Eigen/SVD>

#include "proxprior/prox.hpp"
#include "proxprior/prox_operator.hpp"
#include "test_support.hpp"

using namespace proxprior;
using namespace proxprior::testing;

TEST_CASE("soft threshold closed form") {
  Vector beta(3);
  beta << 2.0, -0.5, 0.1;
  const Vector theta = soft_threshold(beta, 1.0);
  CHECK(theta[0] == doctest::Approx(1.0));
  CHECK(theta[1] == 0.0);
  CHECK(theta[2] == 0.0);

  Rng rng(7);
  const Vector any = random_vector(6, rng, 3.0);
  CHECK((soft_threshold(any, 0.0) - any).norm() == 0.0);
}

TEST_CASE("soft threshold matches 1-D grid minimization") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector beta = random_vector(3, rng, 2.0);
    const double lambda = 2.0 * uniform01(rng);
    const Vector theta = soft_threshold(beta, lambda);
    for (Index j = 0; j < beta.size(); ++j) {
      const double b = beta[j];
      const double grid = grid_argmin_1d([&](double z) { return lambda * std::abs(z) + 0.5 * (z - b) * (z - b); },
                                         -std::abs(b) - 1.0, std::abs(b) + 1.0, 1e-4);
      CHECK(std::abs(theta[j] - grid) <= 1e-4);
    }
  }
}

TEST_CASE("non-finite input is rejected") {
  Vector beta(2);
  beta << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(soft_threshold(beta, 1.0), InvalidInput);
  CHECK_THROWS_AS(ProxOperator::group_row(1, 2, 1.0)(beta), InvalidInput);
  CHECK_THROWS_AS(soft_threshold(Vector::Ones(2), -1.0), InvalidInput);
}

TEST_CASE("affine projection examples") {
  {
    Matrix A = Matrix::Zero(2, 1);
    A(0, 0) = 1.0;
    AffineConstraint c(A, Vector::Zero(1));
    Vector beta(2);
    beta << 3.0, 4.0;
    const Vector theta = ProxOperator::affine_projection(c)(beta);
    CHECK(theta[0] == doctest::Approx(0.0));
    CHECK(theta[1] == doctest::Approx(4.0));
  }
  {
    AffineConstraint c = AffineConstraint::hyperplane(Vector::Ones(3), 1.0);
    const Vector theta = c.project(Vector::Zero(3));
    for (Index i = 0; i < 3; ++i) CHECK(theta[i] == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("affine projection on rank-deficient A satisfies KKT") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix A = random_matrix(5, 2, rng) * random_matrix(2, 3, rng);  // rank 2
    const Vector b = A.transpose() * random_vector(5, rng);
    AffineConstraint c(A, b);
    CHECK(c.rank() == 2);
    const Vector beta = random_vector(5, rng, 2.0);
    const Vector theta = c.project(beta);
    CHECK(c.residual(theta).norm() < 1e-8);
    // θ − β lies in range(A), i.e. is orthogonal to null(Aᵀ).
    Eigen::JacobiSVD<Matrix> svd(A.transpose(), Eigen::ComputeFullV);
    const Matrix null_basis = svd.matrixV().rightCols(5 - 2);
    CHECK((null_basis.transpose() * (theta - beta)).norm() < 1e-8);
    // Idempotence.
    CHECK((c.project(theta) - theta).norm() < 1e-10);
  }
}

TEST_CASE("infeasible affine constraint is rejected") {
  Matrix A = Matrix::Zero(3, 2);
  A(0, 0) = 1.0;
  A(0, 1) = 1.0;  // both constraints act on θ₁
  Vector b(2);
  b << 1.0, 2.0;  // θ₁ = 1 and θ₁ = 2
  CHECK_THROWS_AS(AffineConstraint(A, b), InfeasibleConstraint);
  CHECK_THROWS_AS(AffineConstraint(Matrix::Ones(3, 2), Vector::Ones(3)), ShapeError);
}

TEST_CASE("nuclear prox") {
  Matrix B = Matrix::Zero(2, 2);
  B(0, 0) = 3.0;
  B(1, 1) = 1.0;
  const Matrix theta = nuclear_shrink(B, 2.0);
  CHECK(theta(0, 0) == doctest::Approx(1.0));
  CHECK(std::abs(theta(1, 1)) < 1e-14);
  CHECK(std::abs(theta(0, 1)) < 1e-14);

  Rng rng(5);
  const Matrix R = random_matrix(3, 4, rng);
  CHECK((nuclear_shrink(R, 0.0) - R).norm() == 0.0);
}

TEST_CASE("nuclear prox satisfies subgradient optimality") {
  Rng rng(17);
  const double lambda = 0.7;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix B = random_matrix(4, 4, rng);
    const Matrix theta = nuclear_shrink(B, lambda);
    const Matrix G = B - theta;  // must be λ times a subgradient of ‖·‖_* at θ
    Eigen::JacobiSVD<Matrix> gsvd(G);
    CHECK(gsvd.singularValues().maxCoeff() <= lambda + 1e-8);

    Eigen::JacobiSVD<Matrix> tsvd(theta, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Index active = 0;
    while (active < 4 && tsvd.singularValues()[active] > 1e-10) ++active;
    const Matrix U = tsvd.matrixU().leftCols(active);
    const Matrix V = tsvd.matrixV().leftCols(active);
    CHECK((G * V - lambda * U).norm() < 1e-8);
    CHECK((U.transpose() * G - lambda * V.transpose()).norm() < 1e-8);
  }
}

TEST_CASE("group row prox") {
  Matrix B(1, 2);
  B << 3.0, 4.0;
  CHECK(group_row_shrink(B, 5.0).norm() == 0.0);
  const Matrix half = group_row_shrink(B, 2.5);
  CHECK(half(0, 0) == doctest::Approx(1.5));
  CHECK(half(0, 1) == doctest::Approx(2.0));
  CHECK(group_row_shrink(Matrix::Zero(2, 3), 1.0).norm() == 0.0);
}

TEST_CASE("group row prox beats random perturbations") {
  Rng rng(23);
  const ProxOperator op = ProxOperator::group_row(6, 3, 1.0);
  const Vector beta = random_vector(18, rng, 1.5);
  const Vector theta = op(beta);
  const double best = op.objective(theta, beta);
  for (int k = 0; k < 1000; ++k) {
    const Vector z = theta + 1e-2 * random_vector(18, rng);
    CHECK(best <= op.objective(z, beta));
  }
}

TEST_CASE("nonnegative group prox clips then shrinks") {
  const ProxOperator op = ProxOperator::group_row(1, 3, 1.0, true);
  Vector beta(3);
  beta << 3.0, -2.0, 4.0;
  const Vector theta = op(beta);
  CHECK(theta[1] == 0.0);
  CHECK(theta[0] == doctest::Approx(3.0 * (1.0 - 1.0 / 5.0)));
  CHECK(theta[2] == doctest::Approx(4.0 * (1.0 - 1.0 / 5.0)));
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    const Vector z = (theta + 0.05 * random_vector(3, rng)).cwiseMax(0.0);
    CHECK(op.objective(theta, beta) <= op.objective(z, beta) + 1e-12);
  }
}

TEST_CASE("set expansion") {
  const ConvexSet plane = ConvexSet::affine(AffineConstraint::hyperplane(Vector::Ones(3), 1.0));
  const double lambda = 1.0;
  const ProxOperator op = ProxOperator::set_expansion(plane, lambda);

  Vector on_plane(3);
  on_plane << 0.2, 0.3, 0.5;
  CHECK((op(on_plane) - on_plane).norm() < 1e-15);

  // β at distance 2λ from the plane lands halfway to its projection.
  const Vector normal = Vector::Ones(3) / std::sqrt(3.0);
  const Vector beta = on_plane + 2.0 * lambda * normal;
  const Vector expected = 0.5 * (beta + plane.project(beta));
  CHECK((op(beta) - expected).norm() < 1e-12);
}

TEST_CASE("set expansion prior mass near the plane") {
  const ConvexSet plane = ConvexSet::affine(AffineConstraint::hyperplane(Vector::Ones(3), 1.0));
  Rng rng(101);
  int inside = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k)
    if (plane.distance(3.0 * standard_normal(3, rng)) < 2.0) ++inside;
  CHECK(std::abs(double(inside) / n - 0.48) <= 0.02);
}

TEST_CASE("prox objective") {
  const ProxOperator l1 = ProxOperator::soft_threshold(2, 1.0);
  CHECK(l1.objective(Vector::Zero(2), Vector::Zero(2)) == 0.0);
  Vector z(2), beta(2);
  z << 1.0, 0.0;
  beta << 2.0, 0.0;
  CHECK(l1.objective(z, beta) == doctest::Approx(1.5));

  const ProxOperator proj = ProxOperator::affine_projection(AffineConstraint::hyperplane(Vector::Ones(2), 1.0));
  CHECK(proj.objective(Vector::Zero(2), Vector::Zero(2)) == kInfeasibleObjective);
}

TEST_CASE("every operator's output minimizes its objective") {
  Rng rng(31);
  for (const ProxOperator& op : one_of_each_kind(rng)) {
    CAPTURE(to_string(op.kind()));
    for (int trial = 0; trial < 5; ++trial) {
      const Vector beta = random_vector(op.dim(), rng, 2.0);
      const Vector theta = op(beta);
      const double best = op.objective(theta, beta);
      for (int k = 0; k < 1000; ++k) {
        Vector z = theta + 0.05 * random_vector(op.dim(), rng);
        if (op.kind() == ProxKind::affine_projection) z = op.constraint()->project(z);
        CHECK(best <= op.objective(z, beta) + 1e-9);
      }
    }
  }
}

TEST_CASE("non-expansiveness of every operator kind") {
  Rng rng(37);
  for (const ProxOperator& op : one_of_each_kind(rng)) {
    CAPTURE(to_string(op.kind()));
    const double slack = admm_backed(op) ? 1e-5 : 1e-9;
    for (int k = 0; k < 1000; ++k) {
      const Vector x = random_vector(op.dim(), rng, 2.0);
      const Vector y = random_vector(op.dim(), rng, 2.0);
      CHECK((op(x) - op(y)).norm() <= (x - y).norm() + slack);
    }
  }
}

TEST_CASE("deformation grows with lambda") {
  Rng rng(41);
  for (const ProxOperator& op : one_of_each_kind(rng)) {
    CAPTURE(to_string(op.kind()));
    for (int trial = 0; trial < 20; ++trial) {
      const Vector beta = random_vector(op.dim(), rng, 2.0);
      double previous = 0.0;
      for (int g = 1; g <= 20; ++g) {
        const double scale = op.lambda() * 0.1 * g;
        const double moved = (beta - op.with_lambda(scale)(beta)).norm();
        CHECK(moved >= previous - 1e-7);
        previous = moved;
      }
    }
  }
}

TEST_CASE("identity at lambda zero") {
  Rng rng(43);
  for (const ProxOperator& op : one_of_each_kind(rng)) {
    if (op.kind() == ProxKind::affine_projection) continue;  // g is not finite everywhere
    const Vector beta = random_vector(op.dim(), rng);
    CHECK((op.with_lambda(0.0)(beta) - beta).norm() == 0.0);
  }
}

TEST_CASE("limit points") {
  Rng rng(47);
  const Vector beta = random_vector(3, rng);
  CHECK(ProxOperator::soft_threshold(3, 1.0).limit_point(beta).norm() == 0.0);
  const ConvexSet plane = ConvexSet::affine(AffineConstraint::hyperplane(Vector::Ones(3), 1.0));
  CHECK((ProxOperator::set_expansion(plane, 1.0).limit_point(beta) - plane.project(beta)).norm() < 1e-15);
  CHECK_THROWS_AS(ProxOperator::affine_projection(AffineConstraint::hyperplane(Vector::Ones(3), 1.0)).limit_point(beta),
                  DegenerateOperator);
  // fused-ℓ1 with first differences collapses to the mean.
  const Vector limit = ProxOperator::fused_l1(first_difference_matrix(3), 1.0).limit_point(beta);
  CHECK((limit - Vector::Constant(3, beta.mean())).norm() < 1e-12);
}

TEST_CASE("analytic jacobians match central differences") {
  Rng rng(53);
  const double h = 1e-6;
  for (const ProxOperator& op : one_of_each_kind(rng)) {
    if (!op.has_exact_jacobian()) continue;
    CAPTURE(to_string(op.kind()));
    const Vector beta = random_vector(op.dim(), rng, 2.0);
    const Matrix J = op.jacobian(beta);
    Matrix fd(op.dim(), op.dim());
    for (Index j = 0; j < op.dim(); ++j) {
      Vector e = Vector::Zero(op.dim());
      e[j] = h;
      fd.col(j) = (op(beta + e) - op(beta - e)) / (2 * h);
    }
    CHECK((J - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}
