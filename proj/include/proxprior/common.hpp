#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace proxprior {

using Scalar = double;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or otherwise malformed arguments.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An affine constraint whose offset is outside the range of Aᵀ.
class InfeasibleConstraint : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver that hit its iteration cap.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double primal_residual,
                   double dual_residual)
      : Error(what + " (iterations=" + std::to_string(iterations) +
              ", primal_residual=" + std::to_string(primal_residual) +
              ", dual_residual=" + std::to_string(dual_residual) + ")"),
        iterations_(iterations),
        primal_residual_(primal_residual),
        dual_residual_(dual_residual) {}

  int iterations() const { return iterations_; }
  double primal_residual() const { return primal_residual_; }
  double dual_residual() const { return dual_residual_; }

 private:
  int iterations_;
  double primal_residual_;
  double dual_residual_;
};

/// A proximal map that does not move with λ, so no deformation curve exists.
class DegenerateOperator : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Too many divergent transitions in a chain.
class ChainFailure : public Error {
 public:
  using Error::Error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const char* what) {
  if (!x.allFinite()) throw InvalidInput(std::string(what) + ": non-finite input");
}

}  // namespace proxprior
