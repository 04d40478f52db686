#pragma once

// ADMM evaluation of proximal maps without a closed form:
//
//   prox(β) = argmin_z ½‖z − β‖² + λ₁‖z‖₁ + λ₂‖Dz‖₁
//
// which covers the fused-ℓ1 prox (λ₁ = 0, D a difference matrix) and the
// flow-network prox (D = C, the node/edge incidence matrix on the
// lower-triangular edge vector).

#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "proxprior/common.hpp"

namespace proxprior {

struct ADMMConfig {
  double gamma = 1.0;
  double tol_primal = 1e-8;
  double tol_dual = 1e-8;
  int max_iters = 10000;
  /// Try an active-set solve with a KKT certificate every `polish_interval`
  /// iterations; a certified solve ends the iteration with an exact optimum.
  bool polish = true;
  int polish_interval = 10;
  /// Verification knob: refactor the z-system every iteration instead of
  /// reusing the factorization.
  bool refactor_each_iteration = false;

  void validate() const;
};

/// Which coordinates are non-zero and which rows of Dz vanish at a solution.
struct ActiveSet {
  std::vector<Index> support;     // i with z_i ≠ 0 (all i when λ₁ = 0)
  std::vector<Index> zero_rows;   // j with (Dz)_j = 0 (none when λ₂ = 0)
};

struct ADMMResult {
  Vector z;
  Vector Dz;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool polished = false;
  ActiveSet active;
};

/// Solver for ½‖z − β‖² + λ₁‖z‖₁ + λ₂‖Dz‖₁ with a fixed D. The Cholesky
/// factorization of the z-update system is built once and reused by every
/// solve; the object is immutable and safe to share across threads.
class L1SplitSolver {
 public:
  L1SplitSolver(Matrix D, ADMMConfig config);

  const Matrix& D() const { return D_; }
  const ADMMConfig& config() const { return config_; }
  Index dim() const { return D_.cols(); }

  /// Throws ConvergenceError when max_iters is reached unconverged.
  ADMMResult solve(const Vector& beta, double lambda1, double lambda2) const;

  /// Jacobian of the prox at a solution: the projector onto
  /// {z : z_i = 0 off the support, D_{zero rows} z = 0}, restricted to the
  /// support. Exact wherever the active set is locally stable.
  Matrix active_set_jacobian(const ActiveSet& active) const;

  /// λ₁‖z‖₁ + λ₂‖Dz‖₁.
  double penalty(const Vector& z, double lambda1, double lambda2) const;

 private:
  std::optional<Vector> polish(const Vector& beta, double lambda1, double lambda2, const Vector& w,
                               const Vector& x, const Vector& ux) const;
  std::optional<Vector> polish_guess(const Vector& beta, double lambda1, double lambda2, const Vector& w,
                                     const Vector& x, const Vector& ux) const;
  ActiveSet active_set_of(const Vector& z, double lambda1, double lambda2) const;

  Matrix D_;
  ADMMConfig config_;
  Eigen::LLT<Matrix> factor_;  // (1 + γ)I + γDᵀD
};

/// First-difference matrix of size (p−1)×p: (Dz)_k = z_{k+1} − z_k.
Matrix first_difference_matrix(Index p);

/// argmin_z λ‖Dz‖₁ + ½‖z − β‖². λ = 0 returns β without iterating.
Vector prox_fused_l1(const Vector& beta, const Matrix& D, double lambda, const ADMMConfig& cfg = {});

/// A flow matrix in lower-triangular edge form. `lower` holds z_{i,j},
/// i > j, ordered (1,0), (2,0), (2,1), (3,0), ... (0-based); the full matrix
/// has F_{i,j} = z_{i,j}, F_{j,i} = −z_{i,j}, F_{j,j} = diag_j.
struct FlowNetwork {
  Index n_nodes = 0;
  Vector lower;
  Vector diag;

  static Index n_edges(Index n_nodes) { return n_nodes * (n_nodes - 1) / 2; }
  /// Position of edge (i, j), i > j, in `lower`.
  static Index edge_index(Index i, Index j) { return i * (i - 1) / 2 + j; }
  /// Node count for an edge-vector length; throws ShapeError if the length
  /// is not a triangular number n(n−1)/2 with n ≥ 2.
  static Index nodes_for_edges(Index n_edges);

  /// Builds a network whose diagonal is the net column flow C·lower.
  static FlowNetwork from_lower(Vector lower);
  /// Reads the strictly lower triangle and the diagonal of F.
  static FlowNetwork from_matrix(const Matrix& F);

  Matrix to_matrix() const;
  /// max_j |diag_j − Σ_{i≠j} F_{i,j}|.
  double conservation_residual() const;
};

/// Node/edge matrix C (n × n(n−1)/2) with (Cz)_k = Σ_{i>k} z_{i,k} − Σ_{i<k} z_{k,i}.
Matrix build_flow_constraint_matrix(Index n_nodes);

/// argmin_z ½‖z − β‖² + λ₁‖z‖₁ + λ₂‖Cz‖₁ over lower-triangular edge vectors.
/// The returned network's diagonal is Cz.
FlowNetwork prox_flow(const Vector& beta_lower, double lambda1, double lambda2, const ADMMConfig& cfg = {});

}  // namespace proxprior
