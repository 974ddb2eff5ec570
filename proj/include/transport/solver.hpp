#pragma once

// Saddle-point solves of
//   [G  B] [y]   [rhs]
//   [B' 0] [u] = [ 0 ]
// with G the test Gram matrix and B the transport form. The trial basis is
// L2-orthonormal, so the trial mass matrix is the identity throughout.

#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "transport/assembly.hpp"

namespace transport {

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SaddleOperators {
  SparseMatrix B;
  SparseMatrix G;
  Eigen::VectorXd rhs;

  static SaddleOperators assemble(const TrialSpace& trial, const TestSpace& test, const TransportProblem& p);
};

/// Sparse Cholesky factorization of a Gram matrix.
class GramSolver {
 public:
  explicit GramSolver(const SparseMatrix& G);
  Eigen::VectorXd solve(const Eigen::VectorXd& r) const { return llt_.solve(r); }
  /// Dual norm sqrt(r' G^-1 r).
  double dual_norm(const Eigen::VectorXd& r) const;
  /// W = L^-1 P X, so that X' G^-1 X = W' W.
  Eigen::MatrixXd half_solve(const Eigen::MatrixXd& X) const;
  Eigen::Index size() const { return n_; }

 private:
  Eigen::SimplicialLLT<SparseMatrix> llt_;
  Eigen::Index n_ = 0;
};

struct SaddleState {
  Eigen::VectorXd u;
  Eigen::VectorXd y;
  int iterations = 0;
  /// Trial iterates u^0, u^1, ... when recorded.
  std::vector<Eigen::VectorXd> history;
};

/// Schur complement B' G^-1 B, dense.
Eigen::MatrixXd schur_complement(const SaddleOperators& ops, const GramSolver& gs);

/// Direct solve through the Schur complement.
SaddleState solve_saddle(const SaddleOperators& ops, const GramSolver& gs);
SaddleState solve_saddle(const SaddleOperators& ops);

struct UzawaOptions {
  int max_steps = 10;
  /// Stop once ||y^k - y^{k-1}||_Y < early_stop ||y^k||_Y (0 disables).
  double early_stop = 0.0;
  bool record = false;
};

/// y^k = G^-1 (rhs - B u^k), u^{k+1} = u^k + B' y^k.
SaddleState uzawa(const SaddleOperators& ops, const GramSolver& gs, const Eigen::VectorXd& u0,
                  const UzawaOptions& opt = {});

/// inf over phi in V of ||e - B* phi|| / ||e|| with e = u_proj - u_K; nullopt
/// when ||e|| < 1e-14.
std::optional<double> estimate_delta(const SaddleOperators& ops, const GramSolver& gs, const Eigen::VectorXd& u_proj,
                                     const Eigen::VectorXd& u_K);

/// Smallest singular value of G^-1/2 B (trial mass = identity).
double inf_sup_constant(const SaddleOperators& ops, const GramSolver& gs);

/// Closed-form solution of the benchmark problem, discontinuous along the
/// characteristic x1 = x2^2/2 through the origin.
PiecewiseSmooth benchmark_solution();

/// Method of characteristics: trace back along b to the inflow boundary and
/// integrate u' + c u = f forward from u = g. Adaptive Runge-Kutta with
/// tolerance tol.
double characteristics_value(const TransportProblem& p, const Vec2& x, double tol = 1e-10);

/// Reference solution by characteristics, using the discontinuity curve of f.
PiecewiseSmooth reference_solution(const TransportProblem& p, double tol = 1e-10);

}  // namespace transport
