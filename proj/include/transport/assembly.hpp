#pragma once

// Assembly of the transport form b(w, v) = int w B*v, with the formal adjoint
// B*v = -b.grad(v) + (c - div b) v, the test Gram matrix (B*v, B*w), and the
// load functional (f, v) + int_{inflow} g v |b.n|.

#include <functional>
#include <iosfwd>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "transport/spaces.hpp"

namespace transport {

using ScalarField = std::function<double(const Vec2&)>;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct TransportProblem {
  VelocityField b;
  ScalarField div_b;
  ScalarField c;
  PiecewiseSmooth f;
  ScalarField g;  // inflow data; empty means zero

  /// b = (x2, 1), c = 1, g = 0, f = 1 right of x1 = x2^2/2 and 1/2 left of it.
  static TransportProblem benchmark();
  /// Constant direction b, constant reaction c, constant source f, g = 0.
  static TransportProblem constant(Vec2 b, double c, double f);

  /// min of 2c - div b on an n x n sample grid.
  double coercivity(int n = 64) const;
};

/// Coefficients of a first-order operator A v = -beta.grad(v) + gamma v.
struct AdjointCoefficients {
  VelocityField beta;
  ScalarField gamma;

  static AdjointCoefficients of(const TransportProblem& p);
};

/// Rows: test dofs. Columns: trial dofs. Entry (i, j) = int phi_j A psi_i.
SparseMatrix assemble_B(const TrialSpace& trial, const TestSpace& test, const AdjointCoefficients& a);
SparseMatrix assemble_B(const TrialSpace& trial, const TestSpace& test, const TransportProblem& p);

/// Entry (i, j) = int (A1 psi_i)(A2 psi_j).
SparseMatrix assemble_gram(const TestSpace& test, const AdjointCoefficients& a1, const AdjointCoefficients& a2);
SparseMatrix assemble_gram_Y(const TestSpace& test, const TransportProblem& p);

/// (f, psi_i), split along the curve of f when it cuts a triangle.
Eigen::VectorXd assemble_load(const TestSpace& test, const PiecewiseSmooth& f);
/// int over the inflow boundary {b.n < 0} of g psi_i |b.n|.
Eigen::VectorXd assemble_inflow(const TestSpace& test, const VelocityField& b, const ScalarField& g);
Eigen::VectorXd assemble_rhs(const TestSpace& test, const TransportProblem& p);

/// A v evaluated anywhere in the domain for a test function v.
class AdjointField {
 public:
  AdjointField(const TestSpace& test, Eigen::VectorXd y, AdjointCoefficients a);
  double value(std::size_t tri, const Vec2& x) const;
  /// Locates the triangle first; zero outside the domain.
  double value(const Vec2& x) const;
  const TestSpace& space() const { return *test_; }

 private:
  const TestSpace* test_;
  Eigen::VectorXd y_;
  AdjointCoefficients a_;
};

AdjointField apply_adjoint(const Eigen::VectorXd& y, const TestSpace& test, const TransportProblem& p);

/// sqrt(r' G^-1 r) with r = rhs - B w.
double dual_norm_residual(const Eigen::VectorXd& w, const SparseMatrix& B, const SparseMatrix& G,
                          const Eigen::VectorXd& rhs);
double dual_norm_residual(const Eigen::VectorXd& w, const TrialSpace& trial, const TestSpace& test,
                          const TransportProblem& p);

/// "i j value" lines, zero-based, one per stored entry.
void write_coo(std::ostream& os, const SparseMatrix& m);

}  // namespace transport
