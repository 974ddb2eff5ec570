#pragma once

// Sparse discrete ordinates method for radiative transfer with scattering on
// the unit square with directions on the unit circle:
//   s.grad u + kappa u + sigma (u - int Phi(s, s') u(x, s') ds') = kappa I_b,
// u = g on the inflow boundary (imposed weakly). P1 in space, piecewise
// constants on arcs in angle with midpoint collocation, SUPG test functions,
// and the combination technique across (space, angle) level pairs.

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "transport/geometry.hpp"

namespace transport {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Arcs of the coarsest angular level.
inline constexpr int kBaseArcs = 8;

/// Exact intensity with its spatial gradient and incident radiation.
struct RadiationSolution {
  std::function<double(const Vec2&, double angle)> u;
  std::function<Vec2(const Vec2&, double angle)> grad_u;
  std::function<double(const Vec2&)> G;
  std::function<Vec2(const Vec2&)> grad_G;
};

struct RTEProblem {
  double kappa = 1.0;
  double sigma = 0.5;
  /// Phase function of the two angles, normalized so that its integral over
  /// the second angle is 1.
  std::function<double(double, double)> phase = isotropic;
  /// Blackbody intensity; the source is kappa * I_b.
  std::function<double(const Vec2&, double angle)> blackbody;
  /// Inflow values (zero when empty).
  std::function<double(const Vec2&, double angle)> inflow;
  std::optional<RadiationSolution> exact;

  static double isotropic(double, double);
  /// u = 3/(16 pi) (1 + (s.s')^2) prod 16 x_i (1 - x_i) with s' = (1, 1)/sqrt(2).
  /// Requires kappa > 0.
  static RTEProblem manufactured(double kappa = 1.0, double sigma = 0.5);

  /// Throws std::invalid_argument for negative coefficients or an
  /// unnormalized phase function on the given angular level.
  void validate(int level_s = 2) const;
};

/// Uniform triangulation of the unit square with width 2^-level, every square
/// cut along its rising diagonal. Node (i, j) has index i + (n + 1) j.
struct SquareMesh {
  int level = 0;
  int n = 1;  // squares per side
  explicit SquareMesh(int level);
  double h() const { return 1.0 / n; }
  int num_nodes() const { return (n + 1) * (n + 1); }
  Vec2 node(int k) const { return {double(k % (n + 1)) / n, double(k / (n + 1)) / n}; }
  /// Node indices of the 2 n^2 triangles, counterclockwise.
  std::vector<std::array<int, 3>> triangles() const;
  /// P1 interpolant of nodal values at x.
  double eval(const Eigen::Ref<const Eigen::VectorXd>& u, const Vec2& x) const;
};

/// kBaseArcs 2^level arcs of equal length; arc k is centred at angle
/// (k + 1/2) * width.
struct AngularGrid {
  int level = 0;
  int count = kBaseArcs;
  explicit AngularGrid(int level);
  double width() const;
  double angle(int k) const { return (k + 0.5) * width(); }
  Vec2 direction(int k) const;
};

/// Fully discrete system on one level pair. Unknowns are nodal values per arc
/// (column k of an nodes x arcs matrix). Row block k reads
///   A_k u_k - C_k sum_k' W(k, k') u_k' = b_k,
/// with A_k the transport, reaction and weak inflow part, C_k = sigma w_k
/// (M + delta S_k) the SUPG-weighted mass, and W the phase weights.
struct DomSystem {
  int level_x = 0;
  int level_s = 0;
  double delta = 0.0;  // SUPG parameter
  std::vector<SparseMatrix> transport;
  std::vector<SparseMatrix> scatter_test;
  Eigen::MatrixXd scatter_weights;
  Eigen::MatrixXd rhs;

  int nodes() const { return int(rhs.rows()); }
  int arcs() const { return int(rhs.cols()); }
  std::size_t dofs() const { return std::size_t(rhs.size()); }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& U) const;
  /// ||apply(U) - rhs|| / ||rhs|| (absolute when rhs vanishes).
  double relative_residual(const Eigen::MatrixXd& U) const;
  /// The coupled matrix with unknown (node, arc) at index node + nodes * arc.
  SparseMatrix matrix() const;
};

DomSystem assemble_supg(int level_x, int level_s, const RTEProblem& prob);

class SolverBreakdown : public std::runtime_error {
 public:
  SolverBreakdown(const std::string& what, int level_x, int level_s)
      : std::runtime_error(what), level_x(level_x), level_s(level_s) {}
  int level_x;
  int level_s;
};

struct FullTensorSolution {
  int level_x = 0;
  int level_s = 0;
  Eigen::MatrixXd u;  // nodes x arcs
  int iterations = 0;
  double residual = 0.0;
};

/// Source iteration on the scattering term with one sparse LU per direction,
/// until the relative residual of the coupled system drops below tol.
FullTensorSolution solve_full_tensor(const DomSystem& sys, double tol = 1e-10, int max_iterations = 500);
FullTensorSolution solve_full_tensor(int level_x, int level_s, const RTEProblem& prob);

/// Nodal interpolation in space and piecewise-constant injection in angle onto
/// a finer level pair.
Eigen::MatrixXd prolongate(const Eigen::MatrixXd& u, int level_x, int level_s, int to_x, int to_s);

/// Angular level paired with physical level l in the sparse schedule for
/// (L, N): floor(floor(log2(N + 1)) (L - l) / L); above L there is no term.
int angular_level(int L, int N, int level_x);
using AngularSchedule = std::function<int(int level_x)>;

struct TensorSolution {
  int L = 0;
  int level_s = 0;  // angular level of the combined representation
  std::map<std::pair<int, int>, FullTensorSolution> parts;
  Eigen::MatrixXd combined;
  std::size_t dofs_sparse = 0;  // sum over the distinct subproblems
  std::size_t dofs_full = 0;    // full tensor at (L, level_s)
};

TensorSolution combine(int L, int N, const RTEProblem& prob, int jobs = 1);
/// Combination with an arbitrary schedule: sum over l = 0..L of
/// u(l, schedule(l)) - u(l, schedule(l + 1)), the last term empty.
TensorSolution combine(int L, const AngularSchedule& schedule, const RTEProblem& prob, int jobs = 1);

/// Nodal incident radiation sum_k w_k u_k.
Eigen::VectorXd incident_radiation(const Eigen::MatrixXd& u, int level_s);

struct RadiationErrors {
  double G_L2 = 0.0;  // relative; NaN when G vanishes
  double G_H1 = 0.0;  // relative; NaN when G vanishes
  double u_norm1 = 0.0;  // absolute, in the graph-plus-scattering-plus-inflow norm
};

RadiationErrors radiation_errors(const Eigen::MatrixXd& u, int level_x, int level_s, const RTEProblem& prob);

struct SparseDomRow {
  int L = 0;
  int N = 0;
  std::size_t dofs_sparse = 0;
  std::size_t dofs_full = 0;
  double err_G_L2 = 0.0;
  double err_G_H1 = 0.0;
  double err_u_norm1 = 0.0;
  double seconds = 0.0;
};
void write_sparse_dom_csv(std::ostream& os, const std::vector<SparseDomRow>& rows);
/// G on a uniform samples x samples grid: columns x1, x2, G.
void write_G_grid(std::ostream& os, const Eigen::VectorXd& G, int level_x, int samples = 65);

}  // namespace transport
