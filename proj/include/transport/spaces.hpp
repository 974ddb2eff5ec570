#pragma once

// Discrete spaces on partitions: broken P1 trial spaces with cell-wise
// orthonormal bases, continuous Lagrange test spaces on the isotropically
// refined partition, and two-level fluctuation bases.

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "transport/geometry.hpp"
#include "transport/quadrature.hpp"

namespace transport {

/// L2(Q)-orthonormal basis of the affine functions on a convex polygon Q:
/// phi_k(x) = coef(k,0) + coef(k,1) (x - center).x + coef(k,2) (x - center).y.
/// Built in the principal axes of Q so thin cells stay well conditioned.
struct LocalP1 {
  Vec2 center;
  Eigen::Matrix3d coef = Eigen::Matrix3d::Zero();

  static LocalP1 build(std::span<const Vec2> poly);
  double value(int k, const Vec2& x) const {
    const double dx = x.x - center.x, dy = x.y - center.y;
    return coef(k, 0) + coef(k, 1) * dx + coef(k, 2) * dy;
  }
  Eigen::Vector3d values(const Vec2& x) const {
    const double dx = x.x - center.x, dy = x.y - center.y;
    return coef.col(0) + coef.col(1) * dx + coef.col(2) * dy;
  }
  Vec2 grad(int k) const { return {coef(k, 1), coef(k, 2)}; }
};

/// Broken P1 on a partition; dofs 3i, 3i+1, 3i+2 belong to cell index i.
class TrialSpace {
 public:
  explicit TrialSpace(Partition p);

  const Partition& partition() const { return partition_; }
  std::size_t dim() const { return 3 * partition_.size(); }
  const LocalP1& local(std::size_t cell) const { return local_[cell]; }

  double eval(const Eigen::VectorXd& u, std::size_t cell, const Vec2& x) const;
  /// Evaluates at x, locating the cell (nullopt outside the domain).
  std::optional<double> eval(const Eigen::VectorXd& u, const Vec2& x) const;

  /// L2 projection. Coefficients are moments since the basis is orthonormal.
  Eigen::VectorXd project(const PiecewiseSmooth& f, int degree = 6) const;
  /// Squared L2 error per cell of a trial function against f.
  Eigen::VectorXd cell_errors_sq(const Eigen::VectorXd& u, const PiecewiseSmooth& f, int degree = 6) const;
  double l2_error(const Eigen::VectorXd& u, const PiecewiseSmooth& f, int degree = 6) const;

 private:
  Partition partition_;
  std::vector<LocalP1> local_;
};

/// Lagrange element of order k on the reference triangle (0,0),(1,0),(0,1).
/// Nodes are (i/k, j/k) ordered by j then i.
class LagrangeTriangle {
 public:
  explicit LagrangeTriangle(int order);
  int order() const { return order_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Vec2>& nodes() const { return nodes_; }
  void eval(const Vec2& ref, Eigen::VectorXd& val, Eigen::VectorXd& dxi, Eigen::VectorXd& deta) const;

 private:
  int order_;
  std::vector<Vec2> nodes_;
  std::vector<std::pair<int, int>> monomials_;
  Eigen::MatrixXd coef_;  // basis i = sum_m coef_(m, i) monomial_m
};

struct TestTriangle {
  std::array<Vec2, 3> v;
  std::size_t trial_cell = 0;  // index of the trial cell containing it
  std::vector<std::size_t> nodes;
  Eigen::Matrix2d jinv_t;  // maps reference gradients to physical gradients
  double area = 0.0;

  Vec2 to_physical(const Vec2& ref) const { return v[0] + (v[1] - v[0]) * ref.x + (v[2] - v[0]) * ref.y; }
  Vec2 to_reference(const Vec2& x) const;
};

struct TestSpaceOptions {
  int order = 2;
  /// Uniform red refinements applied after the conforming triangulation.
  int extra_refinements = 0;
  /// Refine each trial cell isotropically before triangulating.
  bool isotropic = true;
  /// Refine the pieces of a cell further until its width across the flow,
  /// per piece, is at most twice that of the pieces of any cell directly
  /// downstream.
  bool upstream_grading = false;
};

using VelocityField = std::function<Vec2(const Vec2&)>;

/// Continuous Lagrange space on a conforming triangulation that refines the
/// isotropic pieces of every trial cell; values vanish on the outflow
/// boundary {b.n > 0}.
class TestSpace {
 public:
  TestSpace(const Partition& p, const VelocityField& b, TestSpaceOptions opt = {});

  std::size_t dim() const { return dim_; }
  std::size_t num_nodes() const { return node_pos_.size(); }
  const std::vector<TestTriangle>& triangles() const { return tris_; }
  const LagrangeTriangle& element() const { return elem_; }
  const std::vector<Vec2>& node_positions() const { return node_pos_; }
  /// Dof of a node, or -1 when the node is fixed to zero on the outflow boundary.
  std::ptrdiff_t dof(std::size_t node) const { return node_dof_[node]; }
  const TestSpaceOptions& options() const { return opt_; }
  /// Triangles lying in each trial cell.
  const std::vector<std::vector<std::size_t>>& cell_triangles() const { return cell_tris_; }

  double eval(const Eigen::VectorXd& y, std::size_t tri, const Vec2& x) const;
  Vec2 grad(const Eigen::VectorXd& y, std::size_t tri, const Vec2& x) const;

 private:
  TestSpaceOptions opt_;
  LagrangeTriangle elem_;
  std::vector<TestTriangle> tris_;
  std::vector<Vec2> node_pos_;
  std::vector<std::ptrdiff_t> node_dof_;
  std::vector<std::vector<std::size_t>> cell_tris_;
  std::size_t dim_ = 0;
};

/// Conforming triangulation of the given convex pieces: hanging vertices of
/// neighbouring pieces are inserted into each piece boundary before fanning.
std::vector<std::array<Vec2, 3>> conforming_triangulation(const std::vector<Polygon>& pieces,
                                                          std::vector<std::size_t>* owner = nullptr);

/// Functions that are affine on each child of a parent cell, L2(parent)
/// orthonormal and orthogonal to the affine functions on the parent.
/// Function j restricted to child c is sum_k coef(3c+k, j) frame_k(x), where
/// frame is the orthonormal affine basis of the parent.
struct FluctuationBasis {
  std::vector<Polygon> children;
  LocalP1 frame_basis;
  Eigen::MatrixXd coef;

  std::size_t size() const { return static_cast<std::size_t>(coef.cols()); }
  double value(std::size_t j, const Vec2& x) const;
  /// Inner products <g, psi_j> from the child moments
  /// m(3c+k) = int_{child c} g frame_k.
  Eigen::VectorXd apply(const Eigen::VectorXd& moments) const { return coef.transpose() * moments; }
  Eigen::Vector3d frame(const Vec2& x) const { return frame_basis.values(x); }
};

class DegenerateSplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

FluctuationBasis fluctuation_basis(const Polygon& parent, std::vector<Polygon> children);
FluctuationBasis fluctuation_basis(const Cell& cell, const SplitRule& rule);

/// f1 on {x1 > gamma(x2)}, f2 elsewhere.
struct CartoonFunction {
  GraphCurve curve;
  std::function<double(const Vec2&)> f_pos;
  std::function<double(const Vec2&)> f_neg;

  PiecewiseSmooth as_piecewise(SliceOptions opt = {}) const;
  /// Sampled bounds: max over pieces of |f|, |Df|, |D2f| (finite differences)
  /// and the curvature bound of the curve.
  struct Bounds {
    double M = 0.0;
    double zeta = 0.0;
  };
  Bounds sample_bounds(int n = 33) const;
};

struct CartoonResult {
  Partition partition;
  double error = 0.0;
  std::vector<std::pair<std::size_t, double>> history;  // (#cells, error) after every split
};

/// Greedy best-split refinement towards N cells using full knowledge of f.
CartoonResult cartoon_approx(const CartoonFunction& f, std::size_t N, int initial_grid = 4);

}  // namespace transport
