#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "oracles.hpp"
#include "random_partitions.hpp"
#include "transport/assembly.hpp"

using namespace transport;
using transport::testing::duffy_integral;

namespace {

const VelocityField kNoOutflow = [](const Vec2&) { return Vec2{0, 0}; };

Eigen::VectorXd random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = nd(rng);
  return v;
}

// <w, B* v> by collapsed Gauss on each test triangle, with B* v differentiated
// by central differences of the test function (exact for quadratics up to
// rounding with the step used).
double duality_oracle(const TrialSpace& X, const TestSpace& V, const TransportProblem& p, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& y) {
  double s = 0;
  for (std::size_t t = 0; t < V.triangles().size(); ++t) {
    const auto& tri = V.triangles()[t];
    auto integrand = [&](const Vec2& x) {
      const double h = 1e-5;
      const double vx = (V.eval(y, t, {x.x + h, x.y}) - V.eval(y, t, {x.x - h, x.y})) / (2 * h);
      const double vy = (V.eval(y, t, {x.x, x.y + h}) - V.eval(y, t, {x.x, x.y - h})) / (2 * h);
      const Vec2 b = p.b(x);
      const double adj = -(b.x * vx + b.y * vy) + (p.c(x) - p.div_b(x)) * V.eval(y, t, x);
      return X.eval(w, tri.trial_cell, x) * adj;
    };
    s += duffy_integral(integrand, tri.v[0], tri.v[1], tri.v[2]);
  }
  return s;
}

}  // namespace

TEST_CASE("problem data") {
  const auto p = TransportProblem::benchmark();
  CHECK(p.coercivity() == doctest::Approx(2.0));
  CHECK(p.f({0.6, 0.5}) == 1.0);
  CHECK(p.f({0.1, 0.9}) == 0.5);
}

TEST_CASE("constant field on one cell") {
  // b = (0,1), c = 1, w = v = 1: b(w, v) = int (c - div b) = 1.
  const auto p = TransportProblem::constant({0, 1}, 1.0, 1.0);
  const Partition part = Partition::uniform(1);
  const TrialSpace X(part);
  const TestSpace V(part, kNoOutflow);
  const SparseMatrix B = assemble_B(X, V, p);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(3);
  w(0) = 1.0;  // phi_0 = 1/sqrt(area) = 1
  const Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(V.dim()));
  CHECK(v.dot(B * w) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK((B * Eigen::VectorXd::Zero(3)).norm() == 0.0);
  // f = 1, v = 1, g = 0: f(v) = 1.
  CHECK(assemble_rhs(V, p).sum() == doctest::Approx(1.0).epsilon(1e-13));
  const auto zero = TransportProblem::constant({0, 1}, 1.0, 0.0);
  CHECK(assemble_rhs(V, zero).norm() == 0.0);
}

TEST_CASE("B matches an independent quadrature on random pairs") {
  std::mt19937_64 rng(41);
  const auto p = TransportProblem::benchmark();
  for (int trial = 0; trial < 3; ++trial) {
    const Partition part = testing::random_partition(rng, 3);
    const TrialSpace X(part);
    const TestSpace V(part, p.b);
    const SparseMatrix B = assemble_B(X, V, p);
    for (int k = 0; k < 5; ++k) {
      const Eigen::VectorXd w = random_vector(X.dim(), rng);
      const Eigen::VectorXd y = random_vector(V.dim(), rng);
      const double lhs = y.dot(B * w);
      const double rhs = duality_oracle(X, V, p, w, y);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-7));
    }
  }
}

TEST_CASE("duality with the adjoint field") {
  std::mt19937_64 rng(43);
  const auto p = TransportProblem::benchmark();
  const Partition part = testing::random_partition(rng, 3);
  const TrialSpace X(part);
  const TestSpace V(part, p.b);
  const SparseMatrix B = assemble_B(X, V, p);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd w = random_vector(X.dim(), rng);
    const Eigen::VectorXd y = random_vector(V.dim(), rng);
    const AdjointField f = apply_adjoint(y, V, p);
    double s = 0;
    for (std::size_t t = 0; t < V.triangles().size(); ++t) {
      const auto& tri = V.triangles()[t];
      s += duffy_integral([&](const Vec2& x) { return X.eval(w, tri.trial_cell, x) * f.value(t, x); }, tri.v[0],
                          tri.v[1], tri.v[2]);
    }
    CHECK(std::abs(y.dot(B * w) - s) <= 1e-11 * w.norm() * y.norm());
  }
}

TEST_CASE("adjoint of a quadratic") {
  // b = (0,1), c = 1, v = x2 (1 - x2): B*v = -(1 - 2 x2) + x2 (1 - x2).
  const auto p = TransportProblem::constant({0, 1}, 1.0, 0.0);
  const Partition part = Partition::uniform(2);
  const TestSpace V(part, p.b);
  Eigen::VectorXd y(static_cast<Eigen::Index>(V.dim()));
  for (std::size_t i = 0; i < V.num_nodes(); ++i)
    if (V.dof(i) >= 0) y(V.dof(i)) = V.node_positions()[i].y * (1 - V.node_positions()[i].y);
  const AdjointField f = apply_adjoint(y, V, p);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 50; ++k) {
    const Vec2 x{u(rng), u(rng)};
    CHECK(f.value(x) == doctest::Approx(-(1 - 2 * x.y) + x.y * (1 - x.y)).epsilon(1e-12));
  }
  const AdjointField zero = apply_adjoint(Eigen::VectorXd::Zero(y.size()), V, p);
  CHECK(zero.value({0.3, 0.3}) == 0.0);
}

TEST_CASE("Gram matrix: symmetric, SPD and equal to the adjoint norm") {
  std::mt19937_64 rng(47);
  const auto p = TransportProblem::benchmark();
  const Partition part = testing::random_partition(rng, 2);
  const TestSpace V(part, p.b);
  const SparseMatrix G = assemble_gram_Y(V, p);
  CHECK((Eigen::MatrixXd(G) - Eigen::MatrixXd(G.transpose())).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(G), Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues()(0) > 0.0);
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd y = random_vector(V.dim(), rng);
    const AdjointField f = apply_adjoint(y, V, p);
    double s = 0;
    for (std::size_t t = 0; t < V.triangles().size(); ++t) {
      const auto& tri = V.triangles()[t];
      s += duffy_integral([&](const Vec2& x) { return std::pow(f.value(t, x), 2); }, tri.v[0], tri.v[1], tri.v[2]);
    }
    CHECK(y.dot(G * y) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("load vector across the discontinuity") {
  std::mt19937_64 rng(53);
  const auto p = TransportProblem::benchmark();
  const Partition part = testing::random_partition(rng, 2);
  const TestSpace V(part, p.b);
  const Eigen::VectorXd r = assemble_rhs(V, p);
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXd y = random_vector(V.dim(), rng);
    double s = 0;
    for (std::size_t t = 0; t < V.triangles().size(); ++t) {
      const auto& tri = V.triangles()[t];
      s += testing::sliced_integral([&](const Vec2& x, bool side) { return (side ? 1.0 : 0.5) * V.eval(y, t, x); },
                                    [](double x2) { return 0.5 * x2 * x2; }, tri.v);
    }
    CHECK(y.dot(r) == doctest::Approx(s).epsilon(1e-8));
  }
}

TEST_CASE("inflow boundary term") {
  // g = 1 on the inflow boundary of b = (0,1), i.e. {x2 = 0}; with v = 1
  // the term equals int_0^1 |b.n| = 1.
  auto p = TransportProblem::constant({0, 1}, 1.0, 0.0);
  p.g = [](const Vec2&) { return 1.0; };
  const TestSpace V(Partition::uniform(3), kNoOutflow);
  CHECK(assemble_rhs(V, p).sum() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("discrete dual norm of the residual") {
  const auto p = TransportProblem::benchmark();
  std::mt19937_64 rng(59);
  const Partition part = testing::random_partition(rng, 2);
  const TrialSpace X(part);
  const TestSpace V(part, p.b);
  const SparseMatrix B = assemble_B(X, V, p);
  const SparseMatrix G = assemble_gram_Y(V, p);
  const Eigen::VectorXd w = random_vector(X.dim(), rng);
  CHECK(dual_norm_residual(w, B, G, B * w) < 1e-12);
  // Nested test spaces: the dual norm can only grow.
  TestSpaceOptions fine;
  fine.order = 3;
  const TestSpace Vp(part, p.b, fine);
  const double coarse = dual_norm_residual(w, X, V, p);
  const double finer = dual_norm_residual(w, X, Vp, p);
  CHECK(finer >= coarse * (1 - 1e-12));
  fine.order = 2;
  fine.extra_refinements = 1;
  const TestSpace Vr(part, p.b, fine);
  CHECK(dual_norm_residual(w, X, Vr, p) >= coarse * (1 - 1e-12));
}

TEST_CASE("coordinate export") {
  SparseMatrix m(2, 2);
  m.insert(0, 1) = 2.5;
  m.makeCompressed();
  std::ostringstream os;
  write_coo(os, m);
  CHECK(os.str() == "0 1 2.5\n");
}
