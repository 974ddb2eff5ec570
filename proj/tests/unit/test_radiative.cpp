#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "transport/quadrature.hpp"
#include "transport/radiative.hpp"

using namespace transport;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= double(x.size());
  my /= double(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

// Dense assembly of the coupled system on the single-square mesh from the
// variational form, with basis functions from their vertex values and a
// collapsed Gauss rule on each triangle.
Eigen::MatrixXd dense_oracle(const RTEProblem& p, int level_s) {
  const AngularGrid ag(level_s);
  const std::array<Vec2, 4> node{Vec2{0, 0}, Vec2{1, 0}, Vec2{0, 1}, Vec2{1, 1}};
  const std::array<std::array<int, 3>, 2> tris{{{0, 1, 3}, {0, 3, 2}}};
  const int na = ag.count;
  const double w = ag.width(), delta = 1.0;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4 * na, 4 * na);
  const LineRule& g = gauss_legendre(6);

  auto basis = [&](const std::array<int, 3>& t, int a, const Vec2& x, Vec2* grad) {
    Eigen::Matrix3d V;
    for (int r = 0; r < 3; ++r) V.row(r) << 1.0, node[t[r]].x, node[t[r]].y;
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e(a) = 1.0;
    const Eigen::Vector3d c = V.partialPivLu().solve(e);
    if (grad) *grad = {c(1), c(2)};
    return c(0) + c(1) * x.x + c(2) * x.y;
  };

  for (int k = 0; k < na; ++k) {
    const double th = ag.angle(k);
    const Vec2 s{std::cos(th), std::sin(th)};
    for (const auto& t : tris) {
      const Vec2 p0 = node[t[0]], e1 = node[t[1]] - p0, e2 = node[t[2]] - p0;
      const double jac = std::abs(cross(e1, e2));
      for (std::size_t qi = 0; qi < g.nodes.size(); ++qi)
        for (std::size_t qj = 0; qj < g.nodes.size(); ++qj) {
          const double u = g.nodes[qi], v = g.nodes[qj] * (1.0 - u);
          const double wq = g.weights[qi] * g.weights[qj] * (1.0 - u) * jac;
          const Vec2 x = p0 + e1 * u + e2 * v;
          for (int a = 0; a < 3; ++a) {
            Vec2 ga;
            const double pa = basis(t, a, x, &ga);
            const double Rv = pa + delta * dot(s, ga);
            for (int b = 0; b < 3; ++b) {
              Vec2 gb;
              const double pb = basis(t, b, x, &gb);
              const int row = t[a] + 4 * k, col = t[b] + 4 * k;
              A(row, col) += w * wq * Rv * (dot(s, gb) + (p.kappa + p.sigma) * pb);
              for (int j = 0; j < na; ++j)
                A(row, t[b] + 4 * j) -= w * wq * Rv * p.sigma * w * p.phase(th, ag.angle(j)) * pb;
            }
          }
        }
    }
    // -2 times the inflow boundary form.
    const std::array<std::tuple<int, int, Vec2>, 4> edges{
        {{0, 1, Vec2{0, -1}}, {1, 3, Vec2{1, 0}}, {3, 2, Vec2{0, 1}}, {2, 0, Vec2{-1, 0}}}};
    for (const auto& [ia, ib, n] : edges) {
      const double sn = dot(s, n);
      if (sn >= 0.0) continue;
      for (std::size_t q = 0; q < g.nodes.size(); ++q) {
        const double r = g.nodes[q];
        const std::array<double, 2> phi{1.0 - r, r};
        const std::array<int, 2> id{ia, ib};
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) A(id[a] + 4 * k, id[b] + 4 * k) += -2.0 * sn * w * g.weights[q] * phi[a] * phi[b];
      }
    }
  }
  return A;
}

RTEProblem sourceless(double kappa, double sigma) {
  RTEProblem p;
  p.kappa = kappa;
  p.sigma = sigma;
  return p;
}

}  // namespace

TEST_CASE("phase normalization and coefficient checks") {
  RTEProblem p = RTEProblem::manufactured();
  CHECK_NOTHROW(p.validate(3));
  p.phase = [](double, double) { return 2.0 / kTwoPi; };
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = sourceless(-1.0, 0.5);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  CHECK_THROWS_AS(RTEProblem::manufactured(0.0, 0.5), std::invalid_argument);
}

TEST_CASE("mesh and angular grid layout") {
  const SquareMesh m(2);
  CHECK(m.num_nodes() == 25);
  CHECK(m.triangles().size() == 32);
  double area = 0.0;
  for (const auto& t : m.triangles()) area += 0.5 * cross(m.node(t[1]) - m.node(t[0]), m.node(t[2]) - m.node(t[0]));
  CHECK(area == doctest::Approx(1.0).epsilon(1e-14));
  const AngularGrid a(1);
  CHECK(a.count == 2 * kBaseArcs);
  CHECK(a.angle(0) == doctest::Approx(kTwoPi / 32));
}

TEST_CASE("smallest system matches a dense hand assembly") {
  for (double sigma : {0.0, 0.5}) {
    const RTEProblem p = sourceless(1.0, sigma);
    const Eigen::MatrixXd A(assemble_supg(0, 0, p).matrix());
    const Eigen::MatrixXd ref = dense_oracle(p, 0);
    CHECK((A - ref).cwiseAbs().maxCoeff() <= 1e-12 * ref.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("without scattering the directions decouple") {
  const DomSystem sys = assemble_supg(2, 0, RTEProblem::manufactured(1.0, 0.0));
  const SparseMatrix A = sys.matrix();
  const int nn = sys.nodes();
  for (int c = 0; c < A.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(A, c); it; ++it) CHECK(it.row() / nn == it.col() / nn);
  CHECK(solve_full_tensor(sys).iterations == 1);
}

TEST_CASE("isotropic scattering annihilates angle-independent intensities") {
  const DomSystem with = assemble_supg(2, 1, sourceless(1.0, 0.5));
  const DomSystem without = assemble_supg(2, 1, sourceless(1.0, 0.0));
  for (int k = 0; k < with.arcs(); ++k) CHECK(with.scatter_weights.row(k).sum() == doctest::Approx(1.0).epsilon(1e-14));
  Eigen::MatrixXd U(with.nodes(), with.arcs());
  const Eigen::VectorXd col = Eigen::VectorXd::LinSpaced(with.nodes(), 0.3, 1.7);
  for (int k = 0; k < with.arcs(); ++k) U.col(k) = col;
  CHECK((with.apply(U) - without.apply(U)).norm() <= 1e-12 * without.apply(U).norm());
}

TEST_CASE("zero data gives the zero intensity") {
  const auto s = solve_full_tensor(2, 1, sourceless(1.0, 0.5));
  CHECK(s.u.norm() == 0.0);
}

TEST_CASE("unit intensity with unit blackbody and inflow is reproduced exactly") {
  RTEProblem p = sourceless(0.5, 0.5);
  p.inflow = [](const Vec2&, double) { return 1.0; };
  p.blackbody = [](const Vec2&, double) { return 1.0; };
  const auto s = solve_full_tensor(3, 1, p);
  CHECK((s.u.array() - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("incident radiation of angle-independent intensities") {
  Eigen::MatrixXd U(9, AngularGrid(2).count);
  const Eigen::VectorXd col = Eigen::VectorXd::LinSpaced(9, -1.0, 2.0);
  for (int k = 0; k < U.cols(); ++k) U.col(k) = col;
  CHECK((incident_radiation(U, 2) - kTwoPi * col).norm() < 1e-12);
}

TEST_CASE("manufactured incident radiation at the centre") {
  const auto p = RTEProblem::manufactured();
  const LineRule& g = gauss_legendre(20);
  double G = 0.0;
  for (int arc = 0; arc < 4; ++arc)
    for (std::size_t q = 0; q < g.nodes.size(); ++q)
      G += g.weights[q] * kTwoPi / 4 * p.exact->u({0.5, 0.5}, (arc + g.nodes[q]) * kTwoPi / 4);
  CHECK(G == doctest::Approx(0.5625).epsilon(1e-12));
  CHECK(p.exact->G({0.5, 0.5}) == doctest::Approx(0.5625).epsilon(1e-15));
}

TEST_CASE("subproblems are solved to the residual tolerance") {
  const auto ts = combine(3, 7, RTEProblem::manufactured());
  for (const auto& [key, sol] : ts.parts) CHECK(sol.residual < 1e-9);
}

TEST_CASE("prolongation is exact on nested spaces") {
  const SquareMesh coarse(1), fine(3);
  Eigen::MatrixXd u(coarse.num_nodes(), kBaseArcs);
  for (int k = 0; k < kBaseArcs; ++k)
    for (int i = 0; i < coarse.num_nodes(); ++i) u(i, k) = 1.0 + 2.0 * coarse.node(i).x - 0.5 * k * coarse.node(i).y;
  const Eigen::MatrixXd v = prolongate(u, 1, 0, 3, 2);
  REQUIRE(v.cols() == 4 * kBaseArcs);
  for (int j = 0; j < v.cols(); ++j)
    for (int i = 0; i < fine.num_nodes(); ++i)
      CHECK(v(i, j) == doctest::Approx(1.0 + 2.0 * fine.node(i).x - 0.5 * (j / 4) * fine.node(i).y).epsilon(1e-14));
}

TEST_CASE("angular schedule") {
  CHECK(angular_level(5, 32, 0) == 5);
  CHECK(angular_level(5, 32, 5) == 0);
  CHECK(angular_level(5, 32, 6) == -1);
  CHECK(angular_level(4, 15, 2) == 2);
  CHECK(angular_level(0, 7, 0) == 3);
  CHECK_THROWS_AS(angular_level(2, 0, 0), std::invalid_argument);
}

TEST_CASE("combination with L = 0 is the single coarse solve") {
  const auto p = RTEProblem::manufactured();
  const auto ts = combine(0, 3, p);
  CHECK(ts.parts.size() == 1);
  CHECK(ts.combined == solve_full_tensor(0, 2, p).u);
}

TEST_CASE("degenerate schedule reproduces the full tensor bit for bit") {
  const auto p = RTEProblem::manufactured();
  const auto ts = combine(3, [](int) { return 2; }, p);
  CHECK(ts.combined == solve_full_tensor(3, 2, p).u);
}

TEST_CASE("refining space halves the error") {
  const auto p = RTEProblem::manufactured();
  std::vector<double> h, e;
  for (int L = 2; L <= 4; ++L) {
    const auto s = solve_full_tensor(L, 4, p);
    h.push_back(std::ldexp(1.0, -L));
    e.push_back(radiation_errors(s.u, L, 4, p).u_norm1);
  }
  const double k = slope(h, e);
  CHECK(k >= 0.8);
  CHECK(k <= 1.2);
}

TEST_CASE("sparse solution: error, dofs and monotone incident radiation") {
  const auto p = RTEProblem::manufactured();
  double last = std::numeric_limits<double>::infinity();
  for (int L = 1; L <= 4; ++L) {
    const int N = (1 << L) - 1;
    const auto sp = combine(L, N, p);
    const auto es = radiation_errors(sp.combined, L, sp.level_s, p);
    const auto full = solve_full_tensor(L, sp.level_s, p);
    const auto ef = radiation_errors(full.u, L, sp.level_s, p);
    CHECK(es.u_norm1 <= 2.0 * ef.u_norm1);
    CHECK(es.G_L2 <= 1.05 * last);
    last = es.G_L2;
    // (L + log N)(2^2L + N) with the actual node and arc counts.
    const double nodes = SquareMesh(L).num_nodes(), arcs = kBaseArcs * (N + 1.0);
    const double bound = (L + std::log2(N + 1.0) + 1.0) * (nodes + arcs);
    CHECK(double(sp.dofs_sparse) <= 4.0 * bound);
    CHECK(sp.dofs_full == std::size_t(SquareMesh(L).num_nodes() * AngularGrid(sp.level_s).count));
  }
}

TEST_CASE("relative errors are undefined for vanishing radiation") {
  RTEProblem p = sourceless(1.0, 0.5);
  RadiationSolution zero;
  zero.u = [](const Vec2&, double) { return 0.0; };
  zero.grad_u = [](const Vec2&, double) { return Vec2{}; };
  zero.G = [](const Vec2&) { return 0.0; };
  zero.grad_G = [](const Vec2&) { return Vec2{}; };
  p.exact = zero;
  const auto e = radiation_errors(solve_full_tensor(1, 0, p).u, 1, 0, p);
  CHECK(std::isnan(e.G_L2));
  CHECK(std::isnan(e.G_H1));
  CHECK(e.u_norm1 == 0.0);
}

TEST_CASE("result CSV and G grid") {
  std::ostringstream os;
  write_sparse_dom_csv(os, {{2, 3, 100, 200, 0.1, 0.2, 0.3, 1.5}});
  CHECK(os.str() == "L,N,dofs_sparse,dofs_full,err_G_L2,err_G_H1,err_u_norm1,seconds\n2,3,100,200,0.1,0.2,0.3,1.5\n");
  std::ostringstream g;
  write_G_grid(g, Eigen::VectorXd::Ones(9), 1, 5);
  std::string line;
  std::istringstream in(g.str());
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 26);
}
