#include "transport/assembly.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <Eigen/SparseCholesky>

namespace transport {

TransportProblem TransportProblem::benchmark() {
  TransportProblem p;
  p.b = [](const Vec2& x) { return Vec2{x.y, 1.0}; };
  p.div_b = [](const Vec2&) { return 0.0; };
  p.c = [](const Vec2&) { return 1.0; };
  p.f.value = [](const Vec2&, bool side) { return side ? 1.0 : 0.5; };
  p.f.curve = GraphCurve{[](double y) { return 0.5 * y * y; }};
  return p;
}

TransportProblem TransportProblem::constant(Vec2 b, double c, double f) {
  TransportProblem p;
  p.b = [b](const Vec2&) { return b; };
  p.div_b = [](const Vec2&) { return 0.0; };
  p.c = [c](const Vec2&) { return c; };
  p.f.value = [f](const Vec2&, bool) { return f; };
  return p;
}

double TransportProblem::coercivity(int n) const {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 x{(i + 0.5) / n, (j + 0.5) / n};
      m = std::min(m, 2.0 * c(x) - div_b(x));
    }
  return m;
}

AdjointCoefficients AdjointCoefficients::of(const TransportProblem& p) {
  auto c = p.c;
  auto d = p.div_b;
  return {p.b, [c, d](const Vec2& x) { return c(x) - d(x); }};
}

namespace {

// Reference basis values and gradients at the points of a triangle rule.
struct Tabulation {
  std::vector<Eigen::VectorXd> val, dxi, deta;
  std::vector<Vec2> ref;
  std::vector<double> w;
};

Tabulation tabulate(const LagrangeTriangle& el, int degree) {
  const auto& rule = triangle_rule(degree);
  Tabulation t;
  for (std::size_t q = 0; q < rule.weights.size(); ++q) {
    const Vec2 r{rule.bary[q][1], rule.bary[q][2]};
    Eigen::VectorXd v, dx, dy;
    el.eval(r, v, dx, dy);
    t.val.push_back(v);
    t.dxi.push_back(dx);
    t.deta.push_back(dy);
    t.ref.push_back(r);
    t.w.push_back(rule.weights[q]);
  }
  return t;
}

// A psi_i for all local basis functions at a point.
Eigen::VectorXd apply_local(const TestTriangle& tri, const Eigen::VectorXd& val, const Eigen::VectorXd& dxi,
                            const Eigen::VectorXd& deta, const Vec2& beta, double gamma) {
  const Eigen::Vector2d bt = tri.jinv_t.transpose() * Eigen::Vector2d(beta.x, beta.y);
  return -(bt(0) * dxi + bt(1) * deta) + gamma * val;
}

void check_compatible(const TrialSpace& trial, const TestSpace& test) {
  if (test.cell_triangles().size() != trial.partition().size())
    throw std::invalid_argument("assemble: test space was built on a different partition");
  for (const auto& t : test.triangles()) {
    const Vec2 c = (t.v[0] + t.v[1] + t.v[2]) * (1.0 / 3.0);
    if (!contains_point(trial.partition().cells()[t.trial_cell].vertices, c, 1e-12))
      throw std::invalid_argument("assemble: test triangle outside its trial cell");
  }
}

}  // namespace

SparseMatrix assemble_B(const TrialSpace& trial, const TestSpace& test, const AdjointCoefficients& a) {
  check_compatible(trial, test);
  const Tabulation tab = tabulate(test.element(), 6);
  const auto nloc = static_cast<Eigen::Index>(test.element().size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(test.triangles().size() * static_cast<std::size_t>(nloc) * 3);
  for (const auto& tri : test.triangles()) {
    const LocalP1& lp = trial.local(tri.trial_cell);
    Eigen::MatrixXd loc = Eigen::MatrixXd::Zero(nloc, 3);
    for (std::size_t q = 0; q < tab.w.size(); ++q) {
      const Vec2 x = tri.to_physical(tab.ref[q]);
      const Eigen::VectorXd av = apply_local(tri, tab.val[q], tab.dxi[q], tab.deta[q], a.beta(x), a.gamma(x));
      loc += (tab.w[q] * tri.area) * av * lp.values(x).transpose();
    }
    for (Eigen::Index i = 0; i < nloc; ++i) {
      const auto d = test.dof(tri.nodes[static_cast<std::size_t>(i)]);
      if (d < 0) continue;
      for (Eigen::Index k = 0; k < 3; ++k)
        trip.emplace_back(static_cast<int>(d), static_cast<int>(3 * tri.trial_cell + static_cast<std::size_t>(k)),
                          loc(i, k));
    }
  }
  SparseMatrix B(static_cast<Eigen::Index>(test.dim()), static_cast<Eigen::Index>(trial.dim()));
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

SparseMatrix assemble_B(const TrialSpace& trial, const TestSpace& test, const TransportProblem& p) {
  return assemble_B(trial, test, AdjointCoefficients::of(p));
}

SparseMatrix assemble_gram(const TestSpace& test, const AdjointCoefficients& a1, const AdjointCoefficients& a2) {
  const Tabulation tab = tabulate(test.element(), 6);
  const auto nloc = static_cast<Eigen::Index>(test.element().size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(test.triangles().size() * static_cast<std::size_t>(nloc * nloc));
  for (const auto& tri : test.triangles()) {
    Eigen::MatrixXd loc = Eigen::MatrixXd::Zero(nloc, nloc);
    for (std::size_t q = 0; q < tab.w.size(); ++q) {
      const Vec2 x = tri.to_physical(tab.ref[q]);
      const Eigen::VectorXd v1 = apply_local(tri, tab.val[q], tab.dxi[q], tab.deta[q], a1.beta(x), a1.gamma(x));
      const Eigen::VectorXd v2 = apply_local(tri, tab.val[q], tab.dxi[q], tab.deta[q], a2.beta(x), a2.gamma(x));
      loc += (tab.w[q] * tri.area) * v1 * v2.transpose();
    }
    for (Eigen::Index i = 0; i < nloc; ++i) {
      const auto di = test.dof(tri.nodes[static_cast<std::size_t>(i)]);
      if (di < 0) continue;
      for (Eigen::Index j = 0; j < nloc; ++j) {
        const auto dj = test.dof(tri.nodes[static_cast<std::size_t>(j)]);
        if (dj >= 0) trip.emplace_back(static_cast<int>(di), static_cast<int>(dj), loc(i, j));
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(test.dim());
  SparseMatrix G(n, n);
  G.setFromTriplets(trip.begin(), trip.end());
  return G;
}

SparseMatrix assemble_gram_Y(const TestSpace& test, const TransportProblem& p) {
  const auto a = AdjointCoefficients::of(p);
  SparseMatrix G = assemble_gram(test, a, a);
  // Exact symmetry regardless of summation order.
  SparseMatrix Gt = G.transpose();
  return 0.5 * (G + Gt);
}

Eigen::VectorXd assemble_load(const TestSpace& test, const PiecewiseSmooth& f) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(test.dim()));
  Eigen::VectorXd val, dx, dy;
  for (const auto& tri : test.triangles()) {
    const Polygon poly(tri.v.begin(), tri.v.end());
    for (const auto& q : points_for(poly, f, 6)) {
      test.element().eval(tri.to_reference(q.x), val, dx, dy);
      const double fv = q.w * f.value(q.x, q.positive_side);
      for (std::size_t i = 0; i < tri.nodes.size(); ++i) {
        const auto d = test.dof(tri.nodes[i]);
        if (d >= 0) r(d) += fv * val(static_cast<Eigen::Index>(i));
      }
    }
  }
  return r;
}

Eigen::VectorXd assemble_inflow(const TestSpace& test, const VelocityField& b, const ScalarField& g) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(test.dim()));
  if (!g) return r;
  const auto& gl = gauss_legendre(6);
  Eigen::VectorXd val, dx, dy;
  constexpr double tol = 1e-11;
  for (const auto& tri : test.triangles()) {
    for (int e = 0; e < 3; ++e) {
      const Vec2 a = tri.v[static_cast<std::size_t>(e)], c = tri.v[static_cast<std::size_t>((e + 1) % 3)];
      Vec2 n{};
      if (std::abs(a.x) < tol && std::abs(c.x) < tol) n = {-1, 0};
      else if (std::abs(a.x - 1) < tol && std::abs(c.x - 1) < tol) n = {1, 0};
      else if (std::abs(a.y) < tol && std::abs(c.y) < tol) n = {0, -1};
      else if (std::abs(a.y - 1) < tol && std::abs(c.y - 1) < tol) n = {0, 1};
      else continue;
      const double len = norm(c - a);
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const Vec2 x = a + (c - a) * gl.nodes[q];
        const double bn = dot(b(x), n);
        if (bn >= 0.0) continue;
        test.element().eval(tri.to_reference(x), val, dx, dy);
        const double wq = gl.weights[q] * len * g(x) * (-bn);
        for (std::size_t i = 0; i < tri.nodes.size(); ++i) {
          const auto d = test.dof(tri.nodes[i]);
          if (d >= 0) r(d) += wq * val(static_cast<Eigen::Index>(i));
        }
      }
    }
  }
  return r;
}

Eigen::VectorXd assemble_rhs(const TestSpace& test, const TransportProblem& p) {
  return assemble_load(test, p.f) + assemble_inflow(test, p.b, p.g);
}

AdjointField::AdjointField(const TestSpace& test, Eigen::VectorXd y, AdjointCoefficients a)
    : test_(&test), y_(std::move(y)), a_(std::move(a)) {
  if (static_cast<std::size_t>(y_.size()) != test.dim()) throw std::invalid_argument("AdjointField: size mismatch");
}

double AdjointField::value(std::size_t t, const Vec2& x) const {
  const Vec2 g = test_->grad(y_, t, x);
  return -dot(a_.beta(x), g) + a_.gamma(x) * test_->eval(y_, t, x);
}

double AdjointField::value(const Vec2& x) const {
  const auto& tris = test_->triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const Polygon p(tris[t].v.begin(), tris[t].v.end());
    if (contains_point(p, x, 1e-13)) return value(t, x);
  }
  return 0.0;
}

AdjointField apply_adjoint(const Eigen::VectorXd& y, const TestSpace& test, const TransportProblem& p) {
  return AdjointField(test, y, AdjointCoefficients::of(p));
}

double dual_norm_residual(const Eigen::VectorXd& w, const SparseMatrix& B, const SparseMatrix& G,
                          const Eigen::VectorXd& rhs) {
  const Eigen::VectorXd r = rhs - B * w;
  Eigen::SimplicialLLT<SparseMatrix> llt(G);
  if (llt.info() != Eigen::Success) throw std::runtime_error("dual_norm_residual: Gram matrix is not SPD");
  return std::sqrt(std::max(0.0, r.dot(llt.solve(r))));
}

double dual_norm_residual(const Eigen::VectorXd& w, const TrialSpace& trial, const TestSpace& test,
                          const TransportProblem& p) {
  return dual_norm_residual(w, assemble_B(trial, test, p), assemble_gram_Y(test, p), assemble_rhs(test, p));
}

void write_coo(std::ostream& os, const SparseMatrix& m) {
  os.precision(17);
  for (Eigen::Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace transport
