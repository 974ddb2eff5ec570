#include "transport/radiative.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numbers>
#include <ostream>
#include <set>
#include <thread>

#include <Eigen/SparseLU>

#include "transport/quadrature.hpp"

namespace transport {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Triplets = std::vector<Eigen::Triplet<double>>;

struct Edge {
  int a, b;
  Vec2 normal;
};

// Boundary edges of the square mesh with outward normals.
std::vector<Edge> boundary_edges(const SquareMesh& m) {
  std::vector<Edge> e;
  const int n = m.n, s = n + 1;
  for (int i = 0; i < n; ++i) {
    e.push_back({i, i + 1, {0.0, -1.0}});
    e.push_back({n + s * i, n + s * (i + 1), {1.0, 0.0}});
    e.push_back({i + s * n, i + 1 + s * n, {0.0, 1.0}});
    e.push_back({s * i, s * (i + 1), {-1.0, 0.0}});
  }
  return e;
}

struct P1Triangle {
  std::array<int, 3> v;
  std::array<Vec2, 3> p;
  std::array<Vec2, 3> grad;
  double area;
};

P1Triangle p1_triangle(const SquareMesh& m, const std::array<int, 3>& v) {
  P1Triangle t;
  t.v = v;
  for (int a = 0; a < 3; ++a) t.p[a] = m.node(v[a]);
  const double det = cross(t.p[1] - t.p[0], t.p[2] - t.p[0]);
  t.area = 0.5 * det;
  for (int a = 0; a < 3; ++a) {
    const Vec2 e = t.p[(a + 2) % 3] - t.p[(a + 1) % 3];
    t.grad[a] = Vec2{-e.y, e.x} * (1.0 / det);
  }
  return t;
}

template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::size_t(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex lock;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) try {
          fn(i);
        } catch (...) {
          std::lock_guard g(lock);
          if (!error) error = std::current_exception();
        }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

double RTEProblem::isotropic(double, double) { return 1.0 / kTwoPi; }

RTEProblem RTEProblem::manufactured(double kappa, double sigma) {
  if (!(kappa > 0.0)) throw std::invalid_argument("manufactured: kappa must be positive");
  RTEProblem p;
  p.kappa = kappa;
  p.sigma = sigma;
  const double c = 3.0 / (16.0 * std::numbers::pi);
  auto amp = [c](double th) {
    const double d = (std::cos(th) + std::sin(th)) / std::numbers::sqrt2;
    return c * (1.0 + d * d);
  };
  auto bump = [](const Vec2& x) { return 16.0 * x.x * (1.0 - x.x) * x.y * (1.0 - x.y); };
  auto grad_bump = [](const Vec2& x) {
    return Vec2{16.0 * (1.0 - 2.0 * x.x) * x.y * (1.0 - x.y), 16.0 * x.x * (1.0 - x.x) * (1.0 - 2.0 * x.y)};
  };
  RadiationSolution ex;
  ex.u = [=](const Vec2& x, double th) { return amp(th) * bump(x); };
  ex.grad_u = [=](const Vec2& x, double th) { return grad_bump(x) * amp(th); };
  ex.G = [=](const Vec2& x) { return 9.0 / 16.0 * bump(x); };
  ex.grad_G = [=](const Vec2& x) { return grad_bump(x) * (9.0 / 16.0); };
  p.exact = ex;
  p.blackbody = [=](const Vec2& x, double th) {
    const Vec2 s{std::cos(th), std::sin(th)};
    const double f = amp(th) * dot(s, grad_bump(x)) + (kappa + sigma) * amp(th) * bump(x) -
                     sigma * 9.0 / 16.0 * bump(x) / kTwoPi;
    return f / kappa;
  };
  return p;
}

void RTEProblem::validate(int level_s) const {
  if (kappa < 0.0) throw std::invalid_argument("RTEProblem: kappa must be nonnegative");
  if (sigma < 0.0) throw std::invalid_argument("RTEProblem: sigma must be nonnegative");
  if (!phase) throw std::invalid_argument("RTEProblem: phase function missing");
  const AngularGrid ag(level_s);
  for (int k = 0; k < ag.count; ++k) {
    double sum = 0.0;
    for (int j = 0; j < ag.count; ++j) sum += ag.width() * phase(ag.angle(k), ag.angle(j));
    if (std::abs(sum - 1.0) > 1e-10) throw std::invalid_argument("RTEProblem: phase function not normalized");
  }
}

// ---------------------------------------------------------------------------

SquareMesh::SquareMesh(int level) : level(level), n(1 << level) {
  if (level < 0) throw std::invalid_argument("SquareMesh: negative level");
}

std::vector<std::array<int, 3>> SquareMesh::triangles() const {
  std::vector<std::array<int, 3>> t;
  t.reserve(std::size_t(2 * n * n));
  const int s = n + 1;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int a = i + s * j;
      t.push_back({a, a + 1, a + 1 + s});
      t.push_back({a, a + 1 + s, a + s});
    }
  return t;
}

double SquareMesh::eval(const Eigen::Ref<const Eigen::VectorXd>& u, const Vec2& x) const {
  const int i = std::clamp(int(std::floor(x.x * n)), 0, n - 1);
  const int j = std::clamp(int(std::floor(x.y * n)), 0, n - 1);
  const double xi = x.x * n - i, eta = x.y * n - j;
  const int s = n + 1, a = i + s * j;
  const double u00 = u(a), u10 = u(a + 1), u11 = u(a + 1 + s), u01 = u(a + s);
  if (xi >= eta) return u00 + xi * (u10 - u00) + eta * (u11 - u10);
  return u00 + eta * (u01 - u00) + xi * (u11 - u01);
}

AngularGrid::AngularGrid(int level) : level(level), count(kBaseArcs << level) {
  if (level < 0) throw std::invalid_argument("AngularGrid: negative level");
}

double AngularGrid::width() const { return kTwoPi / count; }

Vec2 AngularGrid::direction(int k) const {
  const double a = angle(k);
  return {std::cos(a), std::sin(a)};
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd DomSystem::apply(const Eigen::MatrixXd& U) const {
  const Eigen::MatrixXd mixed = U * scatter_weights.transpose();
  Eigen::MatrixXd out(U.rows(), U.cols());
  for (int k = 0; k < arcs(); ++k) out.col(k) = transport[k] * U.col(k) - scatter_test[k] * mixed.col(k);
  return out;
}

double DomSystem::relative_residual(const Eigen::MatrixXd& U) const {
  const double r = (apply(U) - rhs).norm(), b = rhs.norm();
  return b > 0.0 ? r / b : r;
}

SparseMatrix DomSystem::matrix() const {
  const int nn = nodes();
  Triplets t;
  for (int k = 0; k < arcs(); ++k) {
    for (int c = 0; c < transport[k].outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(transport[k], c); it; ++it)
        t.emplace_back(int(it.row()) + nn * k, int(it.col()) + nn * k, it.value());
    for (int j = 0; j < arcs(); ++j) {
      const double w = scatter_weights(k, j);
      if (w == 0.0) continue;
      for (int c = 0; c < scatter_test[k].outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(scatter_test[k], c); it; ++it)
          t.emplace_back(int(it.row()) + nn * k, int(it.col()) + nn * j, -w * it.value());
    }
  }
  SparseMatrix A(nn * arcs(), nn * arcs());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

DomSystem assemble_supg(int level_x, int level_s, const RTEProblem& prob) {
  const SquareMesh mesh(level_x);
  const AngularGrid ag(level_s);
  DomSystem sys;
  sys.level_x = level_x;
  sys.level_s = level_s;
  sys.delta = mesh.h();
  const int nn = mesh.num_nodes(), na = ag.count;
  const double w = ag.width(), delta = sys.delta, react = prob.kappa + prob.sigma;

  std::vector<P1Triangle> tris;
  for (const auto& v : mesh.triangles()) tris.push_back(p1_triangle(mesh, v));
  const auto edges = boundary_edges(mesh);
  const TriangleRule& rule = triangle_rule(6);
  const LineRule& line = gauss_legendre(4);

  sys.scatter_weights.resize(na, na);
  for (int k = 0; k < na; ++k)
    for (int j = 0; j < na; ++j) sys.scatter_weights(k, j) = w * prob.phase(ag.angle(k), ag.angle(j));
  sys.rhs = Eigen::MatrixXd::Zero(nn, na);
  sys.transport.resize(na);
  sys.scatter_test.resize(na);

  for (int k = 0; k < na; ++k) {
    const Vec2 s = ag.direction(k);
    const double th = ag.angle(k);
    Triplets ta, tc;
    for (const auto& t : tris) {
      std::array<double, 3> sg;
      for (int a = 0; a < 3; ++a) sg[a] = dot(s, t.grad[a]);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const double mass = t.area / 12.0 * (a == b ? 2.0 : 1.0);
          const double test_mass = mass + delta * sg[a] * t.area / 3.0;  // (R phi_a, phi_b)
          const double conv = sg[b] * t.area / 3.0 + delta * sg[a] * sg[b] * t.area;  // (R phi_a, s.grad phi_b)
          ta.emplace_back(t.v[a], t.v[b], w * (conv + react * test_mass));
          if (prob.sigma != 0.0) tc.emplace_back(t.v[a], t.v[b], prob.sigma * w * test_mass);
        }
      if (prob.kappa != 0.0 && prob.blackbody)
        for (std::size_t q = 0; q < rule.weights.size(); ++q) {
          const auto& l = rule.bary[q];
          const Vec2 x = t.p[0] * l[0] + t.p[1] * l[1] + t.p[2] * l[2];
          const double f = prob.kappa * prob.blackbody(x, th) * rule.weights[q] * t.area;
          for (int a = 0; a < 3; ++a) sys.rhs(t.v[a], k) += w * f * (l[a] + delta * sg[a]);
        }
    }
    for (const auto& e : edges) {
      const double sn = dot(s, e.normal);
      if (sn >= 0.0) continue;
      const Vec2 pa = mesh.node(e.a), pb = mesh.node(e.b);
      const double len = norm(pb - pa), c = 2.0 * w * (-sn);
      ta.emplace_back(e.a, e.a, c * len / 3.0);
      ta.emplace_back(e.b, e.b, c * len / 3.0);
      ta.emplace_back(e.a, e.b, c * len / 6.0);
      ta.emplace_back(e.b, e.a, c * len / 6.0);
      if (prob.inflow)
        for (std::size_t q = 0; q < line.nodes.size(); ++q) {
          const double r = line.nodes[q];
          const double g = prob.inflow(pa * (1.0 - r) + pb * r, th) * line.weights[q] * len;
          sys.rhs(e.a, k) += c * g * (1.0 - r);
          sys.rhs(e.b, k) += c * g * r;
        }
    }
    sys.transport[k].resize(nn, nn);
    sys.transport[k].setFromTriplets(ta.begin(), ta.end());
    sys.scatter_test[k].resize(nn, nn);
    sys.scatter_test[k].setFromTriplets(tc.begin(), tc.end());
  }
  return sys;
}

FullTensorSolution solve_full_tensor(const DomSystem& sys, double tol, int max_iterations) {
  FullTensorSolution sol;
  sol.level_x = sys.level_x;
  sol.level_s = sys.level_s;
  std::vector<Eigen::SparseLU<SparseMatrix>> lu(std::size_t(sys.arcs()));
  for (int k = 0; k < sys.arcs(); ++k) {
    lu[k].compute(sys.transport[k]);
    if (lu[k].info() != Eigen::Success)
      throw SolverBreakdown("transport block factorization failed", sys.level_x, sys.level_s);
  }
  sol.u = Eigen::MatrixXd::Zero(sys.nodes(), sys.arcs());
  for (sol.iterations = 1; sol.iterations <= max_iterations; ++sol.iterations) {
    const Eigen::MatrixXd mixed = sol.u * sys.scatter_weights.transpose();
    for (int k = 0; k < sys.arcs(); ++k) sol.u.col(k) = lu[k].solve(sys.rhs.col(k) + sys.scatter_test[k] * mixed.col(k));
    sol.residual = sys.relative_residual(sol.u);
    if (!std::isfinite(sol.residual)) throw SolverBreakdown("source iteration diverged", sys.level_x, sys.level_s);
    if (sol.residual < tol) return sol;
  }
  throw SolverBreakdown("source iteration did not converge", sys.level_x, sys.level_s);
}

FullTensorSolution solve_full_tensor(int level_x, int level_s, const RTEProblem& prob) {
  return solve_full_tensor(assemble_supg(level_x, level_s, prob));
}

Eigen::MatrixXd prolongate(const Eigen::MatrixXd& u, int level_x, int level_s, int to_x, int to_s) {
  if (to_x < level_x || to_s < level_s) throw std::invalid_argument("prolongate: target coarser than source");
  const SquareMesh from(level_x), to(to_x);
  const int ratio = 1 << (to_s - level_s);
  Eigen::MatrixXd spatial(to.num_nodes(), u.cols());
  if (to_x == level_x) {
    spatial = u;
  } else {
    for (int k = 0; k < u.cols(); ++k)
      for (int i = 0; i < to.num_nodes(); ++i) spatial(i, k) = from.eval(u.col(k), to.node(i));
  }
  Eigen::MatrixXd out(to.num_nodes(), u.cols() * ratio);
  for (int j = 0; j < out.cols(); ++j) out.col(j) = spatial.col(j / ratio);
  return out;
}

int angular_level(int L, int N, int level_x) {
  if (L < 0 || N < 1) throw std::invalid_argument("angular_level: need L >= 0 and N >= 1");
  const int top = int(std::floor(std::log2(double(N) + 1.0)));
  if (level_x > L) return -1;
  if (L == 0) return top;
  return top * (L - level_x) / L;
}

TensorSolution combine(int L, int N, const RTEProblem& prob, int jobs) {
  return combine(L, [L, N](int l) { return angular_level(L, N, l); }, prob, jobs);
}

TensorSolution combine(int L, const AngularSchedule& schedule, const RTEProblem& prob, int jobs) {
  if (L < 0) throw std::invalid_argument("combine: L must be nonnegative");
  TensorSolution ts;
  ts.L = L;
  std::set<std::pair<int, int>> needed;
  for (int l = 0; l <= L; ++l) {
    needed.insert({l, schedule(l)});
    if (l < L) needed.insert({l, schedule(l + 1)});
    ts.level_s = std::max(ts.level_s, schedule(l));
  }
  const std::vector<std::pair<int, int>> pairs(needed.begin(), needed.end());
  std::vector<FullTensorSolution> sols(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) { sols[i] = solve_full_tensor(pairs[i].first, pairs[i].second, prob); });
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ts.dofs_sparse += std::size_t(sols[i].u.size());
    ts.parts.emplace(pairs[i], std::move(sols[i]));
  }
  ts.dofs_full = std::size_t(SquareMesh(L).num_nodes()) * std::size_t(AngularGrid(ts.level_s).count);

  ts.combined = Eigen::MatrixXd::Zero(SquareMesh(L).num_nodes(), AngularGrid(ts.level_s).count);
  auto lift = [&](int l, int s) { return prolongate(ts.parts.at({l, s}).u, l, s, L, ts.level_s); };
  for (int l = 0; l <= L; ++l) {
    Eigen::MatrixXd term = lift(l, schedule(l));
    if (l < L) term -= lift(l, schedule(l + 1));
    ts.combined += term;
  }
  return ts;
}

Eigen::VectorXd incident_radiation(const Eigen::MatrixXd& u, int level_s) {
  return u.rowwise().sum() * AngularGrid(level_s).width();
}

RadiationErrors radiation_errors(const Eigen::MatrixXd& u, int level_x, int level_s, const RTEProblem& prob) {
  if (!prob.exact) throw std::invalid_argument("radiation_errors: no exact solution");
  const RadiationSolution& ex = *prob.exact;
  const SquareMesh mesh(level_x);
  const AngularGrid ag(level_s);
  const TriangleRule& rule = triangle_rule(6);
  const LineRule& arc = gauss_legendre(3);
  const LineRule& line = gauss_legendre(4);
  const Eigen::VectorXd Gh = incident_radiation(u, level_s);

  // Angular points: every arc with a Gauss rule.
  std::vector<double> ang, angw;
  std::vector<int> owner;
  for (int k = 0; k < ag.count; ++k)
    for (std::size_t q = 0; q < arc.nodes.size(); ++q) {
      ang.push_back((k + arc.nodes[q]) * ag.width());
      angw.push_back(arc.weights[q] * ag.width());
      owner.push_back(k);
    }
  const std::size_t P = ang.size();
  bool iso = true;
  Eigen::MatrixXd phase(P, P);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < P; ++j) {
      phase(i, j) = prob.phase(ang[i], ang[j]) * angw[j];
      iso = iso && std::abs(prob.phase(ang[i], ang[j]) - 1.0 / kTwoPi) < 1e-14;
    }

  double g_l2 = 0.0, g_h1 = 0.0, g_norm_l2 = 0.0, g_norm_h1 = 0.0, u1 = 0.0;
  Eigen::VectorXd e(P);
  for (const auto& v : mesh.triangles()) {
    const P1Triangle t = p1_triangle(mesh, v);
    Vec2 gGh{0.0, 0.0};
    for (int a = 0; a < 3; ++a) gGh = gGh + t.grad[a] * Gh(t.v[a]);
    std::vector<Vec2> gu(std::size_t(ag.count), Vec2{0.0, 0.0});
    for (int k = 0; k < ag.count; ++k)
      for (int a = 0; a < 3; ++a) gu[k] = gu[k] + t.grad[a] * u(t.v[a], k);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& l = rule.bary[q];
      const Vec2 x = t.p[0] * l[0] + t.p[1] * l[1] + t.p[2] * l[2];
      const double wq = rule.weights[q] * t.area;
      const double G = ex.G(x), Gx = l[0] * Gh(t.v[0]) + l[1] * Gh(t.v[1]) + l[2] * Gh(t.v[2]);
      const Vec2 dG = ex.grad_G(x) - gGh;
      g_l2 += wq * (G - Gx) * (G - Gx);
      g_h1 += wq * ((G - Gx) * (G - Gx) + dot(dG, dG));
      const Vec2 gG = ex.grad_G(x);
      g_norm_l2 += wq * G * G;
      g_norm_h1 += wq * (G * G + dot(gG, gG));

      for (std::size_t p = 0; p < P; ++p) {
        const int k = owner[p];
        const double uh = l[0] * u(t.v[0], k) + l[1] * u(t.v[1], k) + l[2] * u(t.v[2], k);
        e(p) = ex.u(x, ang[p]) - uh;
        const Vec2 s{std::cos(ang[p]), std::sin(ang[p])};
        const double se = dot(s, ex.grad_u(x, ang[p]) - gu[k]);
        u1 += wq * angw[p] * (e(p) * e(p) + se * se);
      }
      if (iso) {
        double mean = 0.0;
        for (std::size_t p = 0; p < P; ++p) mean += angw[p] * e(p);
        mean /= kTwoPi;
        for (std::size_t p = 0; p < P; ++p) u1 += wq * angw[p] * (e(p) - mean) * (e(p) - mean);
      } else {
        const Eigen::VectorXd qe = e - phase * e;
        for (std::size_t p = 0; p < P; ++p) u1 += wq * angw[p] * qe(p) * qe(p);
      }
    }
  }
  for (const auto& ed : boundary_edges(mesh)) {
    const Vec2 pa = mesh.node(ed.a), pb = mesh.node(ed.b);
    const double len = norm(pb - pa);
    for (std::size_t p = 0; p < P; ++p) {
      const double sn = std::cos(ang[p]) * ed.normal.x + std::sin(ang[p]) * ed.normal.y;
      if (sn >= 0.0) continue;
      for (std::size_t q = 0; q < line.nodes.size(); ++q) {
        const double r = line.nodes[q];
        const Vec2 x = pa * (1.0 - r) + pb * r;
        const double ev = ex.u(x, ang[p]) - ((1.0 - r) * u(ed.a, owner[p]) + r * u(ed.b, owner[p]));
        u1 += -sn * angw[p] * line.weights[q] * len * ev * ev;
      }
    }
  }
  RadiationErrors out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.G_L2 = g_norm_l2 > 0.0 ? std::sqrt(g_l2 / g_norm_l2) : nan;
  out.G_H1 = g_norm_h1 > 0.0 ? std::sqrt(g_h1 / g_norm_h1) : nan;
  out.u_norm1 = std::sqrt(u1);
  return out;
}

void write_sparse_dom_csv(std::ostream& os, const std::vector<SparseDomRow>& rows) {
  os << "L,N,dofs_sparse,dofs_full,err_G_L2,err_G_H1,err_u_norm1,seconds\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.L << ',' << r.N << ',' << r.dofs_sparse << ',' << r.dofs_full << ',' << r.err_G_L2 << ',' << r.err_G_H1
       << ',' << r.err_u_norm1 << ',' << r.seconds << '\n';
}

void write_G_grid(std::ostream& os, const Eigen::VectorXd& G, int level_x, int samples) {
  const SquareMesh mesh(level_x);
  os << "x1,x2,G\n";
  os.precision(10);
  for (int j = 0; j < samples; ++j)
    for (int i = 0; i < samples; ++i) {
      const Vec2 x{double(i) / (samples - 1), double(j) / (samples - 1)};
      os << x.x << ',' << x.y << ',' << mesh.eval(G, x) << '\n';
    }
}

}  // namespace transport
