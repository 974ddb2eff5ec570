#include "transport/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <boost/numeric/odeint.hpp>

namespace transport {

SaddleOperators SaddleOperators::assemble(const TrialSpace& trial, const TestSpace& test, const TransportProblem& p) {
  return {assemble_B(trial, test, p), assemble_gram_Y(test, p), assemble_rhs(test, p)};
}

GramSolver::GramSolver(const SparseMatrix& G) : n_(G.rows()) {
  llt_.compute(G);
  if (llt_.info() != Eigen::Success) throw SingularSystemError("Gram matrix is not positive definite");
}

double GramSolver::dual_norm(const Eigen::VectorXd& r) const { return std::sqrt(std::max(0.0, r.dot(solve(r)))); }

Eigen::MatrixXd GramSolver::half_solve(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd PX = llt_.permutationP() * X;
  llt_.matrixL().solveInPlace(PX);
  return PX;
}

Eigen::MatrixXd schur_complement(const SaddleOperators& ops, const GramSolver& gs) {
  const Eigen::Index n = ops.B.cols();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  constexpr Eigen::Index kBlock = 256;
  std::vector<Eigen::MatrixXd> W;
  for (Eigen::Index j0 = 0; j0 < n; j0 += kBlock) {
    const Eigen::Index nb = std::min(kBlock, n - j0);
    W.push_back(gs.half_solve(Eigen::MatrixXd(ops.B.middleCols(j0, nb))));
  }
  Eigen::Index r0 = 0;
  for (std::size_t a = 0; a < W.size(); ++a) {
    Eigen::Index c0 = 0;
    for (std::size_t b = 0; b <= a; ++b) {
      const Eigen::MatrixXd blk = W[a].transpose() * W[b];
      S.block(r0, c0, blk.rows(), blk.cols()) = blk;
      S.block(c0, r0, blk.cols(), blk.rows()) = blk.transpose();
      c0 += W[b].cols();
    }
    r0 += W[a].cols();
  }
  return S;
}

SaddleState solve_saddle(const SaddleOperators& ops, const GramSolver& gs) {
  const Eigen::MatrixXd S = schur_complement(ops, gs);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  const double scale = S.diagonal().maxCoeff();
  if (llt.info() != Eigen::Success || llt.matrixLLT().diagonal().minCoeff() < 1e-7 * std::sqrt(scale))
    throw SingularSystemError("saddle system: B is rank deficient on the trial space (inf-sup failure)");
  SaddleState st;
  const Eigen::VectorXd g_rhs = gs.solve(ops.rhs);
  st.u = llt.solve(ops.B.transpose() * g_rhs);
  st.y = gs.solve(ops.rhs - ops.B * st.u);
  st.iterations = 1;
  return st;
}

SaddleState solve_saddle(const SaddleOperators& ops) { return solve_saddle(ops, GramSolver(ops.G)); }

SaddleState uzawa(const SaddleOperators& ops, const GramSolver& gs, const Eigen::VectorXd& u0,
                  const UzawaOptions& opt) {
  if (opt.max_steps < 1) throw std::invalid_argument("uzawa: at least one step is required");
  SaddleState st;
  st.u = u0;
  if (opt.record) st.history.push_back(st.u);
  Eigen::VectorXd y_prev;
  for (int k = 0; k < opt.max_steps; ++k) {
    st.y = gs.solve(ops.rhs - ops.B * st.u);
    st.u += ops.B.transpose() * st.y;
    st.iterations = k + 1;
    if (opt.record) st.history.push_back(st.u);
    if (opt.early_stop > 0.0 && y_prev.size() == st.y.size()) {
      const Eigen::VectorXd dy = st.y - y_prev;
      const Eigen::VectorXd Gy = ops.G * st.y;
      if (std::sqrt(dy.dot(ops.G * dy)) < opt.early_stop * std::sqrt(st.y.dot(Gy))) break;
    }
    y_prev = st.y;
  }
  return st;
}

std::optional<double> estimate_delta(const SaddleOperators& ops, const GramSolver& gs, const Eigen::VectorXd& u_proj,
                                     const Eigen::VectorXd& u_K) {
  const Eigen::VectorXd e = u_proj - u_K;
  const double ne2 = e.squaredNorm();
  if (std::sqrt(ne2) < 1e-14) return std::nullopt;
  const Eigen::VectorXd Be = ops.B * e;
  const double captured = Be.dot(gs.solve(Be));
  return std::sqrt(std::clamp(1.0 - captured / ne2, 0.0, 1.0));
}

double inf_sup_constant(const SaddleOperators& ops, const GramSolver& gs) {
  const Eigen::MatrixXd S = schur_complement(ops, gs);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues()(0)));
}

PiecewiseSmooth benchmark_solution() {
  PiecewiseSmooth u;
  u.value = [](const Vec2& x, bool side) {
    if (side) return 1.0 - std::exp(-x.y);
    const double s = std::sqrt(std::max(0.0, x.y * x.y - 2.0 * x.x));
    return 0.5 * (1.0 - std::exp(-(x.y - s)));
  };
  u.curve = GraphCurve{[](double y) { return 0.5 * y * y; }};
  u.slicing.sqrt_endpoint = true;
  return u;
}

namespace {

using State = std::array<double, 4>;  // x1, x2, integral of c, integral of f e^{-C}

double inside_margin(double x1, double x2) { return std::min({x1, 1.0 - x1, x2, 1.0 - x2}); }

}  // namespace

double characteristics_value(const TransportProblem& p, const Vec2& x0, double tol) {
  namespace ode = boost::numeric::odeint;
  const auto g = [&](const Vec2& x) { return p.g ? p.g(x) : 0.0; };
  // Start strictly inside; points on the boundary are nudged by 1e-12.
  Vec2 x{std::clamp(x0.x, 1e-12, 1 - 1e-12), std::clamp(x0.y, 1e-12, 1 - 1e-12)};
  auto rhs = [&](const State& s, State& ds, double) {
    const Vec2 pos{s[0], s[1]};
    const Vec2 b = p.b(pos);
    ds[0] = -b.x;
    ds[1] = -b.y;
    ds[2] = p.c(pos);
    ds[3] = p.f(pos) * std::exp(-s[2]);
  };
  // Inflow point: the backward trajectory leaves immediately.
  {
    const Vec2 b = p.b(x);
    const Vec2 y{x.x - 1e-9 * b.x, x.y - 1e-9 * b.y};
    if (inside_margin(y.x, y.y) < 0.0 && inside_margin(x0.x, x0.y) <= 1e-12) return g(x0);
  }
  auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<State>());
  State s{x.x, x.y, 0.0, 0.0};
  double h0 = 1e-3;
  stepper.initialize(s, 0.0, h0);
  for (int it = 0; it < 1000000; ++it) {
    stepper.do_step(rhs);
    const State& cur = stepper.current_state();
    if (inside_margin(cur[0], cur[1]) < 0.0) {
      double lo = stepper.previous_time(), hi = stepper.current_time();
      State mid;
      for (int k = 0; k < 200 && hi - lo > 1e-15; ++k) {
        const double t = 0.5 * (lo + hi);
        stepper.calc_state(t, mid);
        (inside_margin(mid[0], mid[1]) < 0.0 ? hi : lo) = t;
      }
      stepper.calc_state(0.5 * (lo + hi), mid);
      return mid[3] + g({mid[0], mid[1]}) * std::exp(-mid[2]);
    }
  }
  throw std::runtime_error("characteristics_value: trajectory does not reach the inflow boundary");
}

PiecewiseSmooth reference_solution(const TransportProblem& p, double tol) {
  PiecewiseSmooth u;
  u.value = [p, tol](const Vec2& x, bool) { return characteristics_value(p, x, tol); };
  u.curve = p.f.curve;
  return u;
}

}  // namespace transport
