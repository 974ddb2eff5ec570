#include "transport/adaptive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace transport {

void AdaptiveConfig::validate() const {
  auto open01 = [](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0, 1)");
  };
  open01(theta, "theta");
  open01(rho, "rho");
  open01(eta, "eta");
  open01(alpha1, "alpha1");
  open01(alpha2, "alpha2");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (K < 1) throw std::invalid_argument("K must be at least 1");
  if (max_generations < 1) throw std::invalid_argument("max_generations must be at least 1");
  if (initial_grid < 1) throw std::invalid_argument("initial_grid must be at least 1");
  if (max_theta_halvings < 0) throw std::invalid_argument("max_theta_halvings must be nonnegative");
  if (early_stop < 0.0) throw std::invalid_argument("early_stop must be nonnegative");
  if (test.order < 1 || test.order > 3) throw std::invalid_argument("test order must be 1, 2 or 3");
}

void ConvergenceHistory::write_csv(std::ostream& os) const {
  const auto old = os.precision(17);
  os << "generation,n,error,delta,estimator,seconds\n";
  for (const auto& r : rows) {
    os << r.generation << ',' << r.n << ',' << r.error << ',';
    if (r.delta) os << *r.delta;
    os << ',' << r.estimator << ',' << r.seconds << '\n';
  }
  os.precision(old);
}

namespace {

struct Box {
  double x0, y0, x1, y1;
  static Box of(std::span<const Vec2> poly) {
    Box b{1e300, 1e300, -1e300, -1e300};
    for (const auto& p : poly) {
      b.x0 = std::min(b.x0, p.x);
      b.y0 = std::min(b.y0, p.y);
      b.x1 = std::max(b.x1, p.x);
      b.y1 = std::max(b.y1, p.y);
    }
    return b;
  }
  bool overlaps(const Box& o) const {
    return x0 < o.x1 - kGeomTol && o.x0 < x1 - kGeomTol && y0 < o.y1 - kGeomTol && o.y0 < y1 - kGeomTol;
  }
};

Polygon ccw(std::span<const Vec2> poly) {
  Polygon p(poly.begin(), poly.end());
  if (signed_area(p) < 0) std::reverse(p.begin(), p.end());
  return p;
}

// int_{poly} g basis_k over the listed test triangles.
Eigen::Vector3d adjoint_moments(const AdjointField& g, const std::vector<std::size_t>& tris, const Polygon& poly,
                                const LocalP1& basis) {
  Eigen::Vector3d m = Eigen::Vector3d::Zero();
  const Box pb = Box::of(poly);
  for (const auto t : tris) {
    const auto& tri = g.space().triangles()[t];
    if (!Box::of(tri.v).overlaps(pb)) continue;
    const Polygon piece = clean_polygon(clip_convex(ccw(tri.v), poly));
    if (piece.size() < 3 || area(piece) < 1e-18) continue;
    for (const auto& q : polygon_points(piece, 5)) m += (q.w * g.value(t, q.x)) * basis.values(q.x);
  }
  return m;
}

// Test triangles meeting each cell of another partition.
std::vector<std::vector<std::size_t>> overlapping_triangles(const Partition& p, const TestSpace& test) {
  const auto& tris = test.triangles();
  std::vector<Box> tb;
  tb.reserve(tris.size());
  for (const auto& t : tris) tb.push_back(Box::of(t.v));
  std::vector<std::vector<std::size_t>> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Box cb = Box::of(p.cells()[i].vertices);
    for (std::size_t t = 0; t < tris.size(); ++t)
      if (tb[t].overlaps(cb)) out[i].push_back(t);
  }
  return out;
}

bool skip_rule(const Cell& c, const SplitRule& r) {
  // Both halves of a diagonal cut of a parallelogram merge straight back.
  return r.kind == SplitKind::VertexToVertex && is_parallelogram(c.vertices);
}

}  // namespace

std::vector<CellIndicator> fluctuation_indicators(const Partition& p, const AdjointField& g, bool isotropic) {
  const auto& cell_tris = g.space().cell_triangles();
  if (cell_tris.size() != p.size()) throw std::invalid_argument("fluctuation_indicators: test space mismatch");
  std::vector<CellIndicator> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Cell& c = p.cells()[i];
    auto best_of = [&](const FluctuationBasis& fb) {
      Eigen::VectorXd mom(static_cast<Eigen::Index>(3 * fb.children.size()));
      for (std::size_t k = 0; k < fb.children.size(); ++k)
        mom.segment<3>(static_cast<Eigen::Index>(3 * k)) =
            adjoint_moments(g, cell_tris[i], ccw(fb.children[k]), fb.frame_basis);
      return fb.size() ? fb.apply(mom).cwiseAbs().maxCoeff() : 0.0;
    };
    if (isotropic) {
      out[i].value = best_of(fluctuation_basis(c.vertices, iso_refine(c)));
      continue;
    }
    for (const auto& r : enumerate_splits(c)) {
      if (skip_rule(c, r)) continue;
      double v = 0.0;
      try {
        v = best_of(fluctuation_basis(c, r));
      } catch (const DegenerateSplitError&) {
        continue;
      }
      if (v > out[i].value) {
        out[i].value = v;
        out[i].rule = r;
      }
    }
  }
  return out;
}

MarkResult mark_and_refine(const Partition& p, const std::vector<CellIndicator>& ind, double theta, bool isotropic) {
  double top = 0.0;
  for (const auto& c : ind) top = std::max(top, c.value);
  MarkResult res;
  if (top <= 0.0) {
    res.partition = p;
    res.converged = true;
    return res;
  }
  const double T = theta * top;
  if (isotropic) {
    std::set<CellId> cells;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (ind[i].value > T) cells.insert(p.cells()[i].id);
    res.marked = cells.size();
    res.partition = refine_isotropic(p, cells, MergePolicy::NoMerge);
    return res;
  }
  std::map<CellId, std::optional<SplitRule>> decisions;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (ind[i].value > T && ind[i].rule) decisions[p.cells()[i].id] = ind[i].rule;
  res.marked = decisions.size();
  res.partition = refine_partition(p, decisions, MergePolicy::Merge);
  return res;
}

MarkResult mark_and_refine(const Partition& p, const TestSpace& test, const Eigen::VectorXd& y,
                           const TransportProblem& prob, double theta, bool isotropic) {
  const AdjointField g = apply_adjoint(y, test, prob);
  return mark_and_refine(p, fluctuation_indicators(p, g, isotropic), theta, isotropic);
}

double enrichment_defect(const Partition& refined, const AdjointField& g, double norm) {
  if (norm <= 0.0) return 0.0;
  const auto cand = overlapping_triangles(refined, g.space());
  double captured = 0.0;
  for (std::size_t i = 0; i < refined.size(); ++i) {
    const Polygon poly = ccw(refined.cells()[i].vertices);
    captured += adjoint_moments(g, cand[i], poly, LocalP1::build(poly)).squaredNorm();
  }
  return std::sqrt(std::max(0.0, 1.0 - captured / (norm * norm)));
}

Eigen::VectorXd transfer(const TrialSpace& from, const Eigen::VectorXd& u, const TrialSpace& to) {
  const auto& src = from.partition().cells();
  std::vector<Box> sb;
  for (const auto& c : src) sb.push_back(Box::of(c.vertices));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(to.dim()));
  for (std::size_t i = 0; i < to.partition().size(); ++i) {
    const Polygon poly = ccw(to.partition().cells()[i].vertices);
    const Box b = Box::of(poly);
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (std::size_t j = 0; j < src.size(); ++j) {
      if (!sb[j].overlaps(b)) continue;
      const Polygon piece = clean_polygon(clip_convex(ccw(src[j].vertices), poly));
      if (piece.size() < 3 || area(piece) < 1e-18) continue;
      for (const auto& q : polygon_points(piece, 2)) m += (q.w * from.eval(u, j, q.x)) * to.local(i).values(q.x);
    }
    v.segment<3>(static_cast<Eigen::Index>(3 * i)) = m;
  }
  return v;
}

double data_oscillation(const TransportProblem& prob, const TrialSpace& trial, const TestSpaceOptions& opt) {
  // Isotropic pieces of every trial cell, each with its own P1 projection of f.
  std::vector<Polygon> pieces;
  std::vector<LocalP1> basis;
  std::vector<Eigen::Vector3d> coef;
  std::vector<std::size_t> owner;
  for (std::size_t ci = 0; ci < trial.partition().size(); ++ci)
    for (auto& q : iso_refine(trial.partition().cells()[ci])) {
      owner.push_back(ci);
      pieces.push_back(ccw(q));
      basis.push_back(LocalP1::build(pieces.back()));
      Eigen::Vector3d m = Eigen::Vector3d::Zero();
      for (const auto& pt : points_for(pieces.back(), prob.f, 6))
        m += pt.w * prob.f.value(pt.x, pt.positive_side) * basis.back().values(pt.x);
      coef.push_back(m);
    }
  TestSpaceOptions o = opt;
  o.extra_refinements += 1;
  const TestSpace V(trial.partition(), prob.b, o);
  Eigen::VectorXd r = assemble_load(V, prob.f);
  Eigen::VectorXd val, dx, dy;
  const int deg = 1 + V.element().order();
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const Box pb = Box::of(pieces[i]);
    for (const auto t : V.cell_triangles()[owner[i]]) {
      if (!Box::of(V.triangles()[t].v).overlaps(pb)) continue;
      const auto& tri = V.triangles()[t];
      const Polygon piece = clean_polygon(clip_convex(ccw(tri.v), pieces[i]));
      if (piece.size() < 3 || area(piece) < 1e-18) continue;
      for (const auto& q : polygon_points(piece, deg)) {
        V.element().eval(tri.to_reference(q.x), val, dx, dy);
        const double fv = q.w * coef[i].dot(basis[i].values(q.x));
        for (std::size_t k = 0; k < tri.nodes.size(); ++k) {
          const auto d = V.dof(tri.nodes[k]);
          if (d >= 0) r(d) -= fv * val(static_cast<Eigen::Index>(k));
        }
      }
    }
  }
  const GramSolver gs(assemble_gram_Y(V, prob));
  return gs.dual_norm(r);
}

AdaptiveResult adaptive_solve(const TransportProblem& prob, const AdaptiveConfig& cfg) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const PiecewiseSmooth ref = cfg.reference ? *cfg.reference : reference_solution(prob);

  AdaptiveResult res;
  Partition part = Partition::uniform(cfg.initial_grid);
  Eigen::VectorXd u_bar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * part.size()));
  double e = -1.0;

  for (int gen = 0;; ++gen) {
    const TrialSpace X(part);
    const TestSpace V(part, prob.b, cfg.test);
    const SaddleOperators ops = SaddleOperators::assemble(X, V, prob);
    const GramSolver gs(ops.G);
    if (e < 0.0) e = gs.dual_norm(ops.rhs);

    UzawaOptions uo;
    uo.max_steps = cfg.K;
    uo.early_stop = cfg.early_stop;
    uo.record = cfg.diagnostics;
    SaddleState st = uzawa(ops, gs, u_bar, uo);

    GenerationRecord rec;
    rec.generation = gen;
    rec.n = X.dim();
    rec.bound = e;
    rec.uzawa_steps = st.iterations;
    rec.error = X.l2_error(st.u, ref);
    rec.estimator = std::sqrt(std::max(0.0, st.y.dot(ops.G * st.y)));
    const Eigen::VectorXd u_proj = X.project(ref);
    rec.delta = estimate_delta(ops, gs, u_proj, st.u);

    if (cfg.diagnostics) {
      const SaddleState direct = solve_saddle(ops, gs);
      for (std::size_t k = 1; k < st.history.size(); ++k) {
        const double prev = (st.history[k - 1] - direct.u).norm();
        if (prev > 1e-13 * std::max(1.0, direct.u.norm()))
          rec.contraction.push_back((st.history[k] - direct.u).norm() / prev);
      }
      // Residual bounds for f_h = B(projection of u), w = u_K.
      const Eigen::VectorXd err = u_proj - st.u;
      TestSpaceOptions plus = cfg.test;
      plus.order = 3;
      plus.extra_refinements += 1;
      const TestSpace Vp(part, prob.b, plus);
      const SparseMatrix Bp = assemble_B(X, Vp, prob);
      const GramSolver gp(assemble_gram_Y(Vp, prob));
      rec.residual_lifted = gs.dual_norm(ops.B * err);
      rec.residual_upper = gp.dual_norm(Bp * err);
      rec.residual_lower = (1.0 - rec.delta.value_or(1.0)) * rec.residual_upper;
      rec.oscillation = data_oscillation(prob, X, cfg.test);
    }

    const bool last = gen + 1 >= cfg.max_generations || e * cfg.rho <= cfg.epsilon;
    if (last) {
      rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
      res.history.rows.push_back(rec);
      res.partitions.push_back(part);
      res.state = st;
      res.partition = part;
      res.reached_target = e * cfg.rho <= cfg.epsilon;
      if (!res.reached_target) res.diagnostic = "max_generations reached before the target accuracy";
      break;
    }

    // Mark, checking the enrichment condition; theta halves on failure.
    const AdjointField g = apply_adjoint(st.y, V, prob);
    const auto ind = fluctuation_indicators(part, g, cfg.isotropic);
    double theta = cfg.theta;
    MarkResult mr;
    for (int attempt = 0;; ++attempt) {
      mr = mark_and_refine(part, ind, theta, cfg.isotropic);
      rec.theta = theta;
      rec.enrichment_defect = mr.converged ? 0.0 : enrichment_defect(mr.partition, g, rec.estimator);
      if (mr.converged || rec.enrichment_defect <= cfg.eta || attempt >= cfg.max_theta_halvings) break;
      theta *= 0.5;
    }
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    spdlog::info("generation {}: n={} error={:.6g} delta={:.4f} estimator={:.6g} theta={:.4g} defect={:.3f}", gen,
                 rec.n, rec.error, rec.delta.value_or(-1.0), rec.estimator, rec.theta, rec.enrichment_defect);
    res.history.rows.push_back(rec);
    res.partitions.push_back(part);

    if (mr.converged) {
      res.state = st;
      res.partition = part;
      res.reached_target = true;
      res.diagnostic = "lifted residual vanishes";
      break;
    }
    if (cfg.max_dofs && 3 * mr.partition.size() > cfg.max_dofs) {
      res.state = st;
      res.partition = part;
      res.diagnostic = "max_dofs reached";
      break;
    }
    const TrialSpace Xn(mr.partition);
    u_bar = transfer(X, st.u, Xn);
    part = mr.partition;
    e *= cfg.rho;
  }
  return res;
}

}  // namespace transport
