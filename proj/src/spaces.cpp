#include "transport/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include <Eigen/Eigenvalues>

namespace transport {

// ---------------------------------------------------------------------------
// Local orthonormal P1

LocalP1 LocalP1::build(std::span<const Vec2> poly) {
  const auto pts = polygon_points(poly, 2);
  double A = 0.0;
  Vec2 c{};
  for (const auto& p : pts) {
    A += p.w;
    c = c + p.x * p.w;
  }
  c = c * (1.0 / A);
  Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d d(p.x.x - c.x, p.x.y - c.y);
    C += p.w * d * d.transpose();
  }
  C /= A;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(C);
  LocalP1 l;
  l.center = c;
  l.coef(0, 0) = 1.0 / std::sqrt(A);
  for (int k = 0; k < 2; ++k) {
    const double lam = es.eigenvalues()(k);
    if (!(lam > 0.0)) throw GeometryError("LocalP1: degenerate cell");
    const double s = 1.0 / std::sqrt(A * lam);
    l.coef(k + 1, 1) = es.eigenvectors()(0, k) * s;
    l.coef(k + 1, 2) = es.eigenvectors()(1, k) * s;
  }
  return l;
}

// ---------------------------------------------------------------------------
// Trial space

TrialSpace::TrialSpace(Partition p) : partition_(std::move(p)) {
  local_.reserve(partition_.size());
  for (const auto& c : partition_.cells()) local_.push_back(LocalP1::build(c.vertices));
}

double TrialSpace::eval(const Eigen::VectorXd& u, std::size_t cell, const Vec2& x) const {
  return u.segment<3>(static_cast<Eigen::Index>(3 * cell)).dot(local_[cell].values(x));
}

std::optional<double> TrialSpace::eval(const Eigen::VectorXd& u, const Vec2& x) const {
  for (std::size_t i = 0; i < partition_.size(); ++i)
    if (contains_point(partition_.cells()[i].vertices, x, 1e-13)) return eval(u, i, x);
  return std::nullopt;
}

Eigen::VectorXd TrialSpace::project(const PiecewiseSmooth& f, int degree) const {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < partition_.size(); ++i) {
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (const auto& q : points_for(partition_.cells()[i].vertices, f, degree))
      m += q.w * f.value(q.x, q.positive_side) * local_[i].values(q.x);
    u.segment<3>(static_cast<Eigen::Index>(3 * i)) = m;
  }
  return u;
}

Eigen::VectorXd TrialSpace::cell_errors_sq(const Eigen::VectorXd& u, const PiecewiseSmooth& f, int degree) const {
  Eigen::VectorXd e(static_cast<Eigen::Index>(partition_.size()));
  for (std::size_t i = 0; i < partition_.size(); ++i) {
    double s = 0.0;
    for (const auto& q : points_for(partition_.cells()[i].vertices, f, degree)) {
      const double d = f.value(q.x, q.positive_side) - eval(u, i, q.x);
      s += q.w * d * d;
    }
    e(static_cast<Eigen::Index>(i)) = s;
  }
  return e;
}

double TrialSpace::l2_error(const Eigen::VectorXd& u, const PiecewiseSmooth& f, int degree) const {
  return std::sqrt(cell_errors_sq(u, f, degree).sum());
}

// ---------------------------------------------------------------------------
// Lagrange element

LagrangeTriangle::LagrangeTriangle(int order) : order_(order) {
  if (order < 1 || order > 3) throw std::invalid_argument("LagrangeTriangle: order must be 1, 2 or 3");
  for (int j = 0; j <= order; ++j)
    for (int i = 0; i + j <= order; ++i) nodes_.push_back({static_cast<double>(i) / order, static_cast<double>(j) / order});
  for (int d = 0; d <= order; ++d)
    for (int b = 0; b <= d; ++b) monomials_.push_back({d - b, b});
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  Eigen::MatrixXd V(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index m = 0; m < n; ++m) {
      const auto [a, b] = monomials_[static_cast<std::size_t>(m)];
      V(i, m) = std::pow(nodes_[static_cast<std::size_t>(i)].x, a) * std::pow(nodes_[static_cast<std::size_t>(i)].y, b);
    }
  // Row i of V times column j of coef_ = delta_ij.
  coef_ = V.fullPivLu().inverse();
}

void LagrangeTriangle::eval(const Vec2& r, Eigen::VectorXd& val, Eigen::VectorXd& dxi, Eigen::VectorXd& deta) const {
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  Eigen::VectorXd m(n), mx(n), my(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto [a, b] = monomials_[static_cast<std::size_t>(k)];
    const double xa = std::pow(r.x, a), yb = std::pow(r.y, b);
    m(k) = xa * yb;
    mx(k) = a > 0 ? a * std::pow(r.x, a - 1) * yb : 0.0;
    my(k) = b > 0 ? b * xa * std::pow(r.y, b - 1) : 0.0;
  }
  val = coef_.transpose() * m;
  dxi = coef_.transpose() * mx;
  deta = coef_.transpose() * my;
}

Vec2 TestTriangle::to_reference(const Vec2& x) const {
  const Vec2 e1 = v[1] - v[0], e2 = v[2] - v[0], d = x - v[0];
  const double det = cross(e1, e2);
  return {cross(d, e2) / det, cross(e1, d) / det};
}

// ---------------------------------------------------------------------------
// Conforming triangulation

namespace {

constexpr double kPointTol = 1e-11;

class SegmentGrid {
 public:
  explicit SegmentGrid(const std::vector<Vec2>& pts) : pts_(pts) {
    n_ = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(pts.size())) / 2), 1, 512);
    buckets_.resize(static_cast<std::size_t>(n_ * n_));
    for (std::size_t i = 0; i < pts.size(); ++i) buckets_[bucket(key(pts[i].x), key(pts[i].y))].push_back(i);
  }
  // Points strictly inside segment (a, b), sorted from a to b.
  std::vector<Vec2> interior(const Vec2& a, const Vec2& b) const {
    const Vec2 e = b - a;
    const double len2 = dot(e, e);
    const double len = std::sqrt(len2);
    std::vector<std::pair<double, Vec2>> hits;
    const int x0 = key(std::min(a.x, b.x) - kPointTol), x1 = key(std::max(a.x, b.x) + kPointTol);
    const int y0 = key(std::min(a.y, b.y) - kPointTol), y1 = key(std::max(a.y, b.y) + kPointTol);
    for (int i = x0; i <= x1; ++i)
      for (int j = y0; j <= y1; ++j)
        for (auto idx : buckets_[bucket(i, j)]) {
          const Vec2 p = pts_[idx];
          const double t = dot(p - a, e) / len2;
          if (t * len <= kPointTol || (1.0 - t) * len <= kPointTol) continue;
          if (std::abs(cross(e, p - a)) / len > kPointTol) continue;
          hits.push_back({t, p});
        }
    std::sort(hits.begin(), hits.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    std::vector<Vec2> out;
    for (const auto& h : hits) out.push_back(h.second);
    return out;
  }

 private:
  int key(double v) const { return std::clamp(static_cast<int>(std::floor(v * n_)), 0, n_ - 1); }
  std::size_t bucket(int i, int j) const { return static_cast<std::size_t>(i * n_ + j); }

  const std::vector<Vec2>& pts_;
  int n_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

}  // namespace

std::vector<std::array<Vec2, 3>> conforming_triangulation(const std::vector<Polygon>& pieces,
                                                          std::vector<std::size_t>* owner) {
  PointIndex index(kPointTol);
  for (const auto& poly : pieces)
    for (const auto& v : poly) index.insert(v);
  const SegmentGrid grid(index.points());
  std::vector<std::array<Vec2, 3>> tris;
  if (owner) owner->clear();
  for (std::size_t pi = 0; pi < pieces.size(); ++pi) {
    const auto& poly = pieces[pi];
    const std::size_t n = poly.size();
    std::vector<Vec2> ring;
    std::vector<std::size_t> corner_pos(n);
    std::vector<bool> edge_hanging(n, false);
    for (std::size_t e = 0; e < n; ++e) {
      corner_pos[e] = ring.size();
      ring.push_back(poly[e]);
      const auto hang = grid.interior(poly[e], poly[(e + 1) % n]);
      edge_hanging[e] = !hang.empty();
      ring.insert(ring.end(), hang.begin(), hang.end());
    }
    const std::size_t m = ring.size();
    std::optional<std::size_t> apex;
    for (std::size_t k = 0; k < n && !apex; ++k)
      if (!edge_hanging[k] && !edge_hanging[(k + n - 1) % n]) apex = k;
    if (apex) {
      const std::size_t s = corner_pos[*apex];
      for (std::size_t i = 1; i + 1 < m; ++i) {
        tris.push_back({ring[s], ring[(s + i) % m], ring[(s + i + 1) % m]});
        if (owner) owner->push_back(pi);
      }
    } else {
      const Vec2 c = centroid(poly);
      for (std::size_t i = 0; i < m; ++i) {
        tris.push_back({c, ring[i], ring[(i + 1) % m]});
        if (owner) owner->push_back(pi);
      }
    }
  }
  return tris;
}

// ---------------------------------------------------------------------------
// Test space

namespace {

// Number of strips along the flow per cell such that the resolution across
// the flow never coarsens from a cell to the cells upstream of it.
struct Strips {
  Vec2 dir{};
  double lo = 0.0, width = 0.0;
  int count = 0;  // 0: ordinary isotropic pieces
};

std::vector<Strips> upstream_strips(const Partition& p, const VelocityField& b) {
  const std::size_t n = p.size();
  std::vector<Strips> st(n);
  struct Box {
    double x0, y0, x1, y1;
  };
  std::vector<Box> box(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = p.cells()[i].vertices;
    const Vec2 m = centroid(v);
    const Vec2 d = b(m);
    const double nd = norm(d);
    Box bx{1e300, 1e300, -1e300, -1e300};
    double lo = 1e300, hi = -1e300;
    for (const auto& q : v) {
      bx = {std::min(bx.x0, q.x), std::min(bx.y0, q.y), std::max(bx.x1, q.x), std::max(bx.y1, q.y)};
      if (nd > 0) {
        const double c = cross(d * (1.0 / nd), q);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
    }
    box[i] = bx;
    if (nd > 0) st[i] = {d * (1.0 / nd), lo, hi - lo, 0};
  }
  // Cells sharing a piece of an outflow edge of each cell.
  std::vector<std::vector<std::size_t>> downstream(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = p.cells()[i].vertices;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const Vec2 a = v[k], c = v[(k + 1) % v.size()];
      const Vec2 t = c - a;
      const double len = norm(t);
      const Vec2 nrm{t.y / len, -t.x / len};
      if (dot(b(midpoint(a, c)), nrm) <= 1e-12) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const Box& o = box[j];
        if (o.x0 > std::max(a.x, c.x) + kGeomTol || o.x1 < std::min(a.x, c.x) - kGeomTol ||
            o.y0 > std::max(a.y, c.y) + kGeomTol || o.y1 < std::min(a.y, c.y) - kGeomTol)
          continue;
        const auto& w = p.cells()[j].vertices;
        for (std::size_t l = 0; l < w.size(); ++l) {
          const Vec2 e = w[l], f = w[(l + 1) % w.size()];
          if (std::abs(cross(t, e - a)) > kGeomTol * len || std::abs(cross(t, f - a)) > kGeomTol * len) continue;
          const double s0 = dot(e - a, t) / (len * len), s1 = dot(f - a, t) / (len * len);
          if (std::min(1.0, std::max(s0, s1)) - std::max(0.0, std::min(s0, s1)) > 1e-9) {
            downstream[i].push_back(j);
            break;
          }
        }
      }
    }
  }
  constexpr int kMaxStrips = 16;
  std::vector<double> res(n);
  for (std::size_t i = 0; i < n; ++i) res[i] = 0.5 * st[i].width;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i)
      for (const auto j : downstream[i]) {
        if (res[j] >= res[i] * (1 - 1e-9) || st[i].count >= kMaxStrips) continue;
        const int k = std::min(kMaxStrips, static_cast<int>(std::ceil(st[i].width / res[j] - 1e-9)));
        if (k <= std::max(st[i].count, 2)) continue;
        st[i].count = k;
        res[i] = st[i].width / k;
        changed = true;
      }
  }
  return st;
}

std::vector<Polygon> strip_pieces(const Polygon& poly, const Strips& s) {
  const Vec2 nrm{-s.dir.y, s.dir.x};  // cross(dir, x) = dot(nrm, x)
  const Vec2 m = centroid(poly);
  double reach = 0.0;
  for (const auto& q : poly) reach = std::max(reach, norm(q - m));
  reach = 2 * reach + 1;
  const double h = s.width / s.count;
  std::vector<Polygon> out;
  for (int k = 0; k < s.count; ++k) {
    const double c0 = s.lo + k * h, c1 = k + 1 == s.count ? s.lo + s.width + h : s.lo + (k + 1) * h;
    const double a0 = k == 0 ? c0 - h : c0;
    const Vec2 base = m - nrm * dot(nrm, m);
    const Polygon band{base + nrm * a0 - s.dir * reach, base + nrm * a0 + s.dir * reach,
                       base + nrm * c1 + s.dir * reach, base + nrm * c1 - s.dir * reach};
    Polygon piece = clean_polygon(clip_convex(poly, signed_area(band) < 0 ? Polygon(band.rbegin(), band.rend()) : band));
    if (piece.size() >= 3 && area(piece) > 1e-18) out.push_back(std::move(piece));
  }
  return out;
}

}  // namespace

TestSpace::TestSpace(const Partition& p, const VelocityField& b, TestSpaceOptions opt)
    : opt_(opt), elem_(opt.order) {
  std::vector<Polygon> pieces;
  std::vector<std::size_t> piece_cell;
  const std::vector<Strips> strips = opt.upstream_grading ? upstream_strips(p, b) : std::vector<Strips>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& c = p.cells()[i];
    if (opt.isotropic) {
      std::vector<Polygon> cur = strips[i].count > 2 ? strip_pieces(c.vertices, strips[i]) : iso_refine(c);
      for (auto& q : cur) {
        pieces.push_back(std::move(q));
        piece_cell.push_back(i);
      }
    } else {
      pieces.push_back(c.vertices);
      piece_cell.push_back(i);
    }
  }
  std::vector<std::size_t> owner;
  auto raw = conforming_triangulation(pieces, &owner);
  std::vector<std::size_t> tri_cell(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) tri_cell[t] = piece_cell[owner[t]];
  for (int r = 0; r < opt.extra_refinements; ++r) {
    std::vector<std::array<Vec2, 3>> fine;
    std::vector<std::size_t> fine_cell;
    for (std::size_t t = 0; t < raw.size(); ++t) {
      const auto& [a, bb, c] = raw[t];
      const Vec2 ab = midpoint(a, bb), bc = midpoint(bb, c), ca = midpoint(c, a);
      fine.push_back({a, ab, ca});
      fine.push_back({ab, bb, bc});
      fine.push_back({ca, bc, c});
      fine.push_back({ab, bc, ca});
      for (int k = 0; k < 4; ++k) fine_cell.push_back(tri_cell[t]);
    }
    raw = std::move(fine);
    tri_cell = std::move(fine_cell);
  }

  PointIndex nodes(1e-12);
  cell_tris_.assign(p.size(), {});
  tris_.reserve(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) {
    TestTriangle tri;
    tri.v = raw[t];
    if (cross(tri.v[1] - tri.v[0], tri.v[2] - tri.v[0]) < 0) std::swap(tri.v[1], tri.v[2]);
    tri.trial_cell = tri_cell[t];
    const Vec2 e1 = tri.v[1] - tri.v[0], e2 = tri.v[2] - tri.v[0];
    const double det = cross(e1, e2);
    tri.area = 0.5 * det;
    Eigen::Matrix2d J;
    J << e1.x, e2.x, e1.y, e2.y;
    tri.jinv_t = J.inverse().transpose();
    for (const auto& r : elem_.nodes()) tri.nodes.push_back(nodes.insert(tri.to_physical(r)));
    cell_tris_[tri.trial_cell].push_back(tris_.size());
    tris_.push_back(std::move(tri));
  }
  node_pos_ = nodes.points();

  // Outflow boundary: edges on the boundary of the unit square with b.n > 0.
  std::vector<bool> fixed(node_pos_.size(), false);
  const int k = elem_.order();
  for (const auto& tri : tris_) {
    for (int e = 0; e < 3; ++e) {
      const Vec2 a = tri.v[static_cast<std::size_t>(e)], c = tri.v[static_cast<std::size_t>((e + 1) % 3)];
      Vec2 n{};
      if (std::abs(a.x) < kPointTol && std::abs(c.x) < kPointTol) n = {-1, 0};
      else if (std::abs(a.x - 1) < kPointTol && std::abs(c.x - 1) < kPointTol) n = {1, 0};
      else if (std::abs(a.y) < kPointTol && std::abs(c.y) < kPointTol) n = {0, -1};
      else if (std::abs(a.y - 1) < kPointTol && std::abs(c.y - 1) < kPointTol) n = {0, 1};
      else continue;
      if (dot(b(midpoint(a, c)), n) <= 1e-14) continue;
      for (int i = 0; i <= k; ++i) {
        const double t = static_cast<double>(i) / k;
        if (auto idx = nodes.find(a + (c - a) * t)) fixed[*idx] = true;
      }
    }
  }
  node_dof_.assign(node_pos_.size(), -1);
  for (std::size_t i = 0; i < node_pos_.size(); ++i)
    if (!fixed[i]) node_dof_[i] = static_cast<std::ptrdiff_t>(dim_++);
}

double TestSpace::eval(const Eigen::VectorXd& y, std::size_t t, const Vec2& x) const {
  Eigen::VectorXd val, dx, dy;
  elem_.eval(tris_[t].to_reference(x), val, dx, dy);
  double s = 0.0;
  for (std::size_t i = 0; i < tris_[t].nodes.size(); ++i) {
    const auto d = node_dof_[tris_[t].nodes[i]];
    if (d >= 0) s += y(d) * val(static_cast<Eigen::Index>(i));
  }
  return s;
}

Vec2 TestSpace::grad(const Eigen::VectorXd& y, std::size_t t, const Vec2& x) const {
  Eigen::VectorXd val, dx, dy;
  elem_.eval(tris_[t].to_reference(x), val, dx, dy);
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < tris_[t].nodes.size(); ++i) {
    const auto d = node_dof_[tris_[t].nodes[i]];
    const auto ii = static_cast<Eigen::Index>(i);
    if (d >= 0) g += y(d) * (tris_[t].jinv_t * Eigen::Vector2d(dx(ii), dy(ii)));
  }
  return {g(0), g(1)};
}

// ---------------------------------------------------------------------------
// Fluctuation basis

FluctuationBasis fluctuation_basis(const Polygon& parent, std::vector<Polygon> children) {
  FluctuationBasis fb;
  fb.frame_basis = LocalP1::build(parent);
  fb.children = std::move(children);
  const auto m = static_cast<Eigen::Index>(fb.children.size());
  const Eigen::Index n = 3 * m;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index c = 0; c < m; ++c)
    for (const auto& q : polygon_points(fb.children[static_cast<std::size_t>(c)], 2)) {
      const Eigen::Vector3d f = fb.frame(q.x);
      M.block<3, 3>(3 * c, 3 * c) += q.w * f * f.transpose();
    }
  auto ip = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(M * b); };
  std::vector<Eigen::VectorXd> basis;
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (Eigen::Index c = 0; c < m; ++c) v(3 * c + k) = 1.0;
    basis.push_back(v);
  }
  std::vector<Eigen::VectorXd> fluct;
  for (Eigen::Index j = 0; j < n && static_cast<Eigen::Index>(fluct.size()) < n - 3; ++j) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    v(j) = 1.0;
    const double n0 = std::sqrt(ip(v, v));
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) v -= ip(b, v) * b;
    const double nv = std::sqrt(std::max(0.0, ip(v, v)));
    if (nv < 1e-6 * n0) continue;
    v /= nv;
    basis.push_back(v);
    fluct.push_back(v);
  }
  if (static_cast<Eigen::Index>(fluct.size()) != n - 3)
    throw DegenerateSplitError("fluctuation_basis: child Gram matrix is numerically singular");
  fb.coef.resize(n, n - 3);
  for (std::size_t j = 0; j < fluct.size(); ++j) fb.coef.col(static_cast<Eigen::Index>(j)) = fluct[j];
  return fb;
}

FluctuationBasis fluctuation_basis(const Cell& cell, const SplitRule& rule) {
  auto [a, b] = split_polygons(cell.vertices, rule);
  return fluctuation_basis(cell.vertices, {std::move(a), std::move(b)});
}

double FluctuationBasis::value(std::size_t j, const Vec2& x) const {
  for (std::size_t c = 0; c < children.size(); ++c)
    if (contains_point(children[c], x, 1e-13))
      return coef.col(static_cast<Eigen::Index>(j)).segment<3>(static_cast<Eigen::Index>(3 * c)).dot(frame(x));
  return 0.0;
}

// ---------------------------------------------------------------------------
// Cartoon approximation

PiecewiseSmooth CartoonFunction::as_piecewise(SliceOptions opt) const {
  PiecewiseSmooth p;
  auto fp = f_pos, fn = f_neg;
  p.value = [fp, fn](const Vec2& x, bool side) { return side ? fp(x) : fn(x); };
  p.curve = curve;
  p.slicing = opt;
  return p;
}

CartoonFunction::Bounds CartoonFunction::sample_bounds(int n) const {
  Bounds b;
  const double h = 1e-4;
  for (const auto* f : {&f_pos, &f_neg}) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const Vec2 x{(i + 0.5) / n, (j + 0.5) / n};
        auto F = [&](double dx, double dy) { return (*f)({x.x + dx, x.y + dy}); };
        const double f0 = F(0, 0);
        const double fx = (F(h, 0) - F(-h, 0)) / (2 * h), fy = (F(0, h) - F(0, -h)) / (2 * h);
        const double fxx = (F(h, 0) - 2 * f0 + F(-h, 0)) / (h * h);
        const double fyy = (F(0, h) - 2 * f0 + F(0, -h)) / (h * h);
        const double fxy = (F(h, h) - F(h, -h) - F(-h, h) + F(-h, -h)) / (4 * h * h);
        b.M = std::max({b.M, std::abs(f0), std::abs(fx), std::abs(fy), std::abs(fxx), std::abs(fyy), std::abs(fxy)});
      }
  }
  for (int i = 0; i <= 4 * n; ++i) {
    const double y = static_cast<double>(i) / (4 * n);
    const double g1 = (curve.gamma(y + h) - curve.gamma(y - h)) / (2 * h);
    const double g2 = (curve.gamma(y + h) - 2 * curve.gamma(y) + curve.gamma(y - h)) / (h * h);
    b.zeta = std::max(b.zeta, std::abs(g2) / std::pow(1 + g1 * g1, 1.5));
  }
  return b;
}

namespace {

double projection_error_sq(const Polygon& poly, const PiecewiseSmooth& f) {
  const auto pts = points_for(poly, f, 6);
  const LocalP1 l = LocalP1::build(poly);
  Eigen::Vector3d m = Eigen::Vector3d::Zero();
  std::vector<double> vals(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    vals[i] = f.value(pts[i].x, pts[i].positive_side);
    m += pts[i].w * vals[i] * l.values(pts[i].x);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = vals[i] - m.dot(l.values(pts[i].x));
    s += pts[i].w * d * d;
  }
  return s;
}

struct TreeNode {
  Polygon poly;
  int level = 0;
  double err_sq = 0.0;
  int best_rule = -1;
  std::array<double, 2> child_err{};
  std::optional<SplitRule> applied;
  std::array<std::size_t, 2> kids{};
};

}  // namespace

CartoonResult cartoon_approx(const CartoonFunction& f, std::size_t N, int initial_grid) {
  const PiecewiseSmooth pf = f.as_piecewise({8, 8, false});
  const Partition init = Partition::uniform(initial_grid);
  std::vector<TreeNode> nodes;
  auto evaluate_rules = [&](TreeNode& node) {
    if (node.err_sq <= 1e-30) return;
    Cell c;
    c.vertices = node.poly;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : enumerate_splits(c)) {
      const auto [a, b] = split_polygons(node.poly, r);
      const double ea = projection_error_sq(a, pf), eb = projection_error_sq(b, pf);
      if (ea + eb < best - 1e-15 * node.err_sq) {
        best = ea + eb;
        node.best_rule = r.id;
        node.child_err = {ea, eb};
      }
    }
  };
  using Entry = std::pair<double, std::size_t>;
  auto cmp = [](const Entry& a, const Entry& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);
  double total = 0.0;
  for (const auto& c : init.cells()) {
    TreeNode n;
    n.poly = c.vertices;
    n.err_sq = projection_error_sq(n.poly, pf);
    evaluate_rules(n);
    total += n.err_sq;
    heap.push({n.err_sq, nodes.size()});
    nodes.push_back(std::move(n));
  }
  CartoonResult res;
  std::size_t leaves = nodes.size();
  res.history.push_back({leaves, std::sqrt(std::max(0.0, total))});
  while (leaves < N && !heap.empty()) {
    const auto [e, idx] = heap.top();
    heap.pop();
    if (nodes[idx].best_rule < 0) break;  // remaining cells are resolved exactly
    Cell c;
    c.vertices = nodes[idx].poly;
    const auto rules = enumerate_splits(c);
    const SplitRule rule = rules[static_cast<std::size_t>(nodes[idx].best_rule)];
    const auto [a, b] = split_polygons(nodes[idx].poly, rule);
    nodes[idx].applied = rule;
    const std::array<Polygon, 2> kids{a, b};
    const std::array<double, 2> kid_err = nodes[idx].child_err;
    const int level = nodes[idx].level + 1;
    total -= e;
    for (int k = 0; k < 2; ++k) {
      TreeNode n;
      n.poly = kids[static_cast<std::size_t>(k)];
      n.level = level;
      n.err_sq = kid_err[static_cast<std::size_t>(k)];
      evaluate_rules(n);
      total += n.err_sq;
      nodes[idx].kids[static_cast<std::size_t>(k)] = nodes.size();
      heap.push({n.err_sq, nodes.size()});
      nodes.push_back(std::move(n));
    }
    ++leaves;
    res.history.push_back({leaves, std::sqrt(std::max(0.0, total))});
  }

  // Rebuild the partition level by level so the genealogy is recorded.
  Partition p = init;
  std::map<CellId, std::size_t> node_of;
  for (std::size_t i = 0; i < init.size(); ++i) node_of[init.cells()[i].id] = i;
  for (;;) {
    std::map<CellId, std::optional<SplitRule>> decisions;
    for (const auto& [id, ni] : node_of)
      if (nodes[ni].applied) decisions[id] = nodes[ni].applied;
    if (decisions.empty()) break;
    Partition q = refine_partition(p, decisions, MergePolicy::NoMerge);
    std::map<CellId, std::size_t> next;
    for (const auto& c : q.cells()) {
      if (p.has_cell(c.id)) {
        next[c.id] = node_of.at(c.id);
        continue;
      }
      const auto& parent = nodes[node_of.at(*c.parent)];
      // Children are numbered in split order: first child gets the smaller id.
      const bool first = !q.has_cell(c.id - 1) || q.cell(c.id - 1).parent != c.parent;
      next[c.id] = parent.kids[first ? 0 : 1];
    }
    p = std::move(q);
    node_of = std::move(next);
  }
  double err = 0.0;
  for (const auto& [id, ni] : node_of) err += nodes[ni].err_sq;
  res.partition = std::move(p);
  res.error = std::sqrt(err);
  return res;
}

}  // namespace transport
