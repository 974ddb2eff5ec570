#include "transport/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace transport {

namespace {

TriangleRule make_rule(int degree) {
  TriangleRule r;
  r.degree = degree;
  auto add3 = [&](double a, double b, double w) {
    r.bary.push_back({a, b, b});
    r.bary.push_back({b, a, b});
    r.bary.push_back({b, b, a});
    for (int i = 0; i < 3; ++i) r.weights.push_back(w);
  };
  auto add6 = [&](double a, double b, double c, double w) {
    const std::array<std::array<double, 3>, 6> perms{{{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}}};
    for (const auto& p : perms) {
      r.bary.push_back(p);
      r.weights.push_back(w);
    }
  };
  if (degree <= 1) {
    r.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
    r.weights.push_back(1.0);
    r.degree = 1;
  } else if (degree == 2) {
    add3(2.0 / 3, 1.0 / 6, 1.0 / 3);
  } else if (degree <= 5) {
    // Radon's 7-point rule.
    r.bary.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
    r.weights.push_back(0.225);
    const double s = std::sqrt(15.0);
    add3((9.0 - 2.0 * s) / 21.0, (6.0 + s) / 21.0, (155.0 + s) / 1200.0);
    add3((9.0 + 2.0 * s) / 21.0, (6.0 - s) / 21.0, (155.0 - s) / 1200.0);
    r.degree = 5;
  } else if (degree == 6) {
    // Dunavant's 12-point rule.
    add3(0.873821971016996, 0.063089014491502, 0.050844906370207);
    add3(0.501426509658179, 0.249286745170910, 0.116786275726379);
    add6(0.636502499121399, 0.310352451033785, 0.053145049844816, 0.082851075618374);
  } else {
    throw std::invalid_argument("triangle_rule: degree > 6 not supported");
  }
  return r;
}

LineRule make_gauss(int n) {
  LineRule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const auto idx = static_cast<std::size_t>(i);
    r.nodes[idx] = 0.5 * (1.0 - x);
    r.weights[idx] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

}  // namespace

const TriangleRule& triangle_rule(int degree) {
  static const std::array<TriangleRule, 7> rules = [] {
    std::array<TriangleRule, 7> rs;
    for (int d = 0; d <= 6; ++d) rs[static_cast<std::size_t>(d)] = make_rule(d);
    return rs;
  }();
  if (degree < 0 || degree > 6) throw std::invalid_argument("triangle_rule: degree out of range");
  return rules[static_cast<std::size_t>(degree)];
}

const LineRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, LineRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gauss(n)).first;
  return it->second;
}

std::vector<QuadPoint> polygon_points(std::span<const Vec2> poly, int degree) {
  const auto& rule = triangle_rule(degree);
  std::vector<QuadPoint> pts;
  pts.reserve((poly.size() - 2) * rule.weights.size());
  for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
    const Vec2& a = poly[0];
    const Vec2& b = poly[k];
    const Vec2& c = poly[k + 1];
    const double ar = 0.5 * std::abs(cross(b - a, c - a));
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& l = rule.bary[q];
      pts.push_back({a * l[0] + b * l[1] + c * l[2], ar * rule.weights[q], true});
    }
  }
  return pts;
}

namespace {

// Roots of h(t) on [0, 1] by sampling and bisection.
void edge_roots(const std::function<double(double)>& h, std::vector<double>& out) {
  constexpr int kSamples = 24;
  double t0 = 0.0, h0 = h(0.0);
  for (int i = 1; i <= kSamples; ++i) {
    const double t1 = static_cast<double>(i) / kSamples;
    const double h1 = h(t1);
    if (h0 == 0.0) out.push_back(t0);
    if ((h0 < 0.0 && h1 > 0.0) || (h0 > 0.0 && h1 < 0.0)) {
      double a = t0, b = t1, ha = h0;
      for (int it = 0; it < 80 && b - a > 1e-16; ++it) {
        const double m = 0.5 * (a + b);
        const double hm = h(m);
        if ((hm < 0.0) == (ha < 0.0)) {
          a = m;
          ha = hm;
        } else {
          b = m;
        }
      }
      out.push_back(0.5 * (a + b));
    }
    t0 = t1;
    h0 = h1;
  }
  if (h0 == 0.0) out.push_back(1.0);
}

struct CutInfo {
  std::vector<double> breaks;  // y values of crossings
  bool cut = false;
};

CutInfo find_cuts(std::span<const Vec2> poly, const GraphCurve& curve) {
  CutInfo info;
  const std::size_t n = poly.size();
  double ext = 0.0;
  for (std::size_t i = 0; i < n; ++i) ext = std::max(ext, norm(poly[(i + 1) % n] - poly[i]));
  int pos = 0, neg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % n];
    std::vector<double> ts;
    edge_roots([&](double t) {
      const Vec2 x = p + (q - p) * t;
      return x.x - curve.gamma(x.y);
    }, ts);
    for (double t : ts) info.breaks.push_back(p.y + (q.y - p.y) * t);
    const double hv = p.x - curve.gamma(p.y);
    if (hv > 1e-13 * std::max(1.0, ext)) ++pos;
    if (hv < -1e-13 * std::max(1.0, ext)) ++neg;
    if (!ts.empty()) {
      // Interior crossing points establish a cut only if both sides occur.
      for (double t : ts)
        if (t > 1e-12 && t < 1 - 1e-12) {
          const Vec2 a = p + (q - p) * std::max(0.0, t - 1e-6);
          const Vec2 b = p + (q - p) * std::min(1.0, t + 1e-6);
          const double ha = a.x - curve.gamma(a.y), hb = b.x - curve.gamma(b.y);
          if ((ha > 0) != (hb > 0)) info.cut = true;
        }
    }
  }
  if (pos > 0 && neg > 0) info.cut = true;
  return info;
}

}  // namespace

bool curve_cuts(std::span<const Vec2> poly, const GraphCurve& curve) { return find_cuts(poly, curve).cut; }

std::vector<QuadPoint> split_points(std::span<const Vec2> poly, const GraphCurve& curve, int degree,
                                    const SliceOptions& opt) {
  const CutInfo info = find_cuts(poly, curve);
  if (!info.cut) {
    auto pts = polygon_points(poly, degree);
    const Vec2 c = centroid(poly);
    const bool side = c.x > curve.gamma(c.y);
    for (auto& p : pts) p.positive_side = side;
    return pts;
  }
  std::vector<double> ys;
  for (const auto& v : poly) ys.push_back(v.y);
  ys.insert(ys.end(), info.breaks.begin(), info.breaks.end());
  std::sort(ys.begin(), ys.end());
  const double ymin = ys.front(), ymax = ys.back();
  std::vector<double> brk;
  for (double y : ys)
    if (brk.empty() || y - brk.back() > 1e-14 * std::max(1.0, ymax - ymin)) brk.push_back(y);

  const std::size_t n = poly.size();
  auto x_range = [&](double y, double& a, double& b) {
    a = 1e300;
    b = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = poly[i];
      const Vec2 q = poly[(i + 1) % n];
      const double lo = std::min(p.y, q.y), hi = std::max(p.y, q.y);
      if (y < lo - 1e-15 || y > hi + 1e-15) continue;
      if (hi - lo < 1e-300) {
        a = std::min({a, p.x, q.x});
        b = std::max({b, p.x, q.x});
      } else {
        const double t = std::clamp((y - p.y) / (q.y - p.y), 0.0, 1.0);
        const double x = p.x + t * (q.x - p.x);
        a = std::min(a, x);
        b = std::max(b, x);
      }
    }
  };

  const auto& go = gauss_legendre(opt.outer);
  const auto& gi = gauss_legendre(opt.inner);
  std::vector<QuadPoint> pts;
  for (std::size_t k = 0; k + 1 < brk.size(); ++k) {
    const double y0 = brk[k], y1 = brk[k + 1];
    const double hy = y1 - y0;
    if (hy <= 0.0) continue;
    for (std::size_t qo = 0; qo < go.nodes.size(); ++qo) {
      const double y = y0 + hy * go.nodes[qo];
      const double wy = hy * go.weights[qo];
      double a, b;
      x_range(y, a, b);
      if (!(b > a)) continue;
      const double g = curve.gamma(y);
      const double split = std::clamp(g, a, b);
      // Negative side [a, split].
      if (split > a) {
        const double len = split - a;
        for (std::size_t qi = 0; qi < gi.nodes.size(); ++qi) {
          if (opt.sqrt_endpoint && split == g) {
            const double s = gi.nodes[qi];
            const double x = split - len * s * s;
            pts.push_back({{x, y}, wy * 2.0 * len * s * gi.weights[qi], false});
          } else {
            pts.push_back({{a + len * gi.nodes[qi], y}, wy * len * gi.weights[qi], false});
          }
        }
      }
      if (b > split) {
        const double len = b - split;
        for (std::size_t qi = 0; qi < gi.nodes.size(); ++qi)
          pts.push_back({{split + len * gi.nodes[qi], y}, wy * len * gi.weights[qi], true});
      }
    }
  }
  return pts;
}

std::vector<QuadPoint> points_for(std::span<const Vec2> poly, const PiecewiseSmooth& f, int degree) {
  if (f.curve) return split_points(poly, *f.curve, degree, f.slicing);
  return polygon_points(poly, degree);
}

}  // namespace transport
