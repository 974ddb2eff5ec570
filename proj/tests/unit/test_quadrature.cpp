#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "transport/quadrature.hpp"

using namespace transport;

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// Integral of x^a y^b over the reference triangle (0,0),(1,0),(0,1).
double monomial_exact(int a, int b) { return factorial(a) * factorial(b) / factorial(a + b + 2); }

}  // namespace

TEST_CASE("triangle rules integrate monomials exactly") {
  for (int d : {1, 2, 5, 6}) {
    const auto& r = triangle_rule(d);
    double wsum = 0;
    for (double w : r.weights) wsum += w;
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));
    for (int a = 0; a <= d; ++a)
      for (int b = 0; a + b <= d; ++b) {
        double s = 0;
        for (std::size_t q = 0; q < r.weights.size(); ++q) {
          const double x = r.bary[q][1], y = r.bary[q][2];
          s += r.weights[q] * std::pow(x, a) * std::pow(y, b);
        }
        CAPTURE(d);
        CAPTURE(a);
        CAPTURE(b);
        CHECK(0.5 * s == doctest::Approx(monomial_exact(a, b)).epsilon(1e-12));
      }
  }
}

TEST_CASE("gauss-legendre") {
  for (int n = 1; n <= 12; ++n) {
    const auto& g = gauss_legendre(n);
    for (int k = 0; k < 2 * n; ++k) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += g.weights[i] * std::pow(g.nodes[i], k);
      CHECK(s == doctest::Approx(1.0 / (k + 1)).epsilon(1e-13));
    }
  }
}

TEST_CASE("polygon points on a quadrilateral") {
  const Polygon q{{0, 0}, {2, 0}, {2, 1}, {0, 1}};
  double s = 0;
  for (const auto& p : polygon_points(q, 6)) s += p.w * p.x.x * p.x.x * p.x.y;
  // int_0^2 x^2 dx * int_0^1 y dy = 8/3 * 1/2
  CHECK(s == doctest::Approx(4.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("slicing quadrature across a parabola") {
  const GraphCurve curve{[](double y) { return 0.5 * y * y; }};
  const Polygon sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  CHECK(curve_cuts(sq, curve));
  CHECK_FALSE(curve_cuts(Polygon{{0.6, 0}, {1, 0}, {1, 0.5}, {0.6, 0.5}}, curve));
  // Area of {x > y^2/2} in the unit square is 1 - 1/6.
  double pos = 0, neg = 0;
  for (const auto& p : split_points(sq, curve, 6)) (p.positive_side ? pos : neg) += p.w;
  CHECK(pos == doctest::Approx(5.0 / 6.0).epsilon(1e-13));
  CHECK(neg == doctest::Approx(1.0 / 6.0).epsilon(1e-13));

  // A skew triangle cut by the curve. Oracle: exact inner integral in x1 of
  // (1 + x1 x2) on each side, adaptive Simpson in x2.
  const Polygon tp{{0.0, 0.1}, {0.45, 0.35}, {0.05, 0.9}};
  double s = 0;
  for (const auto& p : split_points(tp, curve, 6)) s += p.w * (p.positive_side ? 1.0 : 0.5) * (1 + p.x.x * p.x.y);
  auto slice = [&](double y) {
    double a = 1e300, b = -1e300;
    for (std::size_t i = 0; i < 3; ++i) {
      const Vec2 p = tp[i], q = tp[(i + 1) % 3];
      if ((y - p.y) * (y - q.y) > 0) continue;
      const double x = p.x + (q.x - p.x) * (y - p.y) / (q.y - p.y);
      a = std::min(a, x);
      b = std::max(b, x);
    }
    if (b <= a) return 0.0;
    auto prim = [&](double x) { return x + 0.5 * x * x * y; };
    const double g = std::clamp(0.5 * y * y, a, b);
    return 0.5 * (prim(g) - prim(a)) + (prim(b) - prim(g));
  };
  std::function<double(double, double, double, double, double, double, int)> simpson =
      [&](double a, double b, double fa, double fm, double fb, double whole, int depth) {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = slice(lm), frm = slice(rm);
        const double left = (m - a) / 6 * (fa + 4 * flm + fm);
        const double right = (b - m) / 6 * (fm + 4 * frm + fb);
        if (depth > 40 || std::abs(left + right - whole) < 1e-15) return left + right + (left + right - whole) / 15;
        return simpson(a, m, fa, flm, fm, left, depth + 1) + simpson(m, b, fm, frm, fb, right, depth + 1);
      };
  double oracle = 0;
  const double ys[] = {0.1, 0.35, 0.9};
  for (int k = 0; k < 2; ++k) {
    const double a = ys[k], b = ys[k + 1];
    const double fa = slice(a), fb = slice(b), fm = slice(0.5 * (a + b));
    oracle += simpson(a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), 0);
  }
  CHECK(s == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("square-root endpoint substitution") {
  // int over {x < y^2/2} of sqrt(y^2/2 - x) on the unit square, exactly
  // int_0^1 (2/3)(y^2/2)^{3/2} dy = (2/3) 2^{-3/2} / 4
  const GraphCurve curve{[](double y) { return 0.5 * y * y; }};
  const Polygon sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  SliceOptions opt;
  opt.sqrt_endpoint = true;
  double s = 0;
  for (const auto& p : split_points(sq, curve, 6, opt))
    if (!p.positive_side) s += p.w * std::sqrt(std::max(0.0, 0.5 * p.x.y * p.x.y - p.x.x));
  CHECK(s == doctest::Approx((2.0 / 3.0) * std::pow(2.0, -1.5) / 4.0).epsilon(1e-12));
}
