#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "transport/geometry.hpp"

namespace transport {

/// Symmetric rule on a triangle in barycentric coordinates; weights sum to 1.
struct TriangleRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weights;
  int degree = 0;
};

/// Rule exact for polynomials of total degree <= degree (supported up to 6).
const TriangleRule& triangle_rule(int degree);

/// Gauss-Legendre nodes and weights on [0, 1].
struct LineRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const LineRule& gauss_legendre(int n);

/// A quadrature point in physical coordinates.
struct QuadPoint {
  Vec2 x;
  double w = 0.0;
  bool positive_side = true;  // side of a discontinuity curve, when one is given
};

/// Points of a degree-exact rule on a convex polygon (fan triangulation).
std::vector<QuadPoint> polygon_points(std::span<const Vec2> poly, int degree);

/// A discontinuity given as the graph x1 = gamma(x2). The positive side is
/// {x1 > gamma(x2)}.
struct GraphCurve {
  std::function<double(double)> gamma;
};

struct SliceOptions {
  int outer = 10;
  int inner = 10;
  /// Treat the negative-side endpoint at the curve as a square-root singularity.
  bool sqrt_endpoint = false;
};

/// True if the curve crosses the interior of the polygon.
bool curve_cuts(std::span<const Vec2> poly, const GraphCurve& curve);

/// Quadrature points for a convex polygon cut by a graph curve. Uncut
/// polygons fall back to polygon_points of the given degree; cut polygons are
/// integrated by horizontal slicing with Gauss-Legendre in both directions,
/// split at every kink of the slice integrand.
std::vector<QuadPoint> split_points(std::span<const Vec2> poly, const GraphCurve& curve, int degree,
                                    const SliceOptions& opt = {});

/// A function that is smooth on each side of an optional graph curve.
struct PiecewiseSmooth {
  std::function<double(const Vec2&, bool positive_side)> value;
  std::optional<GraphCurve> curve;
  SliceOptions slicing{};

  double operator()(const Vec2& x) const {
    const bool side = !curve || x.x > curve->gamma(x.y);
    return value(x, side);
  }
};

/// Quadrature points on a convex polygon suited to f: slicing points when the
/// curve of f cuts the polygon, a degree-exact rule otherwise.
std::vector<QuadPoint> points_for(std::span<const Vec2> poly, const PiecewiseSmooth& f, int degree);

}  // namespace transport
