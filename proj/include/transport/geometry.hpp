#pragma once

// Anisotropic partitions of the unit square built from triangle and
// quadrilateral bisections, parallelogram merging and isotropic refinement.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace transport {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2& o) const = default;
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline Vec2 midpoint(const Vec2& a, const Vec2& b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }
double norm(const Vec2& a);

/// Absolute coordinate tolerance used for all coincidence tests.
inline constexpr double kGeomTol = 1e-10;

using Polygon = std::vector<Vec2>;

// Polygon helpers. Polygons are convex and counterclockwise unless noted.
double signed_area(std::span<const Vec2> poly);
double area(std::span<const Vec2> poly);
Vec2 centroid(std::span<const Vec2> poly);
bool is_strictly_convex(std::span<const Vec2> poly);
bool contains_point(std::span<const Vec2> poly, const Vec2& p, double tol = kGeomTol);
/// Sutherland-Hodgman clip of a convex polygon by a convex clipper.
Polygon clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clipper);
/// Drops repeated and collinear vertices.
Polygon clean_polygon(std::span<const Vec2> poly, double tol = kGeomTol);

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SplitKind { VertexToMidpoint, VertexToVertex, MidpointToMidpoint };

/// One admissible bisection of a cell. Edge e joins vertex e and vertex e+1.
/// VertexToMidpoint: from = vertex, to = edge.
/// VertexToVertex:   from, to = vertices.
/// MidpointToMidpoint: from, to = edges.
struct SplitRule {
  int id = 0;
  int num_vertices = 0;  // shape the rule was enumerated for
  SplitKind kind = SplitKind::VertexToMidpoint;
  int from = 0;
  int to = 0;

  bool operator==(const SplitRule&) const = default;
};

using CellId = std::int64_t;

/// Rule tags recorded in the genealogy besides ordinary split ids.
inline constexpr int kMergeRule = -1;
inline constexpr int kIsoRule = -2;

struct Cell {
  CellId id = 0;
  Polygon vertices;
  std::optional<CellId> parent;
  std::optional<int> rule;
  std::optional<CellId> merged_with;
  int level = 0;

  bool is_triangle() const { return vertices.size() == 3; }
  bool is_quadrilateral() const { return vertices.size() == 4; }
};

/// Every geometrically valid bisection of the cell, ordered by rule id.
/// Triangles: 3 vertex-to-midpoint + 3 midpoint-to-midpoint rules.
/// Quadrilaterals: 8 vertex-to-midpoint, 2 diagonal, 2 opposite-midpoint rules.
std::vector<SplitRule> enumerate_splits(const Cell& cell);

/// Child polygons of a split, without ids.
std::pair<Polygon, Polygon> split_polygons(const Polygon& poly, const SplitRule& rule);

/// Children receive ids first_child_id and first_child_id + 1.
std::pair<Cell, Cell> split(const Cell& cell, const SplitRule& rule, CellId first_child_id);

/// The parallelogram used for isotropic refinement: the cell itself when it is a
/// parallelogram, otherwise the smallest containing parallelogram through three
/// of its vertices (ties broken by lowest dropped/opposite vertex index).
Polygon containing_parallelogram(const Polygon& poly);

/// Nonempty intersections of the cell with the four dyadic children of its
/// containing parallelogram.
std::vector<Polygon> iso_refine(const Cell& cell);
std::vector<Polygon> iso_refine(const Polygon& poly);

bool is_parallelogram(std::span<const Vec2> poly, double tol = kGeomTol);

enum class MergePolicy { Merge, NoMerge };

/// One recorded refinement sweep, sufficient to replay a partition.
struct RefinementStep {
  std::map<CellId, int> splits;  // cell id -> rule id
  std::vector<CellId> isotropic;
  MergePolicy merge = MergePolicy::Merge;
};

class Partition {
 public:
  Partition() = default;
  Partition(std::vector<Cell> cells, int generation, CellId next_id);

  /// Uniform m x m grid of squares.
  static Partition uniform(int m);

  const std::vector<Cell>& cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }
  int generation() const { return generation_; }
  CellId next_id() const { return next_id_; }
  const Cell& cell(CellId id) const;
  bool has_cell(CellId id) const { return index_.count(id) != 0; }
  std::size_t index_of(CellId id) const;

  std::size_t num_triangles() const;
  std::size_t num_quadrilaterals() const;
  double total_area() const;

  const std::vector<Cell>& initial_cells() const { return initial_; }
  const std::vector<RefinementStep>& history() const { return history_; }

  /// Index of the cell containing p (first match), or nullopt.
  std::optional<std::size_t> locate(const Vec2& p) const;

  // Mutation is restricted to the refinement functions below.
  friend Partition refine_partition(const Partition&, const std::map<CellId, std::optional<SplitRule>>&,
                                    MergePolicy);
  friend Partition refine_isotropic(const Partition&, const std::set<CellId>&, MergePolicy);
  friend Partition merge_pairs(const Partition&);
  friend Partition replay(const Partition&);
  friend Partition partition_from_json(const nlohmann::json&);

 private:
  void rebuild_index();

  std::vector<Cell> cells_;
  std::map<CellId, std::size_t> index_;
  std::vector<Cell> initial_;
  std::vector<RefinementStep> history_;
  int generation_ = 0;
  CellId next_id_ = 0;
};

/// Applies the decided splits, copies undecided cells, merges parallelogram
/// pairs (unless disabled) and increments the generation.
Partition refine_partition(const Partition& p, const std::map<CellId, std::optional<SplitRule>>& decisions,
                           MergePolicy merge = MergePolicy::Merge);

/// Replaces the listed cells by their isotropic pieces.
Partition refine_isotropic(const Partition& p, const std::set<CellId>& cells,
                           MergePolicy merge = MergePolicy::NoMerge);

/// Replaces adjacent triangle pairs whose union is a parallelogram by that
/// parallelogram. Idempotent.
Partition merge_pairs(const Partition& p);

/// Rebuilds a partition from its initial cells and recorded history.
Partition replay(const Partition& p);

nlohmann::json partition_to_json(const Partition& p);
Partition partition_from_json(const nlohmann::json& j);

/// Tolerance-based point deduplication on a hash grid.
class PointIndex {
 public:
  explicit PointIndex(double tol = kGeomTol);
  /// Index of an existing point within tol of p, or inserts p.
  std::size_t insert(const Vec2& p);
  std::optional<std::size_t> find(const Vec2& p) const;
  const std::vector<Vec2>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  std::int64_t key(double v) const;

  double tol_;
  double cell_;
  std::vector<Vec2> points_;
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> buckets_;
};

}  // namespace transport
