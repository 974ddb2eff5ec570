#include "transport/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace transport {

double norm(const Vec2& a) { return std::hypot(a.x, a.y); }

double signed_area(std::span<const Vec2> poly) {
  double s = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) s += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * s;
}

double area(std::span<const Vec2> poly) { return std::abs(signed_area(poly)); }

Vec2 centroid(std::span<const Vec2> poly) {
  double a = 0.0, cx = 0.0, cy = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    const double c = cross(p, q);
    a += c;
    cx += (p.x + q.x) * c;
    cy += (p.y + q.y) * c;
  }
  if (std::abs(a) < 1e-300) {
    Vec2 m{};
    for (const auto& p : poly) m = m + p;
    return m * (1.0 / static_cast<double>(n));
  }
  return {cx / (3.0 * a), cy / (3.0 * a)};
}

bool is_strictly_convex(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e0 = poly[(i + 1) % n] - poly[i];
    const Vec2 e1 = poly[(i + 2) % n] - poly[(i + 1) % n];
    const double l0 = norm(e0), l1 = norm(e1);
    if (l0 < kGeomTol || l1 < kGeomTol) return false;
    // Turn must be strictly left, relative to edge lengths.
    if (cross(e0, e1) <= 1e-12 * l0 * l1) return false;
  }
  return signed_area(poly) > 1e-14;
}

bool contains_point(std::span<const Vec2> poly, const Vec2& p, double tol) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = poly[(i + 1) % n] - poly[i];
    const double len = norm(e);
    if (len == 0.0) continue;
    if (cross(e, p - poly[i]) / len < -tol) return false;
  }
  return true;
}

Polygon clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clipper) {
  Polygon out(subject.begin(), subject.end());
  const std::size_t m = clipper.size();
  for (std::size_t c = 0; c < m && !out.empty(); ++c) {
    const Vec2 a = clipper[c];
    const Vec2 b = clipper[(c + 1) % m];
    const Vec2 e = b - a;
    const double len = norm(e);
    auto side = [&](const Vec2& p) { return cross(e, p - a) / len; };
    Polygon in = std::move(out);
    out.clear();
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& p = in[i];
      const Vec2& q = in[(i + 1) % n];
      const double sp = side(p), sq = side(q);
      const bool pin = sp >= -1e-14, qin = sq >= -1e-14;
      if (pin) out.push_back(p);
      if (pin != qin) {
        const double t = sp / (sp - sq);
        out.push_back(p + (q - p) * t);
      }
    }
  }
  return out;
}

Polygon clean_polygon(std::span<const Vec2> poly, double tol) {
  Polygon pts;
  for (const auto& p : poly) {
    if (!pts.empty() && norm(p - pts.back()) < tol) continue;
    pts.push_back(p);
  }
  while (pts.size() > 1 && norm(pts.front() - pts.back()) < tol) pts.pop_back();
  bool changed = true;
  while (changed && pts.size() > 3) {
    changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec2& a = pts[(i + pts.size() - 1) % pts.size()];
      const Vec2& b = pts[i];
      const Vec2& c = pts[(i + 1) % pts.size()];
      const Vec2 ac = c - a;
      const double len = norm(ac);
      if (len > 0.0 && std::abs(cross(ac, b - a)) / len < tol && dot(b - a, ac) > 0.0 && dot(c - b, ac) > 0.0) {
        pts.erase(pts.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        break;
      }
    }
  }
  return pts;
}

bool is_parallelogram(std::span<const Vec2> poly, double tol) {
  if (poly.size() != 4) return false;
  return norm(midpoint(poly[0], poly[2]) - midpoint(poly[1], poly[3])) < tol;
}

// ---------------------------------------------------------------------------
// Splits

std::vector<SplitRule> enumerate_splits(const Cell& cell) {
  const int n = static_cast<int>(cell.vertices.size());
  if ((n != 3 && n != 4) || !is_strictly_convex(cell.vertices))
    throw GeometryError("enumerate_splits: invalid cell " + std::to_string(cell.id));
  std::vector<SplitRule> candidates;
  for (int v = 0; v < n; ++v)
    for (int e = 0; e < n; ++e)
      if (e != v && (e + 1) % n != v)
        candidates.push_back({0, n, SplitKind::VertexToMidpoint, v, e});
  if (n == 4) {
    candidates.push_back({0, n, SplitKind::VertexToVertex, 0, 2});
    candidates.push_back({0, n, SplitKind::VertexToVertex, 1, 3});
    candidates.push_back({0, n, SplitKind::MidpointToMidpoint, 0, 2});
    candidates.push_back({0, n, SplitKind::MidpointToMidpoint, 1, 3});
  } else {
    candidates.push_back({0, n, SplitKind::MidpointToMidpoint, 0, 1});
    candidates.push_back({0, n, SplitKind::MidpointToMidpoint, 0, 2});
    candidates.push_back({0, n, SplitKind::MidpointToMidpoint, 1, 2});
  }
  std::vector<SplitRule> rules;
  for (auto r : candidates) {
    r.id = static_cast<int>(rules.size());
    const auto [a, b] = split_polygons(cell.vertices, r);
    if (a.size() >= 3 && a.size() <= 4 && b.size() >= 3 && b.size() <= 4 && is_strictly_convex(a) &&
        is_strictly_convex(b))
      rules.push_back(r);
  }
  return rules;
}

std::pair<Polygon, Polygon> split_polygons(const Polygon& poly, const SplitRule& rule) {
  const int n = static_cast<int>(poly.size());
  if (rule.num_vertices != n) throw GeometryError("split: rule enumerated for a different cell shape");
  // Boundary walk with the chord endpoints inserted.
  std::vector<Vec2> ring;
  int ia = -1, ib = -1;
  auto is_edge_point = [&](int e, bool from) {
    if (rule.kind == SplitKind::MidpointToMidpoint) return from ? rule.from == e : rule.to == e;
    if (rule.kind == SplitKind::VertexToMidpoint) return !from && rule.to == e;
    return false;
  };
  for (int v = 0; v < n; ++v) {
    const bool vfrom = rule.kind != SplitKind::MidpointToMidpoint && rule.from == v;
    const bool vto = rule.kind == SplitKind::VertexToVertex && rule.to == v;
    if (vfrom) ia = static_cast<int>(ring.size());
    if (vto) ib = static_cast<int>(ring.size());
    ring.push_back(poly[static_cast<std::size_t>(v)]);
    const bool efrom = is_edge_point(v, true), eto = is_edge_point(v, false);
    if (efrom || eto) {
      if (efrom) ia = static_cast<int>(ring.size());
      if (eto) ib = static_cast<int>(ring.size());
      ring.push_back(midpoint(poly[static_cast<std::size_t>(v)], poly[static_cast<std::size_t>((v + 1) % n)]));
    }
  }
  if (ia < 0 || ib < 0 || ia == ib) throw GeometryError("split: malformed rule");
  const int m = static_cast<int>(ring.size());
  auto walk = [&](int s, int t) {
    Polygon out;
    for (int i = s;; i = (i + 1) % m) {
      out.push_back(ring[static_cast<std::size_t>(i)]);
      if (i == t) break;
    }
    return clean_polygon(out);
  };
  return {walk(ia, ib), walk(ib, ia)};
}

std::pair<Cell, Cell> split(const Cell& cell, const SplitRule& rule, CellId first_child_id) {
  const auto valid = enumerate_splits(cell);
  if (std::find(valid.begin(), valid.end(), rule) == valid.end())
    throw GeometryError("split: rule " + std::to_string(rule.id) + " is not valid for cell " +
                        std::to_string(cell.id));
  auto [a, b] = split_polygons(cell.vertices, rule);
  Cell c1{first_child_id, std::move(a), cell.id, rule.id, std::nullopt, cell.level + 1};
  Cell c2{first_child_id + 1, std::move(b), cell.id, rule.id, std::nullopt, cell.level + 1};
  return {std::move(c1), std::move(c2)};
}

// ---------------------------------------------------------------------------
// Isotropic refinement

Polygon containing_parallelogram(const Polygon& poly) {
  if (is_parallelogram(poly)) return poly;
  const int n = static_cast<int>(poly.size());
  const auto at = [&](int i) { return poly[static_cast<std::size_t>(((i % n) + n) % n)]; };
  Polygon best;
  double best_area = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    Polygon cand;
    if (n == 3) {
      // New vertex opposite vertex i.
      const Vec2 a = at(i), b = at(i + 1), c = at(i + 2);
      cand = {a, b, b + c - a, c};
    } else {
      // Drop vertex i and complete the remaining three.
      const Vec2 a = at(i + 1), b = at(i + 2), c = at(i + 3);
      cand = {a, b, c, a + c - b};
    }
    if (signed_area(cand) < 0) std::reverse(cand.begin(), cand.end());
    bool ok = true;
    for (const auto& p : poly) ok = ok && contains_point(cand, p, 1e-12);
    const double ar = area(cand);
    if (ok && ar < best_area - 1e-14) {
      best = cand;
      best_area = ar;
    }
  }
  if (best.empty()) {
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (const auto& p : poly) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    best = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  }
  return best;
}

std::vector<Polygon> iso_refine(const Polygon& poly) {
  const Polygon P = containing_parallelogram(poly);
  const Vec2 o = P[0];
  const Vec2 u = (P[1] - P[0]) * 0.5;
  const Vec2 v = (P[3] - P[0]) * 0.5;
  const double a = area(poly);
  std::vector<Polygon> pieces;
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const Vec2 base = o + u * i + v * j;
      const Polygon child{base, base + u, base + u + v, base + v};
      Polygon piece = clean_polygon(clip_convex(poly, child));
      if (piece.size() >= 3 && area(piece) > 1e-12 * a) pieces.push_back(std::move(piece));
    }
  }
  return pieces;
}

std::vector<Polygon> iso_refine(const Cell& cell) { return iso_refine(cell.vertices); }

// ---------------------------------------------------------------------------
// Partition

Partition::Partition(std::vector<Cell> cells, int generation, CellId next_id)
    : cells_(std::move(cells)), generation_(generation), next_id_(next_id) {
  initial_ = cells_;
  rebuild_index();
}

Partition Partition::uniform(int m) {
  if (m < 1) throw GeometryError("uniform partition needs m >= 1");
  std::vector<Cell> cells;
  const double h = 1.0 / m;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      Cell c;
      c.id = static_cast<CellId>(cells.size());
      const double x0 = i * h, y0 = j * h;
      const double x1 = (i + 1 == m) ? 1.0 : (i + 1) * h;
      const double y1 = (j + 1 == m) ? 1.0 : (j + 1) * h;
      c.vertices = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
      cells.push_back(std::move(c));
    }
  const auto n = static_cast<CellId>(cells.size());
  return Partition(std::move(cells), 0, n);
}

void Partition::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < cells_.size(); ++i) index_[cells_[i].id] = i;
}

const Cell& Partition::cell(CellId id) const { return cells_[index_of(id)]; }

std::size_t Partition::index_of(CellId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw GeometryError("unknown cell id " + std::to_string(id));
  return it->second;
}

std::size_t Partition::num_triangles() const {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const Cell& c) { return c.is_triangle(); }));
}

std::size_t Partition::num_quadrilaterals() const { return cells_.size() - num_triangles(); }

double Partition::total_area() const {
  double s = 0.0;
  for (const auto& c : cells_) s += area(c.vertices);
  return s;
}

std::optional<std::size_t> Partition::locate(const Vec2& p) const {
  for (std::size_t i = 0; i < cells_.size(); ++i)
    if (contains_point(cells_[i].vertices, p, 0.0)) return i;
  return std::nullopt;
}

namespace {

std::pair<std::int64_t, std::int64_t> quantize(const Vec2& p) {
  return {std::llround(p.x * 1e8), std::llround(p.y * 1e8)};
}

// Pairs triangles sharing a full edge whose union is a parallelogram.
std::vector<Cell> merge_cells(std::vector<Cell> cells, CellId& next_id) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> by_edge_mid;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].is_triangle()) continue;
    for (int e = 0; e < 3; ++e) {
      const Vec2 m = midpoint(cells[i].vertices[static_cast<std::size_t>(e)],
                              cells[i].vertices[static_cast<std::size_t>((e + 1) % 3)]);
      by_edge_mid[quantize(m)].push_back(i);
    }
  }
  std::vector<bool> used(cells.size(), false);
  std::vector<Cell> merged;
  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cells[a].id < cells[b].id; });

  for (std::size_t i : order) {
    if (used[i] || !cells[i].is_triangle()) continue;
    const auto& t1 = cells[i].vertices;
    for (int e = 0; e < 3 && !used[i]; ++e) {
      const Vec2 p = t1[static_cast<std::size_t>(e)];
      const Vec2 q = t1[static_cast<std::size_t>((e + 1) % 3)];
      const Vec2 r = t1[static_cast<std::size_t>((e + 2) % 3)];
      std::vector<std::size_t> cands;
      const auto key = quantize(midpoint(p, q));
      for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          auto it = by_edge_mid.find({key.first + dx, key.second + dy});
          if (it != by_edge_mid.end()) cands.insert(cands.end(), it->second.begin(), it->second.end());
        }
      std::sort(cands.begin(), cands.end(), [&](std::size_t a, std::size_t b) { return cells[a].id < cells[b].id; });
      cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
      for (std::size_t j : cands) {
        if (j == i || used[j]) continue;
        const auto& t2 = cells[j].vertices;
        for (int f = 0; f < 3; ++f) {
          const Vec2 a = t2[static_cast<std::size_t>(f)];
          const Vec2 b = t2[static_cast<std::size_t>((f + 1) % 3)];
          if (norm(a - q) < kGeomTol && norm(b - p) < kGeomTol) {
            const Vec2 d = t2[static_cast<std::size_t>((f + 2) % 3)];
            Polygon quad{p, d, q, r};
            if (is_parallelogram(quad) && is_strictly_convex(quad)) {
              Cell c;
              c.id = next_id++;
              c.vertices = std::move(quad);
              c.parent = cells[i].id;
              c.merged_with = cells[j].id;
              c.rule = kMergeRule;
              c.level = std::max(cells[i].level, cells[j].level);
              merged.push_back(std::move(c));
              used[i] = used[j] = true;
            }
            break;
          }
        }
        if (used[i]) break;
      }
    }
  }
  std::vector<Cell> out;
  out.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!used[i]) out.push_back(std::move(cells[i]));
  for (auto& c : merged) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const Cell& a, const Cell& b) { return a.id < b.id; });
  return out;
}

}  // namespace

Partition refine_partition(const Partition& p, const std::map<CellId, std::optional<SplitRule>>& decisions,
                           MergePolicy merge) {
  for (const auto& [id, rule] : decisions)
    if (!p.has_cell(id)) throw GeometryError("refine_partition: unknown cell id " + std::to_string(id));
  Partition out;
  out.initial_ = p.initial_;
  out.history_ = p.history_;
  out.generation_ = p.generation_ + 1;
  out.next_id_ = p.next_id_;
  RefinementStep step;
  step.merge = merge;
  std::vector<Cell> cells;
  cells.reserve(p.cells_.size() + decisions.size());
  for (const auto& c : p.cells_) {
    auto it = decisions.find(c.id);
    if (it == decisions.end() || !it->second) {
      cells.push_back(c);
      continue;
    }
    auto [a, b] = split(c, *it->second, out.next_id_);
    out.next_id_ += 2;
    step.splits[c.id] = it->second->id;
    cells.push_back(std::move(a));
    cells.push_back(std::move(b));
  }
  if (merge == MergePolicy::Merge) cells = merge_cells(std::move(cells), out.next_id_);
  out.cells_ = std::move(cells);
  out.history_.push_back(std::move(step));
  out.rebuild_index();
  return out;
}

Partition refine_isotropic(const Partition& p, const std::set<CellId>& ids, MergePolicy merge) {
  for (auto id : ids)
    if (!p.has_cell(id)) throw GeometryError("refine_isotropic: unknown cell id " + std::to_string(id));
  Partition out;
  out.initial_ = p.initial_;
  out.history_ = p.history_;
  out.generation_ = p.generation_ + 1;
  out.next_id_ = p.next_id_;
  RefinementStep step;
  step.merge = merge;
  std::vector<Cell> cells;
  for (const auto& c : p.cells_) {
    if (!ids.count(c.id)) {
      cells.push_back(c);
      continue;
    }
    step.isotropic.push_back(c.id);
    for (auto& piece : iso_refine(c)) {
      if (piece.size() > 4) throw GeometryError("refine_isotropic: piece with more than four vertices");
      cells.push_back(Cell{out.next_id_++, std::move(piece), c.id, kIsoRule, std::nullopt, c.level + 1});
    }
  }
  if (merge == MergePolicy::Merge) cells = merge_cells(std::move(cells), out.next_id_);
  out.cells_ = std::move(cells);
  out.history_.push_back(std::move(step));
  out.rebuild_index();
  return out;
}

Partition merge_pairs(const Partition& p) {
  Partition out = p;
  out.cells_ = merge_cells(p.cells_, out.next_id_);
  out.rebuild_index();
  return out;
}

Partition replay(const Partition& p) {
  Partition cur(p.initial_, 0, 0);
  CellId max_id = 0;
  for (const auto& c : p.initial_) max_id = std::max(max_id, c.id + 1);
  cur.next_id_ = max_id;
  for (const auto& step : p.history_) {
    if (!step.isotropic.empty()) {
      cur = refine_isotropic(cur, std::set<CellId>(step.isotropic.begin(), step.isotropic.end()), step.merge);
      continue;
    }
    std::map<CellId, std::optional<SplitRule>> decisions;
    for (const auto& [id, rule_id] : step.splits) {
      const auto rules = enumerate_splits(cur.cell(id));
      auto it = std::find_if(rules.begin(), rules.end(), [&](const SplitRule& r) { return r.id == rule_id; });
      if (it == rules.end()) throw GeometryError("replay: recorded rule no longer valid");
      decisions[id] = *it;
    }
    cur = refine_partition(cur, decisions, step.merge);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json cell_to_json(const Cell& c) {
  nlohmann::json j;
  j["id"] = c.id;
  auto& vs = j["vertices"] = nlohmann::json::array();
  for (const auto& v : c.vertices) vs.push_back({v.x, v.y});
  j["parent"] = c.parent ? nlohmann::json(*c.parent) : nlohmann::json(nullptr);
  j["rule"] = c.rule ? nlohmann::json(*c.rule) : nlohmann::json(nullptr);
  if (c.merged_with) j["merged_with"] = *c.merged_with;
  j["level"] = c.level;
  return j;
}

Cell cell_from_json(const nlohmann::json& j) {
  Cell c;
  c.id = j.at("id").get<CellId>();
  for (const auto& v : j.at("vertices")) c.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  if (!j.at("parent").is_null()) c.parent = j.at("parent").get<CellId>();
  if (!j.at("rule").is_null()) c.rule = j.at("rule").get<int>();
  if (j.contains("merged_with")) c.merged_with = j.at("merged_with").get<CellId>();
  c.level = j.value("level", 0);
  return c;
}

}  // namespace

nlohmann::json partition_to_json(const Partition& p) {
  nlohmann::json j;
  j["generation"] = p.generation();
  j["next_id"] = p.next_id();
  auto& cells = j["cells"] = nlohmann::json::array();
  for (const auto& c : p.cells()) cells.push_back(cell_to_json(c));
  auto& init = j["initial_cells"] = nlohmann::json::array();
  for (const auto& c : p.initial_cells()) init.push_back(cell_to_json(c));
  auto& hist = j["history"] = nlohmann::json::array();
  for (const auto& s : p.history()) {
    nlohmann::json h;
    auto& sp = h["splits"] = nlohmann::json::array();
    for (const auto& [id, r] : s.splits) sp.push_back({id, r});
    h["isotropic"] = s.isotropic;
    h["merge"] = s.merge == MergePolicy::Merge;
    hist.push_back(std::move(h));
  }
  return j;
}

Partition partition_from_json(const nlohmann::json& j) {
  Partition p;
  p.generation_ = j.at("generation").get<int>();
  for (const auto& c : j.at("cells")) p.cells_.push_back(cell_from_json(c));
  CellId max_id = 0;
  for (const auto& c : p.cells_) max_id = std::max(max_id, c.id + 1);
  p.next_id_ = j.value("next_id", max_id);
  if (j.contains("initial_cells"))
    for (const auto& c : j.at("initial_cells")) p.initial_.push_back(cell_from_json(c));
  else
    p.initial_ = p.cells_;
  if (j.contains("history"))
    for (const auto& h : j.at("history")) {
      RefinementStep s;
      for (const auto& e : h.at("splits")) s.splits[e.at(0).get<CellId>()] = e.at(1).get<int>();
      s.isotropic = h.at("isotropic").get<std::vector<CellId>>();
      s.merge = h.at("merge").get<bool>() ? MergePolicy::Merge : MergePolicy::NoMerge;
      p.history_.push_back(std::move(s));
    }
  p.rebuild_index();
  return p;
}

// ---------------------------------------------------------------------------
// PointIndex

PointIndex::PointIndex(double tol) : tol_(tol), cell_(std::max(tol * 16.0, 1e-9)) {}

std::int64_t PointIndex::key(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }

std::optional<std::size_t> PointIndex::find(const Vec2& p) const {
  const auto kx = key(p.x), ky = key(p.y);
  for (std::int64_t dx = -1; dx <= 1; ++dx)
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      auto it = buckets_.find({kx + dx, ky + dy});
      if (it == buckets_.end()) continue;
      for (auto idx : it->second)
        if (std::abs(points_[idx].x - p.x) <= tol_ && std::abs(points_[idx].y - p.y) <= tol_) return idx;
    }
  return std::nullopt;
}

std::size_t PointIndex::insert(const Vec2& p) {
  if (auto f = find(p)) return *f;
  points_.push_back(p);
  buckets_[{key(p.x), key(p.y)}].push_back(points_.size() - 1);
  return points_.size() - 1;
}

}  // namespace transport
