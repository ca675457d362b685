#include "agile/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "agile/parallel.hpp"

namespace agile::geometry {

bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[j];
    const Vec2& b = poly[i];
    if ((b.y() > p.y()) != (a.y() > p.y())) {
      double x_cross = b.x() + (p.y() - b.y()) * (a.x() - b.x()) / (a.y() - b.y());
      if (p.x() < x_cross) inside = !inside;
    }
  }
  return inside;
}

namespace {

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    double v = cross2(q - p, r - p);
    if (v > 0) return 1;
    if (v < 0) return -1;
    return 0;
  };
  int o1 = orient(a, b, c), o2 = orient(a, b, d);
  int o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 != o2 && o3 != o4;
}

void simplify_collinear(std::vector<Vec2>& loop) {
  if (loop.size() < 3) return;
  std::vector<Vec2> out;
  std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& prev = loop[(i + n - 1) % n];
    const Vec2& cur = loop[i];
    const Vec2& next = loop[(i + 1) % n];
    if (std::abs(cross2(cur - prev, next - cur)) > 1e-12) out.push_back(cur);
  }
  loop.swap(out);
}

}  // namespace

double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    a += cross2(poly[j], poly[i]);
  }
  return 0.5 * a;
}

void PlanarShape::validate() const {
  if (width_ <= 0 || height_ <= 0) throw std::invalid_argument("shape grid has empty extent");
  if (cell_mm_ <= 0.0) throw std::invalid_argument("shape cell size must be positive");
  if (occupied_count_ == 0) throw EmptyShapeError("shape has no occupied cells");
  double grid_area = static_cast<double>(occupied_count_) * cell_mm_ * cell_mm_;
  double poly_area = material_area_mm2();
  double tol = 0.05 * std::max(grid_area, poly_area);
  if (std::abs(grid_area - poly_area) > tol)
    throw std::invalid_argument("shape outline area disagrees with occupancy area by more than 5%");
}

double PlanarShape::material_area_mm2() const {
  double a = std::abs(polygon_area(polygon_)) + satellite_area_;
  for (const auto& h : holes_) a -= std::abs(polygon_area(h));
  return a;
}

// Chains the exposed cell edges into closed loops. Edges are directed with
// material on the left, so material loops come out CCW and hole loops CW. At
// a diagonal pinch a vertex carries two outgoing edges; taking the most
// counterclockwise turn keeps the walk on the same material face and every
// loop simple. polygon_ is the largest CCW loop; smaller CCW loops (corner
// connected satellites) only contribute to area accounting.
void PlanarShape::trace_outline() {
  struct Edge {
    int to;
    int dir;  // 0:+x 1:+y 2:-x 3:-y
    bool used = false;
  };
  const int vw = width_ + 1;
  auto vid = [vw](int ix, int iy) { return iy * vw + ix; };
  std::map<int, std::vector<Edge>> out_edges;
  auto add_edge = [&](int x0, int y0, int x1, int y1, int dir) {
    out_edges[vid(x0, y0)].push_back(Edge{vid(x1, y1), dir});
  };
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!occupied(x, y)) continue;
      if (!occupied(x, y - 1)) add_edge(x, y, x + 1, y, 0);
      if (!occupied(x + 1, y)) add_edge(x + 1, y, x + 1, y + 1, 1);
      if (!occupied(x, y + 1)) add_edge(x + 1, y + 1, x, y + 1, 2);
      if (!occupied(x - 1, y)) add_edge(x, y + 1, x, y, 3);
    }
  }

  std::vector<std::vector<Vec2>> loops;
  for (auto& [start, edges] : out_edges) {
    for (auto& first : edges) {
      if (first.used) continue;
      std::vector<int> verts;
      int cur = start;
      int dir = first.dir;
      verts.push_back(cur);
      first.used = true;
      cur = first.to;
      while (cur != start) {
        verts.push_back(cur);
        auto it = out_edges.find(cur);
        if (it == out_edges.end()) throw std::logic_error("outline trace dead end");
        // Left turn first, then straight, then right; never reverse.
        Edge* chosen = nullptr;
        const int prefs[3] = {(dir + 1) % 4, dir, (dir + 3) % 4};
        for (int want : prefs) {
          for (auto& e : it->second) {
            if (!e.used && e.dir == want) {
              chosen = &e;
              break;
            }
          }
          if (chosen) break;
        }
        if (!chosen) throw std::logic_error("outline trace dead end");
        chosen->used = true;
        dir = chosen->dir;
        cur = chosen->to;
      }
      std::vector<Vec2> loop;
      loop.reserve(verts.size());
      for (int v : verts) {
        loop.emplace_back((v % vw) * cell_mm_, (v / vw) * cell_mm_);
      }
      simplify_collinear(loop);
      if (loop.size() >= 3) loops.push_back(std::move(loop));
    }
  }
  if (loops.empty()) throw EmptyShapeError("shape outline is empty");

  std::ptrdiff_t outer = -1;
  double best = 0.0;
  satellite_area_ = 0.0;
  holes_.clear();
  for (std::size_t i = 0; i < loops.size(); ++i) {
    double a = polygon_area(loops[i]);
    if (a > best) {
      best = a;
      outer = static_cast<std::ptrdiff_t>(i);
    }
  }
  if (outer < 0) throw EmptyShapeError("shape outline is empty");
  for (std::size_t i = 0; i < loops.size(); ++i) {
    if (static_cast<std::ptrdiff_t>(i) == outer) continue;
    double a = polygon_area(loops[i]);
    if (a < 0) {
      holes_.push_back(std::move(loops[i]));
    } else {
      satellite_area_ += a;
    }
  }
  polygon_ = std::move(loops[outer]);
}

PlanarShape PlanarShape::from_grid(std::vector<std::uint8_t> cells, int width, int height,
                                   double cell_mm) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("shape grid has empty extent");
  if (cells.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("shape grid size mismatch");
  PlanarShape s;
  s.cells_ = std::move(cells);
  s.width_ = width;
  s.height_ = height;
  s.cell_mm_ = cell_mm;
  s.source_ = Source::Grid;
  s.occupied_count_ = 0;
  for (auto c : s.cells_)
    if (c) ++s.occupied_count_;
  if (s.occupied_count_ == 0) throw EmptyShapeError("shape has no occupied cells");
  s.trace_outline();
  s.validate();
  return s;
}

PlanarShape PlanarShape::from_polygon(std::vector<Vec2> polygon, double cell_mm) {
  if (polygon.size() < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
  if (cell_mm <= 0.0) throw std::invalid_argument("shape cell size must be positive");
  if (polygon_area(polygon) < 0) std::reverse(polygon.begin(), polygon.end());
  std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (i == j || (i + 1) % n == j || (j + 1) % n == i) continue;
      if (segments_intersect(polygon[i], polygon[(i + 1) % n], polygon[j], polygon[(j + 1) % n]))
        throw std::invalid_argument("polygon is self intersecting");
    }
  }
  double max_x = 0.0, max_y = 0.0;
  for (const auto& p : polygon) {
    if (p.x() < -1e-9 || p.y() < -1e-9)
      throw std::invalid_argument("polygon must lie in the first quadrant");
    max_x = std::max(max_x, p.x());
    max_y = std::max(max_y, p.y());
  }
  PlanarShape s;
  s.width_ = std::max(1, static_cast<int>(std::ceil(max_x / cell_mm)));
  s.height_ = std::max(1, static_cast<int>(std::ceil(max_y / cell_mm)));
  s.cell_mm_ = cell_mm;
  s.source_ = Source::Polygon;
  s.cells_.assign(static_cast<std::size_t>(s.width_) * s.height_, 0);
  s.occupied_count_ = 0;
  for (int y = 0; y < s.height_; ++y) {
    for (int x = 0; x < s.width_; ++x) {
      if (point_in_polygon(polygon, s.cell_center(x, y))) {
        s.cells_[static_cast<std::size_t>(y) * s.width_ + x] = 1;
        ++s.occupied_count_;
      }
    }
  }
  s.polygon_ = std::move(polygon);
  s.validate();
  return s;
}

PlanarShape PlanarShape::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open shape file: " + path);
  int w = 0, h = 0;
  double cell = 0.0;
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("shape file truncated: " + path);
  {
    std::istringstream hs(header);
    if (!(hs >> w >> h >> cell))
      throw std::runtime_error("shape file header must be 'width height cell_mm': " + path);
  }
  if (w <= 0 || h <= 0 || cell <= 0)
    throw std::runtime_error("shape file header values out of range: " + path);
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(w) * h, 0);
  for (int row = 0; row < h; ++row) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("shape file truncated: " + path);
    if (static_cast<int>(line.size()) < w)
      throw std::runtime_error("shape file row too short: " + path);
    int iy = h - 1 - row;  // first file row is the top of the shape
    for (int ix = 0; ix < w; ++ix) {
      char c = line[ix];
      if (c != '0' && c != '1')
        throw std::runtime_error("shape file rows must be 0/1 characters: " + path);
      cells[static_cast<std::size_t>(iy) * w + ix] = (c == '1') ? 1 : 0;
    }
  }
  return from_grid(std::move(cells), w, h, cell);
}

void PlanarShape::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write shape file: " + path);
  out << width_ << ' ' << height_ << ' ' << format_full(cell_mm_) << '\n';
  for (int row = 0; row < height_; ++row) {
    int iy = height_ - 1 - row;
    for (int ix = 0; ix < width_; ++ix) out << (occupied(ix, iy) ? '1' : '0');
    out << '\n';
  }
}

void PlanarShape::export_polygon_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write polygon file: " + path);
  out << "x_mm,y_mm\n";
  for (const auto& p : polygon_)
    out << format_full(p.x()) << ',' << format_full(p.y()) << '\n';
}

Vec2 centroid(const PlanarShape& shape) {
  if (shape.source() == PlanarShape::Source::Polygon) {
    const auto& poly = shape.polygon();
    double a = 0.0, cx = 0.0, cy = 0.0;
    std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      double w = cross2(poly[j], poly[i]);
      a += w;
      cx += (poly[j].x() + poly[i].x()) * w;
      cy += (poly[j].y() + poly[i].y()) * w;
    }
    a *= 0.5;
    return Vec2(cx / (6.0 * a), cy / (6.0 * a));
  }
  double sx = 0.0, sy = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < shape.height(); ++y) {
    for (int x = 0; x < shape.width(); ++x) {
      if (!shape.occupied(x, y)) continue;
      Vec2 c = shape.cell_center(x, y);
      sx += c.x();
      sy += c.y();
      ++count;
    }
  }
  return Vec2(sx / count, sy / count);
}

std::vector<Vec2> boundary(const PlanarShape& shape) {
  const auto& poly = shape.polygon();
  std::vector<Vec2> samples;
  std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    double len = (b - a).norm();
    int steps = std::max(1, static_cast<int>(std::ceil(len / shape.cell_mm())));
    for (int k = 0; k < steps; ++k) {
      samples.push_back(a + (b - a) * (static_cast<double>(k) / steps));
    }
  }
  return samples;
}

namespace {

// Strict total order shared by both anchor searches: primary score, then
// polar angle about the centroid, then index. Exact double comparisons keep
// the order total and the parallel reduction deterministic.
struct AnchorOrder {
  const std::vector<Vec2>& pts;
  const Vec2& center;
  bool maximize;
  bool operator()(std::ptrdiff_t i, std::ptrdiff_t j) const {
    double di = (pts[i] - center).squaredNorm();
    double dj = (pts[j] - center).squaredNorm();
    if (di != dj) return maximize ? di > dj : di < dj;
    double ai = std::atan2(pts[i].y() - center.y(), pts[i].x() - center.x());
    double aj = std::atan2(pts[j].y() - center.y(), pts[j].x() - center.x());
    if (ai != aj) return ai < aj;
    return i < j;
  }
};

std::vector<Vec2> occupied_centers(const PlanarShape& shape) {
  std::vector<Vec2> pts;
  pts.reserve(shape.occupied_count());
  for (int y = 0; y < shape.height(); ++y)
    for (int x = 0; x < shape.width(); ++x)
      if (shape.occupied(x, y)) pts.push_back(shape.cell_center(x, y));
  return pts;
}

AffordanceObservation make_obs(AffordanceClass cls, const Vec2& anchor) {
  AffordanceObservation o;
  o.cls = cls;
  o.anchor = anchor;
  o.unit = LengthUnit::Millimeters;
  o.timestamp_s = 0.0;
  return o;
}

}  // namespace

AffordanceObservation stability_anchor(const PlanarShape& shape) {
  std::vector<Vec2> pts = occupied_centers(shape);
  if (pts.empty()) throw EmptyShapeError("shape has no occupied cells");
  Vec2 c = centroid(shape);
  auto idx = par::arg_best(static_cast<std::ptrdiff_t>(pts.size()),
                           AnchorOrder{pts, c, /*maximize=*/false});
  return make_obs(AffordanceClass::Front, pts[idx]);
}

AffordanceObservation pivot_anchor(const PlanarShape& shape) {
  std::vector<Vec2> pts = boundary(shape);
  if (pts.empty()) throw EmptyShapeError("shape boundary is empty");
  Vec2 c = centroid(shape);
  auto idx = par::arg_best(static_cast<std::ptrdiff_t>(pts.size()),
                           AnchorOrder{pts, c, /*maximize=*/true});
  return make_obs(AffordanceClass::Back, pts[idx]);
}

namespace serial {

AffordanceObservation stability_anchor(const PlanarShape& shape) {
  std::vector<Vec2> pts = occupied_centers(shape);
  if (pts.empty()) throw EmptyShapeError("shape has no occupied cells");
  Vec2 c = centroid(shape);
  auto idx = par::serial::arg_best(static_cast<std::ptrdiff_t>(pts.size()),
                                   AnchorOrder{pts, c, /*maximize=*/false});
  return make_obs(AffordanceClass::Front, pts[idx]);
}

AffordanceObservation pivot_anchor(const PlanarShape& shape) {
  std::vector<Vec2> pts = boundary(shape);
  if (pts.empty()) throw EmptyShapeError("shape boundary is empty");
  Vec2 c = centroid(shape);
  auto idx = par::serial::arg_best(static_cast<std::ptrdiff_t>(pts.size()),
                                   AnchorOrder{pts, c, /*maximize=*/true});
  return make_obs(AffordanceClass::Back, pts[idx]);
}

}  // namespace serial

Vec2 rim_tangent(const PlanarShape& shape, const Vec2& anchor) {
  std::vector<Vec2> b = boundary(shape);
  std::size_t n = b.size();
  if (n < 7) throw AnchorOffBoundaryError("boundary too short for tangent estimation");
  std::size_t best = 0;
  double best_d = (b[0] - anchor).squaredNorm();
  for (std::size_t i = 1; i < n; ++i) {
    double d = (b[i] - anchor).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (std::sqrt(best_d) > shape.cell_mm())
    throw AnchorOffBoundaryError("anchor is farther than one cell from the boundary");
  const int k = 3;
  Vec2 diff = b[(best + k) % n] - b[(best + n - k) % n];
  if (diff.norm() < 1e-9) diff = b[(best + 1) % n] - b[(best + n - 1) % n];
  Vec2 t = diff.normalized();
  Vec2 c = centroid(shape);
  if (cross2(t, c - b[best]) < 0) t = -t;
  return t;
}

}  // namespace agile::geometry
