#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "agile/common.hpp"

namespace agile::geometry {

struct EmptyShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AnchorOffBoundaryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AffordanceClass { Front, Back };

enum class LengthUnit { Millimeters, Pixels };

// Detected grasp cue: which face of the object is up, and where to act.
struct AffordanceObservation {
  AffordanceClass cls = AffordanceClass::Front;
  Vec2 anchor = Vec2::Zero();
  LengthUnit unit = LengthUnit::Millimeters;
  double timestamp_s = 0.0;
};

// Planar rigid transform, used to place a shape in the world.
struct Se2 {
  double x_mm = 0.0;
  double y_mm = 0.0;
  double theta_rad = 0.0;

  Vec2 apply(const Vec2& p) const {
    double c = std::cos(theta_rad), s = std::sin(theta_rad);
    return Vec2(c * p.x() - s * p.y() + x_mm, s * p.x() + c * p.y() + y_mm);
  }
  Vec2 rotate(const Vec2& v) const {
    double c = std::cos(theta_rad), s = std::sin(theta_rad);
    return Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y());
  }
};

// Binary occupancy silhouette with its traced outline. Both representations
// are kept; `source` records which one the instance was built from, and a few
// operations (centroid) pick their route accordingly.
class PlanarShape {
 public:
  enum class Source { Grid, Polygon };

  // Empty until assigned from a factory; only the factories validate.
  PlanarShape() = default;

  // cells: row-major, index iy * width + ix, iy = 0 is the bottom row (y up).
  static PlanarShape from_grid(std::vector<std::uint8_t> cells, int width, int height,
                               double cell_mm);
  // polygon: simple, in mm; vertex order may be either winding, stored CCW.
  static PlanarShape from_polygon(std::vector<Vec2> polygon, double cell_mm);

  // Text format: "width height cell_mm" then height rows of 0/1 characters,
  // first row in the file is the top of the shape.
  static PlanarShape load(const std::string& path);
  void save(const std::string& path) const;
  void export_polygon_csv(const std::string& path) const;

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_mm() const { return cell_mm_; }
  Source source() const { return source_; }
  bool occupied(int ix, int iy) const {
    if (ix < 0 || iy < 0 || ix >= width_ || iy >= height_) return false;
    return cells_[static_cast<std::size_t>(iy) * width_ + ix] != 0;
  }
  std::size_t occupied_count() const { return occupied_count_; }
  Vec2 cell_center(int ix, int iy) const {
    return Vec2((ix + 0.5) * cell_mm_, (iy + 0.5) * cell_mm_);
  }

  // Outer boundary loop, CCW, mm. Inner (hole) loops are tracked separately
  // so area accounting stays exact for hollow shapes.
  const std::vector<Vec2>& polygon() const { return polygon_; }
  const std::vector<std::vector<Vec2>>& holes() const { return holes_; }
  double material_area_mm2() const;  // outer area minus holes

  Se2 frame;  // pose of the shape frame in the world, set by callers

 private:
  void trace_outline();
  void validate() const;

  std::vector<std::uint8_t> cells_;
  int width_ = 0;
  int height_ = 0;
  double cell_mm_ = 1.0;
  Source source_ = Source::Grid;
  std::size_t occupied_count_ = 0;
  std::vector<Vec2> polygon_;
  std::vector<std::vector<Vec2>> holes_;
  double satellite_area_ = 0.0;  // CCW loops other than the outer one
};

double polygon_area(const std::vector<Vec2>& poly);  // signed, CCW positive

// Even-odd crossing test; points exactly on an edge follow the crossing
// parity, which is stable for the cell-center sampling used here.
bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p);

// Area centroid. Polygon-sourced shapes use the exact shoelace first moment;
// grid-sourced shapes use the mean of occupied cell centers, which stays put
// for hollow silhouettes where the outline moment would not apply.
Vec2 centroid(const PlanarShape& shape);

// Outer boundary densified to at most one cell spacing, CCW, cyclic.
std::vector<Vec2> boundary(const PlanarShape& shape);

// Nearest occupied material point to the centroid: where to grasp for a
// stable top-down pick.
AffordanceObservation stability_anchor(const PlanarShape& shape);

// Boundary point farthest from the centroid: the rim point with the longest
// lever for edge pivoting. Ties resolve by smaller polar angle about the
// centroid, then by sample index, so the result is a strict total order.
AffordanceObservation pivot_anchor(const PlanarShape& shape);

// Unit tangent of the boundary at a point on it (within one cell), oriented
// so the centroid lies to its left (CCW traversal). Central difference over
// +/-3 boundary samples.
Vec2 rim_tangent(const PlanarShape& shape, const Vec2& anchor);

namespace serial {
AffordanceObservation stability_anchor(const PlanarShape& shape);
AffordanceObservation pivot_anchor(const PlanarShape& shape);
}  // namespace serial

}  // namespace agile::geometry
