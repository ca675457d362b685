#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "agile/geometry.hpp"
#include "agile/rng.hpp"
#include "doctest.h"

using namespace agile;
using namespace agile::geometry;

namespace {

PlanarShape l_shape_grid() {
  // 2x2 grid, top-right cell empty.
  std::vector<std::uint8_t> cells = {1, 1, 1, 0};
  return PlanarShape::from_grid(cells, 2, 2, 1.0);
}

std::vector<Vec2> l_shape_polygon() {
  return {Vec2(0, 0), Vec2(2, 0), Vec2(2, 1), Vec2(1, 1), Vec2(1, 2), Vec2(0, 2)};
}

PlanarShape ring_shape() {
  // 10x10 occupancy with a 4x4 hole in the middle, cell 2 mm.
  std::vector<std::uint8_t> cells(100, 1);
  for (int y = 3; y < 7; ++y)
    for (int x = 3; x < 7; ++x) cells[static_cast<std::size_t>(y) * 10 + x] = 0;
  return PlanarShape::from_grid(cells, 10, 10, 2.0);
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Random star polygon around (cx, cy). Jittered uniform ray spacing keeps the
// angles well separated, so the rim never grazes itself.
std::vector<Vec2> random_star_polygon(Rng& rng, double cx, double cy) {
  int n = 5 + static_cast<int>(rng.uniform_index(8));
  std::vector<Vec2> poly;
  poly.reserve(n);
  for (int i = 0; i < n; ++i) {
    double slot = 2.0 * M_PI / n;
    double a = slot * i + rng.uniform(0.0, 0.7 * slot);
    double r = rng.uniform(8.0, 30.0);
    poly.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
  }
  return poly;
}

}  // namespace

TEST_CASE("polygon area is signed with CCW positive") {
  std::vector<Vec2> sq = {Vec2(0, 0), Vec2(10, 0), Vec2(10, 10), Vec2(0, 10)};
  CHECK(polygon_area(sq) == doctest::Approx(100.0));
  std::reverse(sq.begin(), sq.end());
  CHECK(polygon_area(sq) == doctest::Approx(-100.0));
}

TEST_CASE("point in polygon crossing test") {
  std::vector<Vec2> sq = {Vec2(0, 0), Vec2(10, 0), Vec2(10, 10), Vec2(0, 10)};
  CHECK(point_in_polygon(sq, Vec2(5, 5)));
  CHECK(point_in_polygon(sq, Vec2(0.5, 9.5)));
  CHECK_FALSE(point_in_polygon(sq, Vec2(-0.5, 5)));
  CHECK_FALSE(point_in_polygon(sq, Vec2(5, 10.5)));
  const auto l = l_shape_polygon();
  CHECK(point_in_polygon(l, Vec2(0.5, 1.5)));
  CHECK_FALSE(point_in_polygon(l, Vec2(1.5, 1.5)));
}

TEST_CASE("L-shape centroid matches the exact value on both routes") {
  // Three unit cells at centers (0.5,0.5), (1.5,0.5), (0.5,1.5): mean (5/6, 5/6).
  PlanarShape g = l_shape_grid();
  Vec2 cg = centroid(g);
  CHECK(cg.x() == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(cg.y() == doctest::Approx(5.0 / 6.0).epsilon(1e-12));

  // Shoelace first moment of the same outline gives the identical point.
  PlanarShape p = PlanarShape::from_polygon(l_shape_polygon(), 0.25);
  Vec2 cp = centroid(p);
  CHECK(cp.x() == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(cp.y() == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("grid outline is traced CCW and simplified") {
  PlanarShape g = l_shape_grid();
  CHECK(polygon_area(g.polygon()) == doctest::Approx(3.0));
  CHECK(g.polygon().size() == 6);  // collinear vertices removed
  CHECK(g.holes().empty());
  CHECK(g.material_area_mm2() == doctest::Approx(3.0));
}

TEST_CASE("ring shape reports its hole and exact material area") {
  PlanarShape r = ring_shape();
  REQUIRE(r.holes().size() == 1);
  CHECK(polygon_area(r.polygon()) == doctest::Approx(400.0));
  CHECK(polygon_area(r.holes()[0]) == doctest::Approx(-64.0));  // CW inner loop
  CHECK(r.material_area_mm2() == doctest::Approx(336.0));
  // Centroid of a hollow silhouette falls inside the hole, but the stability
  // anchor must still land on material.
  AffordanceObservation s = stability_anchor(r);
  Vec2 c = centroid(r);
  CHECK((c - Vec2(10, 10)).norm() < 1e-9);
  int ix = static_cast<int>(s.anchor.x() / 2.0);
  int iy = static_cast<int>(s.anchor.y() / 2.0);
  CHECK(r.occupied(ix, iy));
  CHECK((s.anchor - c).norm() > 2.0);
}

TEST_CASE("polygon rasterization covers the expected cells") {
  std::vector<Vec2> sq = {Vec2(0, 0), Vec2(10, 0), Vec2(10, 10), Vec2(0, 10)};
  PlanarShape s = PlanarShape::from_polygon(sq, 1.0);
  CHECK(s.width() == 10);
  CHECK(s.height() == 10);
  CHECK(s.occupied_count() == 100);
  CHECK(s.material_area_mm2() == doctest::Approx(100.0));
}

TEST_CASE("from_polygon normalizes winding and rejects bad input") {
  std::vector<Vec2> cw = {Vec2(0, 10), Vec2(10, 10), Vec2(10, 0), Vec2(0, 0)};
  PlanarShape s = PlanarShape::from_polygon(cw, 1.0);
  CHECK(polygon_area(s.polygon()) > 0.0);

  std::vector<Vec2> bowtie = {Vec2(0, 0), Vec2(10, 10), Vec2(10, 0), Vec2(0, 10)};
  CHECK_THROWS_AS(PlanarShape::from_polygon(bowtie, 1.0), std::invalid_argument);

  std::vector<Vec2> negative = {Vec2(-5, 0), Vec2(5, 0), Vec2(0, 5)};
  CHECK_THROWS_AS(PlanarShape::from_polygon(negative, 1.0), std::invalid_argument);

  CHECK_THROWS_AS(PlanarShape::from_grid({0, 0, 0, 0}, 2, 2, 1.0), EmptyShapeError);
}

TEST_CASE("shape save/load round trip is byte identical") {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(AGILE_BINARY_DIR) / "test_tmp";
  fs::create_directories(dir);
  PlanarShape r = ring_shape();
  std::string p1 = (dir / "ring_a.grid").string();
  std::string p2 = (dir / "ring_b.grid").string();
  r.save(p1);
  PlanarShape r2 = PlanarShape::load(p1);
  r2.save(p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  CHECK(r2.width() == r.width());
  CHECK(r2.height() == r.height());
  CHECK(r2.cell_mm() == r.cell_mm());
  CHECK(r2.material_area_mm2() == doctest::Approx(r.material_area_mm2()));

  std::string bad = (dir / "bad.grid").string();
  {
    std::ofstream out(bad);
    out << "2 2 1\n01\n2x\n";
  }
  CHECK_THROWS(PlanarShape::load(bad));
}

TEST_CASE("boundary samples at cell spacing and stays on the outline") {
  PlanarShape s = PlanarShape::from_polygon(
      {Vec2(0, 0), Vec2(10, 0), Vec2(10, 10), Vec2(0, 10)}, 1.0);
  auto b = boundary(s);
  CHECK(b.size() == 40);  // 4 edges x 10 samples
  for (const auto& p : b) {
    bool on_edge = std::abs(p.x()) < 1e-9 || std::abs(p.x() - 10) < 1e-9 ||
                   std::abs(p.y()) < 1e-9 || std::abs(p.y() - 10) < 1e-9;
    CHECK(on_edge);
  }
}

TEST_CASE("square pivot anchor resolves the four-way tie to the frozen corner") {
  PlanarShape s = PlanarShape::from_polygon(
      {Vec2(0, 0), Vec2(10, 0), Vec2(10, 10), Vec2(0, 10)}, 1.0);
  // All four corners are 5*sqrt(2) from the centroid; the tie breaks on the
  // smallest polar angle about the centroid, which picks (0,0) at -3pi/4.
  AffordanceObservation o = pivot_anchor(s);
  CHECK(o.cls == AffordanceClass::Back);
  CHECK(o.anchor.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(o.anchor.y() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("anchor searches agree with a brute-force scan on random shapes") {
  Rng rng(404);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Vec2> poly = random_star_polygon(rng, 40.0, 40.0);
    PlanarShape s = PlanarShape::from_polygon(poly, 1.0);
    Vec2 c = centroid(s);

    auto pts = boundary(s);
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      double di = (pts[i] - c).squaredNorm();
      double db = (pts[best] - c).squaredNorm();
      if (di > db) {
        best = i;
      } else if (di == db) {
        double ai = std::atan2(pts[i].y() - c.y(), pts[i].x() - c.x());
        double ab = std::atan2(pts[best].y() - c.y(), pts[best].x() - c.x());
        if (ai < ab) best = i;
      }
    }
    Vec2 expect = pts[best];
    AffordanceObservation par_obs = pivot_anchor(s);
    AffordanceObservation ser_obs = serial::pivot_anchor(s);
    CHECK(par_obs.anchor.x() == expect.x());
    CHECK(par_obs.anchor.y() == expect.y());
    CHECK(ser_obs.anchor.x() == par_obs.anchor.x());
    CHECK(ser_obs.anchor.y() == par_obs.anchor.y());

    AffordanceObservation ps = stability_anchor(s);
    AffordanceObservation ss = serial::stability_anchor(s);
    CHECK(ps.anchor.x() == ss.anchor.x());
    CHECK(ps.anchor.y() == ss.anchor.y());
  }
}

TEST_CASE("rim tangent keeps the centroid on its left") {
  PlanarShape s = PlanarShape::from_polygon(
      {Vec2(0, 0), Vec2(10, 0), Vec2(10, 10), Vec2(0, 10)}, 1.0);
  Vec2 t = rim_tangent(s, Vec2(0, 0));
  CHECK(t.norm() == doctest::Approx(1.0));
  // Central difference straddling the corner: direction (1,-1)/sqrt(2).
  CHECK(t.x() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
  CHECK(t.y() == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-9));
  // Mid-edge tangent on the bottom edge points +x (CCW traversal).
  Vec2 tb = rim_tangent(s, Vec2(5, 0));
  CHECK(tb.x() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tb.y() == doctest::Approx(0.0).epsilon(1e-9));

  // Left-of-tangent test holds at every boundary sample of a random shape.
  Rng rng(11);
  PlanarShape r = PlanarShape::from_polygon(random_star_polygon(rng, 40, 40), 1.0);
  Vec2 c = centroid(r);
  auto b = boundary(r);
  for (std::size_t i = 0; i < b.size(); i += 7) {
    Vec2 tt = rim_tangent(r, b[i]);
    Vec2 left(-tt.y(), tt.x());
    CHECK((c - b[i]).dot(left) > 0.0);
  }
}

TEST_CASE("Se2 applies rotation then translation") {
  Se2 f{10.0, 5.0, M_PI / 2.0};
  Vec2 p = f.apply(Vec2(1, 0));
  CHECK(p.x() == doctest::Approx(10.0));
  CHECK(p.y() == doctest::Approx(6.0));
  Vec2 v = f.rotate(Vec2(1, 0));
  CHECK(v.x() == doctest::Approx(0.0));
  CHECK(v.y() == doctest::Approx(1.0));
}
