// Regenerates everything under assets/: the four part silhouettes, the flip
// and pick-place scenarios, the ablation suite, the arm description, and the
// annotated mask datasets for the few-shot fit. Deterministic: rerunning
// produces byte-identical files.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "agile/dynamics.hpp"
#include "agile/geometry.hpp"
#include "agile/kinematics.hpp"
#include "agile/perception.hpp"
#include "agile/rng.hpp"
#include "agile/scenario.hpp"

namespace fs = std::filesystem;
using namespace agile;

namespace {

constexpr double kEdgeX = 520.0;
// Overhang placement: the COM rests this far inside the edge. Close enough
// that tipping the part needs only a light rim push, far enough to be stable.
constexpr double kComInboardMm = 3.0;
// Gripper-level slip trip shared by every scenario; sits between the smooth
// async contact speeds and the stepped sync ones (measured, see scenarios).
constexpr double kSlipFailMmS = 120.0;

struct Canvas {
  int w, h;
  std::vector<std::uint8_t> cells;

  Canvas(int w_, int h_) : w(w_), h(h_), cells(static_cast<std::size_t>(w_) * h_, 0) {}
  void set(int x, int y, std::uint8_t v) {
    if (x >= 0 && y >= 0 && x < w && y < h) cells[static_cast<std::size_t>(y) * w + x] = v;
  }
  void rect(int x0, int y0, int x1, int y1, std::uint8_t v = 1) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, v);
  }
  // Staircase chamfer of `n` cells eating into the given corner.
  void chamfer(int cx, int cy, int sx, int sy, int n) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n - i; ++j) set(cx + sx * i, cy + sy * j, 0);
  }
};

struct PartSpec {
  std::string name;
  geometry::PlanarShape shape;
  double mass_kg;
  double thickness_mm;
  Vec3 com_mm;
  std::uint64_t seed;
};

geometry::PlanarShape battery_shape() {
  Canvas c(45, 30);
  c.rect(0, 0, 40, 29);
  c.rect(41, 17, 44, 24);  // terminal stub, above the midline
  c.chamfer(0, 29, 1, -1, 5);
  c.chamfer(0, 0, 1, 1, 1);
  c.chamfer(40, 29, -1, -1, 2);
  c.chamfer(40, 0, -1, 1, 2);
  return geometry::PlanarShape::from_grid(c.cells, c.w, c.h, 2.0);
}

geometry::PlanarShape calculator_shape() {
  Canvas c(70, 35);
  c.rect(0, 0, 69, 34);
  c.chamfer(69, 34, -1, -1, 10);
  c.chamfer(69, 0, -1, 1, 2);
  return geometry::PlanarShape::from_grid(c.cells, c.w, c.h, 2.0);
}

geometry::PlanarShape phone_shape() {
  Canvas c(75, 36);
  c.rect(0, 0, 74, 35);
  c.chamfer(0, 35, 1, -1, 3);
  c.chamfer(0, 0, 1, 1, 4);
  c.chamfer(74, 35, -1, -1, 4);
  c.chamfer(74, 0, -1, 1, 4);
  c.rect(12, 22, 16, 26, 0);  // camera window, upper left
  return geometry::PlanarShape::from_grid(c.cells, c.w, c.h, 2.0);
}

geometry::PlanarShape chip_shape() {
  Canvas c(40, 30);
  c.rect(0, 4, 39, 29);
  c.rect(24, 20, 39, 29, 0);  // L cut, upper right
  c.rect(26, 0, 31, 3);       // connector tab on the bottom
  return geometry::PlanarShape::from_grid(c.cells, c.w, c.h, 2.0);
}

struct Placement {
  double x_mm, y_mm, yaw_deg, lever_mm;
};

// Slide the part out over the edge until its COM sits kComInboardMm inside
// the pivot line, then turn it so the rim anchor lands as far inboard as
// possible. The edge carries the weight; the arm only tips the part, so the
// grasp lever (pivot to anchor) should be long.
Placement place_for_flip(const geometry::PlanarShape& shape, const Vec2& com_xy) {
  Vec2 anchor = geometry::pivot_anchor(shape).anchor;
  Placement best{};
  bool have = false;
  for (int q = 0; q < 4; ++q) {
    double yaw = 0.5 * kPi * q;
    double c = std::cos(yaw), s = std::sin(yaw);
    auto map0 = [&](const Vec2& p_shape) {
      Vec2 p(-p_shape.x(), p_shape.y());  // Back face down
      return Vec2(c * p.x() - s * p.y(), s * p.x() + c * p.y());
    };
    double min_y = 1e18, max_y = -1e18;
    for (const Vec2& v : shape.polygon()) {
      Vec2 p = map0(v);
      min_y = std::min(min_y, p.y());
      max_y = std::max(max_y, p.y());
    }
    Placement pl;
    pl.x_mm = kEdgeX - kComInboardMm - map0(com_xy).x();
    pl.y_mm = -0.5 * (min_y + max_y);
    pl.yaw_deg = rad_to_deg(yaw);
    Vec2 a = map0(anchor) + Vec2(pl.x_mm, pl.y_mm);
    pl.lever_mm = kEdgeX - a.x();
    if (!have || pl.lever_mm > best.lever_mm) {
      best = pl;
      have = true;
    }
  }
  return best;
}

// Torque margin the arm adds on top of gravity, sized to the part: 5% of the
// peak gravity moment about the pivot line.
double eps_tau_for(const PartSpec& part) {
  double z_com = part.thickness_mm - part.com_mm.z();
  double r_mm = std::hypot(kComInboardMm, z_com);
  return 0.05 * part.mass_kg * dynamics::kGravityMs2 * r_mm * 1e-3;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string flip_scenario_text(const PartSpec& part, const Placement& pl, double eps_tau_nm) {
  std::ostringstream s;
  s << "# " << part.name << ", task face down at the table edge\n"
    << "[object]\n"
    << "shape = ../shapes/" << part.name << ".grid\n"
    << "mass_kg = " << part.mass_kg << '\n'
    << "com_mm = " << part.com_mm.x() << ' ' << part.com_mm.y() << ' ' << part.com_mm.z() << '\n'
    << "thickness_mm = " << part.thickness_mm << '\n'
    << "\n[initial]\n"
    << "state = Back\n"
    << "x_mm = " << pl.x_mm << '\n'
    << "y_mm = " << pl.y_mm << '\n'
    << "yaw_deg = " << pl.yaw_deg << '\n'
    << "table_height_mm = 0\n"
    << "\n[edge]\n"
    << "point_mm = " << kEdgeX << " 0 0\n"
    << "dir = 0 1 0\n"
    << "\n[goal]\n"
    << "pose = auto\n"
    << "\n[latency]\n"
    << "t_inf_ms = 92\n"
    << "perception_hz = 10\n"
    << "control_hz = 50\n"
    << "eps_sync_ms = 10\n"
    << "clock_skew_ms = 0\n"
    << "\n[run]\n"
    << "mode = Async\n"
    << "anchor_strategy = Implicit\n"
    << "flip_strategy = Pivot\n"
    << "seed = " << part.seed << '\n'
    << "anchor_noise_mm = 1.0\n"
    << "\n[thresholds]\n"
    << "slip_fail_mm_s = " << kSlipFailMmS << '\n'
    << "tol_rot_deg = 5\n"
    << "tol_pos_mm = 10\n"
    << "friction_mu = 0.5\n"
    << "eps_tau_nm = " << eps_tau_nm << '\n';
  return s.str();
}

std::string front_scenario_text(const PartSpec& part) {
  std::ostringstream s;
  s << "# " << part.name << ", task face up: stability grasp and relocate\n"
    << "[object]\n"
    << "shape = ../shapes/" << part.name << ".grid\n"
    << "mass_kg = " << part.mass_kg << '\n'
    << "com_mm = " << part.com_mm.x() << ' ' << part.com_mm.y() << ' ' << part.com_mm.z() << '\n'
    << "thickness_mm = " << part.thickness_mm << '\n'
    << "\n[initial]\n"
    << "state = Front\n"
    << "x_mm = 380\n"
    << "y_mm = -120\n"
    << "yaw_deg = 0\n"
    << "table_height_mm = 0\n"
    << "\n[goal]\n"
    << "pose = auto\n"
    << "\n[latency]\n"
    << "t_inf_ms = 92\n"
    << "perception_hz = 10\n"
    << "control_hz = 50\n"
    << "eps_sync_ms = 10\n"
    << "clock_skew_ms = 0\n"
    << "\n[run]\n"
    << "mode = Async\n"
    << "anchor_strategy = Implicit\n"
    << "seed = " << part.seed + 1 << '\n'
    << "anchor_noise_mm = 1.0\n"
    << "\n[thresholds]\n"
    << "tol_rot_deg = 5\n"
    << "tol_pos_mm = 10\n";
  return s.str();
}

// Mixed-face dataset for one part: poses spread over the camera frame,
// alternating Front/Back so any leading subsample carries both labels.
// Targets are the rim anchor as seen in that view.
void make_dataset(const PartSpec& part, const fs::path& dir, int count,
                  std::uint64_t seed_base) {
  perception::Camera cam;
  cam.width_px = 160;
  cam.height_px = 160;
  cam.px_per_mm = 0.5;
  cam.center_mm = Vec2::Zero();

  const auto& shape = part.shape;
  const double extent = shape.width() * shape.cell_mm();
  const Vec2 center(0.5 * shape.width() * shape.cell_mm(), 0.5 * shape.height() * shape.cell_mm());
  const Vec2 anchor = geometry::pivot_anchor(shape).anchor;

  Rng rng(seed_base);
  perception::FewShotDataset data;
  for (int i = 0; i < count; ++i) {
    bool back = (i % 2) == 1;
    double px = rng.uniform(-40.0, 40.0);
    double py = rng.uniform(-40.0, 40.0);
    double yaw = rng.uniform(0.0, 2.0 * kPi);

    // Rotate about the part center so every pose stays inside the frame.
    Vec2 c_eff = back ? Vec2(extent - center.x(), center.y()) : center;
    geometry::Se2 pose;
    pose.theta_rad = yaw;
    double cy = std::cos(yaw), sy = std::sin(yaw);
    pose.x_mm = px - (cy * c_eff.x() - sy * c_eff.y());
    pose.y_mm = py - (sy * c_eff.x() + cy * c_eff.y());

    perception::WorldView view;
    view.shape = &shape;
    view.pose = pose;
    view.mirrored = back;

    perception::FewShotSample sample;
    sample.obs = perception::render_observation(view, cam, seed_base + 1000 + i, 0.01);
    sample.obs.frame_id = i;
    Vec2 a_eff = back ? Vec2(extent - anchor.x(), anchor.y()) : anchor;
    sample.target_px = cam.world_to_px(pose.apply(a_eff));
    sample.cls = back ? geometry::AffordanceClass::Back : geometry::AffordanceClass::Front;
    data.samples.push_back(std::move(sample));
  }
  data.save((dir / "annotations.txt").string(), (dir / "masks").string(), part.name);
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out_root = argc > 1 ? argv[1] : "assets";
  try {
    std::vector<PartSpec> parts;
    parts.push_back({"battery", battery_shape(), 1.2, 18.0, Vec3(66.0, 30.0, 9.0), 11});
    parts.push_back({"calculator", calculator_shape(), 0.25, 8.0, Vec3(68.0, 34.0, 4.0), 22});
    parts.push_back({"phone", phone_shape(), 0.2, 9.0, Vec3(76.0, 36.0, 4.5), 33});
    parts.push_back({"chip", chip_shape(), 0.09, 4.0, Vec3(34.0, 34.0, 2.0), 44});

    fs::create_directories(out_root / "shapes");
    fs::create_directories(out_root / "arm");
    for (const auto& part : parts)
      part.shape.save((out_root / "shapes" / (part.name + ".grid")).string());

    kinematics::ArmModel::default_arm().save((out_root / "arm" / "arm.txt").string());

    std::ostringstream suite;
    suite << "# four-part flip suite, one scenario per line\n";
    for (const auto& part : parts) {
      Placement pl = place_for_flip(part.shape, Vec2(part.com_mm.x(), part.com_mm.y()));
      write_file(out_root / "scenarios" / (part.name + "_back.scn"),
                 flip_scenario_text(part, pl, eps_tau_for(part)));
      suite << part.name << "_back.scn\n";
      std::cout << part.name << ": lever " << pl.lever_mm << " mm, yaw " << pl.yaw_deg << "\n";
    }
    write_file(out_root / "scenarios" / "suite_back.txt", suite.str());
    write_file(out_root / "scenarios" / "battery_front.scn", front_scenario_text(parts[0]));

    for (const auto& part : parts) {
      int count = part.name == "battery" ? 40 : 24;
      make_dataset(part, out_root / "fewshot" / part.name, count, part.seed * 1000 + 7);
    }

    // Sanity: every flip scenario must plan under both strategies, and the
    // battery's pivot torque requirement must clear the offload bound.
    for (const auto& part : parts) {
      auto sc = scenario::load_scenario(
          (out_root / "scenarios" / (part.name + "_back.scn")).string());
      auto full = scenario::build_setup(sc);
      sc.flip_strategy = scenario::FlipStrategy::Direct;
      auto direct = scenario::build_setup(sc);
      auto profile = dynamics::quasi_static_flip_rollout(full.object, full.pivot, 180);
      double direct_peak = 0.0;
      for (int k = 0; k <= 180; ++k)
        direct_peak = std::max(direct_peak, dynamics::required_wrist_torque_direct(
                                                full.object, full.pivot, kPi * k / 180.0));
      std::cout << part.name << ": pivot peak " << profile.peak_tau_arm_nm << " N*m, direct peak "
                << direct_peak << " N*m, plan " << full.episode.plan.waypoints.size() << "/"
                << direct.episode.plan.waypoints.size() << " waypoints\n";
      if (part.name == "battery" && profile.peak_tau_arm_nm > 0.4 * direct_peak)
        throw std::runtime_error("battery offload bound violated; adjust geometry");
    }
  } catch (const std::exception& e) {
    std::cerr << "asset generation failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
