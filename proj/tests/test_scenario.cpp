#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "agile/scenario.hpp"
#include "doctest.h"

using namespace agile;
using doctest::Contains;
using scenario::Scenario;
using scenario::ScenarioError;

namespace {

namespace fs = std::filesystem;

fs::path scen_dir() {
  fs::path d = fs::path(AGILE_BINARY_DIR) / "test_tmp" / "scen";
  fs::create_directories(d);
  return d;
}

// 70 x 40 plate all tests share; saved once per process.
void ensure_shape() {
  static bool done = false;
  if (done) return;
  auto rect = geometry::PlanarShape::from_polygon(
      {Vec2(0, 0), Vec2(70, 0), Vec2(70, 40), Vec2(0, 40)}, 2.0);
  rect.save((scen_dir() / "rect.shape").string());
  done = true;
}

std::string write_scenario(const std::string& name, const std::string& body) {
  ensure_shape();
  fs::path p = scen_dir() / name;
  std::ofstream out(p);
  out << body;
  return p.string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("minimal scenario file parses with documented defaults") {
  Scenario sc = scenario::load_scenario(write_scenario("min.scn", "[object]\nshape = rect.shape\n"));
  CHECK(sc.shape_path == "rect.shape");
  CHECK(sc.mass_kg == 0.5);
  CHECK(sc.thickness_mm == 10.0);
  CHECK(sc.com_mm.isApprox(Vec3(0, 0, 5)));  // z defaults to mid thickness
  CHECK(sc.initial_cls == geometry::AffordanceClass::Back);
  CHECK_FALSE(sc.edge_set);
  CHECK(sc.goal_auto);
  CHECK(sc.mode == runtime::Mode::Async);
  CHECK(sc.anchor_strategy == scenario::AnchorStrategy::Implicit);
  CHECK(sc.flip_strategy == scenario::FlipStrategy::Pivot);
  CHECK(sc.seed == 1);
  CHECK(sc.anchor_noise_mm == 0.0);
  runtime::LatencyConfig def;
  CHECK(sc.latency.t_inf_s == doctest::Approx(def.t_inf_s));
  CHECK(sc.latency.perception_period_s == doctest::Approx(def.perception_period_s));
  CHECK(sc.latency.control_period_s == doctest::Approx(def.control_period_s));
  CHECK(sc.slip_fail_mm_s == 1e9);
  CHECK(sc.arm_path.empty());
}

TEST_CASE("every scenario key lands in the right field") {
  std::string body =
      "[object]\n"
      "shape = rect.shape\n"
      "mass_kg = 1.2\n"
      "thickness_mm = 20\n"
      "com_mm = 35 20\n"
      "[initial]\n"
      "state = Back\n"
      "x_mm = 430\n"
      "y_mm = 100\n"
      "yaw_deg = 180\n"
      "table_height_mm = 0\n"
      "[edge]\n"
      "point_mm = 502 0 0\n"
      "dir = 0 1 0\n"
      "[goal]\n"
      "pose = auto\n"
      "[latency]\n"
      "t_inf_ms = 300\n"
      "perception_hz = 10\n"
      "control_hz = 50\n"
      "eps_sync_ms = 12\n"
      "clock_skew_ms = 5\n"
      "[run]\n"
      "mode = Sync\n"
      "anchor_strategy = GlobalCentroid\n"
      "flip_strategy = Direct\n"
      "seed = 42\n"
      "anchor_noise_mm = 2.5\n"
      "[thresholds]\n"
      "slip_fail_mm_s = 120\n"
      "tol_rot_deg = 4\n"
      "tol_pos_mm = 8\n"
      "friction_mu = 0.4\n"
      "eps_tau_nm = 0.02\n"
      "arm = default\n";
  Scenario sc = scenario::load_scenario(write_scenario("full.scn", body));
  CHECK(sc.mass_kg == 1.2);
  CHECK(sc.thickness_mm == 20.0);
  CHECK(sc.com_mm.isApprox(Vec3(35, 20, 10)));  // z filled from thickness
  CHECK(sc.initial_cls == geometry::AffordanceClass::Back);
  CHECK(sc.x_mm == 430.0);
  CHECK(sc.y_mm == 100.0);
  CHECK(sc.yaw_deg == 180.0);
  CHECK(sc.edge_set);
  CHECK(sc.edge_point_mm.isApprox(Vec3(502, 0, 0)));
  CHECK(sc.edge_dir.isApprox(Vec3(0, 1, 0)));
  CHECK(sc.latency.t_inf_s == doctest::Approx(0.3));
  CHECK(sc.latency.perception_period_s == doctest::Approx(0.1));
  CHECK(sc.latency.control_period_s == doctest::Approx(0.02));
  CHECK(sc.latency.eps_sync_s == doctest::Approx(0.012));
  CHECK(sc.latency.clock_skew_s == doctest::Approx(0.005));
  CHECK(sc.mode == runtime::Mode::Sync);
  CHECK(sc.anchor_strategy == scenario::AnchorStrategy::GlobalCentroid);
  CHECK(sc.flip_strategy == scenario::FlipStrategy::Direct);
  CHECK(sc.seed == 42);
  CHECK(sc.anchor_noise_mm == 2.5);
  CHECK(sc.slip_fail_mm_s == 120.0);
  CHECK(sc.tol_rot_deg == 4.0);
  CHECK(sc.tol_pos_mm == 8.0);
  CHECK(sc.friction_mu == 0.4);
  CHECK(sc.eps_tau_nm == 0.02);
  CHECK(sc.arm_path.empty());  // "default" means the built-in arm

  std::string fixed_goal =
      "[object]\nshape = rect.shape\n"
      "[goal]\npose = 1 0 0 0 1 0 0 0 1 50 60 70\n";
  Scenario g = scenario::load_scenario(write_scenario("goal.scn", fixed_goal));
  CHECK_FALSE(g.goal_auto);
  CHECK(g.goal.rotation.isApprox(Mat3::Identity()));
  CHECK(g.goal.translation_mm.isApprox(Vec3(50, 60, 70)));
}

TEST_CASE("scenario mistakes carry file and line context") {
  auto load = [](const std::string& name, const std::string& body) {
    return scenario::load_scenario(write_scenario(name, body));
  };
  const std::string ok = "[object]\nshape = rect.shape\n";

  CHECK_THROWS_WITH_AS(load("e01.scn", "[object]\nshape rect.shape\n"),
                       Contains(":2: expected key = value"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e02.scn", "shape = rect.shape\n"),
                       Contains(":1: key before any [section]"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e03.scn", ok + "shape = again.shape\n"),
                       Contains("duplicate key object.shape"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e04.scn", ok + "[bogus]\nk = v\n"),
                       Contains("unknown section [bogus]"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e05.scn", ok + "colour = red\n"),
                       Contains("unknown key object.colour"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e06.scn", ok + "[run]\nmode = Turbo\n"),
                       Contains("mode must be Async or Sync"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e07.scn", ok + "[initial]\nstate = Left\n"),
                       Contains("state must be Front or Back"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e08.scn", ok + "[run]\nanchor_strategy = Fancy\n"),
                       Contains("anchor_strategy must be Implicit or GlobalCentroid"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(load("e09.scn", ok + "[run]\nflip_strategy = Sideways\n"),
                       Contains("flip_strategy must be Pivot or Direct"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e10.scn", ok + "com_mm = 1 2 3 4\n"),
                       Contains("com_mm wants 2 or 3 numbers"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e11.scn", ok + "[goal]\npose = 1 2 3\n"),
                       Contains("pose wants auto or 12 numbers"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e12.scn", ok + "[edge]\npoint_mm = 0 0 0\ndir = 0 1 0.5\n"),
                       Contains("edge must be horizontal"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e13.scn", ok + "[edge]\npoint_mm = 0 0 0\n"),
                       Contains("edge wants both point_mm and dir"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e14.scn", ok + "mass_kg = -1\n"),
                       Contains("mass and thickness must be positive"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e15.scn", ok + "[latency]\nperception_hz = 0\n"),
                       Contains("stream rates must be positive"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e16.scn", ok + "[run]\nseed = banana\n"), Contains("bad seed"),
                       ScenarioError);
  CHECK_THROWS_WITH_AS(load("e17.scn", "[object\nshape = rect.shape\n"),
                       Contains("unterminated section header"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e18.scn", "[object]\nmass_kg = 1\n"),
                       Contains("missing object.shape"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e19.scn", ok + "mass_kg = heavy\n"),
                       Contains("bad number for mass_kg"), ScenarioError);
  CHECK_THROWS_WITH_AS(load("e20.scn", "[]\nshape = rect.shape\n"),
                       Contains("empty section name"), ScenarioError);
  CHECK_THROWS_AS(scenario::load_scenario((scen_dir() / "missing.scn").string()), ScenarioError);
}

TEST_CASE("anchor strategy picks the documented grasp cue") {
  auto shape = geometry::PlanarShape::load((scen_dir() / "rect.shape").string());
  const std::string front =
      "[object]\nshape = rect.shape\n"
      "[initial]\nstate = Front\nx_mm = 400\ny_mm = 50\n";

  auto implicit = scenario::build_setup(
      scenario::load_scenario(write_scenario("a1.scn", front)));
  Vec2 want = geometry::stability_anchor(shape).anchor;
  CHECK(implicit.anchor_world_mm.head<2>().isApprox(Vec2(400 + want.x(), 50 + want.y()), 1e-12));
  CHECK(implicit.anchor_world_mm.z() == doctest::Approx(10.0));
  CHECK(implicit.episode.plan.id == primitives::PrimitiveId::StablePickPlace);

  auto global = scenario::build_setup(scenario::load_scenario(
      write_scenario("a2.scn", front + "[run]\nanchor_strategy = GlobalCentroid\n")));
  Vec2 cen = geometry::centroid(shape);
  CHECK(global.anchor_world_mm.head<2>().isApprox(Vec2(400 + cen.x(), 50 + cen.y()), 1e-12));
  CHECK_FALSE(global.anchor_world_mm.head<2>().isApprox(implicit.anchor_world_mm.head<2>()));

  // Lying on its face the silhouette is mirrored, so the rim anchor lands at
  // x_mm - anchor.x.
  const std::string back =
      "[object]\nshape = rect.shape\n"
      "[initial]\nstate = Back\nx_mm = 400\ny_mm = 50\n"
      "[run]\nflip_strategy = Direct\n";
  auto rim = scenario::build_setup(scenario::load_scenario(write_scenario("a3.scn", back)));
  Vec2 pa = geometry::pivot_anchor(shape).anchor;
  CHECK(rim.anchor_world_mm.head<2>().isApprox(Vec2(400 - pa.x(), 50 + pa.y()), 1e-12));
}

TEST_CASE("anchor noise is seeded and off by default") {
  const std::string base =
      "[object]\nshape = rect.shape\n"
      "[initial]\nstate = Front\nx_mm = 400\ny_mm = 50\n";
  auto clean = scenario::build_setup(scenario::load_scenario(write_scenario("n0.scn", base)));

  std::string noisy = base + "[run]\nanchor_noise_mm = 1.5\nseed = 7\n";
  auto n1 = scenario::build_setup(scenario::load_scenario(write_scenario("n1.scn", noisy)));
  auto n2 = scenario::build_setup(scenario::load_scenario(write_scenario("n2.scn", noisy)));
  CHECK(n1.anchor_world_mm == n2.anchor_world_mm);
  CHECK((n1.anchor_world_mm - clean.anchor_world_mm).norm() > 1e-6);
  CHECK((n1.anchor_world_mm - clean.anchor_world_mm).norm() < 10.0);

  std::string other = base + "[run]\nanchor_noise_mm = 1.5\nseed = 8\n";
  auto n3 = scenario::build_setup(scenario::load_scenario(write_scenario("n3.scn", other)));
  CHECK((n1.anchor_world_mm - n3.anchor_world_mm).norm() > 1e-9);
}

TEST_CASE("auto edge hugs the far rim and auto goal mirrors across it") {
  // Yaw 180 turns the mirrored plate so the rim anchor faces away from the
  // edge: plate spans x in [430, 500], anchor at (430, 100).
  const std::string body =
      "[object]\nshape = rect.shape\nmass_kg = 1.2\nthickness_mm = 20\ncom_mm = 35 20\n"
      "[initial]\nstate = Back\nx_mm = 430\ny_mm = 100\nyaw_deg = 180\n";
  auto setup = scenario::build_setup(scenario::load_scenario(write_scenario("edge.scn", body)));

  CHECK(setup.pivot.pivot_point_mm.x() == doctest::Approx(502.0));
  CHECK(setup.pivot.pivot_point_mm.z() == doctest::Approx(0.0));
  CHECK(setup.pivot.pivot_dir.isApprox(Vec3::UnitY()));
  CHECK(setup.episode.pivot_contact);
  CHECK(setup.episode.plan.id == primitives::PrimitiveId::PivotFlip);
  CHECK(setup.anchor_world_mm.head<2>().isApprox(Vec2(430, 100), 1e-9));

  // Goal: start pose rotated half a turn about the edge line.
  Vec3 goal_t = setup.episode.goal.translation_mm;
  CHECK(goal_t.x() == doctest::Approx(574.0));
  CHECK(goal_t.y() == doctest::Approx(100.0));
  CHECK(goal_t.z() == doctest::Approx(-20.0));
  Mat3 flip = kinematics::axis_angle(Vec3::UnitY(), kPi);
  CHECK(setup.episode.goal.rotation.isApprox(flip * setup.episode.object_start.rotation, 1e-9));
}

TEST_CASE("a scenario run rebuilds its report from the saved trace") {
  const std::string body =
      "[object]\nshape = rect.shape\nmass_kg = 0.6\nthickness_mm = 12\n"
      "[initial]\nstate = Front\nx_mm = 420\ny_mm = 60\n"
      "[run]\nseed = 5\n";
  Scenario sc = scenario::load_scenario(write_scenario("run.scn", body));

  auto res = scenario::run_scenario(sc);
  std::string t1 = (scen_dir() / "run1.trace").string();
  res.trace.save(t1);
  auto loaded = runtime::EpisodeTrace::load(t1);
  CHECK(metrics::make_report(loaded).to_text() == res.report.to_text());

  auto res2 = scenario::run_scenario(sc);
  std::string t2 = (scen_dir() / "run2.trace").string();
  res2.trace.save(t2);
  CHECK(file_bytes(t1) == file_bytes(t2));

  CHECK(res.report.success);
  CHECK_FALSE(res.report.slipped);
  CHECK(res.report.collision_events == 0);
  CHECK(res.report.singularity_rate_pct == 0.0);
}
