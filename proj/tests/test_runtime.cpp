#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "agile/runtime.hpp"
#include "doctest.h"

using namespace agile;
using namespace agile::runtime;
using kinematics::ArmModel;
using kinematics::Pose;

namespace {

Vector6d home_q() {
  Vector6d q;
  q << 0.0, -1.2, 1.9, -2.27, -kPi / 2.0, 0.0;
  return q;
}

Mat3 top_down() {
  Mat3 r;
  r.col(0) = Vec3::UnitX();
  r.col(1) = -Vec3::UnitY();
  r.col(2) = -Vec3::UnitZ();
  return r;
}

Vector6d smooth_anchor(double t) {
  Vector6d q;
  q << std::sin(0.8 * t), std::cos(1.1 * t), 0.2 * t * t, 0.3 * t, 1.0, std::sin(t);
  return q;
}

EpisodeSetup pick_setup() {
  EpisodeSetup s;
  s.arm = ArmModel::default_arm();
  primitives::PlanConfig cfg;
  cfg.home_q = home_q();
  Vec3 anchor(450, 100, 20);
  Pose goal;
  goal.rotation = top_down();
  goal.translation_mm = Vec3(380, -120, 20);
  s.plan = primitives::plan_pick_place(anchor, goal, cfg, s.arm);
  s.object_start.translation_mm = Vec3(450, 100, 10);
  s.goal = s.object_start;
  s.goal.translation_mm = Vec3(380, -120, 10);
  s.object_thickness_mm = 20.0;
  s.object_mass_kg = 0.3;
  s.object_com_mm = Vec3(0, 0, 10);
  s.grasp_point_obj_mm = Vec3(0, 0, 10);
  s.object_outline_mm = {Vec2(-30, -20), Vec2(30, -20), Vec2(30, 20), Vec2(-30, 20)};
  s.settle_s = 0.5;
  return s;
}

// Edge flip setup mirroring the primitives fixture; used for slip monitoring.
EpisodeSetup flip_setup() {
  EpisodeSetup s;
  s.arm = ArmModel::default_arm();
  dynamics::RigidObject obj;
  obj.side_view = geometry::PlanarShape::from_polygon(
      {Vec2(0, 0), Vec2(70, 0), Vec2(70, 20), Vec2(0, 20)}, 1.0);
  obj.mass_kg = 1.2;
  obj.com_mm = Vec3(480, 100, 10);
  obj.thickness_mm = 20.0;
  dynamics::PivotConfig pivot;
  pivot.pivot_point_mm = Vec3(520, 100, 0);
  pivot.pivot_dir = Vec3::UnitY();
  pivot.grasp_point_mm = Vec3(445, 100, 20);
  pivot.object_pose_world = Pose::identity();
  primitives::PivotPlanParams params;
  params.tangent = Vec2(0, 1);
  params.pivot_point_mm = pivot.pivot_point_mm;
  params.pivot_dir = pivot.pivot_dir;
  primitives::PlanConfig cfg;
  cfg.home_q = home_q();
  Vec3 anchor(445, 100, 20);
  s.plan = primitives::plan_pivot_flip(anchor, params, obj, pivot, cfg, s.arm);
  s.object_start = Pose::identity();
  s.goal = s.object_start;
  s.object_thickness_mm = 20.0;
  s.object_mass_kg = 1.2;
  s.object_com_mm = obj.com_mm;
  s.grasp_point_obj_mm = pivot.grasp_point_mm;
  s.object_outline_mm = {Vec2(445, 70), Vec2(515, 70), Vec2(515, 130), Vec2(445, 130)};
  s.pivot_point_mm = pivot.pivot_point_mm;
  s.pivot_dir = pivot.pivot_dir;
  s.pivot_contact = true;
  s.settle_s = 0.5;
  return s;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("spline window stays continuous through anchor updates") {
  SplineWindow w;
  const std::int64_t h = 100000;
  int pushed = 0;
  for (; pushed < 4; ++pushed) w.push(smooth_anchor(pushed * 0.1), pushed * h);
  REQUIRE(w.warmed());

  for (; pushed < 24; ++pushed) {
    std::int64_t boundary = w.segment_end_us();
    Vector6d p0, v0, a0;
    w.evaluate(boundary, &p0, &v0, &a0);
    w.push(smooth_anchor(pushed * 0.1), pushed * h);
    CHECK(w.segment_begin_us() == boundary);
    Vector6d p1, v1, a1;
    w.evaluate(boundary, &p1, &v1, &a1);
    CHECK((p1 - p0).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((v1 - v0).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a1 - a0).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("spline reproduces straight-line commands exactly once cycled") {
  SplineWindow w;
  Vector6d q0 = Vector6d::Constant(0.3);
  Vector6d slope;
  slope << 0.5, -0.2, 0.1, 0.0, 0.8, -0.4;
  const std::int64_t h = 100000;
  for (int k = 0; k < 6; ++k) w.push(q0 + slope * (0.1 * k), k * h);
  // Active segment spans anchors 4 and 5; the left state was rebuilt from
  // pure line samples, so the quintic collapses to the line.
  for (int m = 0; m <= 10; ++m) {
    std::int64_t t = w.segment_begin_us() + m * (h / 10);
    Vector6d pos, vel, acc;
    w.evaluate(t, &pos, &vel, &acc);
    Vector6d expect = q0 + slope * (static_cast<double>(t) * 1e-6);
    CHECK((pos - expect).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((vel - slope).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(acc.cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("spline window guards its preconditions") {
  SplineWindow cold;
  CHECK_THROWS_AS(spline_eval(cold, 0), ColdWindow);
  CHECK_THROWS_AS(cold.segment_begin_us(), ColdWindow);
  cold.push(Vector6d::Zero(), 0);
  cold.push(Vector6d::Zero(), 100000);
  cold.push(Vector6d::Zero(), 200000);
  CHECK_FALSE(cold.warmed());
  CHECK_THROWS_AS(spline_eval(cold, 150000), ColdWindow);
  cold.push(Vector6d::Zero(), 300000);
  CHECK(cold.warmed());
  CHECK_THROWS_AS(cold.evaluate(199999, nullptr), OutOfSegment);
  CHECK_THROWS_AS(cold.evaluate(300001, nullptr), OutOfSegment);

  SplineWindow bad;
  bad.push(Vector6d::Zero(), 100);
  CHECK_THROWS_AS(bad.push(Vector6d::Zero(), 100), std::invalid_argument);
  CHECK_THROWS_AS(bad.push(Vector6d::Zero(), 50), std::invalid_argument);
  SplineWindow uneven;
  uneven.push(Vector6d::Zero(), 0);
  uneven.push(Vector6d::Zero(), 100000);
  CHECK_THROWS_AS(uneven.push(Vector6d::Zero(), 202000), std::invalid_argument);
}

TEST_CASE("soft sync picks the nearest snapshot and gates strictly") {
  std::vector<StateSnapshot> states(3);
  states[0].recorded_us = 0;
  states[1].recorded_us = 20000;
  states[2].recorded_us = 40000;

  SoftSyncResult near = soft_sync(29000, states, 10000);
  CHECK(near.state_index == 1);
  CHECK(near.delta_us == 9000);
  CHECK(near.status == SyncStatus::Aligned);

  SoftSyncResult edge = soft_sync(30000, states, 10000);
  CHECK(edge.delta_us == 10000);
  CHECK(edge.status == SyncStatus::Stale);  // strict gate
  CHECK(edge.state_index == 1);             // earlier snapshot wins the tie

  SoftSyncResult wide = soft_sync(30000, states, 10001);
  CHECK(wide.status == SyncStatus::Aligned);

  CHECK_THROWS_AS(soft_sync(0, {}, 10000), EmptyBuffer);
}

TEST_CASE("async episode ticks at the control period with one command each") {
  EpisodeSetup s = pick_setup();
  LatencyConfig lat;
  EpisodeTrace tr = run_episode(s, Mode::Async, lat, 7);
  REQUIRE(tr.ticks.size() > 100);
  for (std::size_t i = 1; i < tr.ticks.size(); ++i) {
    CHECK(tr.ticks[i].t_us - tr.ticks[i - 1].t_us == 20000);
  }
  std::size_t commands = 0;
  for (const auto& e : tr.events)
    if (e.kind == "command") ++commands;
  CHECK(commands == tr.ticks.size());

  // Perception availability trails capture by exactly the model latency.
  for (const auto& r : tr.perception) {
    CHECK(r.available_us - r.frame_id * 100000 == 92000);
    CHECK(r.capture_recorded_us == r.frame_id * 100000);  // no skew modeled
    CHECK(r.sync_delta_us == 0);
    CHECK(r.status == SyncStatus::Aligned);
  }
}

TEST_CASE("sync episode cadence is bounded by the inference latency") {
  EpisodeSetup s = pick_setup();
  LatencyConfig lat;  // t_inf 92 ms > control period
  EpisodeTrace tr = run_episode(s, Mode::Sync, lat, 7);
  std::vector<std::int64_t> cmd_times;
  for (const auto& e : tr.events)
    if (e.kind == "command") cmd_times.push_back(e.t_us);
  REQUIRE(cmd_times.size() > 10);
  for (std::size_t i = 1; i < cmd_times.size(); ++i) {
    CHECK(cmd_times[i] - cmd_times[i - 1] == 92000);
  }

  LatencyConfig fast = lat;
  fast.t_inf_s = 0.0;
  EpisodeTrace tf = run_episode(s, Mode::Sync, fast, 7);
  cmd_times.clear();
  for (const auto& e : tf.events)
    if (e.kind == "command") cmd_times.push_back(e.t_us);
  REQUIRE(cmd_times.size() > 10);
  for (std::size_t i = 1; i < cmd_times.size(); ++i) {
    CHECK(cmd_times[i] - cmd_times[i - 1] == 20000);
  }
}

TEST_CASE("clock skew produces stale pairings and stays seed deterministic") {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(AGILE_BINARY_DIR) / "test_tmp";
  fs::create_directories(dir);
  EpisodeSetup s = pick_setup();
  LatencyConfig lat;
  lat.clock_skew_s = 0.050;
  EpisodeTrace a = run_episode(s, Mode::Async, lat, 99);
  EpisodeTrace b = run_episode(s, Mode::Async, lat, 99);
  EpisodeTrace c = run_episode(s, Mode::Async, lat, 100);

  std::string pa = (dir / "skew_a.trace").string();
  std::string pb = (dir / "skew_b.trace").string();
  std::string pc = (dir / "skew_c.trace").string();
  a.save(pa);
  b.save(pb);
  c.save(pc);
  CHECK(file_bytes(pa) == file_bytes(pb));
  CHECK(file_bytes(pa) != file_bytes(pc));

  std::size_t stale = 0;
  for (const auto& r : a.perception)
    if (r.status == SyncStatus::Stale) ++stale;
  CHECK(stale > a.perception.size() / 2);  // 10 ms gate against 50 ms skew
}

TEST_CASE("grasped objects ride the tool rigidly and settle on release") {
  EpisodeSetup s = pick_setup();
  LatencyConfig lat;
  EpisodeTrace tr = run_episode(s, Mode::Async, lat, 3);

  bool saw_attach = false, saw_release = false;
  for (const auto& e : tr.events) {
    if (e.kind == "grasp_attach") saw_attach = true;
    if (e.kind == "release") saw_release = true;
  }
  CHECK(saw_attach);
  CHECK(saw_release);

  // Relative pose is constant while held.
  Pose rel;
  bool have_rel = false;
  for (const auto& tk : tr.ticks) {
    if (tk.gripper != primitives::GripperState::Closed) continue;
    Pose r = tk.tcp.inverse().compose(tk.object);
    if (!have_rel) {
      rel = r;
      have_rel = true;
      continue;
    }
    CHECK((r.translation_mm - rel.translation_mm).norm() < 1e-6);
    // acos in the angle metric bottoms out near 2e-8 for equal rotations, so
    // compare the matrices directly.
    CHECK((r.rotation - rel.rotation).norm() < 1e-9);
  }
  CHECK(have_rel);

  // After release the object stays put to the end of the settle window.
  const Tick& last = tr.ticks.back();
  CHECK(last.gripper == primitives::GripperState::Open);
  for (auto it = tr.ticks.rbegin(); it != tr.ticks.rend(); ++it) {
    if (it->gripper == primitives::GripperState::Closed) break;
    CHECK((it->object.translation_mm - last.object.translation_mm).norm() < 1e-9);
  }
}

TEST_CASE("slip monitor trips and freezes the object") {
  EpisodeSetup s = flip_setup();
  s.slip_fail_mm_s = 1.0;  // any pivot drift at all trips it
  LatencyConfig lat;
  EpisodeTrace tr = run_episode(s, Mode::Async, lat, 5);
  CHECK(tr.slipped);
  std::int64_t slip_t = -1;
  for (const auto& e : tr.events) {
    if (e.kind == "slip") {
      slip_t = e.t_us;
      break;
    }
  }
  REQUIRE(slip_t >= 0);
  Pose frozen;
  bool have = false;
  for (const auto& tk : tr.ticks) {
    if (tk.t_us < slip_t) continue;
    if (!have) {
      frozen = tk.object;
      have = true;
      continue;
    }
    CHECK((tk.object.translation_mm - frozen.translation_mm).norm() < 1e-12);
  }
  CHECK(have);

  // A generous threshold on the same episode never trips.
  EpisodeSetup ok = flip_setup();
  ok.slip_fail_mm_s = 1e9;
  EpisodeTrace good = run_episode(ok, Mode::Async, lat, 5);
  CHECK_FALSE(good.slipped);
}

TEST_CASE("frame age accounts for inference and transport delay") {
  EpisodeSetup s = pick_setup();
  LatencyConfig lat;
  EpisodeTrace tr = run_episode(s, Mode::Async, lat, 2);
  CHECK(std::isinf(latest_anchor_frame_age(tr, 0)));  // before the first result
  std::size_t i = tr.ticks.size() / 2;
  REQUIRE(tr.ticks[i].frame_id >= 0);
  double age = latest_anchor_frame_age(tr, i);
  CHECK(age >= lat.t_inf_s - 1e-9);
  CHECK(age < lat.t_inf_s + 2.0 * lat.perception_period_s);
  CHECK_THROWS_AS(latest_anchor_frame_age(tr, tr.ticks.size()), std::out_of_range);
}

TEST_CASE("trace files round trip byte identically") {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(AGILE_BINARY_DIR) / "test_tmp";
  fs::create_directories(dir);
  EpisodeSetup s = flip_setup();
  LatencyConfig lat;
  lat.clock_skew_s = 0.02;
  EpisodeTrace tr = run_episode(s, Mode::Sync, lat, 21);
  std::string p1 = (dir / "trace_a.trace").string();
  std::string p2 = (dir / "trace_b.trace").string();
  tr.save(p1);
  EpisodeTrace rt = EpisodeTrace::load(p1);
  rt.save(p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  CHECK(rt.mode == tr.mode);
  CHECK(rt.seed == tr.seed);
  CHECK(rt.ticks.size() == tr.ticks.size());
  CHECK(rt.perception.size() == tr.perception.size());
  CHECK(rt.events.size() == tr.events.size());
  CHECK(rt.slipped == tr.slipped);
  CHECK(rt.setup.object_outline_mm.size() == s.object_outline_mm.size());

  std::string bad = (dir / "bad.trace").string();
  {
    std::ofstream out(bad);
    out << "# agile-trace v1\nmode Async\nnonsense 4\n";
  }
  CHECK_THROWS_WITH_AS(EpisodeTrace::load(bad), doctest::Contains("line 3"),
                       std::runtime_error);
}

TEST_CASE("episodes refuse plans without joint solutions") {
  EpisodeSetup s = pick_setup();
  s.plan = primitives::PrimitivePlan::parse(s.plan.serialize());  // drops joint_path
  LatencyConfig lat;
  CHECK_THROWS_AS(run_episode(s, Mode::Async, lat, 1), std::invalid_argument);
}
