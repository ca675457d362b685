#include "agile/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Geometry>

#include "agile/rng.hpp"

namespace agile::scenario {
namespace {

namespace fs = std::filesystem;

// Stream seed for grasp-point perturbation, kept apart from the runtime's
// clock jitter stream.
constexpr std::uint64_t kAnchorNoiseSalt = 0x9e3779b97f4a7c15ULL;

// Elbow-up rest posture; keeps the first IK solve away from the stretched
// singular pose at zero.
Vector6d default_home() {
  Vector6d q;
  q << 0.0, -1.2, 1.9, -2.27, -1.5707963267948966, 0.0;
  return q;
}

struct RawScenario {
  std::string path;
  // (section, key) -> (value, line number)
  std::map<std::pair<std::string, std::string>, std::pair<std::string, int>> kv;

  ScenarioError fail(int line, const std::string& what) const {
    return ScenarioError(path + ":" + std::to_string(line) + ": " + what);
  }
  bool has(const std::string& sec, const std::string& key) const {
    return kv.count({sec, key}) != 0;
  }
  std::string get(const std::string& sec, const std::string& key) const {
    auto it = kv.find({sec, key});
    return it == kv.end() ? std::string() : it->second.first;
  }
  int line_of(const std::string& sec, const std::string& key) const {
    auto it = kv.find({sec, key});
    return it == kv.end() ? 0 : it->second.second;
  }
};

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

RawScenario read_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot read scenario: " + path);
  RawScenario raw;
  raw.path = path;
  std::string line, section;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw raw.fail(ln, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw raw.fail(ln, "empty section name");
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw raw.fail(ln, "expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (section.empty()) throw raw.fail(ln, "key before any [section]");
    if (key.empty()) throw raw.fail(ln, "empty key");
    if (!raw.kv.emplace(std::make_pair(section, key), std::make_pair(value, ln)).second)
      throw raw.fail(ln, "duplicate key " + section + "." + key);
  }
  return raw;
}

double parse_double(const RawScenario& raw, const std::string& sec, const std::string& key,
                    double fallback) {
  if (!raw.has(sec, key)) return fallback;
  const std::string v = raw.get(sec, key);
  std::istringstream ls(v);
  double out;
  if (!(ls >> out)) throw raw.fail(raw.line_of(sec, key), "bad number for " + key + ": " + v);
  return out;
}

std::vector<double> parse_doubles(const RawScenario& raw, const std::string& sec,
                                  const std::string& key) {
  std::istringstream ls(raw.get(sec, key));
  std::vector<double> out;
  double v;
  while (ls >> v) out.push_back(v);
  return out;
}

Mat3 yaw_rotation(double yaw_rad) {
  return Eigen::AngleAxisd(yaw_rad, Vec3::UnitZ()).toRotationMatrix();
}

// Planar image of a shape-frame point under the object pose. Back-facing
// objects lie on the task face, so the silhouette is the x-mirrored shape.
Vec2 shape_to_world_xy(const Scenario& sc, const Vec2& p_shape) {
  double yaw = deg_to_rad(sc.yaw_deg);
  Vec2 p = p_shape;
  if (sc.initial_cls == geometry::AffordanceClass::Back) p.x() = -p.x();
  double c = std::cos(yaw), s = std::sin(yaw);
  return Vec2(c * p.x() - s * p.y() + sc.x_mm, s * p.x() + c * p.y() + sc.y_mm);
}

Vec2 shape_to_world_dir(const Scenario& sc, const Vec2& v_shape) {
  double yaw = deg_to_rad(sc.yaw_deg);
  Vec2 v = v_shape;
  if (sc.initial_cls == geometry::AffordanceClass::Back) v.x() = -v.x();
  double c = std::cos(yaw), s = std::sin(yaw);
  return Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y());
}

kinematics::Pose start_pose(const Scenario& sc) {
  kinematics::Pose pose;
  double yaw = deg_to_rad(sc.yaw_deg);
  if (sc.initial_cls == geometry::AffordanceClass::Back) {
    // Lying on the task face: own +z points down, silhouette mirrored.
    pose.rotation = yaw_rotation(yaw) *
                    Eigen::AngleAxisd(kPi, Vec3::UnitY()).toRotationMatrix();
    pose.translation_mm = Vec3(sc.x_mm, sc.y_mm, sc.table_height_mm + sc.thickness_mm);
  } else {
    pose.rotation = yaw_rotation(yaw);
    pose.translation_mm = Vec3(sc.x_mm, sc.y_mm, sc.table_height_mm);
  }
  return pose;
}

// Profile of the part in the flip plane: its extent across the edge by its
// thickness. Used for swing clearance, so a bounding rectangle is enough.
geometry::PlanarShape side_view_rect(double span_mm, double thickness_mm) {
  double cell = std::max(0.5, std::min(span_mm, thickness_mm) / 4.0);
  std::vector<Vec2> rect = {Vec2(0.0, 0.0), Vec2(span_mm, 0.0), Vec2(span_mm, thickness_mm),
                            Vec2(0.0, thickness_mm)};
  return geometry::PlanarShape::from_polygon(rect, cell);
}

}  // namespace

Scenario load_scenario(const std::string& path) {
  RawScenario raw = read_raw(path);
  Scenario sc;
  sc.base_dir = fs::path(path).parent_path().string();

  if (!raw.has("object", "shape")) throw ScenarioError(path + ": missing object.shape");
  sc.shape_path = raw.get("object", "shape");
  sc.mass_kg = parse_double(raw, "object", "mass_kg", sc.mass_kg);
  sc.thickness_mm = parse_double(raw, "object", "thickness_mm", sc.thickness_mm);
  if (sc.mass_kg <= 0.0 || sc.thickness_mm <= 0.0)
    throw ScenarioError(path + ": object mass and thickness must be positive");
  if (raw.has("object", "com_mm")) {
    auto v = parse_doubles(raw, "object", "com_mm");
    if (v.size() == 2)
      sc.com_mm = Vec3(v[0], v[1], 0.5 * sc.thickness_mm);
    else if (v.size() == 3)
      sc.com_mm = Vec3(v[0], v[1], v[2]);
    else
      throw raw.fail(raw.line_of("object", "com_mm"), "com_mm wants 2 or 3 numbers");
  } else {
    sc.com_mm.z() = 0.5 * sc.thickness_mm;
  }

  if (raw.has("initial", "state")) {
    std::string s = raw.get("initial", "state");
    if (s == "Front")
      sc.initial_cls = geometry::AffordanceClass::Front;
    else if (s == "Back")
      sc.initial_cls = geometry::AffordanceClass::Back;
    else
      throw raw.fail(raw.line_of("initial", "state"), "state must be Front or Back");
  }
  sc.x_mm = parse_double(raw, "initial", "x_mm", sc.x_mm);
  sc.y_mm = parse_double(raw, "initial", "y_mm", sc.y_mm);
  sc.yaw_deg = parse_double(raw, "initial", "yaw_deg", sc.yaw_deg);
  sc.table_height_mm = parse_double(raw, "initial", "table_height_mm", sc.table_height_mm);

  if (raw.has("edge", "point_mm") != raw.has("edge", "dir"))
    throw ScenarioError(path + ": edge wants both point_mm and dir");
  if (raw.has("edge", "point_mm")) {
    auto p = parse_doubles(raw, "edge", "point_mm");
    auto d = parse_doubles(raw, "edge", "dir");
    if (p.size() != 3) throw raw.fail(raw.line_of("edge", "point_mm"), "point_mm wants 3 numbers");
    if (d.size() != 3) throw raw.fail(raw.line_of("edge", "dir"), "dir wants 3 numbers");
    sc.edge_point_mm = Vec3(p[0], p[1], p[2]);
    sc.edge_dir = Vec3(d[0], d[1], d[2]);
    if (std::abs(sc.edge_dir.z()) > 1e-9)
      throw raw.fail(raw.line_of("edge", "dir"), "edge must be horizontal");
    if (sc.edge_dir.head<2>().norm() < 1e-9)
      throw raw.fail(raw.line_of("edge", "dir"), "edge direction must be nonzero");
    sc.edge_set = true;
  }

  if (raw.has("goal", "pose")) {
    std::string v = raw.get("goal", "pose");
    if (v == "auto") {
      sc.goal_auto = true;
    } else {
      auto n = parse_doubles(raw, "goal", "pose");
      if (n.size() != 12)
        throw raw.fail(raw.line_of("goal", "pose"), "pose wants auto or 12 numbers");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) sc.goal.rotation(r, c) = n[static_cast<std::size_t>(r) * 3 + c];
      sc.goal.translation_mm = Vec3(n[9], n[10], n[11]);
      sc.goal_auto = false;
    }
  }

  sc.latency.t_inf_s = parse_double(raw, "latency", "t_inf_ms", sc.latency.t_inf_s * 1e3) * 1e-3;
  double p_hz = parse_double(raw, "latency", "perception_hz", 1.0 / sc.latency.perception_period_s);
  double c_hz = parse_double(raw, "latency", "control_hz", 1.0 / sc.latency.control_period_s);
  if (p_hz <= 0.0 || c_hz <= 0.0) throw ScenarioError(path + ": stream rates must be positive");
  sc.latency.perception_period_s = 1.0 / p_hz;
  sc.latency.control_period_s = 1.0 / c_hz;
  sc.latency.eps_sync_s = parse_double(raw, "latency", "eps_sync_ms", sc.latency.eps_sync_s * 1e3) * 1e-3;
  sc.latency.clock_skew_s =
      parse_double(raw, "latency", "clock_skew_ms", sc.latency.clock_skew_s * 1e3) * 1e-3;
  if (sc.latency.t_inf_s < 0.0 || sc.latency.eps_sync_s < 0.0 || sc.latency.clock_skew_s < 0.0)
    throw ScenarioError(path + ": latency values must be nonnegative");

  if (raw.has("run", "mode")) {
    std::string m = raw.get("run", "mode");
    if (m == "Async")
      sc.mode = runtime::Mode::Async;
    else if (m == "Sync")
      sc.mode = runtime::Mode::Sync;
    else
      throw raw.fail(raw.line_of("run", "mode"), "mode must be Async or Sync");
  }
  if (raw.has("run", "anchor_strategy")) {
    std::string a = raw.get("run", "anchor_strategy");
    if (a == "Implicit")
      sc.anchor_strategy = AnchorStrategy::Implicit;
    else if (a == "GlobalCentroid")
      sc.anchor_strategy = AnchorStrategy::GlobalCentroid;
    else
      throw raw.fail(raw.line_of("run", "anchor_strategy"),
                     "anchor_strategy must be Implicit or GlobalCentroid");
  }
  if (raw.has("run", "flip_strategy")) {
    std::string f = raw.get("run", "flip_strategy");
    if (f == "Pivot")
      sc.flip_strategy = FlipStrategy::Pivot;
    else if (f == "Direct")
      sc.flip_strategy = FlipStrategy::Direct;
    else
      throw raw.fail(raw.line_of("run", "flip_strategy"),
                     "flip_strategy must be Pivot or Direct");
  }
  if (raw.has("run", "seed")) {
    std::istringstream ls(raw.get("run", "seed"));
    if (!(ls >> sc.seed)) throw raw.fail(raw.line_of("run", "seed"), "bad seed");
  }
  sc.anchor_noise_mm = parse_double(raw, "run", "anchor_noise_mm", sc.anchor_noise_mm);

  sc.slip_fail_mm_s = parse_double(raw, "thresholds", "slip_fail_mm_s", sc.slip_fail_mm_s);
  sc.tol_rot_deg = parse_double(raw, "thresholds", "tol_rot_deg", sc.tol_rot_deg);
  sc.tol_pos_mm = parse_double(raw, "thresholds", "tol_pos_mm", sc.tol_pos_mm);
  sc.friction_mu = parse_double(raw, "thresholds", "friction_mu", sc.friction_mu);
  sc.eps_tau_nm = parse_double(raw, "thresholds", "eps_tau_nm", sc.eps_tau_nm);
  if (raw.has("thresholds", "arm")) {
    std::string a = raw.get("thresholds", "arm");
    if (a != "default") sc.arm_path = a;
  }

  for (const auto& [sk, vl] : raw.kv) {
    static const std::map<std::string, std::vector<std::string>> known = {
        {"object", {"shape", "mass_kg", "com_mm", "thickness_mm"}},
        {"initial", {"state", "x_mm", "y_mm", "yaw_deg", "table_height_mm"}},
        {"edge", {"point_mm", "dir"}},
        {"goal", {"pose"}},
        {"latency", {"t_inf_ms", "perception_hz", "control_hz", "eps_sync_ms", "clock_skew_ms"}},
        {"run", {"mode", "anchor_strategy", "flip_strategy", "seed", "anchor_noise_mm"}},
        {"thresholds",
         {"slip_fail_mm_s", "tol_rot_deg", "tol_pos_mm", "friction_mu", "eps_tau_nm", "arm"}},
    };
    auto sec = known.find(sk.first);
    if (sec == known.end())
      throw raw.fail(vl.second, "unknown section [" + sk.first + "]");
    if (std::find(sec->second.begin(), sec->second.end(), sk.second) == sec->second.end())
      throw raw.fail(vl.second, "unknown key " + sk.first + "." + sk.second);
  }
  return sc;
}

PipelineSetup build_setup(const Scenario& sc) {
  PipelineSetup out;
  fs::path shape_file = fs::path(sc.shape_path);
  if (shape_file.is_relative() && !sc.base_dir.empty())
    shape_file = fs::path(sc.base_dir) / shape_file;
  out.shape = geometry::PlanarShape::load(shape_file.string());

  kinematics::ArmModel arm;
  if (sc.arm_path.empty()) {
    arm = kinematics::ArmModel::default_arm();
  } else {
    fs::path arm_file = fs::path(sc.arm_path);
    if (arm_file.is_relative() && !sc.base_dir.empty())
      arm_file = fs::path(sc.base_dir) / arm_file;
    arm = kinematics::ArmModel::load(arm_file.string());
  }

  const kinematics::Pose obj_start = start_pose(sc);

  // Perceive: pick the task anchor on the exposed face.
  Vec2 anchor_shape;
  if (sc.anchor_strategy == AnchorStrategy::GlobalCentroid) {
    anchor_shape = geometry::centroid(out.shape);
  } else if (sc.initial_cls == geometry::AffordanceClass::Front) {
    anchor_shape = geometry::stability_anchor(out.shape).anchor;
  } else {
    anchor_shape = geometry::pivot_anchor(out.shape).anchor;
  }
  Vec2 anchor_xy = shape_to_world_xy(sc, anchor_shape);
  Vec3 anchor_world(anchor_xy.x(), anchor_xy.y(), sc.table_height_mm + sc.thickness_mm);
  if (sc.anchor_noise_mm > 0.0) {
    Rng noise(sc.seed ^ kAnchorNoiseSalt);
    anchor_world.x() += sc.anchor_noise_mm * noise.normal(0.0, 1.0);
    anchor_world.y() += sc.anchor_noise_mm * noise.normal(0.0, 1.0);
  }
  out.anchor_world_mm = anchor_world;

  // Table edge; when unset, a line just past the far side of the part.
  Vec3 edge_point = sc.edge_point_mm;
  Vec3 edge_dir = sc.edge_dir;
  if (!sc.edge_set) {
    double max_x = -1e18;
    for (const Vec2& v : out.shape.polygon()) max_x = std::max(max_x, shape_to_world_xy(sc, v).x());
    edge_point = Vec3(max_x + 2.0, sc.y_mm, sc.table_height_mm);
    edge_dir = Vec3::UnitY();
  }
  edge_dir.z() = 0.0;
  edge_dir.normalize();

  // Orbit plane passes through the grasp: pivot point is the closest point of
  // the edge line, at table level.
  Vec3 pivot_point = edge_point + (anchor_world - edge_point).dot(edge_dir) * edge_dir;
  pivot_point.z() = sc.table_height_mm;

  // Span across the edge, for swing clearance.
  Vec3 w_axis = Vec3::UnitZ().cross(edge_dir);
  double w_min = 1e18, w_max = -1e18;
  for (const Vec2& v : out.shape.polygon()) {
    Vec2 p = shape_to_world_xy(sc, v);
    double w = (Vec3(p.x(), p.y(), sc.table_height_mm) - pivot_point).dot(w_axis);
    w_min = std::min(w_min, w);
    w_max = std::max(w_max, w);
  }
  double span = std::max(1.0, w_max - w_min);

  out.object.side_view = side_view_rect(span, sc.thickness_mm);
  out.object.mass_kg = sc.mass_kg;
  out.object.com_mm = sc.com_mm;
  out.object.thickness_mm = sc.thickness_mm;

  out.pivot.pivot_point_mm = pivot_point;
  out.pivot.pivot_dir = edge_dir;
  out.pivot.grasp_point_mm = obj_start.inverse().apply(anchor_world);
  out.pivot.object_pose_world = obj_start;
  out.pivot.friction_mu = sc.friction_mu;
  out.pivot.theta_rad = 0.0;
  out.pivot.eps_tau_nm = sc.eps_tau_nm;

  // Goal pose.
  kinematics::Pose goal = sc.goal;
  if (sc.goal_auto) {
    if (sc.initial_cls == geometry::AffordanceClass::Back) {
      Mat3 flip = Eigen::AngleAxisd(kPi, edge_dir).toRotationMatrix();
      goal.rotation = flip * obj_start.rotation;
      goal.translation_mm = pivot_point + flip * (obj_start.translation_mm - pivot_point);
    } else {
      goal = obj_start;
      goal.translation_mm.x() -= 120.0;
    }
  }

  primitives::PlanConfig plan_cfg;
  plan_cfg.home_q = default_home();

  primitives::PrimitivePlan plan;
  geometry::AffordanceObservation obs;
  obs.cls = sc.initial_cls;
  obs.anchor = anchor_xy;
  if (primitives::select_primitive(obs) == primitives::PrimitiveId::StablePickPlace) {
    // Object goal -> tool place pose via the rigid grasp.
    kinematics::Pose grasp_tcp;
    grasp_tcp.rotation = primitives::top_down_orientation();
    grasp_tcp.translation_mm = anchor_world;
    kinematics::Pose place_tcp = goal.compose(obj_start.inverse()).compose(grasp_tcp);
    plan = primitives::plan_pick_place(anchor_world, place_tcp, plan_cfg, arm);
  } else {
    primitives::PivotPlanParams params;
    if (sc.anchor_strategy == AnchorStrategy::GlobalCentroid) {
      out.tangent_world = Vec2(edge_dir.x(), edge_dir.y()).normalized();
    } else {
      Vec2 t_shape = geometry::rim_tangent(out.shape, anchor_shape);
      out.tangent_world = shape_to_world_dir(sc, t_shape).normalized();
    }
    params.tangent = out.tangent_world;
    params.pivot_point_mm = pivot_point;
    params.pivot_dir = edge_dir;
    if (sc.flip_strategy == FlipStrategy::Pivot)
      plan = primitives::plan_pivot_flip(anchor_world, params, out.object, out.pivot, plan_cfg,
                                         arm);
    else
      plan = primitives::plan_direct_flip(anchor_world, params, out.object, out.pivot, plan_cfg,
                                          arm);
  }

  runtime::EpisodeSetup& ep = out.episode;
  ep.arm = arm;
  ep.plan = plan;
  ep.object_start = obj_start;
  ep.goal = goal;
  ep.object_thickness_mm = sc.thickness_mm;
  ep.object_mass_kg = sc.mass_kg;
  ep.object_com_mm = sc.com_mm;
  ep.grasp_point_obj_mm = out.pivot.grasp_point_mm;
  ep.friction_mu = sc.friction_mu;
  ep.eps_tau_nm = sc.eps_tau_nm;
  ep.object_outline_mm = out.shape.polygon();
  ep.pivot_point_mm = pivot_point;
  ep.pivot_dir = edge_dir;
  ep.pivot_contact = sc.initial_cls == geometry::AffordanceClass::Back &&
                     sc.flip_strategy == FlipStrategy::Pivot;
  ep.slip_fail_mm_s = sc.slip_fail_mm_s;
  ep.table_height_mm = sc.table_height_mm;
  ep.tol_rot_deg = sc.tol_rot_deg;
  ep.tol_pos_mm = sc.tol_pos_mm;
  return out;
}

PipelineResult run_scenario(const Scenario& sc) {
  PipelineSetup setup = build_setup(sc);
  PipelineResult result;
  result.trace = runtime::run_episode(setup.episode, sc.mode, sc.latency, sc.seed);
  result.report = metrics::make_report(result.trace);
  return result;
}

}  // namespace agile::scenario
