#include "agile/primitives.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace agile::primitives {

const char* to_string(PhaseTag tag) {
  switch (tag) {
    case PhaseTag::Approach: return "Approach";
    case PhaseTag::Grasp: return "Grasp";
    case PhaseTag::Transit: return "Transit";
    case PhaseTag::Rotate: return "Rotate";
    case PhaseTag::Place: return "Place";
    case PhaseTag::Retract: return "Retract";
  }
  return "Approach";
}

const char* to_string(GripperState g) {
  return g == GripperState::Open ? "Open" : "Closed";
}

PhaseTag phase_from_string(const std::string& s) {
  if (s == "Approach") return PhaseTag::Approach;
  if (s == "Grasp") return PhaseTag::Grasp;
  if (s == "Transit") return PhaseTag::Transit;
  if (s == "Rotate") return PhaseTag::Rotate;
  if (s == "Place") return PhaseTag::Place;
  if (s == "Retract") return PhaseTag::Retract;
  throw std::runtime_error("unknown phase tag: " + s);
}

GripperState gripper_from_string(const std::string& s) {
  if (s == "Open") return GripperState::Open;
  if (s == "Closed") return GripperState::Closed;
  throw std::runtime_error("unknown gripper state: " + s);
}

TrapezoidProfile trapezoid_profile(double distance_mm, double v_max_mm_s, double a_max_mm_s2) {
  if (distance_mm < 0 || v_max_mm_s <= 0 || a_max_mm_s2 <= 0)
    throw std::invalid_argument("trapezoid profile needs positive limits");
  TrapezoidProfile p;
  p.distance_mm = distance_mm;
  p.v_max_mm_s = v_max_mm_s;
  p.a_max_mm_s2 = a_max_mm_s2;
  if (distance_mm == 0.0) return p;
  double d_crit = v_max_mm_s * v_max_mm_s / a_max_mm_s2;
  if (distance_mm >= d_crit) {
    p.v_peak_mm_s = v_max_mm_s;
    p.t_accel_s = v_max_mm_s / a_max_mm_s2;
    p.t_cruise_s = distance_mm / v_max_mm_s - v_max_mm_s / a_max_mm_s2;
  } else {
    p.v_peak_mm_s = std::sqrt(distance_mm * a_max_mm_s2);
    p.t_accel_s = p.v_peak_mm_s / a_max_mm_s2;
    p.t_cruise_s = 0.0;
  }
  p.t_total_s = 2.0 * p.t_accel_s + p.t_cruise_s;
  return p;
}

double TrapezoidProfile::position_mm(double t_s) const {
  if (t_s <= 0.0 || distance_mm == 0.0) return 0.0;
  if (t_s >= t_total_s) return distance_mm;
  double a = a_max_mm_s2;
  if (t_s < t_accel_s) return 0.5 * a * t_s * t_s;
  double d_acc = 0.5 * a * t_accel_s * t_accel_s;
  if (t_s < t_accel_s + t_cruise_s) return d_acc + v_peak_mm_s * (t_s - t_accel_s);
  double td = t_total_s - t_s;
  return distance_mm - 0.5 * a * td * td;
}

double TrapezoidProfile::velocity_mm_s(double t_s) const {
  if (t_s <= 0.0 || t_s >= t_total_s || distance_mm == 0.0) return 0.0;
  double a = a_max_mm_s2;
  if (t_s < t_accel_s) return a * t_s;
  if (t_s < t_accel_s + t_cruise_s) return v_peak_mm_s;
  return a * (t_total_s - t_s);
}

PrimitiveId select_primitive(const geometry::AffordanceObservation& obs) {
  return obs.cls == geometry::AffordanceClass::Front ? PrimitiveId::StablePickPlace
                                                     : PrimitiveId::PivotFlip;
}

Mat3 top_down_orientation() {
  Mat3 r;
  r.col(0) = Vec3::UnitX();
  r.col(1) = -Vec3::UnitY();
  r.col(2) = -Vec3::UnitZ();
  return r;
}

namespace {

Mat3 slerp(const Mat3& a, const Mat3& b, double s) {
  Eigen::AngleAxisd rel(a.transpose() * b);
  return a * Eigen::AngleAxisd(s * rel.angle(), rel.axis()).toRotationMatrix();
}

class PlanBuilder {
 public:
  PlanBuilder(PrimitiveId id, const PlanConfig& cfg) : cfg_(cfg) { plan_.id = id; }

  void start(const kinematics::Pose& pose, GripperState g, PhaseTag phase) {
    Waypoint w;
    w.t_s = 0.0;
    w.tcp = pose;
    w.gripper = g;
    w.phase = phase;
    plan_.waypoints.push_back(w);
  }

  // Straight segment under a trapezoid profile; orientation slerps with arc
  // length. Emits waypoints strictly after the current end time.
  void straight(const kinematics::Pose& to, GripperState g, PhaseTag phase) {
    const kinematics::Pose from = plan_.waypoints.back().tcp;
    Vec3 delta = to.translation_mm - from.translation_mm;
    double dist = delta.norm();
    double ang = kinematics::rotation_angle_rad(from.rotation, to.rotation);
    if (dist < 1e-9 && ang < 1e-9) return;
    double t0 = plan_.waypoints.back().t_s;
    double duration;
    TrapezoidProfile prof;
    if (dist >= 1e-9) {
      prof = trapezoid_profile(dist, cfg_.v_max_mm_s, cfg_.a_max_mm_s2);
      duration = prof.t_total_s;
    } else {
      duration = ang / kOrientRate;
    }
    emit(t0, duration, [&](double t) {
      Waypoint w;
      double s = dist >= 1e-9 ? prof.position_mm(t) / dist : t / duration;
      w.tcp.translation_mm = from.translation_mm + s * delta;
      w.tcp.rotation = ang < 1e-12 ? from.rotation : slerp(from.rotation, to.rotation, s);
      w.gripper = g;
      w.phase = phase;
      return w;
    });
  }

  // Hold position for `duration`, switching the gripper.
  void dwell(double duration, GripperState g, PhaseTag phase) {
    const kinematics::Pose pose = plan_.waypoints.back().tcp;
    double t0 = plan_.waypoints.back().t_s;
    emit(t0, duration, [&](double) {
      Waypoint w;
      w.tcp = pose;
      w.gripper = g;
      w.phase = phase;
      return w;
    });
  }

  // Circular arc about an axis line, rigid tool: position orbits the line,
  // orientation accumulates the same rotation.
  void arc(const Vec3& axis_point, const Vec3& axis_unit, double angle_from, double angle_to,
           double rate, GripperState g, PhaseTag phase) {
    const kinematics::Pose base = plan_.waypoints.back().tcp;
    double span = angle_to - angle_from;
    if (std::abs(span) < 1e-12) return;
    double duration = std::abs(span) / rate;
    double t0 = plan_.waypoints.back().t_s;
    Vec3 r0 = base.translation_mm - axis_point;
    emit(t0, duration, [&](double t) {
      double phi = span * (t / duration);
      Mat3 rot = kinematics::axis_angle(axis_unit, phi);
      Waypoint w;
      w.tcp.translation_mm = axis_point + rot * r0;
      w.tcp.rotation = rot * base.rotation;
      w.gripper = g;
      w.phase = phase;
      return w;
    });
  }

  const kinematics::Pose& last_pose() const { return plan_.waypoints.back().tcp; }

  PrimitivePlan finish(const kinematics::ArmModel& arm) {
    plan_.joint_path.reserve(plan_.waypoints.size());
    kinematics::RobotState seed;
    seed.q = cfg_.home_q;
    for (std::size_t i = 0; i < plan_.waypoints.size(); ++i) {
      try {
        kinematics::RobotState sol =
            kinematics::inverse_kinematics(plan_.waypoints[i].tcp, seed, arm);
        plan_.joint_path.push_back(sol.q);
        seed = sol;
      } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << to_string(plan_.waypoints[i].phase) << " waypoint " << i
            << " unreachable: " << e.what();
        throw UnreachableWaypoint(msg.str());
      }
    }
    return std::move(plan_);
  }

 private:
  static constexpr double kOrientRate = 0.5;  // rad/s for pure reorientation

  template <class Fn>
  void emit(double t0, double duration, Fn&& at) {
    int n = std::max(1, static_cast<int>(std::ceil(duration / cfg_.waypoint_period_s - 1e-9)));
    for (int k = 1; k <= n; ++k) {
      double t = std::min(duration, k * cfg_.waypoint_period_s);
      Waypoint w = at(t);
      w.t_s = t0 + t;
      plan_.waypoints.push_back(w);
    }
    // Land exactly on the segment end.
    plan_.waypoints.back() = [&] {
      Waypoint w = at(duration);
      w.t_s = t0 + duration;
      return w;
    }();
  }

  PlanConfig cfg_;
  PrimitivePlan plan_;
};

}  // namespace

PrimitivePlan plan_pick_place(const Vec3& anchor_world_mm, const kinematics::Pose& goal,
                              const PlanConfig& cfg, const kinematics::ArmModel& arm) {
  PlanBuilder b(PrimitiveId::StablePickPlace, cfg);
  kinematics::Pose grasp;
  grasp.rotation = top_down_orientation();
  grasp.translation_mm = anchor_world_mm;
  kinematics::Pose high = grasp;
  high.translation_mm.z() += cfg.approach_height_mm;

  b.start(high, GripperState::Open, PhaseTag::Approach);
  b.straight(grasp, GripperState::Open, PhaseTag::Approach);
  b.dwell(cfg.gripper_delay_s, GripperState::Closed, PhaseTag::Grasp);

  bool same_pose = (goal.translation_mm - grasp.translation_mm).norm() < 1e-9 &&
                   kinematics::rotation_angle_rad(goal.rotation, grasp.rotation) < 1e-9;
  if (!same_pose) {
    kinematics::Pose hover_a = grasp;
    hover_a.translation_mm.z() += cfg.transit_hover_mm;
    kinematics::Pose hover_b = goal;
    hover_b.translation_mm.z() += cfg.transit_hover_mm;
    hover_b.rotation = goal.rotation;
    hover_a.rotation = grasp.rotation;
    b.straight(hover_a, GripperState::Closed, PhaseTag::Transit);
    b.straight(hover_b, GripperState::Closed, PhaseTag::Transit);
    kinematics::Pose place = goal;
    b.straight(place, GripperState::Closed, PhaseTag::Transit);
  }
  b.dwell(cfg.gripper_delay_s, GripperState::Open, PhaseTag::Place);
  kinematics::Pose up = same_pose ? grasp : goal;
  up.translation_mm.z() += cfg.retract_height_mm;
  b.straight(up, GripperState::Open, PhaseTag::Retract);
  return b.finish(arm);
}

namespace {

// Pivot axis oriented so that rotating the object about it lifts the side
// carrying the COM, matching the flip-plane convention in dynamics.
Vec3 oriented_pivot_axis(const Vec3& pivot_dir, const Vec3& pivot_point, const Vec3& com_world) {
  Vec3 u = pivot_dir - pivot_dir.dot(Vec3::UnitZ()) * Vec3::UnitZ();
  if (u.norm() < 1e-9) throw std::invalid_argument("pivot direction must be horizontal");
  u.normalize();
  Vec3 w = Vec3::UnitZ().cross(u);
  if (w.dot(com_world - pivot_point) < 0) u = -u;
  return u;
}

}  // namespace

PrimitivePlan plan_pivot_flip(const Vec3& anchor_world_mm, const PivotPlanParams& params,
                              const dynamics::RigidObject& obj,
                              const dynamics::PivotConfig& pivot_cfg, const PlanConfig& cfg,
                              const kinematics::ArmModel& arm) {
  dynamics::PivotConfig sweep_cfg = pivot_cfg;
  sweep_cfg.theta_rad = 0.0;
  dynamics::TorqueProfile prof = dynamics::quasi_static_flip_rollout(obj, sweep_cfg, 360);
  if (!prof.feasible()) {
    std::ostringstream msg;
    msg << "flip infeasible: friction cone violated at theta=" << prof.violation_thetas.front();
    throw InfeasibleFlip(msg.str());
  }

  Vec3 com_world = pivot_cfg.object_pose_world.apply(obj.com_mm);
  Vec3 u = oriented_pivot_axis(params.pivot_dir, params.pivot_point_mm, com_world);
  Vec3 t_h(params.tangent.x(), params.tangent.y(), 0.0);
  if (t_h.norm() < 1e-9) throw std::invalid_argument("rim tangent must be nonzero");
  t_h.normalize();

  // Grasp pose: tool pre-rolled by theta_pre about the pivot axis, so the
  // rigid arc continues it without an orientation jump.
  Mat3 pre_roll = kinematics::axis_angle(u, params.theta_pre_rad);
  kinematics::Pose grasp;
  grasp.rotation = pre_roll * top_down_orientation();
  grasp.translation_mm = anchor_world_mm;

  // Approach start: back off along the tangent-vertical plane, tilted by
  // theta_pre, dropping approach_height vertically.
  double c = std::cos(params.theta_pre_rad), s = std::sin(params.theta_pre_rad);
  double back = cfg.approach_height_mm / c;
  kinematics::Pose high = grasp;
  high.translation_mm = anchor_world_mm + back * (s * t_h + c * Vec3::UnitZ());

  PlanBuilder b(PrimitiveId::PivotFlip, cfg);
  b.start(high, GripperState::Open, PhaseTag::Approach);
  b.straight(grasp, GripperState::Open, PhaseTag::Approach);
  // Close, then wedge the part up to the pre-tilt while holding the rim.
  b.dwell(cfg.gripper_delay_s, GripperState::Closed, PhaseTag::Grasp);
  b.arc(params.pivot_point_mm, u, 0.0, params.theta_pre_rad, params.rotate_rate_rad_s,
        GripperState::Closed, PhaseTag::Grasp);
  b.arc(params.pivot_point_mm, u, params.theta_pre_rad, kPi, params.rotate_rate_rad_s,
        GripperState::Closed, PhaseTag::Rotate);
  kinematics::Pose end = b.last_pose();
  end.translation_mm.z() += cfg.retract_height_mm;
  b.straight(end, GripperState::Closed, PhaseTag::Retract);
  return b.finish(arm);
}

PrimitivePlan plan_direct_flip(const Vec3& anchor_world_mm, const PivotPlanParams& params,
                               const dynamics::RigidObject& obj,
                               const dynamics::PivotConfig& pivot_cfg, const PlanConfig& cfg,
                               const kinematics::ArmModel& arm) {
  Vec3 com_world = pivot_cfg.object_pose_world.apply(obj.com_mm);
  Vec3 u = oriented_pivot_axis(params.pivot_dir, params.pivot_point_mm, com_world);

  // Clearance so the part, swung about the grasp axis, never dips into the
  // table: lift above its own swing radius.
  double span = obj.side_view.width() * obj.side_view.cell_mm();
  double r_max = std::hypot(span, obj.thickness_mm);
  double lift = r_max + 30.0;

  kinematics::Pose grasp;
  grasp.rotation = top_down_orientation();
  grasp.translation_mm = anchor_world_mm;
  kinematics::Pose high = grasp;
  high.translation_mm.z() += cfg.approach_height_mm;
  kinematics::Pose lifted = grasp;
  lifted.translation_mm.z() = anchor_world_mm.z() + lift;

  // Landing tool point: the same place the edge pivot would deliver the
  // grasp to, so a clean direct flip reaches the same planar goal.
  Mat3 full_turn = kinematics::axis_angle(u, kPi);
  Vec3 land = params.pivot_point_mm + full_turn * (anchor_world_mm - params.pivot_point_mm);
  kinematics::Pose landed;
  landed.rotation = full_turn * grasp.rotation;
  landed.translation_mm = land + Vec3(0.0, 0.0, cfg.retract_height_mm);

  PlanBuilder b(PrimitiveId::PivotFlip, cfg);
  b.start(high, GripperState::Open, PhaseTag::Approach);
  b.straight(grasp, GripperState::Open, PhaseTag::Approach);
  b.dwell(cfg.gripper_delay_s, GripperState::Closed, PhaseTag::Grasp);
  b.straight(lifted, GripperState::Closed, PhaseTag::Rotate);
  b.arc(lifted.translation_mm, u, 0.0, kPi, params.rotate_rate_rad_s, GripperState::Closed,
        PhaseTag::Rotate);
  b.straight(landed, GripperState::Closed, PhaseTag::Retract);
  return b.finish(arm);
}

std::string PrimitivePlan::serialize() const {
  std::ostringstream out;
  for (const auto& w : waypoints) {
    out << format_full(w.t_s);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << ' ' << format_full(w.tcp.rotation(r, c));
      out << ' ' << format_full(w.tcp.translation_mm(r));
    }
    out << ' ' << to_string(w.gripper) << ' ' << to_string(w.phase) << '\n';
  }
  return out.str();
}

PrimitivePlan PrimitivePlan::parse(const std::string& text) {
  PrimitivePlan plan;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  double prev_t = -1.0;
  bool saw_rotate = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Waypoint w;
    std::string grip, phase;
    bool ok = static_cast<bool>(ls >> w.t_s);
    for (int r = 0; r < 3 && ok; ++r) {
      for (int c = 0; c < 3 && ok; ++c) ok = static_cast<bool>(ls >> w.tcp.rotation(r, c));
      if (ok) ok = static_cast<bool>(ls >> w.tcp.translation_mm(r));
    }
    if (ok) ok = static_cast<bool>(ls >> grip >> phase);
    if (!ok) {
      std::ostringstream msg;
      msg << "plan line " << line_no << " malformed";
      throw std::runtime_error(msg.str());
    }
    w.gripper = gripper_from_string(grip);
    w.phase = phase_from_string(phase);
    if (w.t_s <= prev_t) {
      std::ostringstream msg;
      msg << "plan line " << line_no << " breaks time ordering";
      throw std::runtime_error(msg.str());
    }
    prev_t = w.t_s;
    if (w.phase == PhaseTag::Rotate) saw_rotate = true;
    plan.waypoints.push_back(w);
  }
  if (plan.waypoints.empty()) throw std::runtime_error("plan has no waypoints");
  plan.id = saw_rotate ? PrimitiveId::PivotFlip : PrimitiveId::StablePickPlace;
  return plan;
}

void PrimitivePlan::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plan: " + path);
  out << serialize();
}

PrimitivePlan PrimitivePlan::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plan: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace agile::primitives
