#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "agile/common.hpp"
#include "agile/dynamics.hpp"
#include "agile/geometry.hpp"
#include "agile/kinematics.hpp"

namespace agile::primitives {

struct UnreachableWaypoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InfeasibleFlip : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PrimitiveId { StablePickPlace, PivotFlip };
enum class GripperState { Open, Closed };
enum class PhaseTag { Approach, Grasp, Transit, Rotate, Place, Retract };

const char* to_string(PhaseTag tag);
const char* to_string(GripperState g);
PhaseTag phase_from_string(const std::string& s);
GripperState gripper_from_string(const std::string& s);

struct Waypoint {
  double t_s = 0.0;
  kinematics::Pose tcp;
  GripperState gripper = GripperState::Open;
  PhaseTag phase = PhaseTag::Approach;
};

// Velocity profile for a straight segment: accelerate at a_max, cruise at
// v_max when the distance allows, else peak below v_max (triangular case).
struct TrapezoidProfile {
  double distance_mm = 0.0;
  double v_max_mm_s = 0.0;
  double a_max_mm_s2 = 0.0;
  double t_accel_s = 0.0;
  double t_cruise_s = 0.0;
  double v_peak_mm_s = 0.0;
  double t_total_s = 0.0;

  double position_mm(double t_s) const;
  double velocity_mm_s(double t_s) const;
};

TrapezoidProfile trapezoid_profile(double distance_mm, double v_max_mm_s, double a_max_mm_s2);

struct PlanConfig {
  double v_max_mm_s = 150.0;
  double a_max_mm_s2 = 400.0;
  double waypoint_period_s = 0.1;
  double approach_height_mm = 80.0;
  double retract_height_mm = 80.0;
  double transit_hover_mm = 40.0;
  double gripper_delay_s = 0.2;
  Vector6d home_q = Vector6d::Zero();  // IK seed for the first waypoint
};

struct PivotPlanParams {
  double theta_pre_rad = deg_to_rad(10.0);
  double rotate_rate_rad_s = 0.5;
  Vec2 tangent = Vec2::UnitX();        // rim tangent at the anchor, table plane
  Vec3 pivot_point_mm = Vec3::Zero();  // world, on the table plane
  Vec3 pivot_dir = Vec3::UnitY();      // world, horizontal
};

struct PrimitivePlan {
  PrimitiveId id = PrimitiveId::StablePickPlace;
  std::vector<Waypoint> waypoints;
  // Joint solutions for each waypoint, derived by seeding each IK solve with
  // the previous solution starting from home. Not serialized; rebuilt
  // deterministically by the same rule.
  std::vector<Vector6d> joint_path;

  double duration_s() const { return waypoints.empty() ? 0.0 : waypoints.back().t_s; }

  // One line per waypoint: t, the 3x4 pose matrix (rotation | translation)
  // row major, gripper, phase. Round trips bit exactly.
  std::string serialize() const;
  static PrimitivePlan parse(const std::string& text);
  void save(const std::string& path) const;
  static PrimitivePlan load(const std::string& path);
};

// Front face up: grasp where the part is stable. Back face up: flip it on an
// edge first.
PrimitiveId select_primitive(const geometry::AffordanceObservation& obs);

// Tool frame for a vertical pick: z into the table, x along world x.
Mat3 top_down_orientation();

// Top-down pick at the anchor, straight transit with a hover hop, place at
// the goal. Degenerates to grasp and release in place when goal equals pick.
PrimitivePlan plan_pick_place(const Vec3& anchor_world_mm, const kinematics::Pose& goal,
                              const PlanConfig& cfg, const kinematics::ArmModel& arm);

// Edge flip: tilted tangential approach, pivoting grasp, circular leverage
// rotation about the pivot line to pi, vertical retract. The grasp is rigid,
// so the tool rotates with the object during the arc.
PrimitivePlan plan_pivot_flip(const Vec3& anchor_world_mm, const PivotPlanParams& params,
                              const dynamics::RigidObject& obj,
                              const dynamics::PivotConfig& pivot_cfg, const PlanConfig& cfg,
                              const kinematics::ArmModel& arm);

// Unsupported aerial flip used as the ablation baseline: lift the part, turn
// it 180 degrees about the grasp axis at height, set it down. Pays the full
// gravity moment at the wrist and sweeps the tool through orientations that
// graze the wrist singularity.
PrimitivePlan plan_direct_flip(const Vec3& anchor_world_mm, const PivotPlanParams& params,
                               const dynamics::RigidObject& obj,
                               const dynamics::PivotConfig& pivot_cfg, const PlanConfig& cfg,
                               const kinematics::ArmModel& arm);

}  // namespace agile::primitives
