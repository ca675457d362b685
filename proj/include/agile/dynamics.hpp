#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "agile/common.hpp"
#include "agile/geometry.hpp"
#include "agile/kinematics.hpp"

namespace agile::dynamics {

struct NegativeNormalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FrictionConeViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ZeroLeverArm : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kGravityMs2 = 9.81;

// Part being reoriented. side_view is the silhouette in the flip plane
// (horizontal extent by thickness); com_mm is in the object frame.
struct RigidObject {
  geometry::PlanarShape side_view;
  double mass_kg = 0.0;
  Vec3 com_mm = Vec3::Zero();
  double thickness_mm = 0.0;
};

// Edge pivot description. The pivot line lies on the table plane; the grasp
// point is on the object rim, in the object frame. object_pose_world places
// the object frame in the world at flip start.
struct PivotConfig {
  Vec3 pivot_point_mm = Vec3::Zero();   // world, on the table plane
  Vec3 pivot_dir = Vec3::UnitY();       // world, horizontal
  Vec3 grasp_point_mm = Vec3::Zero();   // object frame, on the rim
  kinematics::Pose object_pose_world;
  double friction_mu = 0.5;
  double theta_rad = 0.0;               // current flip angle
  double eps_tau_nm = 0.05;             // equilibrium margin
};

// Moments about the pivot axis for one flip angle. Signs: positive moment
// resists the flip direction. With a line contact the support reaction acts
// on the moment axis itself, so its moment contribution is identically zero;
// the offloading shows up as the arm working about a long lever instead of
// carrying the full gravity moment at the wrist.
struct TorqueBreakdown {
  double theta_rad = 0.0;
  double tau_gravity_nm = 0.0;
  double tau_support_nm = 0.0;
  double tau_arm_nm = 0.0;          // required at the contact, about the pivot
  double tau_net_nm = 0.0;          // tau_arm + tau_support - tau_gravity
  Vec3 arm_force_n = Vec3::Zero();        // world
  Vec3 reaction_force_n = Vec3::Zero();   // world, at the pivot line
  double reaction_normal_n = 0.0;
  double reaction_tangential_n = 0.0;
  bool friction_feasible = true;
};

struct TorqueProfile {
  std::vector<TorqueBreakdown> rows;
  double peak_tau_arm_nm = 0.0;        // max |tau_arm| over the sweep
  double peak_reaction_n = 0.0;
  std::vector<double> violation_thetas;
  bool feasible() const { return violation_thetas.empty(); }
  void save_csv(const std::string& path) const;
};

// Gravity moment about the pivot axis, N*m, positive while the weight
// resists the flip.
double gravity_torque(const RigidObject& obj, const PivotConfig& cfg);

// Quasi-static requirement for one angle. Throws FrictionConeViolation when
// the pivot contact cannot supply the needed reaction, NegativeNormal when
// the contact would have to pull.
TorqueBreakdown required_arm_torque_pivot(const RigidObject& obj, const PivotConfig& cfg);

// Wrist moment for an unsupported aerial rotation about the grasp axis, N*m.
double required_wrist_torque_direct(const RigidObject& obj, const PivotConfig& cfg,
                                    double theta_rad);

// reaction in world N; feasible iff tangential within the friction cone.
bool friction_cone_check(const Vec3& reaction_force_n, double mu);

// Sweep theta from cfg.theta_rad to pi in `steps` increments (steps+1 rows).
// Violations are recorded per row, never thrown, so infeasible ranges can be
// inspected and exported.
TorqueProfile quasi_static_flip_rollout(const RigidObject& obj, const PivotConfig& cfg,
                                        int steps);

namespace serial {
TorqueProfile quasi_static_flip_rollout(const RigidObject& obj, const PivotConfig& cfg,
                                        int steps);
}

}  // namespace agile::dynamics
