#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "agile/common.hpp"

namespace agile::kinematics {

struct IkNoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct JointLimitViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rigid pose: rotation plus translation in millimeters.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation_mm = Vec3::Zero();

  static Pose identity() { return Pose{}; }
  Vec3 apply(const Vec3& p_mm) const { return rotation * p_mm + translation_mm; }
  Pose inverse() const {
    Pose out;
    out.rotation = rotation.transpose();
    out.translation_mm = -(out.rotation * translation_mm);
    return out;
  }
  Pose compose(const Pose& rhs) const {
    Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation_mm = rotation * rhs.translation_mm + translation_mm;
    return out;
  }
};

// Geodesic distance on rotations, radians.
double rotation_angle_rad(const Mat3& a, const Mat3& b);
// Rotation vector (axis times angle) taking b to a, radians.
Vec3 rotation_log(const Mat3& a, const Mat3& b);
Mat3 axis_angle(const Vec3& axis_unit, double angle_rad);

// One joint row: twist, link length, link offset, zero offset, travel limits.
struct JointRow {
  double twist_rad = 0.0;        // rotation about the link x axis
  double length_mm = 0.0;        // translation along the link x axis
  double offset_mm = 0.0;        // translation along the joint z axis
  double angle_offset_rad = 0.0; // added to the joint variable
  double limit_lo_rad = -2.0 * kPi;
  double limit_hi_rad = 2.0 * kPi;
};

struct RobotState {
  Vector6d q = Vector6d::Zero();      // rad
  Vector6d qdot = Vector6d::Zero();   // rad/s
  double timestamp_s = 0.0;
};

class ArmModel {
 public:
  std::array<JointRow, 6> joints;
  double sigma_min_threshold = 0.01;  // conditioning floor used by the monitors
  double slip_tolerance_mm_s = 1.0;   // reporting threshold for contact drift

  // Text format: six rows of
  //   twist_rad length_mm offset_mm angle_offset_rad limit_lo limit_hi
  // followed by one line with the sigma_min threshold.
  static ArmModel load(const std::string& path);
  void save(const std::string& path) const;

  // Six-axis elbow arm, dimensions of a common 850 mm reach cobot.
  static ArmModel default_arm();

  // Sum of per-link lengths; bounds reach and scales linear Jacobian rows.
  double characteristic_length_mm() const;
};

// Tool pose for a joint configuration.
Pose forward_kinematics(const RobotState& state, const ArmModel& model);

// 6x6 task Jacobian: rows 0-2 linear (mm/rad), rows 3-5 angular (rad/rad).
Matrix6d jacobian(const RobotState& state, const ArmModel& model);

// Smallest singular value of the Jacobian with linear rows divided by the
// characteristic length, so both blocks are dimensionless.
double manipulability(const RobotState& state, const ArmModel& model);

// Damped least squares IK. Seeded; returns a state whose FK matches target
// within 0.1 mm and 0.1 degree. Joint angles are wrapped to (-pi, pi] before
// the limit check. Throws IkNoConvergence or JointLimitViolation.
RobotState inverse_kinematics(const Pose& target, const RobotState& seed, const ArmModel& model);

// Linear velocity map (3x6, mm/s per rad/s) of a world point rigidly attached
// to the tool body.
Eigen::Matrix<double, 3, 6> contact_jacobian(const RobotState& state, const ArmModel& model,
                                             const Vec3& contact_point_mm);

// Normalize to (-pi, pi].
double wrap_angle(double a);

}  // namespace agile::kinematics
