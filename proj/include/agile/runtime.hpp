#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "agile/common.hpp"
#include "agile/dynamics.hpp"
#include "agile/geometry.hpp"
#include "agile/kinematics.hpp"
#include "agile/primitives.hpp"

namespace agile::runtime {

struct ColdWindow : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OutOfSegment : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyBuffer : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { Async, Sync };
enum class SyncStatus { Aligned, Stale };

const char* to_string(Mode m);
const char* to_string(SyncStatus s);
Mode mode_from_string(const std::string& s);

// All stream timing, seconds. Defaults follow the measured pipeline: 92 ms
// model latency, 10 Hz perception, 50 Hz control, 10 ms alignment gate.
struct LatencyConfig {
  double t_inf_s = 0.092;
  double perception_period_s = 0.1;
  double control_period_s = 0.02;
  double eps_sync_s = 0.010;
  double clock_skew_s = 0.0;
};

inline std::int64_t to_us(double seconds) {
  return static_cast<std::int64_t>(std::llround(seconds * 1e6));
}

// Command interpolator over the four newest joint anchors. One smooth
// segment spans the two newest anchors; its left endpoint carries the
// position, velocity and acceleration the previous segment ended with, and
// its right endpoint pins the newest anchor with finite-difference
// derivatives over the window. Position, velocity and acceleration are
// therefore continuous across every anchor update by construction.
class SplineWindow {
 public:
  void push(const Vector6d& anchor, std::int64_t knot_us);
  bool warmed() const { return count_ >= 4; }
  int anchors_seen() const { return count_; }
  std::int64_t segment_begin_us() const;
  std::int64_t segment_end_us() const;

  // t must lie inside the active segment; vel/acc outputs optional.
  void evaluate(std::int64_t t_us, Vector6d* pos, Vector6d* vel = nullptr,
                Vector6d* acc = nullptr) const;

 private:
  Vector6d p_[4];
  std::int64_t knots_[4] = {0, 0, 0, 0};
  int count_ = 0;
  Vector6d v_left_ = Vector6d::Zero();
  Vector6d a_left_ = Vector6d::Zero();
};

Vector6d spline_eval(const SplineWindow& window, std::int64_t t_us);

struct StateSnapshot {
  std::int64_t recorded_us = 0;  // robot clock, jittered when skew is modeled
  Vector6d q = Vector6d::Zero();
};

struct SoftSyncResult {
  SyncStatus status = SyncStatus::Stale;
  std::int64_t delta_us = 0;  // |vision - best state| on recorded clocks
  std::size_t state_index = 0;
};

// Nearest state snapshot by recorded timestamp; Aligned only when strictly
// inside the gate.
SoftSyncResult soft_sync(std::int64_t vision_recorded_us,
                         const std::vector<StateSnapshot>& states, std::int64_t eps_us);

struct PerceptionRecord {
  long frame_id = 0;
  std::int64_t capture_recorded_us = 0;
  std::int64_t available_us = 0;
  geometry::AffordanceClass cls = geometry::AffordanceClass::Front;
  Vec2 anchor = Vec2::Zero();
  geometry::LengthUnit unit = geometry::LengthUnit::Millimeters;
  SyncStatus status = SyncStatus::Stale;
  std::int64_t sync_delta_us = 0;
};

struct Tick {
  std::int64_t t_us = 0;
  Vector6d q_cmd = Vector6d::Zero();
  Vector6d q_act = Vector6d::Zero();
  kinematics::Pose tcp;
  kinematics::Pose object;
  long frame_id = -1;  // newest perception result in effect
  SyncStatus sync = SyncStatus::Stale;
  primitives::PhaseTag phase = primitives::PhaseTag::Approach;
  primitives::GripperState gripper = primitives::GripperState::Open;
};

struct Event {
  std::int64_t t_us = 0;
  std::string kind;    // command, grasp_attach, release, slip
  std::string detail;
};

// Everything one run needs; the trace header echoes it so reports can be
// rebuilt from the file alone.
struct EpisodeSetup {
  kinematics::ArmModel arm;
  primitives::PrimitivePlan plan;
  kinematics::Pose object_start;
  kinematics::Pose goal;
  double object_thickness_mm = 0.0;
  double object_mass_kg = 0.0;
  Vec3 object_com_mm = Vec3::Zero();       // object frame
  Vec3 grasp_point_obj_mm = Vec3::Zero();  // object frame
  double friction_mu = 0.5;
  double eps_tau_nm = 0.05;
  std::vector<Vec2> object_outline_mm;  // object frame, for collision checks
  Vec3 pivot_point_mm = Vec3::Zero();
  Vec3 pivot_dir = Vec3::UnitY();
  bool pivot_contact = false;  // edge flip: slip monitor + beyond-edge region
  double slip_fail_mm_s = 1e9;
  double table_height_mm = 0.0;
  double tol_rot_deg = 5.0;
  double tol_pos_mm = 10.0;
  double settle_s = 1.0;
  double track_tau_s = 0.04;      // first order lag of the joint plant
  double qdot_max_rad_s = 3.15;   // per joint rate limit
};

struct EpisodeTrace {
  Mode mode = Mode::Async;
  LatencyConfig latency;
  std::uint64_t seed = 0;
  EpisodeSetup setup;
  std::vector<PerceptionRecord> perception;
  std::vector<Tick> ticks;
  std::vector<Event> events;
  bool slipped = false;

  void save(const std::string& path) const;
  static EpisodeTrace load(const std::string& path);
};

// Deterministic discrete-event execution of a plan under the given stream
// timing. Event order: timestamp, then control before perception, then
// creation sequence.
EpisodeTrace run_episode(const EpisodeSetup& setup, Mode mode, const LatencyConfig& latency,
                         std::uint64_t seed);

// Age of the perception frame a tick acted on, seconds.
double latest_anchor_frame_age(const EpisodeTrace& trace, std::size_t tick_index);

}  // namespace agile::runtime
