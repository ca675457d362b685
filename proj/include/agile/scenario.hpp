#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "agile/dynamics.hpp"
#include "agile/geometry.hpp"
#include "agile/metrics.hpp"
#include "agile/primitives.hpp"
#include "agile/runtime.hpp"

namespace agile::scenario {

// Carries "file:line: what" context for config mistakes.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AnchorStrategy { Implicit, GlobalCentroid };
enum class FlipStrategy { Pivot, Direct };

// One task instance, parsed from a flat [section] key=value file. Paths are
// resolved relative to the file that names them.
struct Scenario {
  std::string base_dir;

  // [object]
  std::string shape_path;
  double mass_kg = 0.5;
  Vec3 com_mm = Vec3::Zero();  // object frame; z defaults to mid thickness
  double thickness_mm = 10.0;

  // [initial]
  geometry::AffordanceClass initial_cls = geometry::AffordanceClass::Back;
  double x_mm = 0.0;
  double y_mm = 0.0;
  double yaw_deg = 0.0;
  double table_height_mm = 0.0;

  // [edge] table edge the flip pivots about; derived from the object placement
  // when absent
  bool edge_set = false;
  Vec3 edge_point_mm = Vec3::Zero();
  Vec3 edge_dir = Vec3::UnitY();

  // [goal] "auto" mirrors a flip across the edge (or a fixed lateral shift for
  // pick-place); otherwise 12 numbers, rotation rows then translation
  bool goal_auto = true;
  kinematics::Pose goal;

  // [latency]
  runtime::LatencyConfig latency;

  // [run]
  runtime::Mode mode = runtime::Mode::Async;
  AnchorStrategy anchor_strategy = AnchorStrategy::Implicit;
  FlipStrategy flip_strategy = FlipStrategy::Pivot;
  std::uint64_t seed = 1;
  double anchor_noise_mm = 0.0;

  // [thresholds]
  double slip_fail_mm_s = 1e9;
  double tol_rot_deg = 5.0;
  double tol_pos_mm = 10.0;
  double friction_mu = 0.5;
  double eps_tau_nm = 0.05;
  std::string arm_path;  // empty = built-in arm
};

Scenario load_scenario(const std::string& path);

// Intermediate products kept for tests and the CLI.
struct PipelineSetup {
  geometry::PlanarShape shape;
  dynamics::RigidObject object;
  dynamics::PivotConfig pivot;
  Vec3 anchor_world_mm = Vec3::Zero();  // after seeded perception noise
  Vec2 tangent_world = Vec2::UnitX();
  runtime::EpisodeSetup episode;
};

// perceive -> select_primitive -> plan; everything run_episode needs.
// Throws primitives::InfeasibleFlip / UnreachableWaypoint when the configured
// strategy cannot produce a plan.
PipelineSetup build_setup(const Scenario& sc);

struct PipelineResult {
  runtime::EpisodeTrace trace;
  metrics::EpisodeReport report;
};

PipelineResult run_scenario(const Scenario& sc);

}  // namespace agile::scenario
