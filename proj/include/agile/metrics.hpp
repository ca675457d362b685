#pragma once

#include <stdexcept>
#include <string>

#include "agile/common.hpp"
#include "agile/runtime.hpp"

namespace agile::metrics {

struct TraceTooShort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything below is pure post-processing of a trace; running a trace file
// through make_report reproduces the report of the run that wrote it.
struct EpisodeReport {
  bool success = false;
  double exec_time_s = 0.0;
  double tcp_jitter_mm = 0.0;
  double peak_jerk_m_s3 = 0.0;
  int collision_events = 0;
  double singularity_rate_pct = 0.0;
  double final_rot_err_deg = 0.0;
  double final_pos_err_mm = 0.0;
  int aligned_ticks = 0;
  int stale_ticks = 0;
  double aligned_pct = 0.0;
  bool slipped = false;
  double peak_contact_speed_mm_s = 0.0;
  double peak_tau_arm_nm = 0.0;     // edge pivot requirement over a full flip
  double peak_tau_direct_nm = 0.0;  // aerial wrist requirement over a full flip

  void save(const std::string& path) const;
  std::string to_text() const;
};

// RMS deviation of the tracked tool point from its centered five tick moving
// average, mm. Needs at least 50 ticks.
double tcp_jitter_mm(const runtime::EpisodeTrace& trace);

// Largest third central difference of the tool position, m/s^3.
double peak_jerk_m_s3(const runtime::EpisodeTrace& trace);

// Rising edges of table penetration beyond half a millimeter, outside the
// contact phases (Grasp, Rotate) and outside the beyond-edge region of edge
// flips.
int collision_events(const runtime::EpisodeTrace& trace);

// Percentage of ticks whose arm conditioning falls below the configured
// floor.
double singularity_rate_pct(const runtime::EpisodeTrace& trace);
namespace serial {
double singularity_rate_pct(const runtime::EpisodeTrace& trace);
}

// Final object pose within the orientation and planar position gates.
bool success(const runtime::EpisodeTrace& trace);

// Largest drift speed of the pivot line material point during Rotate, mm/s.
double peak_contact_speed_mm_s(const runtime::EpisodeTrace& trace);

EpisodeReport make_report(const runtime::EpisodeTrace& trace);

}  // namespace agile::metrics
