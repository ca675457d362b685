#include "agile/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "agile/dynamics.hpp"
#include "agile/kinematics.hpp"
#include "agile/parallel.hpp"

namespace agile::metrics {
namespace {

constexpr int kJitterWindow = 5;  // centered, so two ticks on each side
constexpr std::size_t kMinTicks = 50;
constexpr double kPenetrationMm = 0.5;
constexpr int kTorqueSweepSteps = 180;

double tick_spacing_s(const runtime::EpisodeTrace& trace) {
  return trace.latency.control_period_s;
}

// Horizontal unit normal of the table edge, pointing at the side the object
// started on. Zero when the run has no edge.
Vec3 edge_inward(const runtime::EpisodeSetup& setup) {
  if (!setup.pivot_contact) return Vec3::Zero();
  Vec3 u = setup.pivot_dir.normalized();
  Vec3 w = Vec3::UnitZ().cross(u);
  if (w.norm() < 1e-12) return Vec3::Zero();
  w.normalize();
  double side = (setup.object_start.translation_mm - setup.pivot_point_mm).dot(w);
  if (side < 0.0) w = -w;
  return w;
}

bool penetrates(const runtime::Tick& tick, const runtime::EpisodeSetup& setup,
                const Vec3& inward) {
  const double floor_mm = setup.table_height_mm - kPenetrationMm;
  const bool edged = inward.norm() > 0.5;
  for (const Vec2& v : setup.object_outline_mm) {
    for (double z : {0.0, setup.object_thickness_mm}) {
      Vec3 p = tick.object.apply(Vec3(v.x(), v.y(), z));
      if (p.z() >= floor_mm) continue;
      // Past the edge there is no table underneath.
      if (edged && (p - setup.pivot_point_mm).dot(inward) <= 0.0) continue;
      return true;
    }
  }
  return false;
}

dynamics::RigidObject object_from_header(const runtime::EpisodeSetup& setup) {
  dynamics::RigidObject obj;
  obj.mass_kg = setup.object_mass_kg;
  obj.com_mm = setup.object_com_mm;
  obj.thickness_mm = setup.object_thickness_mm;
  return obj;
}

dynamics::PivotConfig pivot_from_header(const runtime::EpisodeSetup& setup) {
  dynamics::PivotConfig cfg;
  cfg.pivot_point_mm = setup.pivot_point_mm;
  cfg.pivot_dir = setup.pivot_dir;
  cfg.grasp_point_mm = setup.grasp_point_obj_mm;
  cfg.object_pose_world = setup.object_start;
  cfg.friction_mu = setup.friction_mu;
  cfg.theta_rad = 0.0;
  cfg.eps_tau_nm = setup.eps_tau_nm;
  return cfg;
}

double rate_pct_from_flags(const std::vector<unsigned char>& low) {
  if (low.empty()) return 0.0;
  std::size_t n_low = 0;
  for (unsigned char f : low) n_low += f;
  return 100.0 * static_cast<double>(n_low) / static_cast<double>(low.size());
}

void append_kv(std::ostringstream& out, const char* key, const std::string& value) {
  out << key << '=' << value << '\n';
}

}  // namespace

double tcp_jitter_mm(const runtime::EpisodeTrace& trace) {
  const auto& ticks = trace.ticks;
  if (ticks.size() < kMinTicks)
    throw TraceTooShort("jitter needs " + std::to_string(kMinTicks) + " ticks, trace has " +
                        std::to_string(ticks.size()));
  const int half = kJitterWindow / 2;
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = half; i + half < ticks.size(); ++i) {
    Vec3 mean = Vec3::Zero();
    for (int k = -half; k <= half; ++k)
      mean += ticks[static_cast<std::size_t>(static_cast<long>(i) + k)].tcp.translation_mm;
    mean /= static_cast<double>(kJitterWindow);
    sum_sq += (ticks[i].tcp.translation_mm - mean).squaredNorm();
    ++count;
  }
  return std::sqrt(sum_sq / static_cast<double>(count));
}

double peak_jerk_m_s3(const runtime::EpisodeTrace& trace) {
  const auto& ticks = trace.ticks;
  if (ticks.size() < kMinTicks)
    throw TraceTooShort("jerk needs " + std::to_string(kMinTicks) + " ticks, trace has " +
                        std::to_string(ticks.size()));
  const double h = tick_spacing_s(trace);
  const double denom = 2.0 * h * h * h;
  double peak = 0.0;
  for (std::size_t i = 2; i + 2 < ticks.size(); ++i) {
    Vec3 d = ticks[i + 2].tcp.translation_mm - 2.0 * ticks[i + 1].tcp.translation_mm +
             2.0 * ticks[i - 1].tcp.translation_mm - ticks[i - 2].tcp.translation_mm;
    peak = std::max(peak, d.norm() / denom * 1e-3);
  }
  return peak;
}

int collision_events(const runtime::EpisodeTrace& trace) {
  if (trace.setup.object_outline_mm.empty()) return 0;
  const Vec3 inward = edge_inward(trace.setup);
  int events = 0;
  bool inside = false;
  for (const auto& tick : trace.ticks) {
    // Grasp wedges the object against the surface and Rotate rolls it over
    // the edge; contact there is the point of the move, not a fault.
    bool exempt_phase = tick.gripper == primitives::GripperState::Closed &&
                        (tick.phase == primitives::PhaseTag::Grasp ||
                         tick.phase == primitives::PhaseTag::Rotate);
    bool pen = !exempt_phase && penetrates(tick, trace.setup, inward);
    if (pen && !inside) ++events;
    inside = pen;
  }
  return events;
}

double singularity_rate_pct(const runtime::EpisodeTrace& trace) {
  const auto& ticks = trace.ticks;
  std::vector<unsigned char> low(ticks.size(), 0);
  par::for_index(ticks.size(), [&](std::size_t i) {
    kinematics::RobotState state;
    state.q = ticks[i].q_act;
    double sigma = kinematics::manipulability(state, trace.setup.arm);
    low[i] = sigma < trace.setup.arm.sigma_min_threshold ? 1 : 0;
  });
  return rate_pct_from_flags(low);
}

namespace serial {
double singularity_rate_pct(const runtime::EpisodeTrace& trace) {
  const auto& ticks = trace.ticks;
  std::vector<unsigned char> low(ticks.size(), 0);
  par::serial::for_index(ticks.size(), [&](std::size_t i) {
    kinematics::RobotState state;
    state.q = ticks[i].q_act;
    double sigma = kinematics::manipulability(state, trace.setup.arm);
    low[i] = sigma < trace.setup.arm.sigma_min_threshold ? 1 : 0;
  });
  return rate_pct_from_flags(low);
}
}  // namespace serial

bool success(const runtime::EpisodeTrace& trace) {
  if (trace.ticks.empty()) return false;
  const auto& final_pose = trace.ticks.back().object;
  double rot_deg =
      rad_to_deg(kinematics::rotation_angle_rad(trace.setup.goal.rotation, final_pose.rotation));
  Vec2 dxy = (final_pose.translation_mm - trace.setup.goal.translation_mm).head<2>();
  return rot_deg < trace.setup.tol_rot_deg && dxy.norm() < trace.setup.tol_pos_mm;
}

double peak_contact_speed_mm_s(const runtime::EpisodeTrace& trace) {
  if (!trace.setup.pivot_contact || trace.ticks.size() < 2) return 0.0;
  const Vec3& pivot = trace.setup.pivot_point_mm;
  const double dt = tick_spacing_s(trace);
  double peak = 0.0;
  for (std::size_t i = 1; i < trace.ticks.size(); ++i) {
    const auto& cur = trace.ticks[i];
    if (cur.phase != primitives::PhaseTag::Rotate ||
        cur.gripper != primitives::GripperState::Closed)
      continue;
    Vec3 p_loc = trace.ticks[i - 1].object.inverse().apply(pivot);
    Vec3 now = cur.object.apply(p_loc);
    peak = std::max(peak, (now - pivot).norm() / dt);
  }
  return peak;
}

EpisodeReport make_report(const runtime::EpisodeTrace& trace) {
  EpisodeReport rep;
  rep.success = success(trace);
  rep.slipped = trace.slipped;
  if (trace.ticks.size() >= 2)
    rep.exec_time_s =
        static_cast<double>(trace.ticks.back().t_us - trace.ticks.front().t_us) * 1e-6;
  rep.tcp_jitter_mm = tcp_jitter_mm(trace);
  rep.peak_jerk_m_s3 = peak_jerk_m_s3(trace);
  rep.collision_events = collision_events(trace);
  rep.singularity_rate_pct = singularity_rate_pct(trace);
  rep.peak_contact_speed_mm_s = peak_contact_speed_mm_s(trace);
  if (!trace.ticks.empty()) {
    const auto& final_pose = trace.ticks.back().object;
    rep.final_rot_err_deg =
        rad_to_deg(kinematics::rotation_angle_rad(trace.setup.goal.rotation, final_pose.rotation));
    rep.final_pos_err_mm =
        ((final_pose.translation_mm - trace.setup.goal.translation_mm).head<2>()).norm();
  }
  for (const auto& r : trace.perception) {
    if (r.status == runtime::SyncStatus::Aligned)
      ++rep.aligned_ticks;
    else
      ++rep.stale_ticks;
  }
  if (rep.aligned_ticks + rep.stale_ticks > 0)
    rep.aligned_pct = 100.0 * static_cast<double>(rep.aligned_ticks) /
                      static_cast<double>(rep.aligned_ticks + rep.stale_ticks);
  if (trace.setup.pivot_contact && trace.setup.object_mass_kg > 0.0) {
    auto obj = object_from_header(trace.setup);
    auto cfg = pivot_from_header(trace.setup);
    auto profile = dynamics::quasi_static_flip_rollout(obj, cfg, kTorqueSweepSteps);
    rep.peak_tau_arm_nm = profile.peak_tau_arm_nm;
    double peak_direct = 0.0;
    for (int k = 0; k <= kTorqueSweepSteps; ++k) {
      double theta = kPi * static_cast<double>(k) / static_cast<double>(kTorqueSweepSteps);
      peak_direct = std::max(peak_direct,
                             dynamics::required_wrist_torque_direct(obj, cfg, theta));
    }
    rep.peak_tau_direct_nm = peak_direct;
  }
  return rep;
}

std::string EpisodeReport::to_text() const {
  std::ostringstream out;
  append_kv(out, "success", success ? "1" : "0");
  append_kv(out, "slipped", slipped ? "1" : "0");
  append_kv(out, "exec_time_s", format_full(exec_time_s));
  append_kv(out, "tcp_jitter_mm", format_full(tcp_jitter_mm));
  append_kv(out, "peak_jerk_m_s3", format_full(peak_jerk_m_s3));
  append_kv(out, "collision_events", std::to_string(collision_events));
  append_kv(out, "singularity_rate_pct", format_full(singularity_rate_pct));
  append_kv(out, "final_rot_err_deg", format_full(final_rot_err_deg));
  append_kv(out, "final_pos_err_mm", format_full(final_pos_err_mm));
  append_kv(out, "aligned_frames", std::to_string(aligned_ticks));
  append_kv(out, "stale_frames", std::to_string(stale_ticks));
  append_kv(out, "aligned_pct", format_full(aligned_pct));
  append_kv(out, "peak_contact_speed_mm_s", format_full(peak_contact_speed_mm_s));
  append_kv(out, "peak_tau_arm_nm", format_full(peak_tau_arm_nm));
  append_kv(out, "peak_tau_direct_nm", format_full(peak_tau_direct_nm));
  return out.str();
}

void EpisodeReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << to_text();
}

}  // namespace agile::metrics
