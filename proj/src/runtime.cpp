#include "agile/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include "agile/rng.hpp"

namespace agile::runtime {

const char* to_string(Mode m) { return m == Mode::Async ? "Async" : "Sync"; }
const char* to_string(SyncStatus s) { return s == SyncStatus::Aligned ? "Aligned" : "Stale"; }

Mode mode_from_string(const std::string& s) {
  if (s == "Async") return Mode::Async;
  if (s == "Sync") return Mode::Sync;
  throw std::runtime_error("unknown mode: " + s);
}

void SplineWindow::push(const Vector6d& anchor, std::int64_t knot_us) {
  if (count_ > 0) {
    std::int64_t prev = knots_[std::min(count_, 4) - 1];
    if (knot_us <= prev) throw std::invalid_argument("anchor knots must increase");
    if (count_ > 1) {
      std::int64_t h_prev = prev - knots_[std::min(count_, 4) - 2];
      std::int64_t h_new = knot_us - prev;
      if (std::llabs(h_new - h_prev) > 1000)
        throw std::invalid_argument("anchor knots must stay uniform within 1 ms");
    }
  }
  if (count_ < 4) {
    p_[count_] = anchor;
    knots_[count_] = knot_us;
    ++count_;
    if (count_ == 4) {
      v_left_.setZero();
      a_left_.setZero();
    }
    return;
  }
  // The retiring segment hands its exact end state to the new segment.
  double h = static_cast<double>(knots_[3] - knots_[2]) * 1e-6;
  v_left_ = (3.0 * p_[3] - 4.0 * p_[2] + p_[1]) / (2.0 * h);
  a_left_ = (2.0 * p_[3] - 5.0 * p_[2] + 4.0 * p_[1] - p_[0]) / (h * h);
  for (int i = 0; i < 3; ++i) {
    p_[i] = p_[i + 1];
    knots_[i] = knots_[i + 1];
  }
  p_[3] = anchor;
  knots_[3] = knot_us;
}

std::int64_t SplineWindow::segment_begin_us() const {
  if (count_ < 4) throw ColdWindow("spline window not warmed");
  return knots_[2];
}

std::int64_t SplineWindow::segment_end_us() const {
  if (count_ < 4) throw ColdWindow("spline window not warmed");
  return knots_[3];
}

void SplineWindow::evaluate(std::int64_t t_us, Vector6d* pos, Vector6d* vel,
                            Vector6d* acc) const {
  if (count_ < 4) throw ColdWindow("spline window needs four anchors");
  if (t_us < knots_[2] || t_us > knots_[3])
    throw OutOfSegment("evaluation time outside the active segment");
  double h = static_cast<double>(knots_[3] - knots_[2]) * 1e-6;
  double s = static_cast<double>(t_us - knots_[2]) / static_cast<double>(knots_[3] - knots_[2]);

  Vector6d v1 = (3.0 * p_[3] - 4.0 * p_[2] + p_[1]) / (2.0 * h);
  Vector6d a1 = (2.0 * p_[3] - 5.0 * p_[2] + 4.0 * p_[1] - p_[0]) / (h * h);

  double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
  double H00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
  double H01 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
  double H02 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
  double H10 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
  double H11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
  double H12 = 0.5 * s3 - s4 + 0.5 * s5;
  if (pos) {
    *pos = H00 * p_[2] + H10 * p_[3] + h * (H01 * v_left_ + H11 * v1) +
           h * h * (H02 * a_left_ + H12 * a1);
  }
  if (vel) {
    double d00 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
    double d01 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
    double d02 = s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4;
    double d10 = 30.0 * s2 - 60.0 * s3 + 30.0 * s4;
    double d11 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
    double d12 = 1.5 * s2 - 4.0 * s3 + 2.5 * s4;
    *vel = (d00 * p_[2] + d10 * p_[3]) / h + (d01 * v_left_ + d11 * v1) +
           h * (d02 * a_left_ + d12 * a1);
  }
  if (acc) {
    double g00 = -60.0 * s + 180.0 * s2 - 120.0 * s3;
    double g01 = -36.0 * s + 96.0 * s2 - 60.0 * s3;
    double g02 = 1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3;
    double g10 = 60.0 * s - 180.0 * s2 + 120.0 * s3;
    double g11 = -24.0 * s + 84.0 * s2 - 60.0 * s3;
    double g12 = 3.0 * s - 12.0 * s2 + 10.0 * s3;
    *acc = (g00 * p_[2] + g10 * p_[3]) / (h * h) + (g01 * v_left_ + g11 * v1) / h +
           (g02 * a_left_ + g12 * a1);
  }
}

Vector6d spline_eval(const SplineWindow& window, std::int64_t t_us) {
  Vector6d pos;
  window.evaluate(t_us, &pos);
  return pos;
}

SoftSyncResult soft_sync(std::int64_t vision_recorded_us,
                         const std::vector<StateSnapshot>& states, std::int64_t eps_us) {
  if (states.empty()) throw EmptyBuffer("state buffer is empty");
  SoftSyncResult r;
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::int64_t d = std::llabs(states[i].recorded_us - vision_recorded_us);
    if (d < best) {
      best = d;
      r.state_index = i;
    }
  }
  r.delta_us = best;
  r.status = best < eps_us ? SyncStatus::Aligned : SyncStatus::Stale;
  return r;
}

namespace {

struct Ev {
  std::int64_t t_us;
  int prio;  // 0 control tick, 1 perception capture, 2 perception available
  std::uint64_t seq;
  long payload;  // capture index
  std::int64_t capture_recorded_us;  // for available events
  long plan_idx;
};

struct EvOrder {
  bool operator()(const Ev& a, const Ev& b) const {
    if (a.t_us != b.t_us) return a.t_us > b.t_us;
    if (a.prio != b.prio) return a.prio > b.prio;
    return a.seq > b.seq;
  }
};

constexpr int kPrioTick = 0;
constexpr int kPrioCapture = 1;
constexpr int kPrioAvail = 2;

}  // namespace

EpisodeTrace run_episode(const EpisodeSetup& setup, Mode mode, const LatencyConfig& latency,
                         std::uint64_t seed) {
  const auto& plan = setup.plan;
  if (plan.waypoints.empty()) throw std::invalid_argument("episode needs a plan");
  if (plan.joint_path.size() != plan.waypoints.size())
    throw std::invalid_argument("plan joint path missing; build plans through the planner");

  const std::int64_t t_inf = to_us(latency.t_inf_s);
  const std::int64_t p_per = to_us(latency.perception_period_s);
  const std::int64_t c_per = to_us(latency.control_period_s);
  const std::int64_t eps = to_us(latency.eps_sync_s);
  const std::int64_t skew = to_us(latency.clock_skew_s);
  if (p_per <= 0 || c_per <= 0) throw std::invalid_argument("stream periods must be positive");
  if (t_inf < 0) throw std::invalid_argument("inference latency cannot be negative");

  // Sync pipelines capture a new frame only when the previous inference has
  // been consumed, so their effective cadence is bounded below by t_inf.
  const std::int64_t capture_per = mode == Mode::Sync ? std::max(t_inf, c_per) : p_per;
  // Commands act this far behind the plan clock.
  const std::int64_t exec_delay = mode == Mode::Sync ? t_inf : t_inf + p_per;

  const std::int64_t plan_dur = to_us(plan.duration_s());
  const std::int64_t t_end = plan_dur + t_inf + p_per + to_us(setup.settle_s);
  std::vector<std::int64_t> wp_times;
  wp_times.reserve(plan.waypoints.size());
  for (const auto& w : plan.waypoints) wp_times.push_back(to_us(w.t_s));

  EpisodeTrace trace;
  trace.mode = mode;
  trace.latency = latency;
  trace.seed = seed;
  trace.setup = setup;

  Rng rng(seed);
  auto jitter = [&]() -> std::int64_t {
    if (skew <= 0) return 0;
    return static_cast<std::int64_t>(std::llround(rng.uniform(-static_cast<double>(skew),
                                                              static_cast<double>(skew))));
  };

  // Plan index the camera sees at capture time: the waypoint the plan clock
  // has reached.
  auto plan_index_at = [&](std::int64_t t) -> long {
    auto it = std::upper_bound(wp_times.begin(), wp_times.end(), t);
    if (it == wp_times.begin()) return 0;
    return static_cast<long>((it - wp_times.begin()) - 1);
  };

  std::priority_queue<Ev, std::vector<Ev>, EvOrder> queue;
  std::uint64_t seq = 0;
  for (std::int64_t t = 0; t <= t_end; t += c_per) {
    queue.push(Ev{t, kPrioTick, seq++, 0, 0, 0});
  }
  for (std::int64_t t = 0; t <= t_end; t += capture_per) {
    queue.push(Ev{t, kPrioCapture, seq++, static_cast<long>(t / capture_per), 0, 0});
  }

  SplineWindow window;
  Vector6d q_act = plan.joint_path[0];
  Vector6d active_cmd = plan.joint_path[0];
  Vector6d pending_target = plan.joint_path[0];
  bool attached = false;
  kinematics::Pose t_obj = setup.object_start;
  kinematics::Pose t_obj_tcp;
  long last_frame = -1;
  SyncStatus last_status = SyncStatus::Stale;
  std::vector<StateSnapshot> snapshots;
  bool have_tick = false;
  primitives::GripperState prev_grip = primitives::GripperState::Open;
  kinematics::Pose prev_obj = t_obj;
  bool have_prev_obj = false;

  const double lag_alpha = 1.0 - std::exp(-latency.control_period_s / setup.track_tau_s);
  const double dq_cap = setup.qdot_max_rad_s * latency.control_period_s;

  while (!queue.empty()) {
    Ev ev = queue.top();
    queue.pop();
    if (ev.prio == kPrioCapture) {
      std::int64_t cap_rec = ev.t_us + jitter();
      long idx = plan_index_at(ev.t_us);
      queue.push(Ev{ev.t_us + t_inf, kPrioAvail, seq++, ev.payload, cap_rec, idx});
      continue;
    }
    if (ev.prio == kPrioAvail) {
      PerceptionRecord rec;
      rec.frame_id = ev.payload;
      rec.capture_recorded_us = ev.capture_recorded_us;
      rec.available_us = ev.t_us;
      rec.cls = plan.id == primitives::PrimitiveId::PivotFlip ? geometry::AffordanceClass::Back
                                                              : geometry::AffordanceClass::Front;
      const auto& wp = plan.waypoints[static_cast<std::size_t>(ev.plan_idx)];
      rec.anchor = Vec2(wp.tcp.translation_mm.x(), wp.tcp.translation_mm.y());
      rec.unit = geometry::LengthUnit::Millimeters;
      if (!snapshots.empty()) {
        // Pair on the stamp the vision clock reports, then score the chosen
        // snapshot against the true capture instant: a skewed stamp commits
        // the runtime to a state from the wrong moment.
        SoftSyncResult sync = soft_sync(rec.capture_recorded_us, snapshots, eps);
        std::int64_t t_capture = ev.t_us - t_inf;
        std::int64_t true_delta =
            std::llabs(snapshots[static_cast<std::size_t>(sync.state_index)].recorded_us -
                       t_capture);
        rec.status = true_delta < eps ? SyncStatus::Aligned : SyncStatus::Stale;
        rec.sync_delta_us = true_delta;
      }
      if (mode == Mode::Async) {
        window.push(plan.joint_path[static_cast<std::size_t>(ev.plan_idx)],
                    static_cast<std::int64_t>(ev.payload) * p_per);
      } else {
        pending_target = plan.joint_path[static_cast<std::size_t>(ev.plan_idx)];
        trace.events.push_back(Event{ev.t_us, "command", ""});
      }
      last_frame = rec.frame_id;
      last_status = rec.status;
      trace.perception.push_back(rec);
      continue;
    }

    // Control tick: integrate the plant over the elapsed interval with the
    // command that was in force, then adopt this tick's command.
    const std::int64_t t = ev.t_us;
    if (have_tick) {
      Vector6d next = active_cmd + (q_act - active_cmd) * (1.0 - lag_alpha);
      Vector6d dq = next - q_act;
      for (int i = 0; i < 6; ++i) dq[i] = std::clamp(dq[i], -dq_cap, dq_cap);
      q_act += dq;
    }
    have_tick = true;

    if (mode == Mode::Async) {
      if (window.warmed()) {
        std::int64_t u = t - exec_delay;
        if (u >= window.segment_begin_us()) {
          std::int64_t ue = std::min(u, window.segment_end_us());
          Vector6d pos;
          window.evaluate(ue, &pos);
          active_cmd = pos;
        }
      }
      trace.events.push_back(Event{t, "command", ""});
    } else {
      active_cmd = pending_target;
    }

    // Plan clock state drives phase, gripper, attachment.
    std::int64_t u_plan = std::clamp<std::int64_t>(t - exec_delay, 0, plan_dur);
    const auto& wp = plan.waypoints[static_cast<std::size_t>(plan_index_at(u_plan))];

    kinematics::RobotState rs;
    rs.q = q_act;
    kinematics::Pose tcp = kinematics::forward_kinematics(rs, setup.arm);

    if (wp.gripper == primitives::GripperState::Closed &&
        prev_grip == primitives::GripperState::Open) {
      attached = true;
      t_obj_tcp = tcp.inverse().compose(t_obj);
      trace.events.push_back(Event{t, "grasp_attach", ""});
    } else if (wp.gripper == primitives::GripperState::Open &&
               prev_grip == primitives::GripperState::Closed) {
      attached = false;
      trace.events.push_back(Event{t, "release", ""});
    }
    prev_grip = wp.gripper;

    if (attached && !trace.slipped) t_obj = tcp.compose(t_obj_tcp);

    if (attached && !trace.slipped && setup.pivot_contact &&
        wp.phase == primitives::PhaseTag::Rotate && have_prev_obj) {
      // Material point sitting on the pivot line must stay put; its drift
      // speed is the slip signal.
      Vec3 p_loc = prev_obj.inverse().apply(setup.pivot_point_mm);
      Vec3 now = t_obj.apply(p_loc);
      double v = (now - setup.pivot_point_mm).norm() / latency.control_period_s;
      if (v > setup.slip_fail_mm_s) {
        trace.slipped = true;
        attached = false;
        std::ostringstream d;
        d << format_full(v);
        trace.events.push_back(Event{t, "slip", d.str()});
      }
    }
    prev_obj = t_obj;
    have_prev_obj = true;

    StateSnapshot snap;
    snap.recorded_us = t;  // robot clock is the reference
    snap.q = q_act;
    snapshots.push_back(snap);
    if (snapshots.size() > 256) snapshots.erase(snapshots.begin());

    Tick row;
    row.t_us = t;
    row.q_cmd = active_cmd;
    row.q_act = q_act;
    row.tcp = tcp;
    row.object = t_obj;
    row.frame_id = last_frame;
    row.sync = last_status;
    row.phase = wp.phase;
    row.gripper = wp.gripper;
    trace.ticks.push_back(row);
  }
  return trace;
}

namespace {

void write_pose(std::ostream& out, const kinematics::Pose& p) {
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << ' ' << format_full(p.rotation(r, c));
    out << ' ' << format_full(p.translation_mm(r));
  }
}

kinematics::Pose read_pose(std::istringstream& in, const char* what, int line_no) {
  kinematics::Pose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(in >> p.rotation(r, c))) {
        std::ostringstream msg;
        msg << "trace line " << line_no << ": malformed " << what;
        throw std::runtime_error(msg.str());
      }
    }
    if (!(in >> p.translation_mm(r))) {
      std::ostringstream msg;
      msg << "trace line " << line_no << ": malformed " << what;
      throw std::runtime_error(msg.str());
    }
  }
  return p;
}

std::int64_t parse_ts_us(const std::string& tok) {
  return static_cast<std::int64_t>(std::llround(std::stod(tok) * 1e6));
}

}  // namespace

void EpisodeTrace::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace: " + path);
  out << "# agile-trace v1\n";
  out << "mode " << to_string(mode) << '\n';
  out << "seed " << seed << '\n';
  out << "t_inf_us " << to_us(latency.t_inf_s) << '\n';
  out << "perception_period_us " << to_us(latency.perception_period_s) << '\n';
  out << "control_period_us " << to_us(latency.control_period_s) << '\n';
  out << "eps_sync_us " << to_us(latency.eps_sync_s) << '\n';
  out << "clock_skew_us " << to_us(latency.clock_skew_s) << '\n';
  out << "slip_fail_mm_s " << format_full(setup.slip_fail_mm_s) << '\n';
  out << "table_height_mm " << format_full(setup.table_height_mm) << '\n';
  out << "tol_rot_deg " << format_full(setup.tol_rot_deg) << '\n';
  out << "tol_pos_mm " << format_full(setup.tol_pos_mm) << '\n';
  out << "track_tau_s " << format_full(setup.track_tau_s) << '\n';
  out << "qdot_max_rad_s " << format_full(setup.qdot_max_rad_s) << '\n';
  out << "settle_s " << format_full(setup.settle_s) << '\n';
  out << "object_thickness_mm " << format_full(setup.object_thickness_mm) << '\n';
  out << "object_mass_kg " << format_full(setup.object_mass_kg) << '\n';
  out << "object_com " << format_full(setup.object_com_mm.x()) << ' '
      << format_full(setup.object_com_mm.y()) << ' ' << format_full(setup.object_com_mm.z())
      << '\n';
  out << "grasp_point " << format_full(setup.grasp_point_obj_mm.x()) << ' '
      << format_full(setup.grasp_point_obj_mm.y()) << ' '
      << format_full(setup.grasp_point_obj_mm.z()) << '\n';
  out << "friction_mu " << format_full(setup.friction_mu) << '\n';
  out << "eps_tau_nm " << format_full(setup.eps_tau_nm) << '\n';
  out << "pivot_contact " << (setup.pivot_contact ? 1 : 0) << '\n';
  out << "pivot_point " << format_full(setup.pivot_point_mm.x()) << ' '
      << format_full(setup.pivot_point_mm.y()) << ' ' << format_full(setup.pivot_point_mm.z())
      << '\n';
  out << "pivot_dir " << format_full(setup.pivot_dir.x()) << ' '
      << format_full(setup.pivot_dir.y()) << ' ' << format_full(setup.pivot_dir.z()) << '\n';
  out << "goal";
  write_pose(out, setup.goal);
  out << '\n';
  out << "object_start";
  write_pose(out, setup.object_start);
  out << '\n';
  out << "outline " << setup.object_outline_mm.size();
  for (const auto& v : setup.object_outline_mm)
    out << ' ' << format_full(v.x()) << ' ' << format_full(v.y());
  out << '\n';
  for (int i = 0; i < 6; ++i) {
    const auto& j = setup.arm.joints[i];
    out << "arm " << i << ' ' << format_full(j.twist_rad) << ' ' << format_full(j.length_mm)
        << ' ' << format_full(j.offset_mm) << ' ' << format_full(j.angle_offset_rad) << ' '
        << format_full(j.limit_lo_rad) << ' ' << format_full(j.limit_hi_rad) << '\n';
  }
  out << "arm_sigma_min " << format_full(setup.arm.sigma_min_threshold) << '\n';
  out << "arm_slip_tol " << format_full(setup.arm.slip_tolerance_mm_s) << '\n';
  out << "slipped " << (slipped ? 1 : 0) << '\n';
  out << "end_header\n";
  for (const auto& r : perception) {
    out << "P " << r.frame_id << ' ' << format_us(r.capture_recorded_us) << ' '
        << format_us(r.available_us) << ' '
        << (r.cls == geometry::AffordanceClass::Front ? "Front" : "Back") << ' '
        << format_full(r.anchor.x()) << ' ' << format_full(r.anchor.y()) << ' '
        << (r.unit == geometry::LengthUnit::Millimeters ? "mm" : "px") << ' '
        << to_string(r.status) << ' ' << format_us(r.sync_delta_us) << '\n';
  }
  for (const auto& tk : ticks) {
    out << "T " << format_us(tk.t_us);
    for (int i = 0; i < 6; ++i) out << ' ' << format_full(tk.q_cmd[i]);
    for (int i = 0; i < 6; ++i) out << ' ' << format_full(tk.q_act[i]);
    write_pose(out, tk.tcp);
    write_pose(out, tk.object);
    out << ' ' << tk.frame_id << ' ' << to_string(tk.sync) << ' '
        << primitives::to_string(tk.phase) << ' ' << primitives::to_string(tk.gripper) << '\n';
  }
  for (const auto& e : events) {
    out << "E " << format_us(e.t_us) << ' ' << e.kind;
    if (!e.detail.empty()) out << ' ' << e.detail;
    out << '\n';
  }
}

EpisodeTrace EpisodeTrace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace: " + path);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) -> std::runtime_error {
    std::ostringstream msg;
    msg << "trace line " << line_no << ": " << why;
    return std::runtime_error(msg.str());
  };
  if (!std::getline(in, line)) throw std::runtime_error("trace is empty: " + path);
  ++line_no;
  if (line != "# agile-trace v1") throw fail("missing trace signature");

  EpisodeTrace trace;
  bool header_done = false;
  while (!header_done && std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") {
      header_done = true;
    } else if (key == "mode") {
      std::string v;
      ls >> v;
      trace.mode = mode_from_string(v);
    } else if (key == "seed") {
      ls >> trace.seed;
    } else if (key == "t_inf_us") {
      std::int64_t v;
      ls >> v;
      trace.latency.t_inf_s = v * 1e-6;
    } else if (key == "perception_period_us") {
      std::int64_t v;
      ls >> v;
      trace.latency.perception_period_s = v * 1e-6;
    } else if (key == "control_period_us") {
      std::int64_t v;
      ls >> v;
      trace.latency.control_period_s = v * 1e-6;
    } else if (key == "eps_sync_us") {
      std::int64_t v;
      ls >> v;
      trace.latency.eps_sync_s = v * 1e-6;
    } else if (key == "clock_skew_us") {
      std::int64_t v;
      ls >> v;
      trace.latency.clock_skew_s = v * 1e-6;
    } else if (key == "slip_fail_mm_s") {
      ls >> trace.setup.slip_fail_mm_s;
    } else if (key == "table_height_mm") {
      ls >> trace.setup.table_height_mm;
    } else if (key == "tol_rot_deg") {
      ls >> trace.setup.tol_rot_deg;
    } else if (key == "tol_pos_mm") {
      ls >> trace.setup.tol_pos_mm;
    } else if (key == "track_tau_s") {
      ls >> trace.setup.track_tau_s;
    } else if (key == "qdot_max_rad_s") {
      ls >> trace.setup.qdot_max_rad_s;
    } else if (key == "settle_s") {
      ls >> trace.setup.settle_s;
    } else if (key == "object_thickness_mm") {
      ls >> trace.setup.object_thickness_mm;
    } else if (key == "object_mass_kg") {
      ls >> trace.setup.object_mass_kg;
    } else if (key == "object_com") {
      ls >> trace.setup.object_com_mm.x() >> trace.setup.object_com_mm.y() >>
          trace.setup.object_com_mm.z();
    } else if (key == "grasp_point") {
      ls >> trace.setup.grasp_point_obj_mm.x() >> trace.setup.grasp_point_obj_mm.y() >>
          trace.setup.grasp_point_obj_mm.z();
    } else if (key == "friction_mu") {
      ls >> trace.setup.friction_mu;
    } else if (key == "eps_tau_nm") {
      ls >> trace.setup.eps_tau_nm;
    } else if (key == "pivot_contact") {
      int v;
      ls >> v;
      trace.setup.pivot_contact = v != 0;
    } else if (key == "pivot_point") {
      ls >> trace.setup.pivot_point_mm.x() >> trace.setup.pivot_point_mm.y() >>
          trace.setup.pivot_point_mm.z();
    } else if (key == "pivot_dir") {
      ls >> trace.setup.pivot_dir.x() >> trace.setup.pivot_dir.y() >> trace.setup.pivot_dir.z();
    } else if (key == "goal") {
      trace.setup.goal = read_pose(ls, "goal pose", line_no);
    } else if (key == "object_start") {
      trace.setup.object_start = read_pose(ls, "object pose", line_no);
    } else if (key == "outline") {
      std::size_t n;
      if (!(ls >> n)) throw fail("malformed outline");
      trace.setup.object_outline_mm.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!(ls >> trace.setup.object_outline_mm[i].x() >> trace.setup.object_outline_mm[i].y()))
          throw fail("malformed outline");
      }
    } else if (key == "arm") {
      int i;
      if (!(ls >> i) || i < 0 || i > 5) throw fail("malformed arm row");
      auto& j = trace.setup.arm.joints[i];
      if (!(ls >> j.twist_rad >> j.length_mm >> j.offset_mm >> j.angle_offset_rad >>
            j.limit_lo_rad >> j.limit_hi_rad))
        throw fail("malformed arm row");
    } else if (key == "arm_sigma_min") {
      ls >> trace.setup.arm.sigma_min_threshold;
    } else if (key == "arm_slip_tol") {
      ls >> trace.setup.arm.slip_tolerance_mm_s;
    } else if (key == "slipped") {
      int v;
      ls >> v;
      trace.slipped = v != 0;
    } else {
      throw fail("unknown header key: " + key);
    }
    if (!header_done && ls.fail()) throw fail("malformed header value for " + key);
  }
  if (!header_done) throw std::runtime_error("trace header not terminated: " + path);

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "P") {
      PerceptionRecord r;
      std::string ts, avail, cls, unit, status, delta;
      if (!(ls >> r.frame_id >> ts >> avail >> cls >> r.anchor.x() >> r.anchor.y() >> unit >>
            status >> delta))
        throw fail("malformed perception record");
      r.capture_recorded_us = parse_ts_us(ts);
      r.available_us = parse_ts_us(avail);
      r.cls = cls == "Front" ? geometry::AffordanceClass::Front : geometry::AffordanceClass::Back;
      r.unit = unit == "mm" ? geometry::LengthUnit::Millimeters : geometry::LengthUnit::Pixels;
      r.status = status == "Aligned" ? SyncStatus::Aligned : SyncStatus::Stale;
      r.sync_delta_us = parse_ts_us(delta);
      trace.perception.push_back(r);
    } else if (tag == "T") {
      Tick tk;
      std::string ts;
      if (!(ls >> ts)) throw fail("malformed tick timestamp");
      tk.t_us = parse_ts_us(ts);
      for (int i = 0; i < 6; ++i)
        if (!(ls >> tk.q_cmd[i])) throw fail("malformed tick command");
      for (int i = 0; i < 6; ++i)
        if (!(ls >> tk.q_act[i])) throw fail("malformed tick state");
      tk.tcp = read_pose(ls, "tick tcp", line_no);
      tk.object = read_pose(ls, "tick object", line_no);
      std::string status, phase, grip;
      if (!(ls >> tk.frame_id >> status >> phase >> grip)) throw fail("malformed tick tail");
      tk.sync = status == "Aligned" ? SyncStatus::Aligned : SyncStatus::Stale;
      tk.phase = primitives::phase_from_string(phase);
      tk.gripper = primitives::gripper_from_string(grip);
      trace.ticks.push_back(tk);
    } else if (tag == "E") {
      Event e;
      std::string ts;
      if (!(ls >> ts >> e.kind)) throw fail("malformed event record");
      e.t_us = parse_ts_us(ts);
      std::getline(ls, e.detail);
      if (!e.detail.empty() && e.detail.front() == ' ') e.detail.erase(0, 1);
      trace.events.push_back(e);
    } else {
      throw fail("unknown record tag: " + tag);
    }
  }
  return trace;
}

double latest_anchor_frame_age(const EpisodeTrace& trace, std::size_t tick_index) {
  if (tick_index >= trace.ticks.size()) throw std::out_of_range("tick index out of range");
  const Tick& tick = trace.ticks[tick_index];
  if (tick.frame_id < 0) return std::numeric_limits<double>::infinity();
  for (const auto& rec : trace.perception) {
    if (rec.frame_id == tick.frame_id)
      return static_cast<double>(tick.t_us - rec.capture_recorded_us) * 1e-6;
  }
  throw std::runtime_error("tick references unknown perception frame");
}

}  // namespace agile::runtime
