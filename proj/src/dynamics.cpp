#include "agile/dynamics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "agile/parallel.hpp"

namespace agile::dynamics {

namespace {

// Flip-plane frame: u along the pivot line, w horizontal toward the object,
// z up. Rotation by theta about the pivot axis maps (w, z) to
// (w cos - z sin, w sin + z cos), lifting the object over the edge.
struct FlipPlane {
  Vec3 u, w, z;
  Vec2 com0;     // (w, z) of the COM at theta = 0, mm
  Vec2 grasp0;   // (w, z) of the grasp at theta = 0, mm
  double lever_mm = 0.0;
};

FlipPlane reduce(const RigidObject& obj, const PivotConfig& cfg) {
  FlipPlane f;
  f.z = Vec3::UnitZ();
  Vec3 u = cfg.pivot_dir - cfg.pivot_dir.dot(f.z) * f.z;
  if (u.norm() < 1e-9) throw std::invalid_argument("pivot direction must be horizontal");
  u.normalize();
  Vec3 w = f.z.cross(u);
  Vec3 com_world = cfg.object_pose_world.apply(obj.com_mm);
  Vec3 rel_com = com_world - cfg.pivot_point_mm;
  if (rel_com.dot(w) < 0) {
    u = -u;
    w = -w;
  }
  f.u = u;
  f.w = w;
  f.com0 = Vec2(rel_com.dot(w), rel_com.dot(f.z));
  Vec3 grasp_world = cfg.object_pose_world.apply(cfg.grasp_point_mm);
  Vec3 rel_g = grasp_world - cfg.pivot_point_mm;
  f.grasp0 = Vec2(rel_g.dot(w), rel_g.dot(f.z));
  f.lever_mm = f.grasp0.norm();
  if (f.lever_mm < 1e-6) throw ZeroLeverArm("grasp point coincides with the pivot line");
  return f;
}

Vec2 rotate_plane(const Vec2& p, double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  return Vec2(c * p.x() - s * p.y(), s * p.x() + c * p.y());
}

TorqueBreakdown evaluate(const RigidObject& obj, const PivotConfig& cfg, const FlipPlane& f,
                         double theta) {
  TorqueBreakdown b;
  b.theta_rad = theta;
  Vec2 com = rotate_plane(f.com0, theta);
  b.tau_gravity_nm = obj.mass_kg * kGravityMs2 * com.x() * 1e-3;
  b.tau_support_nm = 0.0;
  b.tau_arm_nm = cfg.eps_tau_nm + b.tau_gravity_nm;
  b.tau_net_nm = b.tau_arm_nm + b.tau_support_nm - b.tau_gravity_nm;

  Vec2 r_hat = rotate_plane(f.grasp0, theta) / f.lever_mm;
  Vec2 t_hat(-r_hat.y(), r_hat.x());
  Vec2 f_arm = (b.tau_arm_nm / (f.lever_mm * 1e-3)) * t_hat;
  Vec2 f_reaction = Vec2(0.0, obj.mass_kg * kGravityMs2) - f_arm;
  b.arm_force_n = f_arm.x() * f.w + f_arm.y() * f.z;
  b.reaction_force_n = f_reaction.x() * f.w + f_reaction.y() * f.z;
  b.reaction_normal_n = f_reaction.y();
  b.reaction_tangential_n = f_reaction.x();
  b.friction_feasible = b.reaction_normal_n >= 0.0 &&
                        std::abs(b.reaction_tangential_n) <= cfg.friction_mu * b.reaction_normal_n;
  return b;
}

}  // namespace

double gravity_torque(const RigidObject& obj, const PivotConfig& cfg) {
  FlipPlane f = reduce(obj, cfg);
  Vec2 com = rotate_plane(f.com0, cfg.theta_rad);
  return obj.mass_kg * kGravityMs2 * com.x() * 1e-3;
}

TorqueBreakdown required_arm_torque_pivot(const RigidObject& obj, const PivotConfig& cfg) {
  FlipPlane f = reduce(obj, cfg);
  TorqueBreakdown b = evaluate(obj, cfg, f, cfg.theta_rad);
  if (b.reaction_normal_n < 0.0) {
    std::ostringstream msg;
    msg << "pivot contact normal is negative at theta=" << cfg.theta_rad;
    throw NegativeNormalError(msg.str());
  }
  if (!b.friction_feasible) {
    std::ostringstream msg;
    msg << "friction cone violated at theta=" << cfg.theta_rad;
    throw FrictionConeViolation(msg.str());
  }
  return b;
}

double required_wrist_torque_direct(const RigidObject& obj, const PivotConfig& cfg,
                                    double theta_rad) {
  FlipPlane f = reduce(obj, cfg);
  Vec2 d0 = f.com0 - f.grasp0;
  Vec2 d = rotate_plane(d0, theta_rad);
  return obj.mass_kg * kGravityMs2 * std::abs(d.x()) * 1e-3;
}

bool friction_cone_check(const Vec3& reaction_force_n, double mu) {
  double normal = reaction_force_n.z();
  if (normal < 0.0) throw NegativeNormalError("contact normal force is negative");
  double tangential = std::hypot(reaction_force_n.x(), reaction_force_n.y());
  return tangential <= mu * normal;
}

namespace {

TorqueProfile finish_profile(std::vector<TorqueBreakdown> rows) {
  TorqueProfile p;
  p.rows = std::move(rows);
  for (const auto& b : p.rows) {
    p.peak_tau_arm_nm = std::max(p.peak_tau_arm_nm, std::abs(b.tau_arm_nm));
    p.peak_reaction_n = std::max(p.peak_reaction_n, b.reaction_force_n.norm());
    if (!b.friction_feasible) p.violation_thetas.push_back(b.theta_rad);
  }
  return p;
}

}  // namespace

TorqueProfile quasi_static_flip_rollout(const RigidObject& obj, const PivotConfig& cfg,
                                        int steps) {
  if (steps < 2) throw std::invalid_argument("rollout needs at least 2 steps");
  FlipPlane f = reduce(obj, cfg);
  double theta0 = cfg.theta_rad;
  double span = kPi - theta0;
  std::vector<TorqueBreakdown> rows(static_cast<std::size_t>(steps) + 1);
  par::for_index(steps + 1, [&](std::ptrdiff_t j) {
    double theta = theta0 + span * static_cast<double>(j) / steps;
    rows[j] = evaluate(obj, cfg, f, theta);
  });
  return finish_profile(std::move(rows));
}

namespace serial {

TorqueProfile quasi_static_flip_rollout(const RigidObject& obj, const PivotConfig& cfg,
                                        int steps) {
  if (steps < 2) throw std::invalid_argument("rollout needs at least 2 steps");
  FlipPlane f = reduce(obj, cfg);
  double theta0 = cfg.theta_rad;
  double span = kPi - theta0;
  std::vector<TorqueBreakdown> rows(static_cast<std::size_t>(steps) + 1);
  par::serial::for_index(steps + 1, [&](std::ptrdiff_t j) {
    double theta = theta0 + span * static_cast<double>(j) / steps;
    rows[j] = evaluate(obj, cfg, f, theta);
  });
  return finish_profile(std::move(rows));
}

}  // namespace serial

void TorqueProfile::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write torque profile: " + path);
  out << "theta_rad,tau_gravity,tau_support,tau_arm,reaction_normal,reaction_tangential,feasible\n";
  for (const auto& b : rows) {
    out << format_full(b.theta_rad) << ',' << format_full(b.tau_gravity_nm) << ','
        << format_full(b.tau_support_nm) << ',' << format_full(b.tau_arm_nm) << ','
        << format_full(b.reaction_normal_n) << ',' << format_full(b.reaction_tangential_n) << ','
        << (b.friction_feasible ? 1 : 0) << '\n';
  }
}

}  // namespace agile::dynamics
