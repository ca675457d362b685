#include "agile/kinematics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace agile::kinematics {

double wrap_angle(double a) {
  double w = std::fmod(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  if (w > kPi) w -= 2.0 * kPi;
  return w;
}

Mat3 axis_angle(const Vec3& axis_unit, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis_unit).toRotationMatrix();
}

Vec3 rotation_log(const Mat3& a, const Mat3& b) {
  Eigen::AngleAxisd aa(a * b.transpose());
  return aa.axis() * aa.angle();
}

double rotation_angle_rad(const Mat3& a, const Mat3& b) {
  double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c);
}

namespace {

// Joint transform: rotate about z by (q + offset), slide d along z, slide a
// along x, twist alpha about x.
void joint_transform(const JointRow& j, double q, Mat3& R, Vec3& t) {
  double ct = std::cos(q + j.angle_offset_rad), st = std::sin(q + j.angle_offset_rad);
  double ca = std::cos(j.twist_rad), sa = std::sin(j.twist_rad);
  R << ct, -st * ca, st * sa,
       st, ct * ca, -ct * sa,
       0.0, sa, ca;
  t = Vec3(j.length_mm * ct, j.length_mm * st, j.offset_mm);
}

struct Frames {
  // origin and z axis of each joint frame before applying that joint,
  // plus the tool pose.
  std::array<Vec3, 6> origin;
  std::array<Vec3, 6> axis;
  Pose tool;
};

Frames chain(const RobotState& state, const ArmModel& model) {
  Frames f;
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();
  for (int i = 0; i < 6; ++i) {
    f.origin[i] = p;
    f.axis[i] = R.col(2);
    Mat3 Rj;
    Vec3 tj;
    joint_transform(model.joints[i], state.q[i], Rj, tj);
    p = R * tj + p;
    R = R * Rj;
  }
  f.tool.rotation = R;
  f.tool.translation_mm = p;
  return f;
}

}  // namespace

Pose forward_kinematics(const RobotState& state, const ArmModel& model) {
  return chain(state, model).tool;
}

Matrix6d jacobian(const RobotState& state, const ArmModel& model) {
  Frames f = chain(state, model);
  Matrix6d J;
  for (int i = 0; i < 6; ++i) {
    Vec3 jv = f.axis[i].cross(f.tool.translation_mm - f.origin[i]);
    J.block<3, 1>(0, i) = jv;
    J.block<3, 1>(3, i) = f.axis[i];
  }
  return J;
}

Eigen::Matrix<double, 3, 6> contact_jacobian(const RobotState& state, const ArmModel& model,
                                             const Vec3& contact_point_mm) {
  Frames f = chain(state, model);
  Eigen::Matrix<double, 3, 6> Jc;
  for (int i = 0; i < 6; ++i) {
    Jc.col(i) = f.axis[i].cross(contact_point_mm - f.origin[i]);
  }
  return Jc;
}

double ArmModel::characteristic_length_mm() const {
  double sum = 0.0;
  for (const auto& j : joints) {
    sum += std::sqrt(j.length_mm * j.length_mm + j.offset_mm * j.offset_mm);
  }
  return sum;
}

namespace {

Matrix6d scaled_jacobian(const Matrix6d& J, double len) {
  Matrix6d Js = J;
  Js.topRows<3>() /= len;
  return Js;
}

}  // namespace

double manipulability(const RobotState& state, const ArmModel& model) {
  Matrix6d Js = scaled_jacobian(jacobian(state, model), model.characteristic_length_mm());
  Eigen::JacobiSVD<Matrix6d> svd(Js);
  return svd.singularValues()(5);
}

RobotState inverse_kinematics(const Pose& target, const RobotState& seed, const ArmModel& model) {
  const double len = model.characteristic_length_mm();
  const double tol_pos_mm = 0.02;
  const double tol_rot_rad = deg_to_rad(0.02);
  const int max_iter = 200;
  const double step_cap = 0.3;

  Vector6d q = seed.q;
  for (int iter = 0; iter < max_iter; ++iter) {
    RobotState cur;
    cur.q = q;
    Pose fk = forward_kinematics(cur, model);
    Vec3 ep = target.translation_mm - fk.translation_mm;
    Vec3 er = rotation_log(target.rotation, fk.rotation);
    if (ep.norm() < tol_pos_mm && er.norm() < tol_rot_rad) {
      RobotState out;
      for (int i = 0; i < 6; ++i) out.q[i] = wrap_angle(q[i]);
      for (int i = 0; i < 6; ++i) {
        if (out.q[i] < model.joints[i].limit_lo_rad - 1e-9 ||
            out.q[i] > model.joints[i].limit_hi_rad + 1e-9) {
          std::ostringstream msg;
          msg << "ik solution violates joint " << i << " limit: " << out.q[i];
          throw JointLimitViolation(msg.str());
        }
      }
      out.qdot.setZero();
      out.timestamp_s = seed.timestamp_s;
      return out;
    }

    Matrix6d Js = scaled_jacobian(jacobian(cur, model), len);
    Vector6d es;
    es.head<3>() = ep / len;
    es.tail<3>() = er;

    Eigen::JacobiSVD<Matrix6d> svd(Js);
    double sigma = svd.singularValues()(5);
    double lambda = (sigma > 0.1) ? 0.01 : 0.1;

    Matrix6d A = Js * Js.transpose() + lambda * lambda * Matrix6d::Identity();
    Vector6d dq = Js.transpose() * A.ldlt().solve(es);
    double norm = dq.norm();
    if (norm > step_cap) dq *= step_cap / norm;
    q += dq;
  }
  throw IkNoConvergence("ik did not converge within iteration budget");
}

ArmModel ArmModel::default_arm() {
  ArmModel m;
  const double lim = 2.0 * kPi;
  auto row = [lim](double twist, double a, double d) {
    JointRow r;
    r.twist_rad = twist;
    r.length_mm = a;
    r.offset_mm = d;
    r.angle_offset_rad = 0.0;
    r.limit_lo_rad = -lim;
    r.limit_hi_rad = lim;
    return r;
  };
  m.joints[0] = row(kPi / 2.0, 0.0, 89.159);
  m.joints[1] = row(0.0, -425.0, 0.0);
  m.joints[2] = row(0.0, -392.25, 0.0);
  m.joints[3] = row(kPi / 2.0, 0.0, 109.15);
  m.joints[4] = row(-kPi / 2.0, 0.0, 94.65);
  m.joints[5] = row(0.0, 0.0, 82.3);
  m.sigma_min_threshold = 0.01;
  m.slip_tolerance_mm_s = 1.0;
  return m;
}

ArmModel ArmModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open arm config: " + path);
  ArmModel m;
  for (int i = 0; i < 6; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("arm config truncated: " + path);
    std::istringstream ls(line);
    JointRow& r = m.joints[i];
    if (!(ls >> r.twist_rad >> r.length_mm >> r.offset_mm >> r.angle_offset_rad >>
          r.limit_lo_rad >> r.limit_hi_rad))
      throw std::runtime_error("arm config row malformed: " + path);
    if (r.limit_lo_rad >= r.limit_hi_rad)
      throw std::runtime_error("arm config limits inverted: " + path);
  }
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("arm config missing sigma line: " + path);
  std::istringstream ls(line);
  if (!(ls >> m.sigma_min_threshold))
    throw std::runtime_error("arm config sigma line malformed: " + path);
  if (!(m.sigma_min_threshold > 0))
    throw std::runtime_error("arm config sigma threshold must be positive: " + path);
  return m;
}

void ArmModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write arm config: " + path);
  for (const auto& r : joints) {
    out << format_full(r.twist_rad) << ' ' << format_full(r.length_mm) << ' '
        << format_full(r.offset_mm) << ' ' << format_full(r.angle_offset_rad) << ' '
        << format_full(r.limit_lo_rad) << ' ' << format_full(r.limit_hi_rad) << '\n';
  }
  out << format_full(sigma_min_threshold) << '\n';
}

}  // namespace agile::kinematics
