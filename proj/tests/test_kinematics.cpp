#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "agile/kinematics.hpp"
#include "agile/rng.hpp"
#include "doctest.h"

using namespace agile;
using namespace agile::kinematics;

namespace {

Vector6d random_q(Rng& rng, double span) {
  Vector6d q;
  for (int i = 0; i < 6; ++i) q[i] = rng.uniform(-span, span);
  return q;
}

// Independent forward route: per-joint affine transforms composed with Eigen
// isometries instead of the hand-assembled rotation blocks.
Pose fk_isometry_oracle(const Vector6d& q, const ArmModel& m) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  for (int i = 0; i < 6; ++i) {
    const JointRow& j = m.joints[i];
    T = T * Eigen::AngleAxisd(q[i] + j.angle_offset_rad, Eigen::Vector3d::UnitZ()) *
        Eigen::Translation3d(0, 0, j.offset_mm) * Eigen::Translation3d(j.length_mm, 0, 0) *
        Eigen::AngleAxisd(j.twist_rad, Eigen::Vector3d::UnitX());
  }
  Pose p;
  p.rotation = T.rotation();
  p.translation_mm = T.translation();
  return p;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("wrap_angle maps onto (-pi, pi]") {
  CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3.0 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(2.0 * kPi) == doctest::Approx(0.0));
  CHECK(wrap_angle(-0.5) == doctest::Approx(-0.5));
}

TEST_CASE("rotation distance and log agree with axis-angle construction") {
  Vec3 u = Vec3(1, 2, -0.5).normalized();
  Mat3 r = axis_angle(u, 0.7);
  CHECK(rotation_angle_rad(r, Mat3::Identity()) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(rotation_angle_rad(r, r) == doctest::Approx(0.0));

  Mat3 b = axis_angle(Vec3::UnitY(), 1.1);
  Mat3 a = r * b;
  Vec3 log = rotation_log(a, b);
  CHECK((log - u * 0.7).norm() < 1e-12);
  CHECK(rotation_angle_rad(a, b) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("pose compose/inverse round trips") {
  Pose a;
  a.rotation = axis_angle(Vec3::UnitZ(), 0.4);
  a.translation_mm = Vec3(10, -3, 7);
  Pose b;
  b.rotation = axis_angle(Vec3::UnitX(), -1.2);
  b.translation_mm = Vec3(0, 5, 2);
  Pose ab = a.compose(b);
  Vec3 p(1, 2, 3);
  CHECK((ab.apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
  Pose id = ab.compose(ab.inverse());
  CHECK((id.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(id.translation_mm.norm() < 1e-9);
}

TEST_CASE("forward kinematics matches an independent isometry chain") {
  ArmModel m = ArmModel::default_arm();
  Rng rng(71);
  for (int trial = 0; trial < 30; ++trial) {
    RobotState s;
    s.q = random_q(rng, kPi);
    Pose fk = forward_kinematics(s, m);
    Pose ora = fk_isometry_oracle(s.q, m);
    CHECK((fk.rotation - ora.rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fk.translation_mm - ora.translation_mm).norm() < 1e-9);
  }
}

TEST_CASE("forward kinematics rotations stay orthonormal") {
  ArmModel m = ArmModel::default_arm();
  Rng rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    RobotState s;
    s.q = random_q(rng, 2.0 * kPi);
    Mat3 r = forward_kinematics(s, m).rotation;
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("jacobian matches central finite differences") {
  ArmModel m = ArmModel::default_arm();
  Rng rng(73);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    RobotState s;
    s.q = random_q(rng, 2.0);
    Matrix6d J = jacobian(s, m);
    for (int i = 0; i < 6; ++i) {
      RobotState hi = s, lo = s;
      hi.q[i] += h;
      lo.q[i] -= h;
      Pose fh = forward_kinematics(hi, m);
      Pose fl = forward_kinematics(lo, m);
      Vec3 dv = (fh.translation_mm - fl.translation_mm) / (2.0 * h);
      Vec3 dw = rotation_log(fh.rotation, fl.rotation) / (2.0 * h);
      CHECK((J.block<3, 1>(0, i) - dv).cwiseAbs().maxCoeff() < 1e-5);
      CHECK((J.block<3, 1>(3, i) - dw).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
}

TEST_CASE("contact jacobian matches differenced point motion") {
  ArmModel m = ArmModel::default_arm();
  Rng rng(74);
  RobotState s;
  s.q = random_q(rng, 1.5);
  Pose fk = forward_kinematics(s, m);
  Vec3 world_pt = fk.apply(Vec3(30, -20, 55));
  Vec3 local = fk.inverse().apply(world_pt);
  auto Jc = contact_jacobian(s, m, world_pt);
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    RobotState hi = s, lo = s;
    hi.q[i] += h;
    lo.q[i] -= h;
    Vec3 ph = forward_kinematics(hi, m).apply(local);
    Vec3 pl = forward_kinematics(lo, m).apply(local);
    Vec3 fd = (ph - pl) / (2.0 * h);
    CHECK((Jc.col(i) - fd).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("manipulability collapses at a straight wrist") {
  ArmModel m = ArmModel::default_arm();
  RobotState home;
  home.q << 0.0, -1.2, 1.9, -2.27, -kPi / 2.0, 0.0;
  double healthy = manipulability(home, m);
  CHECK(healthy > 0.02);

  RobotState bent = home;
  bent.q[4] = 0.0;  // wrist axes 4 and 6 align
  double singular = manipulability(bent, m);
  CHECK(singular < 1e-6);
  CHECK(singular < m.sigma_min_threshold);
}

TEST_CASE("ik reaches forward-kinematics targets from a perturbed seed") {
  ArmModel m = ArmModel::default_arm();
  Rng rng(75);
  RobotState home;
  home.q << 0.0, -1.2, 1.9, -2.27, -kPi / 2.0, 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    RobotState truth;
    truth.q = home.q + 0.35 * random_q(rng, 1.0);
    Pose target = forward_kinematics(truth, m);

    RobotState seed;
    seed.q = truth.q + 0.12 * random_q(rng, 1.0);
    RobotState sol = inverse_kinematics(target, seed, m);
    Pose reached = forward_kinematics(sol, m);
    CHECK((reached.translation_mm - target.translation_mm).norm() < 0.1);
    CHECK(rad_to_deg(rotation_angle_rad(reached.rotation, target.rotation)) < 0.1);
    CHECK(sol.qdot.norm() == 0.0);
    for (int i = 0; i < 6; ++i) {
      CHECK(sol.q[i] > -kPi - 1e-9);
      CHECK(sol.q[i] <= kPi + 1e-9);
    }
  }
}

TEST_CASE("ik rejects unreachable targets and limit violations") {
  ArmModel m = ArmModel::default_arm();
  RobotState home;
  home.q << 0.0, -1.2, 1.9, -2.27, -kPi / 2.0, 0.0;

  Pose far;
  far.translation_mm = Vec3(5000, 0, 0);
  CHECK_THROWS_AS(inverse_kinematics(far, home, m), IkNoConvergence);

  ArmModel narrow = m;
  narrow.joints[5].limit_lo_rad = -0.01;
  narrow.joints[5].limit_hi_rad = 0.01;
  RobotState rolled = home;
  rolled.q[5] = 1.0;
  Pose target = forward_kinematics(rolled, narrow);
  CHECK_THROWS_AS(inverse_kinematics(target, home, narrow), JointLimitViolation);
}

TEST_CASE("arm model save/load round trip is byte identical") {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(AGILE_BINARY_DIR) / "test_tmp";
  fs::create_directories(dir);
  ArmModel m = ArmModel::default_arm();
  m.joints[2].limit_lo_rad = -2.5;
  std::string p1 = (dir / "arm_a.txt").string();
  std::string p2 = (dir / "arm_b.txt").string();
  m.save(p1);
  ArmModel m2 = ArmModel::load(p1);
  m2.save(p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  CHECK(m2.joints[2].limit_lo_rad == m.joints[2].limit_lo_rad);
  CHECK(m2.sigma_min_threshold == m.sigma_min_threshold);

  std::string bad = (dir / "arm_bad.txt").string();
  {
    std::ofstream out(bad);
    out << "0 0 89 0 1 -1\n";
  }
  CHECK_THROWS(ArmModel::load(bad));
}
