#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <string>

namespace agile {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

constexpr double kPi = 3.14159265358979323846;

// Shortest-path round trip through text. %.17g preserves IEEE doubles exactly.
inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Seconds with microsecond precision; used for all timestamps written to files.
inline std::string format_us(std::int64_t t_us) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", static_cast<double>(t_us) * 1e-6);
  return buf;
}

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace agile
