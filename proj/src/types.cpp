// SPDX-License-Identifier: Apache-2.0
#include "owl/types.hpp"

#include <cmath>

namespace owl {

ClassId class_from_name(const std::string& name) {
  if (name == "Vehicle") return ClassId::Vehicle;
  if (name == "Pedestrian") return ClassId::Pedestrian;
  if (name == "Cyclist") return ClassId::Cyclist;
  if (name == "Unknown") return ClassId::Unknown;
  throw std::invalid_argument("unknown class name: " + name);
}

double wrap_pi(double a) {
  const double two_pi = 2.0 * M_PI;
  a = std::fmod(a + M_PI, two_pi);
  if (a < 0.0) a += two_pi;
  return a - M_PI;
}

double wrap_half_pi(double a) {
  a = std::fmod(a + M_PI_2, M_PI);
  if (a < 0.0) a += M_PI;
  return a - M_PI_2;
}

Pose Pose::translation(double tx, double ty, double tz) {
  Pose p;
  p.m[3] = tx;
  p.m[7] = ty;
  p.m[11] = tz;
  return p;
}

Pose Pose::yaw_about_z(double yaw) {
  Pose p;
  const double c = std::cos(yaw), s = std::sin(yaw);
  p.m[0] = c;
  p.m[1] = -s;
  p.m[4] = s;
  p.m[5] = c;
  return p;
}

Point Pose::apply(const Point& p) const {
  Point out;
  out.x = m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3];
  out.y = m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7];
  out.z = m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11];
  out.intensity = p.intensity;
  return out;
}

bool Pose::rotation_orthonormal(double tol) const {
  // R * R^T must be the identity.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += m[i * 4 + k] * m[j * 4 + k];
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(dot - want) > tol) return false;
    }
  }
  return true;
}

Pose Pose::inverse() const {
  if (!rotation_orthonormal())
    throw std::invalid_argument("Pose::inverse: rotation block is not orthonormal");
  Pose inv;
  // R^T
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inv.m[i * 4 + j] = m[j * 4 + i];
  // -R^T t
  for (int i = 0; i < 3; ++i) {
    double t = 0.0;
    for (int k = 0; k < 3; ++k) t += inv.m[i * 4 + k] * m[k * 4 + 3];
    inv.m[i * 4 + 3] = -t;
  }
  inv.m[12] = inv.m[13] = inv.m[14] = 0.0;
  inv.m[15] = 1.0;
  return inv;
}

Pose Pose::compose(const Pose& other) const {
  Pose out;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += m[i * 4 + k] * other.m[k * 4 + j];
      out.m[i * 4 + j] = s;
    }
  }
  return out;
}

}  // namespace owl
