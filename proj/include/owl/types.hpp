// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_TYPES_HPP
#define OWL_TYPES_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace owl {

enum class ClassId : int { Unknown = 0, Vehicle = 1, Pedestrian = 2, Cyclist = 3 };

inline const char* class_name(ClassId c) {
  switch (c) {
    case ClassId::Vehicle: return "Vehicle";
    case ClassId::Pedestrian: return "Pedestrian";
    case ClassId::Cyclist: return "Cyclist";
    default: return "Unknown";
  }
}

ClassId class_from_name(const std::string& name);

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;  // reflectance in [0,1]

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(intensity);
  }
};

struct PointCloud {
  std::vector<Point> points;
  int frame_id = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Wrap an angle into [-pi, pi).
double wrap_pi(double a);
/// Wrap an angle into [-pi/2, pi/2).
double wrap_half_pi(double a);

// Oriented 3D box. Yaw is counter-clockwise about +z, zero along +x.
struct Box3D {
  double x = 0.0, y = 0.0, z = 0.0;  // center, meters
  double l = 1.0, w = 1.0, h = 1.0;  // dims, meters
  double yaw = 0.0;                  // radians, wrapped to [-pi, pi)
  ClassId class_id = ClassId::Unknown;
  double score = 0.0;   // in [0,1]
  double weight = 1.0;  // >= 0

  double volume() const { return l * w * h; }
  double footprint_area() const { return l * w; }
  double range() const { return std::sqrt(x * x + y * y + z * z); }

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && l > 0.0 && w > 0.0 &&
           h > 0.0 && std::isfinite(yaw) && score >= 0.0 && score <= 1.0 && weight >= 0.0;
  }
  void validate() const {
    if (!valid()) throw std::invalid_argument("Box3D invariant violated");
  }
};

// Row-major 4x4 rigid transform, sensor -> world.
struct Pose {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Pose identity() { return Pose{}; }
  static Pose translation(double tx, double ty, double tz);
  static Pose yaw_about_z(double yaw);

  Point apply(const Point& p) const;
  Pose inverse() const;        // throws if the rotation block is not orthonormal
  Pose compose(const Pose& other) const;  // this * other
  bool rotation_orthonormal(double tol = 1e-6) const;
};

}  // namespace owl

#endif  // OWL_TYPES_HPP
