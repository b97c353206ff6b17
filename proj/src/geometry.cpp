// SPDX-License-Identifier: Apache-2.0
#include "owl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace owl {

namespace {

constexpr double kDegenerateArea = 1e-9;

double polygon_area(const std::vector<Vec2>& poly) {
  double s = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    s += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * s;
}

// Clip `poly` to the half-plane left of the directed edge a->b.
std::vector<Vec2> clip_half_plane(const std::vector<Vec2>& poly, const Vec2& a, const Vec2& b) {
  std::vector<Vec2> out;
  out.reserve(poly.size() + 1);
  const std::size_t n = poly.size();
  auto side = [&](const Vec2& p) {
    return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& cur = poly[i];
    const Vec2& nxt = poly[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back({cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
    }
  }
  return out;
}

}  // namespace

std::array<Vec2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = 0.5 * box.l, hw = 0.5 * box.w;
  // Counter-clockwise in the box frame, then rotated into the world.
  const std::array<Vec2, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {box.x + c * local[i][0] - s * local[i][1],
              box.y + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

double convex_intersection_area(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  std::vector<Vec2> poly = a;
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < n && !poly.empty(); ++i) {
    poly = clip_half_plane(poly, b[i], b[(i + 1) % n]);
  }
  if (poly.size() < 3) return 0.0;
  return std::abs(polygon_area(poly));
}

bool point_in_box(const Point& p, const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double dx = p.x - box.x, dy = p.y - box.y, dz = p.z - box.z;
  const double lx = c * dx + s * dy;   // rotate by -yaw
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * box.l && std::abs(ly) <= 0.5 * box.w && std::abs(dz) <= 0.5 * box.h;
}

std::vector<int> points_in_box(const PointCloud& cloud, const Box3D& box) {
  box.validate();
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(cloud.points.size()); ++i) {
    if (point_in_box(cloud.points[i], box)) out.push_back(i);
  }
  return out;
}

double iou_bev(const Box3D& a, const Box3D& b, bool* degenerate) {
  const double area_a = a.footprint_area(), area_b = b.footprint_area();
  if (degenerate) *degenerate = false;
  if (area_a < kDegenerateArea || area_b < kDegenerateArea) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double inter = convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b, bool* degenerate) {
  const double vol_a = a.volume(), vol_b = b.volume();
  if (degenerate) *degenerate = false;
  if (vol_a < kDegenerateArea || vol_b < kDegenerateArea) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double inter_area =
      convex_intersection_area({ca.begin(), ca.end()}, {cb.begin(), cb.end()});
  const double z_lo = std::max(a.z - 0.5 * a.h, b.z - 0.5 * b.h);
  const double z_hi = std::min(a.z + 0.5 * a.h, b.z + 0.5 * b.h);
  const double inter_vol = inter_area * std::max(0.0, z_hi - z_lo);
  const double uni = vol_a + vol_b - inter_vol;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter_vol / uni, 0.0, 1.0);
}

std::vector<Box3D> nms(const std::vector<Box3D>& boxes, double iou_threshold) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return boxes[i].score > boxes[j].score; });
  std::vector<bool> suppressed(boxes.size(), false);
  std::vector<Box3D> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const int i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(boxes[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const int j = order[oj];
      if (suppressed[j]) continue;
      if (iou_bev(boxes[i], boxes[j]) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

VoxelGrid voxelize(const PointCloud& cloud, const Vec3& origin, const Vec3& cell_size,
                   const std::array<int, 3>& extents) {
  for (int a = 0; a < 3; ++a) {
    if (cell_size[a] <= 0.0) throw std::invalid_argument("voxelize: cell_size must be positive");
    if (extents[a] <= 0) throw std::invalid_argument("voxelize: extents must be positive");
  }
  VoxelGrid grid;
  grid.origin = origin;
  grid.cell_size = cell_size;
  grid.extents = extents;
  for (int i = 0; i < static_cast<int>(cloud.points.size()); ++i) {
    const Point& p = cloud.points[i];
    if (!p.finite()) {
      throw std::invalid_argument("voxelize: non-finite coordinates at point index " +
                                  std::to_string(i));
    }
    // Lower-inclusive, half-open bins.
    VoxelIndex v{static_cast<int>(std::floor((p.x - origin[0]) / cell_size[0])),
                 static_cast<int>(std::floor((p.y - origin[1]) / cell_size[1])),
                 static_cast<int>(std::floor((p.z - origin[2]) / cell_size[2]))};
    if (!grid.in_extents(v)) {
      ++grid.dropped;
      continue;
    }
    grid.cells[v].push_back(i);
  }
  return grid;
}

NeighborGrid::NeighborGrid(const PointCloud& cloud, double cell) : cloud_(cloud), cell_(cell) {
  if (cell <= 0.0) throw std::invalid_argument("NeighborGrid: cell must be positive");
  for (int i = 0; i < static_cast<int>(cloud.points.size()); ++i) {
    const Point& p = cloud.points[i];
    buckets_[{static_cast<std::int64_t>(std::floor(p.x / cell_)),
              static_cast<std::int64_t>(std::floor(p.y / cell_)),
              static_cast<std::int64_t>(std::floor(p.z / cell_))}]
        .push_back(i);
  }
}

std::vector<int> NeighborGrid::radius_search(const Point& center, double radius) const {
  if (radius > cell_ + 1e-12)
    throw std::invalid_argument("NeighborGrid: radius exceeds construction cell size");
  std::vector<int> out;
  const double r2 = radius * radius;
  const std::int64_t cx = static_cast<std::int64_t>(std::floor(center.x / cell_));
  const std::int64_t cy = static_cast<std::int64_t>(std::floor(center.y / cell_));
  const std::int64_t cz = static_cast<std::int64_t>(std::floor(center.z / cell_));
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        const auto it = buckets_.find({cx + dx, cy + dy, cz + dz});
        if (it == buckets_.end()) continue;
        for (int idx : it->second) {
          const Point& p = cloud_.points[idx];
          const double ddx = p.x - center.x, ddy = p.y - center.y, ddz = p.z - center.z;
          if (ddx * ddx + ddy * ddy + ddz * ddz <= r2) out.push_back(idx);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int NeighborGrid::radius_count(const Point& center, double radius) const {
  return static_cast<int>(radius_search(center, radius).size());
}

}  // namespace owl
