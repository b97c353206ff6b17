// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_GEOMETRY_HPP
#define OWL_GEOMETRY_HPP

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "owl/types.hpp"

namespace owl {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

/// BEV footprint corners of a box, counter-clockwise order.
std::array<Vec2, 4> bev_corners(const Box3D& box);

/// Area of the intersection of two convex polygons (Sutherland-Hodgman clip).
double convex_intersection_area(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

/// Indices of points whose coordinates, rotated into the box frame, lie
/// within +-(l/2, w/2, h/2).
std::vector<int> points_in_box(const PointCloud& cloud, const Box3D& box);
bool point_in_box(const Point& p, const Box3D& box);

// Degenerate (near-zero area/volume) boxes yield IoU 0; `degenerate`, when
// given, is set accordingly.
double iou_bev(const Box3D& a, const Box3D& b, bool* degenerate = nullptr);
double iou_3d(const Box3D& a, const Box3D& b, bool* degenerate = nullptr);

/// Greedy score-descending suppression by iou_bev. Ties broken by lower
/// original index; output sorted by score descending.
std::vector<Box3D> nms(const std::vector<Box3D>& boxes, double iou_threshold);

struct VoxelIndex {
  int ix = 0, iy = 0, iz = 0;
  auto operator<=>(const VoxelIndex&) const = default;
};

struct VoxelGrid {
  Vec3 origin{0, 0, 0};
  Vec3 cell_size{1, 1, 1};
  std::array<int, 3> extents{1, 1, 1};  // W, H, D cell counts
  // Sorted cell -> member point indices; only occupied cells stored.
  std::map<VoxelIndex, std::vector<int>> cells;
  int dropped = 0;  // out-of-range points

  std::size_t occupied_count() const { return cells.size(); }
  bool in_extents(const VoxelIndex& v) const {
    return v.ix >= 0 && v.ix < extents[0] && v.iy >= 0 && v.iy < extents[1] && v.iz >= 0 &&
           v.iz < extents[2];
  }
  /// Geometric center of a cell (not the point centroid).
  Vec3 cell_center(const VoxelIndex& v) const {
    return {origin[0] + (v.ix + 0.5) * cell_size[0], origin[1] + (v.iy + 0.5) * cell_size[1],
            origin[2] + (v.iz + 0.5) * cell_size[2]};
  }
};

/// Bin points into cells with half-open, lower-inclusive intervals; points
/// outside the extents are dropped and counted. Throws on non-finite
/// coordinates, naming the offending point index.
VoxelGrid voxelize(const PointCloud& cloud, const Vec3& origin, const Vec3& cell_size,
                   const std::array<int, 3>& extents);

// Uniform hash grid for fixed-radius neighbor queries.
class NeighborGrid {
 public:
  NeighborGrid(const PointCloud& cloud, double cell);

  /// Indices of points within `radius` of `center` (requires radius <= cell
  /// size used at construction; includes the query point itself if present).
  std::vector<int> radius_search(const Point& center, double radius) const;
  int radius_count(const Point& center, double radius) const;

 private:
  const PointCloud& cloud_;
  double cell_;
  std::map<std::array<std::int64_t, 3>, std::vector<int>> buckets_;
};

}  // namespace owl

#endif  // OWL_GEOMETRY_HPP
