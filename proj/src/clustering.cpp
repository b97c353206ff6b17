// SPDX-License-Identifier: Apache-2.0
#include "owl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace owl {

namespace {

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<Vec2> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

struct OrientedRect {
  double cx, cy, len, wid, yaw;
  double area() const { return len * wid; }
};

OrientedRect min_area_rect(const std::vector<Vec2>& hull) {
  OrientedRect best{0, 0, 0, 0, 0};
  double best_area = std::numeric_limits<double>::infinity();
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % n];
    const double ex = b[0] - a[0], ey = b[1] - a[1];
    const double norm = std::hypot(ex, ey);
    if (norm < 1e-12) continue;
    const double ux = ex / norm, uy = ey / norm;  // edge direction
    double min_u = std::numeric_limits<double>::infinity(), max_u = -min_u;
    double min_v = min_u, max_v = -min_u;
    for (const Vec2& p : hull) {
      const double u = ux * p[0] + uy * p[1];
      const double v = -uy * p[0] + ux * p[1];
      min_u = std::min(min_u, u);
      max_u = std::max(max_u, u);
      min_v = std::min(min_v, v);
      max_v = std::max(max_v, v);
    }
    const double len = max_u - min_u, wid = max_v - min_v;
    if (len * wid < best_area) {
      best_area = len * wid;
      const double mu = 0.5 * (min_u + max_u), mv = 0.5 * (min_v + max_v);
      best = {ux * mu - uy * mv, uy * mu + ux * mv, len, wid, std::atan2(uy, ux)};
    }
  }
  return best;
}

}  // namespace

double density_at(const PointCloud& cloud, int point_index, double probe_radius,
                  double reference_neighbors) {
  if (probe_radius <= 0.0) throw std::invalid_argument("density_at: probe_radius must be > 0");
  if (reference_neighbors <= 0.0)
    throw std::invalid_argument("density_at: reference_neighbors must be > 0");
  const Point& q = cloud.points.at(point_index);
  int count = 0;
  const double r2 = probe_radius * probe_radius;
  for (int i = 0; i < static_cast<int>(cloud.points.size()); ++i) {
    if (i == point_index) continue;
    const Point& p = cloud.points[i];
    const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
    if (dx * dx + dy * dy + dz * dz <= r2) ++count;
  }
  return count / reference_neighbors;
}

double dynamic_radius(const ClusteringParams& params, double rho) {
  if (rho < 0.0) throw std::invalid_argument("dynamic_radius: rho must be >= 0");
  return params.alpha * (1.0 + params.beta * std::exp(-rho)) * params.r0;
}

std::vector<Cluster> cluster(const PointCloud& cloud, const ClusteringParams& params) {
  params.validate();
  const int n = static_cast<int>(cloud.points.size());
  std::vector<Cluster> clusters;
  if (n == 0) return clusters;

  const double max_r = params.max_radius();
  const NeighborGrid grid(cloud, max_r);
  const double probe = 0.5 * params.r0;
  const NeighborGrid probe_grid(cloud, std::max(probe, 1e-6));

  // Per-point dynamic radius.
  std::vector<double> radius(n);
  for (int i = 0; i < n; ++i) {
    const int neigh = probe_grid.radius_count(cloud.points[i], probe) - 1;
    radius[i] = dynamic_radius(params, neigh / params.reference_neighbors);
  }

  constexpr int kUnvisited = -2, kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  auto neighbors = [&](int i) { return grid.radius_search(cloud.points[i], radius[i]); };

  for (int i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    auto seed_neigh = neighbors(i);
    if (static_cast<int>(seed_neigh.size()) < params.min_points) {
      label[i] = kNoise;
      continue;
    }
    const int cid = static_cast<int>(clusters.size());
    clusters.push_back({});
    label[i] = cid;
    std::deque<int> queue(seed_neigh.begin(), seed_neigh.end());
    while (!queue.empty()) {
      const int j = queue.front();
      queue.pop_front();
      if (label[j] == kNoise) label[j] = cid;  // border point
      if (label[j] != kUnvisited) continue;
      label[j] = cid;
      auto nb = neighbors(j);
      if (static_cast<int>(nb.size()) >= params.min_points) {
        queue.insert(queue.end(), nb.begin(), nb.end());
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    if (label[i] >= 0) clusters[label[i]].members.push_back(i);
  }
  std::vector<Cluster> out;
  for (auto& cl : clusters) {
    if (static_cast<int>(cl.members.size()) < params.min_points) continue;
    Vec3 c{0, 0, 0};
    for (int idx : cl.members) {
      c[0] += cloud.points[idx].x;
      c[1] += cloud.points[idx].y;
      c[2] += cloud.points[idx].z;
    }
    const double inv = 1.0 / cl.members.size();
    cl.centroid = {c[0] * inv, c[1] * inv, c[2] * inv};
    out.push_back(std::move(cl));
  }
  return out;
}

Box3D fit_box(const PointCloud& cloud, const Cluster& cl, const ClusteringParams& params,
              bool* collinear_warning) {
  if (cl.members.size() < 3) throw std::invalid_argument("fit_box: cluster needs >= 3 members");
  if (collinear_warning) *collinear_warning = false;

  std::vector<Vec2> bev;
  bev.reserve(cl.members.size());
  double z_min = std::numeric_limits<double>::infinity(), z_max = -z_min;
  for (int idx : cl.members) {
    const Point& p = cloud.points[idx];
    bev.push_back({p.x, p.y});
    z_min = std::min(z_min, p.z);
    z_max = std::max(z_max, p.z);
  }

  Box3D box;
  const auto hull = convex_hull(bev);
  if (hull.size() < 3) {
    // Collinear footprint: axis-aligned fallback.
    if (collinear_warning) *collinear_warning = true;
    double x_min = bev[0][0], x_max = bev[0][0], y_min = bev[0][1], y_max = bev[0][1];
    for (const auto& p : bev) {
      x_min = std::min(x_min, p[0]);
      x_max = std::max(x_max, p[0]);
      y_min = std::min(y_min, p[1]);
      y_max = std::max(y_max, p[1]);
    }
    box.x = 0.5 * (x_min + x_max);
    box.y = 0.5 * (y_min + y_max);
    box.l = std::max(x_max - x_min, 0.05);
    box.w = std::max(y_max - y_min, 0.05);
    box.yaw = 0.0;
  } else {
    const OrientedRect rect = min_area_rect(hull);
    box.x = rect.cx;
    box.y = rect.cy;
    box.l = std::max(rect.len, 0.05);
    box.w = std::max(rect.wid, 0.05);
    box.yaw = rect.yaw;
  }
  // Canonical form: l >= w, yaw in [-pi/2, pi/2).
  if (box.l < box.w) {
    std::swap(box.l, box.w);
    box.yaw += M_PI_2;
  }
  box.yaw = wrap_half_pi(box.yaw);
  box.z = 0.5 * (z_min + z_max);
  box.h = std::max(z_max - z_min, 0.05);
  box.class_id = ClassId::Unknown;
  box.score = std::clamp(cl.members.size() / params.score_reference, 0.0, 1.0);
  return box;
}

std::vector<Box3D> initial_labels(const PointCloud& scene, const ClusteringParams& params,
                                  double nms_iou_threshold) {
  std::vector<Box3D> boxes;
  for (const Cluster& cl : cluster(scene, params)) {
    if (cl.members.size() < 3) continue;
    boxes.push_back(fit_box(scene, cl, params));
  }
  return nms(boxes, nms_iou_threshold);
}

}  // namespace owl
