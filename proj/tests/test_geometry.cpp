// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "owl/geometry.hpp"

using namespace owl;

namespace {

double shoelace(const std::array<Vec2, 4>& c) {
  double a = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto& p = c[i];
    const auto& q = c[(i + 1) % 4];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * a;
}

Box3D random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> center(-2.0, 2.0);
  std::uniform_real_distribution<double> dim(0.5, 3.0);
  std::uniform_real_distribution<double> ang(-3.14, 3.14);
  Box3D b;
  b.x = center(rng);
  b.y = center(rng);
  b.z = center(rng);
  b.l = dim(rng);
  b.w = dim(rng);
  b.h = dim(rng);
  b.yaw = ang(rng);
  return b;
}

// Ratio-estimator Monte Carlo IoU over the joint bounding box.
double mc_iou3d(const Box3D& a, const Box3D& b, int samples, std::mt19937_64& rng) {
  const double ra = 0.5 * std::hypot(a.l, a.w);
  const double rb = 0.5 * std::hypot(b.l, b.w);
  const double lo[3] = {std::min(a.x - ra, b.x - rb), std::min(a.y - ra, b.y - rb),
                        std::min(a.z - a.h / 2, b.z - b.h / 2)};
  const double hi[3] = {std::max(a.x + ra, b.x + rb), std::max(a.y + ra, b.y + rb),
                        std::max(a.z + a.h / 2, b.z + b.h / 2)};
  std::uniform_real_distribution<double> ux(lo[0], hi[0]), uy(lo[1], hi[1]), uz(lo[2], hi[2]);
  long long inter = 0, uni = 0;
  for (int s = 0; s < samples; ++s) {
    Point p{ux(rng), uy(rng), uz(rng), 0.0};
    const bool ia = point_in_box(p, a);
    const bool ib = point_in_box(p, b);
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Box3D rigid_move(const Box3D& b, double tx, double ty, double yaw) {
  Box3D out = b;
  const double c = std::cos(yaw), s = std::sin(yaw);
  out.x = c * b.x - s * b.y + tx;
  out.y = s * b.x + c * b.y + ty;
  out.yaw = wrap_pi(b.yaw + yaw);
  return out;
}

}  // namespace

TEST_CASE("bev corners are counter-clockwise with area l*w") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const Box3D b = random_box(rng);
    const auto c = bev_corners(b);
    CHECK(shoelace(c) == doctest::Approx(b.l * b.w).epsilon(1e-12));
  }
}

TEST_CASE("convex intersection of shifted unit squares") {
  const std::vector<Vec2> a{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const std::vector<Vec2> b{{0.5, 0.5}, {1.5, 0.5}, {1.5, 1.5}, {0.5, 1.5}};
  CHECK(convex_intersection_area(a, b) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(convex_intersection_area(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<Vec2> far{{5, 5}, {6, 5}, {6, 6}, {5, 6}};
  CHECK(convex_intersection_area(a, far) == 0.0);
}

TEST_CASE("axis-aligned IoU against closed form") {
  Box3D a, b;
  a.l = a.w = a.h = 2.0;
  b = a;
  b.x = 1.0;  // overlap 1x2x2 of union 2*8-4
  CHECK(iou_bev(a, b) == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
  CHECK(iou_3d(a, b) == doctest::Approx(4.0 / 12.0).epsilon(1e-12));
  b.z = 1.0;  // vertical overlap halves
  CHECK(iou_3d(a, b) == doctest::Approx(2.0 / 14.0).epsilon(1e-12));
}

TEST_CASE("3D IoU matches Monte Carlo oracle on random pairs") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 100; ++i) {
    const Box3D a = random_box(rng);
    Box3D b = random_box(rng);
    if (i % 2 == 0) {  // force frequent overlap
      b.x = a.x + 0.3;
      b.y = a.y - 0.2;
      b.z = a.z + 0.1;
    }
    const double analytic = iou_3d(a, b);
    const double mc = mc_iou3d(a, b, 100000, rng);
    CHECK(std::abs(analytic - mc) <= 0.01);
  }
}

TEST_CASE("IoU symmetry and rigid-motion invariance") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const Box3D a = random_box(rng);
    const Box3D b = random_box(rng);
    CHECK(iou_3d(a, b) == doctest::Approx(iou_3d(b, a)).epsilon(1e-12));
    const double tx = u(rng), ty = u(rng), yaw = u(rng);
    const double moved = iou_3d(rigid_move(a, tx, ty, yaw), rigid_move(b, tx, ty, yaw));
    CHECK(std::abs(moved - iou_3d(a, b)) < 1e-9);
  }
}

TEST_CASE("degenerate boxes flag and score zero") {
  Box3D a;
  Box3D flat = a;
  flat.l = 1e-12;
  bool degenerate = false;
  CHECK(iou_bev(a, flat, &degenerate) == 0.0);
  CHECK(degenerate);
  degenerate = false;
  CHECK(iou_3d(flat, a, &degenerate) == 0.0);
  CHECK(degenerate);
  degenerate = true;
  CHECK(iou_3d(a, a, &degenerate) == doctest::Approx(1.0));
  CHECK_FALSE(degenerate);
}

TEST_CASE("points_in_box respects orientation") {
  Box3D b;
  b.l = 4.0;
  b.w = 1.0;
  b.yaw = M_PI / 2;  // long axis now along y
  PointCloud cloud;
  cloud.points.push_back({0.0, 1.8, 0.0, 0.0});  // inside rotated, outside unrotated
  cloud.points.push_back({1.8, 0.0, 0.0, 0.0});
  const auto inside = points_in_box(cloud, b);
  REQUIRE(inside.size() == 1);
  CHECK(inside[0] == 0);
}

TEST_CASE("nms keeps highest score and breaks ties by lower index") {
  Box3D a;
  a.l = a.w = a.h = 2.0;
  a.score = 0.5;
  Box3D b = a;
  b.x = 0.2;
  b.score = 0.9;
  Box3D c = a;
  c.x = 10.0;
  c.score = 0.5;
  const auto kept = nms({a, b, c}, 0.3);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].score == 0.9);
  CHECK(kept[1].x == 10.0);

  // Equal scores: the earlier box wins.
  Box3D d = a;
  d.x = 0.1;
  const auto tie = nms({a, d}, 0.3);
  REQUIRE(tie.size() == 1);
  CHECK(tie[0].x == a.x);
}

TEST_CASE("voxelize bins half-open and counts drops") {
  PointCloud cloud;
  cloud.points.push_back({0.0, 0.0, 0.0, 0.0});   // cell (0,0,0)
  cloud.points.push_back({0.999, 0.0, 0.0, 0.0});  // still cell 0
  cloud.points.push_back({1.0, 0.0, 0.0, 0.0});   // lower-inclusive: cell (1,0,0)
  cloud.points.push_back({-0.1, 0.0, 0.0, 0.0});  // below origin -> dropped
  cloud.points.push_back({9.0, 9.0, 9.0, 0.0});   // out of extents -> dropped
  const VoxelGrid g = voxelize(cloud, {0, 0, 0}, {1, 1, 1}, {4, 4, 4});
  CHECK(g.dropped == 2);
  REQUIRE(g.occupied_count() == 2);
  CHECK(g.cells.at({0, 0, 0}).size() == 2);
  CHECK(g.cells.at({1, 0, 0}).size() == 1);

  PointCloud bad;
  bad.points.push_back({0.5, 0.5, 0.5, 0.0});
  bad.points.push_back({std::nan(""), 0.0, 0.0, 0.0});
  try {
    voxelize(bad, {0, 0, 0}, {1, 1, 1}, {4, 4, 4});
    FAIL("voxelize accepted a non-finite point");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("point index 1") != std::string::npos);
  }
}

TEST_CASE("NeighborGrid matches brute-force radius search") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) cloud.points.push_back({u(rng), u(rng), u(rng), 0.0});
  const double radius = 1.2;
  NeighborGrid grid(cloud, radius);
  for (int q = 0; q < 50; ++q) {
    const Point center{u(rng), u(rng), u(rng), 0.0};
    std::vector<int> brute;
    for (int i = 0; i < 500; ++i) {
      const Point& p = cloud.points[i];
      const double dx = p.x - center.x, dy = p.y - center.y, dz = p.z - center.z;
      if (dx * dx + dy * dy + dz * dz <= radius * radius) brute.push_back(i);
    }
    CHECK(grid.radius_search(center, radius) == brute);
    CHECK(grid.radius_count(center, radius) == static_cast<int>(brute.size()));
  }
}
