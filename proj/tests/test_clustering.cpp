// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <deque>
#include <random>

#include "owl/clustering.hpp"

using namespace owl;

namespace {

// Textbook O(n^2) fixed-radius DBSCAN with the same visiting order as
// cluster(): seeds in index order, breadth-first expansion.
std::vector<std::vector<int>> naive_dbscan(const PointCloud& cloud, double eps, int min_points) {
  const int n = static_cast<int>(cloud.size());
  auto neighbors = [&](int i) {
    std::vector<int> out;
    for (int j = 0; j < n; ++j) {
      const double dx = cloud.points[i].x - cloud.points[j].x;
      const double dy = cloud.points[i].y - cloud.points[j].y;
      const double dz = cloud.points[i].z - cloud.points[j].z;
      if (dx * dx + dy * dy + dz * dz <= eps * eps) out.push_back(j);
    }
    return out;
  };

  std::vector<int> label(n, -2);
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < n; ++i) {
    if (label[i] != -2) continue;
    const std::vector<int> seed_nb = neighbors(i);
    if (static_cast<int>(seed_nb.size()) < min_points) {
      label[i] = -1;
      continue;
    }
    const int cid = static_cast<int>(clusters.size());
    clusters.emplace_back();
    label[i] = cid;
    clusters[cid].push_back(i);
    std::deque<int> queue(seed_nb.begin(), seed_nb.end());
    while (!queue.empty()) {
      const int q = queue.front();
      queue.pop_front();
      if (label[q] == -1) {
        label[q] = cid;
        clusters[cid].push_back(q);
      }
      if (label[q] != -2) continue;
      label[q] = cid;
      clusters[cid].push_back(q);
      const std::vector<int> nb = neighbors(q);
      if (static_cast<int>(nb.size()) >= min_points) {
        for (int m : nb) queue.push_back(m);
      }
    }
  }
  for (auto& c : clusters) std::sort(c.begin(), c.end());
  std::vector<std::vector<int>> kept;
  for (auto& c : clusters)
    if (static_cast<int>(c.size()) >= min_points) kept.push_back(std::move(c));
  return kept;
}

PointCloud random_cloud(std::mt19937_64& rng, int max_points) {
  std::uniform_int_distribution<int> count(5, max_points);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  PointCloud cloud;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) cloud.points.push_back({u(rng), u(rng), u(rng), 0.0});
  return cloud;
}

}  // namespace

TEST_CASE("dynamic radius closed-form value and limits") {
  ClusteringParams p;
  p.alpha = 1.0;
  p.beta = 1.0;
  p.r0 = 0.5;
  CHECK(std::abs(dynamic_radius(p, 1.0) - 0.5 * (1.0 + std::exp(-1.0))) < 1e-9);
  CHECK(std::abs(dynamic_radius(p, 1.0) - 0.6839397205857212) < 1e-9);
  CHECK(dynamic_radius(p, 0.0) == doctest::Approx(p.max_radius()).epsilon(1e-12));
  p.beta = 0.0;
  CHECK(dynamic_radius(p, 123.0) == doctest::Approx(p.alpha * p.r0).epsilon(1e-12));
}

TEST_CASE("dynamic radius decreases monotonically in density") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> rho(0.0, 10.0);
  std::uniform_real_distribution<double> par(0.1, 3.0);
  for (int i = 0; i < 1000; ++i) {
    ClusteringParams p;
    p.alpha = par(rng);
    p.beta = par(rng);
    p.r0 = par(rng);
    double a = rho(rng), b = rho(rng);
    if (a > b) std::swap(a, b);
    CHECK(dynamic_radius(p, a) >= dynamic_radius(p, b));
  }
}

TEST_CASE("beta = 0 recovers fixed-radius DBSCAN exactly") {
  std::mt19937_64 rng(99);
  ClusteringParams p;
  p.alpha = 1.0;
  p.beta = 0.0;
  p.r0 = 1.5;
  p.min_points = 4;
  for (int trial = 0; trial < 100; ++trial) {
    const PointCloud cloud = random_cloud(rng, 200);
    const std::vector<Cluster> got = cluster(cloud, p);
    const std::vector<std::vector<int>> expected =
        naive_dbscan(cloud, p.alpha * p.r0, p.min_points);
    REQUIRE(got.size() == expected.size());
    for (std::size_t c = 0; c < got.size(); ++c) CHECK(got[c].members == expected[c]);
  }
}

TEST_CASE("density_at counts neighbors excluding the probe point") {
  PointCloud cloud;
  cloud.points.push_back({0, 0, 0, 0});
  cloud.points.push_back({0.1, 0, 0, 0});
  cloud.points.push_back({0, 0.1, 0, 0});
  cloud.points.push_back({5, 5, 5, 0});
  CHECK(density_at(cloud, 0, 0.5, 2.0) == doctest::Approx(1.0));
  CHECK(density_at(cloud, 3, 0.5, 2.0) == doctest::Approx(0.0));
}

TEST_CASE("cluster centroids are member means") {
  PointCloud cloud;
  for (int i = 0; i < 10; ++i) cloud.points.push_back({0.1 * i, 0.0, 0.0, 0.0});
  ClusteringParams p;
  p.min_points = 3;
  const auto clusters = cluster(cloud, p);
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].centroid[0] == doctest::Approx(0.45));
  CHECK(clusters[0].centroid[1] == doctest::Approx(0.0));
}

TEST_CASE("fit_box recovers an oriented rectangle") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (double yaw : {0.0, 0.3, -0.7, 1.2}) {
    PointCloud cloud;
    const double c = std::cos(yaw), s = std::sin(yaw);
    for (int i = 0; i < 300; ++i) {
      const double lx = (u01(rng) - 0.5) * 4.0;  // l = 4
      const double ly = (u01(rng) - 0.5) * 1.8;  // w = 1.8
      const double lz = u01(rng) * 1.5;
      cloud.points.push_back({c * lx - s * ly + 3.0, s * lx + c * ly - 2.0, lz, 0.0});
    }
    // Pin the exact extents so dims are deterministic.
    for (double sx : {-2.0, 2.0})
      for (double sy : {-0.9, 0.9})
        cloud.points.push_back({c * sx - s * sy + 3.0, s * sx + c * sy - 2.0, 0.75, 0.0});

    Cluster cl;
    for (int i = 0; i < static_cast<int>(cloud.size()); ++i) cl.members.push_back(i);
    const Box3D box = fit_box(cloud, cl, ClusteringParams{});
    CHECK(box.l == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(box.w == doctest::Approx(1.8).epsilon(1e-6));
    CHECK(box.h == doctest::Approx(1.5).epsilon(0.02));
    CHECK(box.l >= box.w);
    CHECK(box.yaw >= -M_PI / 2);
    CHECK(box.yaw < M_PI / 2);
    const double expect = std::abs(std::remainder(yaw, M_PI));
    CHECK(std::min(std::abs(std::remainder(box.yaw - yaw, M_PI)),
                   std::abs(std::remainder(box.yaw + yaw, M_PI))) ==
          doctest::Approx(0.0).epsilon(1e-6));
    (void)expect;
  }
}

TEST_CASE("fit_box collinear fallback warns and stays valid") {
  PointCloud cloud;
  for (int i = 0; i < 8; ++i) cloud.points.push_back({0.5 * i, 1.0, 0.0, 0.0});
  Cluster cl;
  for (int i = 0; i < 8; ++i) cl.members.push_back(i);
  bool warn = false;
  const Box3D box = fit_box(cloud, cl, ClusteringParams{}, &warn);
  CHECK(warn);
  CHECK(box.valid());
  CHECK(box.l >= box.w);
}

TEST_CASE("initial_labels finds well-separated objects") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  PointCloud scene;
  const double centers[2][2] = {{5.0, 0.0}, {-4.0, 7.0}};
  for (const auto& c : centers) {
    for (int i = 0; i < 120; ++i) {
      scene.points.push_back({c[0] + (u01(rng) - 0.5) * 3.5, c[1] + (u01(rng) - 0.5) * 1.6,
                              u01(rng) * 1.4, 0.5});
    }
  }
  const auto labels = initial_labels(scene, ClusteringParams{}, 0.2);
  REQUIRE(labels.size() == 2);
  for (const Box3D& b : labels) {
    CHECK(b.valid());
    CHECK(b.score > 0.0);
  }
}

TEST_CASE("params validation rejects nonsense") {
  ClusteringParams p;
  p.alpha = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.min_points = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
