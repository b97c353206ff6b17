// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "owl/cues.hpp"
#include "owl/geometry.hpp"

using namespace owl;

namespace {

Box3D proto_box(ClassId cls, double x = 0.0, double y = 0.0) {
  const auto& dims = SizePrototypes::defaults().at(cls);
  Box3D b;
  b.x = x;
  b.y = y;
  b.l = dims[0];
  b.w = dims[1];
  b.h = dims[2];
  b.class_id = cls;
  return b;
}

// Direct formula evaluation used as the oracle.
double oracle_s_dis(const Box3D& box, const PointCloud& scene, int r, double norm) {
  const double dist = std::sqrt(box.x * box.x + box.y * box.y + box.z * box.z);
  std::vector<char> occ(static_cast<std::size_t>(r) * r, 0);
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  for (const Point& p : scene.points) {
    if (!point_in_box(p, box)) continue;
    const double lx = c * (p.x - box.x) + s * (p.y - box.y) + 0.5 * box.l;
    const double ly = -s * (p.x - box.x) + c * (p.y - box.y) + 0.5 * box.w;
    const int gx = std::clamp(static_cast<int>(std::floor(lx / box.l * r)), 0, r - 1);
    const int gy = std::clamp(static_cast<int>(std::floor(ly / box.w * r)), 0, r - 1);
    occ[static_cast<std::size_t>(gy) * r + gx] = 1;
  }
  int n = 0;
  for (char o : occ) n += o;
  return (1.0 - std::min(1.0, std::max(0.0, dist / norm))) +
         static_cast<double>(n) / (static_cast<double>(r) * r);
}

double oracle_s_cons(const Box3D& box, const std::array<double, 3>& proto) {
  double ps[3] = {proto[0], proto[1], proto[2]};
  double bs[3] = {box.l, box.w, box.h};
  const double pa = ps[0] + ps[1] + ps[2], ba = bs[0] + bs[1] + bs[2];
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) sum += (ps[k] / pa) * std::log((ps[k] / pa) / (bs[k] / ba));
  return std::min(0.05, std::max(sum, 0.0)) / 0.05;
}

}  // namespace

TEST_CASE("prototype table lookups") {
  const SizePrototypes p = SizePrototypes::defaults();
  CHECK(p.has(ClassId::Vehicle));
  CHECK_FALSE(p.has(ClassId::Unknown));
  CHECK(p.at(ClassId::Vehicle)[0] > p.at(ClassId::Pedestrian)[0]);
  CHECK_THROWS_WITH_AS(p.at(ClassId::Unknown), "SizePrototypes: no prototype for class Unknown",
                       std::invalid_argument);
  for (ClassId cls : {ClassId::Vehicle, ClassId::Pedestrian, ClassId::Cyclist})
    CHECK(p.nearest(proto_box(cls)) == cls);
}

TEST_CASE("distribution and consistency scores match direct evaluation") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> dim(0.4, 5.0);
  std::uniform_real_distribution<double> pos(-40.0, 40.0);
  const SizePrototypes protos = SizePrototypes::defaults();

  for (int trial = 0; trial < 100; ++trial) {
    Box3D b;
    b.x = pos(rng);
    b.y = pos(rng);
    b.z = u(rng);
    b.l = dim(rng);
    b.w = dim(rng);
    b.h = dim(rng);
    b.yaw = u(rng) * 1.5;
    b.class_id = static_cast<ClassId>(1 + trial % 3);

    PointCloud scene;
    for (int i = 0; i < 60; ++i) {
      scene.points.push_back(
          {b.x + u(rng) * b.l, b.y + u(rng) * b.w, b.z + u(rng) * b.h * 0.5, 0.5});
    }

    CHECK(std::abs(distribution_score(b, scene, 8, 75.0) - oracle_s_dis(b, scene, 8, 75.0)) <
          1e-12);
    const double s = consistency_score(b, protos);
    CHECK(std::abs(s - oracle_s_cons(b, protos.at(b.class_id))) < 1e-12);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("consistency score is exactly zero on a prototype") {
  const SizePrototypes protos = SizePrototypes::defaults();
  for (ClassId cls : {ClassId::Vehicle, ClassId::Pedestrian, ClassId::Cyclist}) {
    CHECK(consistency_score(proto_box(cls), protos) == 0.0);
    // Scale invariance of the normalized form: halving all dims keeps 0,
    // while the raw form sees the undersized box.
    Box3D small = proto_box(cls);
    small.l *= 0.5;
    small.w *= 0.5;
    small.h *= 0.5;
    CHECK(consistency_score(small, protos) == 0.0);
    CHECK(consistency_score(small, protos, /*raw_sizes=*/true) > 0.0);
  }
  CHECK_THROWS_AS(consistency_score(Box3D{}, protos), std::invalid_argument);  // Unknown class
}

TEST_CASE("instance attributes count points and average intensity") {
  Box3D b;
  b.l = b.w = b.h = 2.0;
  PointCloud scene;
  scene.points.push_back({0.1, 0.1, 0.0, 0.2});
  scene.points.push_back({-0.3, 0.4, 0.5, 0.6});
  scene.points.push_back({5.0, 5.0, 5.0, 1.0});
  const auto [count, intensity] = instance_attributes(scene, b);
  CHECK(count == 2);
  CHECK(intensity == doctest::Approx(0.4));
  const auto [zero, zero_i] = instance_attributes(PointCloud{}, b);
  CHECK(zero == 0);
  CHECK(zero_i == 0.0);
}

TEST_CASE("tracking follows a constant-velocity mover") {
  std::vector<std::vector<Box3D>> frames;
  for (int f = 0; f < 5; ++f) {
    Box3D b = proto_box(ClassId::Vehicle, 2.0 * f, 1.0);  // 2 m per 0.1 s frame = 20 m/s...
    b.x = 0.3 * f;                                        // keep IoU overlap between frames
    frames.push_back({b});
  }
  const auto tracks = track(frames, TrackingConfig{});
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].observations.size() == 5);
  CHECK(tracks[0].speed() == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(tracks[0].vx == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(tracks[0].vy == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("tracking bridges gaps up to k_miss frames") {
  std::vector<std::vector<Box3D>> frames(5);
  for (int f : {0, 1, 4}) frames[f] = {proto_box(ClassId::Vehicle, 0.1 * f, 0.0)};
  TrackingConfig cfg;
  cfg.k_miss = 3;
  auto tracks = track(frames, cfg);
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].observations.size() == 3);

  cfg.k_miss = 1;  // the 2-frame gap now breaks the track
  tracks = track(frames, cfg);
  CHECK(tracks.size() == 2);
}

TEST_CASE("separate objects get separate tracks") {
  std::vector<std::vector<Box3D>> frames;
  for (int f = 0; f < 3; ++f)
    frames.push_back({proto_box(ClassId::Vehicle, 0.0, 0.0), proto_box(ClassId::Pedestrian, 20.0, 5.0)});
  const auto tracks = track(frames, TrackingConfig{});
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[0].id < tracks[1].id);
  for (const auto& t : tracks) {
    CHECK(t.observations.size() == 3);
    CHECK(t.speed() < 0.1);
  }
}

TEST_CASE("mine_cues yields one aligned record per box") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<PointCloud> scenes(3);
  std::vector<std::vector<Box3D>> labels(3);
  for (int f = 0; f < 3; ++f) {
    scenes[f].frame_id = f;
    Box3D stat = proto_box(ClassId::Vehicle, 8.0, 0.0);
    Box3D mover = proto_box(ClassId::Cyclist, -5.0, 2.0 * f);  // 20 m/s in y
    for (const Box3D* b : {&stat, &mover}) {
      for (int i = 0; i < 30; ++i) {
        scenes[f].points.push_back({b->x + u(rng) * b->l / 2, b->y + u(rng) * b->w / 2,
                                    b->z + u(rng) * b->h / 2, 0.5});
      }
    }
    labels[f] = {stat, mover};
  }

  CueConfig cfg;
  cfg.tracking.dist_gate = 3.0;
  const auto cues = mine_cues(scenes, labels, SizePrototypes::defaults(), cfg);
  REQUIRE(cues.size() == 6);
  for (const CueRecord& c : cues) {
    CHECK(c.point_count > 0);
    CHECK(c.track_id >= 0);
    CHECK(c.s_cons == 0.0);  // exact prototype sizes
    CHECK(c.s_dis > 0.0);
  }
  // The static vehicle is static, the fast cyclist is dynamic.
  CHECK_FALSE(cues[0].dynamic);
  CHECK(cues[1].dynamic);

  CHECK_THROWS_AS(mine_cues(scenes, {{}, {}}, SizePrototypes::defaults(), cfg),
                  std::invalid_argument);
}

TEST_CASE("unknown-class boxes are scored against their nearest prototype") {
  PointCloud scene;
  scene.frame_id = 0;
  Box3D b = proto_box(ClassId::Vehicle, 10.0, 0.0);
  b.class_id = ClassId::Unknown;
  const auto cues = mine_cues({scene}, {{b}}, SizePrototypes::defaults(), CueConfig{});
  REQUIRE(cues.size() == 1);
  CHECK(cues[0].s_cons == 0.0);
}
