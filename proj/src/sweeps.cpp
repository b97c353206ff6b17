// SPDX-License-Identifier: Apache-2.0
#include "owl/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "owl/geometry.hpp"

namespace owl {

void SweepSequence::validate() const {
  if (size() < 3 || size() % 2 == 0)
    throw std::invalid_argument("SweepSequence: sweep count must be 2n+1 with n >= 1");
  for (const auto& [cloud, pose] : sweeps) {
    (void)cloud;
    if (!pose.rotation_orthonormal())
      throw std::invalid_argument("SweepSequence: pose rotation not orthonormal");
  }
}

AggregatedCloud aggregate_sweeps(const SweepSequence& seq) {
  seq.validate();
  const int center = seq.center_index();
  const Pose world_to_center = seq.sweeps[center].second.inverse();

  AggregatedCloud out;
  out.cloud.frame_id = seq.sweeps[center].first.frame_id;
  for (int s = 0; s < seq.size(); ++s) {
    const auto& [cloud, pose] = seq.sweeps[s];
    const Pose to_center = world_to_center.compose(pose);
    for (const Point& p : cloud.points) {
      out.cloud.points.push_back(to_center.apply(p));
      out.source_frame.push_back(s);
    }
  }
  return out;
}

PersistenceField persistence_scores(const SweepSequence& seq, double neighborhood_radius) {
  if (neighborhood_radius <= 0.0)
    throw std::invalid_argument("persistence_scores: neighborhood_radius must be > 0");
  const AggregatedCloud agg = aggregate_sweeps(seq);
  const int num_sweeps = seq.size();
  const NeighborGrid grid(agg.cloud, neighborhood_radius);

  PersistenceField field;
  field.scores.resize(agg.cloud.points.size(), 0.0);
  const double log_k = std::log(static_cast<double>(num_sweeps));
  std::vector<double> counts(num_sweeps);
  for (std::size_t i = 0; i < agg.cloud.points.size(); ++i) {
    std::fill(counts.begin(), counts.end(), 0.0);
    double total = 0.0;
    for (int j : grid.radius_search(agg.cloud.points[i], neighborhood_radius)) {
      counts[agg.source_frame[j]] += 1.0;
      total += 1.0;
    }
    if (total <= 0.0) continue;  // isolated point: treated as non-persistent
    double entropy = 0.0;
    for (double c : counts) {
      if (c > 0.0) {
        const double p = c / total;
        entropy -= p * std::log(p);
      }
    }
    field.scores[i] = std::clamp(entropy / log_k, 0.0, 1.0);
  }
  return field;
}

FilteredCloud filter_motion_artifacts(const SweepSequence& seq, const PersistenceField& field,
                                      double tau_static) {
  const AggregatedCloud agg = aggregate_sweeps(seq);
  if (field.scores.size() != agg.cloud.points.size())
    throw std::invalid_argument("filter_motion_artifacts: field not aligned with aggregate");
  const int center = seq.center_index();

  FilteredCloud out;
  out.cloud.frame_id = agg.cloud.frame_id;
  for (std::size_t i = 0; i < agg.cloud.points.size(); ++i) {
    if (agg.source_frame[i] == center || field.scores[i] >= tau_static) {
      out.cloud.points.push_back(agg.cloud.points[i]);
      out.kept_indices.push_back(static_cast<int>(i));
    }
  }
  return out;
}

GroundResult remove_ground(const PointCloud& cloud, const GroundParams& params) {
  if (cloud.empty()) throw std::invalid_argument("remove_ground: empty cloud");
  const int n = static_cast<int>(cloud.points.size());
  GroundResult res;
  const double cos_max = std::cos(params.max_normal_angle_deg * M_PI / 180.0);

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  int best_inliers = -1;
  std::array<double, 4> best_plane{0, 0, 1, 0};
  for (int it = 0; it < params.max_iterations; ++it) {
    const int a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    const Point &pa = cloud.points[a], &pb = cloud.points[b], &pc = cloud.points[c];
    const double ux = pb.x - pa.x, uy = pb.y - pa.y, uz = pb.z - pa.z;
    const double vx = pc.x - pa.x, vy = pc.y - pa.y, vz = pc.z - pa.z;
    double nx = uy * vz - uz * vy, ny = uz * vx - ux * vz, nz = ux * vy - uy * vx;
    const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
    if (norm < 1e-12) continue;
    nx /= norm;
    ny /= norm;
    nz /= norm;
    if (nz < 0.0) {
      nx = -nx;
      ny = -ny;
      nz = -nz;
    }
    if (nz < cos_max) continue;  // not near-horizontal
    const double d = -(nx * pa.x + ny * pa.y + nz * pa.z);
    int inliers = 0;
    for (const Point& p : cloud.points) {
      if (std::abs(nx * p.x + ny * p.y + nz * p.z + d) <= params.inlier_distance) ++inliers;
    }
    if (inliers > best_inliers) {
      best_inliers = inliers;
      best_plane = {nx, ny, nz, d};
    }
  }

  if (best_inliers < static_cast<int>(params.min_inlier_fraction * n)) {
    res.nonground = cloud;
    res.warning = true;
    return res;
  }

  res.plane = best_plane;
  res.nonground.frame_id = cloud.frame_id;
  res.ground.frame_id = cloud.frame_id;
  for (const Point& p : cloud.points) {
    const double dist =
        std::abs(best_plane[0] * p.x + best_plane[1] * p.y + best_plane[2] * p.z + best_plane[3]);
    if (dist <= params.inlier_distance) {
      res.ground.points.push_back(p);
    } else {
      res.nonground.points.push_back(p);
    }
  }
  return res;
}

}  // namespace owl
