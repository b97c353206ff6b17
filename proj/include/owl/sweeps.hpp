// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_SWEEPS_HPP
#define OWL_SWEEPS_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "owl/types.hpp"

namespace owl {

struct SweepSequence {
  // Ordered by frame index; poses are sensor -> world rigid transforms.
  std::vector<std::pair<PointCloud, Pose>> sweeps;

  int size() const { return static_cast<int>(sweeps.size()); }
  /// Center sweep f0. Requires an odd sweep count 2n+1, n >= 1.
  int center_index() const { return size() / 2; }
  void validate() const;
};

struct AggregatedCloud {
  PointCloud cloud;               // all sweeps in frame-f0 coordinates
  std::vector<int> source_frame;  // per-point sweep index (0-based into sweeps)
};

struct PersistenceField {
  std::vector<double> scores;  // one per aggregated point, in [0,1]; 1 = persistent
};

struct GroundParams {
  double inlier_distance = 0.1;       // meters
  int max_iterations = 200;
  double max_normal_angle_deg = 15.0;  // vs +z
  double min_inlier_fraction = 0.15;
  std::uint64_t seed = 0;
};

struct GroundResult {
  PointCloud nonground;
  PointCloud ground;
  std::array<double, 4> plane{0, 0, 1, 0};  // ax + by + cz + d = 0, unit normal
  bool warning = false;                     // no near-horizontal plane found
};

/// Transform all sweeps into frame f0's coordinates and concatenate,
/// retaining per-point source-frame provenance.
AggregatedCloud aggregate_sweeps(const SweepSequence& seq);

/// PP-Score: per aggregated point, count neighbors contributed by each sweep
/// within neighborhood_radius; score = H(normalized counts) / log(2n+1).
/// Static structure is seen by all sweeps (uniform counts, score near 1);
/// movers are seen by one sweep only (score 0).
PersistenceField persistence_scores(const SweepSequence& seq, double neighborhood_radius);

struct FilteredCloud {
  PointCloud cloud;
  std::vector<int> kept_indices;  // into the aggregated cloud
};

/// Keep all frame-f0 points plus points from other sweeps whose persistence
/// score >= tau_static.
FilteredCloud filter_motion_artifacts(const SweepSequence& seq, const PersistenceField& field,
                                      double tau_static);

/// Seeded RANSAC fit of the dominant near-horizontal plane; inliers are
/// returned as ground. If no acceptable plane is found the input is returned
/// unchanged with `warning` set.
GroundResult remove_ground(const PointCloud& cloud, const GroundParams& params);

}  // namespace owl

#endif  // OWL_SWEEPS_HPP
