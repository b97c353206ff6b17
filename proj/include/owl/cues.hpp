// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_CUES_HPP
#define OWL_CUES_HPP

#include <map>
#include <vector>

#include "owl/types.hpp"

namespace owl {

struct SizePrototypes {
  std::map<ClassId, std::array<double, 3>> sizes;  // (l, w, h)

  static SizePrototypes defaults();
  bool has(ClassId c) const { return sizes.count(c) > 0; }
  const std::array<double, 3>& at(ClassId c) const;
  /// Known class with the smallest normalized-size divergence to the box.
  ClassId nearest(const Box3D& box) const;
};

struct TrackObservation {
  int frame = 0;
  int box_index = 0;  // index within that frame's label set
  Box3D box;
};

struct Track {
  int id = 0;
  std::vector<TrackObservation> observations;  // frame indices strictly increasing
  double vx = 0.0, vy = 0.0;                   // BEV velocity, m/s

  double speed() const;
};

struct TrackingConfig {
  double iou_gate = 0.1;    // min BEV IoU for an association
  double dist_gate = 2.0;   // centroid fallback gate, meters
  int k_miss = 2;           // missed frames bridged by constant velocity
  double frame_dt = 0.1;    // seconds between frames
};

/// Greedy frame-to-frame association by BEV IoU with centroid-distance
/// fallback; constant-velocity prediction bridges short gaps; velocities from
/// a least-squares fit of track centroids over time.
std::vector<Track> track(const std::vector<std::vector<Box3D>>& frames,
                         const TrackingConfig& cfg);

/// (point count, mean intensity) over points_in_box; (0, 0) for an empty box.
std::pair<int, double> instance_attributes(const PointCloud& scene, const Box3D& box);

/// s_dis = [1 - clamp(dist / norm_range)] + N_j / (r*r), where N_j counts
/// occupied cells of the r x r BEV grid tiled over the box footprint.
double distribution_score(const Box3D& box, const PointCloud& scene, int resolution,
                          double norm_range, int* occupied_cells = nullptr);

/// s_cons = min(0.05, sum_k S_k log(S_k / s_k)) / 0.05 over the (l,w,h)
/// triplets, which are normalized to sum 1 unless raw_sizes; negative raw
/// sums clamp to 0. Result in [0,1]; 0 means an exact prototype match.
double consistency_score(const Box3D& box, const SizePrototypes& prototypes,
                         bool raw_sizes = false);

struct CueRecord {
  int frame_id = 0;
  int box_index = 0;
  int track_id = -1;
  Box3D box;
  int point_count = 0;
  double mean_intensity = 0.0;
  double speed = 0.0;
  bool dynamic = false;
  double s_dis = 0.0;
  double s_cons = 0.0;
  int grid_occupancy = 0;
  int resolution = 8;
};

struct CueConfig {
  int resolution = 8;
  double norm_range = 75.0;
  bool raw_sizes = false;
  double dynamic_speed_threshold = 0.5;  // m/s
  TrackingConfig tracking;
};

/// One CueRecord per labeled box across all frames. Boxes with class Unknown
/// are scored against their nearest prototype.
std::vector<CueRecord> mine_cues(const std::vector<PointCloud>& scenes,
                                 const std::vector<std::vector<Box3D>>& labels,
                                 const SizePrototypes& prototypes, const CueConfig& cfg);

}  // namespace owl

#endif  // OWL_CUES_HPP
