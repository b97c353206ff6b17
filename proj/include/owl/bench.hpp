// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_BENCH_HPP
#define OWL_BENCH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "owl/sweeps.hpp"
#include "owl/types.hpp"

namespace owl {

struct SceneSpec {
  int vehicles = 5;
  int pedestrians = 3;
  int cyclists = 2;
  double mover_fraction = 0.4;     // fraction of objects given a velocity
  double speed_min = 1.0;          // m/s, movers
  double speed_max = 8.0;
  double sensor_range = 60.0;      // objects placed within this radius
  double min_object_range = 6.0;
  double points_at_10m = 350.0;    // surface samples per object at 10 m; decays 1/d^2
  int min_object_points = 15;
  double ground_extent = 70.0;     // half-width of the square ground patch
  double ground_spacing = 0.8;
  double ground_noise = 0.01;      // sigma of plane jitter, meters
  double frame_dt = 0.1;           // seconds
  std::uint64_t seed = 1;
};

struct GeneratedFrame {
  PointCloud cloud;            // sensor-frame points (identity ego pose)
  std::vector<Box3D> truth;
  std::vector<int> point_object;  // per point: object index, or -1 for ground
};

/// Deterministic synthetic LiDAR frames: a ground plane plus
/// prototype-sized cuboids with surface-sampled points whose density decays
/// with range; movers advance by constant velocity between frames.
std::vector<GeneratedFrame> generate_frames(const SceneSpec& spec, int num_frames);

/// Convenience single dense frame (frame 0).
GeneratedFrame generate_scene(const SceneSpec& spec);

/// Frames packaged as a sweep sequence centered on frame (num_frames/2),
/// with identity poses (static ego).
SweepSequence to_sweep_sequence(const std::vector<GeneratedFrame>& frames);

struct CorruptionSpec {
  double fp_rate = 0.0;        // expected injected false positives per true box
  double size_sigma = 0.0;     // multiplicative size noise, fraction
  double yaw_flip_prob = 0.0;  // probability of rotating a box by pi/2
  double drop_rate = 0.0;      // false-negative probability
  // class_confusion[from][to]: probability of relabeling; rows need not sum to 1.
  std::map<ClassId, std::map<ClassId, double>> class_confusion;

  void validate() const;
};

enum class CorruptionKind { None, FalsePositive, SizeNoise, YawFlip, ClassConfusion };

struct CorruptedLabels {
  std::vector<Box3D> boxes;
  std::vector<CorruptionKind> log;  // aligned with boxes
  int dropped = 0;
};

CorruptedLabels corrupt_labels(const std::vector<Box3D>& truth, const CorruptionSpec& cspec,
                               std::uint64_t seed);

struct PrMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double ap = 0.0;  // 11-point interpolated
  int tp = 0, fp = 0, fn = 0;
  bool empty_prediction_flag = false;
};

struct EvalReport {
  // Keyed by IoU threshold (e.g. 0.5, 0.7).
  std::map<double, PrMetrics> overall;
  std::map<double, std::map<ClassId, PrMetrics>> per_class;
  // IoU histogram over matched pairs at the lowest threshold, 10 bins of 0.1.
  std::array<int, 10> iou_histogram{};
  int matched_pairs = 0;
  // Range bands [0,30), [30,50), [50,inf) at the lowest threshold.
  std::array<PrMetrics, 3> range_bands;
};

/// Greedy score-descending matching (one truth per prediction, class-agnostic
/// for the overall metrics), match iff IoU3D >= threshold.
EvalReport evaluate(const std::vector<std::vector<Box3D>>& predictions,
                    const std::vector<std::vector<Box3D>>& truths,
                    const std::vector<double>& thresholds = {0.5, 0.7});

}  // namespace owl

#endif  // OWL_BENCH_HPP
