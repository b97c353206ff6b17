// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_OCCUPANCY_HPP
#define OWL_OCCUPANCY_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "owl/geometry.hpp"
#include "owl/types.hpp"

namespace owl {

struct MaskSchedule {
  double w_fr = 1.0;  // foreground weight
  double w_bg = 0.5;  // background weight
  std::uint64_t seed = 0;

  void validate() const {
    if (w_fr <= 0.0 || w_fr > 1.0 || w_bg <= 0.0 || w_bg > 1.0)
      throw std::invalid_argument("MaskSchedule: weights must lie in (0,1]");
  }
};

struct VoxelMask {
  std::vector<VoxelIndex> masked;    // m_j = 1, hidden from the predictor
  std::vector<VoxelIndex> unmasked;  // N_f visible voxels
};

/// Centroid of a voxel's member points, then Euclidean distance of that
/// centroid from the sensor origin. Throws on an empty voxel.
double voxel_center_distance(const VoxelGrid& grid, const PointCloud& cloud, const VoxelIndex& v);

/// p = w * (0.1 + 0.5 * exp(-0.25 * floor(d/10))), w = w_fr or w_bg.
double mask_ratio(double d, bool is_foreground, const MaskSchedule& sched);

/// Independent Bernoulli draw per occupied voxel with probability
/// mask_ratio(d, fg); fg iff the voxel's point centroid lies inside any
/// pseudo-label box. Deterministic given the seed (cells visited in sorted
/// index order).
VoxelMask sample_mask(const VoxelGrid& grid, const PointCloud& cloud,
                      const std::vector<Box3D>& labels, const MaskSchedule& sched);

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d pred, per voxel
};

/// Mean binary cross-entropy over the prediction domain, with analytic
/// gradient. Predictions must lie strictly inside (0,1).
BceResult occupancy_loss(std::span<const double> pred, std::span<const std::uint8_t> targets);

// Small feed-forward scorer: 3x3x3 unmasked-occupancy indicators plus a
// normalized distance, one tanh hidden layer, sigmoid output.
struct OccupancyPredictor {
  int input_dim = 28;
  int hidden_dim = 8;
  std::vector<double> w1, b1, w2;  // w1: hidden x input, w2: hidden
  double b2 = 0.0;

  static OccupancyPredictor make(int input_dim = 28, int hidden_dim = 8, std::uint64_t seed = 7);
  int parameter_count() const { return input_dim * hidden_dim + hidden_dim + hidden_dim + 1; }
  double predict(std::span<const double> features) const;

  // Flat parameter access, order: w1, b1, w2, b2.
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& params);
};

struct TrainingExample {
  std::vector<double> features;
  std::uint8_t target = 0;
};

struct WarmupScene {
  const PointCloud* cloud = nullptr;
  const VoxelGrid* grid = nullptr;
  const std::vector<Box3D>* labels = nullptr;
};

/// Build the supervision domain for one masked scene: masked occupied voxels
/// (y = 1) plus an equal-size seeded sample of empty in-range voxels (y = 0).
std::vector<TrainingExample> build_examples(const VoxelGrid& grid, const PointCloud& cloud,
                                            const VoxelMask& mask, std::uint64_t seed,
                                            double distance_norm = 75.0);

/// Feature vector for one candidate voxel given the visible (unmasked) cells.
std::vector<double> voxel_features(const VoxelGrid& grid, const VoxelMask& mask,
                                   const VoxelIndex& v, double distance_norm = 75.0);

struct WarmupResult {
  OccupancyPredictor predictor;
  std::vector<double> loss_trace;  // one entry per epoch
};

/// Full-batch gradient descent on the masked-occupancy proxy task. Throws on
/// epochs < 1, empty scene list, or non-finite loss.
WarmupResult train_warmup(const std::vector<WarmupScene>& scenes, const MaskSchedule& sched,
                          int epochs, double learning_rate);

/// Loss and full parameter gradient over a set of examples (training core,
/// also used by finite-difference checks).
double warmup_loss_and_grad(const OccupancyPredictor& pred,
                            const std::vector<TrainingExample>& examples,
                            std::vector<double>* grad_out);

/// Versioned binary parameter file; round-trip is bit-exact.
void export_warmup(const OccupancyPredictor& pred, const std::string& path);
OccupancyPredictor import_warmup(const std::string& path);

}  // namespace owl

#endif  // OWL_OCCUPANCY_HPP
