// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_SELFTRAIN_HPP
#define OWL_SELFTRAIN_HPP

#include <map>
#include <memory>
#include <span>
#include <vector>

#include "owl/clustering.hpp"
#include "owl/cues.hpp"
#include "owl/occupancy.hpp"
#include "owl/reasoner.hpp"
#include "owl/types.hpp"

namespace owl {

struct LossWeights {
  double lambda1 = 1.0;   // weight on s_cons
  double lambda2 = 1.0;   // weight on s_rea
  double alpha_reg = 1.0;
  double beta_cls = 0.5;

  void validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || alpha_reg < 0.0 || beta_cls < 0.0)
      throw std::invalid_argument("LossWeights must be non-negative");
  }
};

/// omega = lambda1 * s_cons + lambda2 * s_rea. Negative inputs are rejected.
double sample_weight(double s_cons, double s_rea, const LossWeights& w);

struct ValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Per-component 0.5 x^2 / delta for |x| < delta, else |x| - delta/2, summed.
ValueGrad smooth_l1(std::span<const double> residual, double delta);

/// -alpha_balance * (1 - p_t)^gamma * log(p_t) over softmax probabilities;
/// gradient with respect to the logits.
ValueGrad focal_loss(std::span<const double> logits, int target_class, double gamma,
                     double alpha_balance);

constexpr int kRegDim = 8;  // (x, y, z, log l, log w, log h, sin yaw, cos yaw)
constexpr int kNumClasses = 4;

/// Regression target encoding for a box.
std::array<double, kRegDim> encode_box(const Box3D& box);
/// Inverse of encode_box (class/score/weight are not part of the encoding).
Box3D decode_box(std::span<const double> code);

struct WeightedSample {
  std::vector<double> reg_pred;    // kRegDim
  std::vector<double> logits;      // kNumClasses
  std::vector<double> reg_target;  // kRegDim
  int target_class = 0;
  double omega = 0.0;
};

struct TotalLossResult {
  double value = 0.0;
  std::vector<std::vector<double>> reg_grads;    // per sample, d/d reg_pred
  std::vector<std::vector<double>> logit_grads;  // per sample, d/d logits
};

struct LossHyper {
  double smooth_l1_delta = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

/// L_total = (1/N) sum_i omega_i [alpha L_reg + beta L_cls].
TotalLossResult total_loss(const std::vector<WeightedSample>& samples, const LossWeights& w,
                           const LossHyper& hyper = {});

struct WeightedLabels {
  std::vector<Box3D> boxes;
  std::vector<double> omegas;  // aligned with boxes
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual void train(const std::vector<PointCloud>& scenes,
                     const std::vector<WeightedLabels>& labels) = 0;
  virtual std::vector<Box3D> infer(const PointCloud& scene) const = 0;
};

/// Echoes its training labels per frame_id; for pipeline plumbing tests.
class PassThroughDetector : public Detector {
 public:
  void train(const std::vector<PointCloud>& scenes,
             const std::vector<WeightedLabels>& labels) override;
  std::vector<Box3D> infer(const PointCloud& scene) const override;

 private:
  std::map<int, std::vector<Box3D>> labels_by_frame_;
};

struct ToyDetectorConfig {
  ClusteringParams clustering;
  double match_iou = 0.3;         // proposal-to-label assignment gate
  int epochs = 40;
  double learning_rate = 0.05;
  double score_threshold = 0.2;   // proposals below this are discarded at inference
  double nms_iou = 0.2;
  LossWeights loss;
  LossHyper hyper;
  Vec3 voxel_origin{-80, -80, -4};
  Vec3 voxel_cell{0.4, 0.4, 0.4};
  std::array<int, 3> voxel_extents{400, 400, 25};
};

/// Proposal-based detector: dynamic-radius clustering proposes boxes, a
/// linear head over hand-crafted per-proposal features regresses residuals
/// and class logits. The occupancy warm-up predictor, when provided, supplies
/// a learned local-geometry feature (the warm-started "backbone").
class ToyGridDetector : public Detector {
 public:
  explicit ToyGridDetector(const ToyDetectorConfig& cfg = {});

  /// Install warm-started occupancy parameters as the feature backbone.
  void warm_start(const OccupancyPredictor& pred);

  void train(const std::vector<PointCloud>& scenes,
             const std::vector<WeightedLabels>& labels) override;
  std::vector<Box3D> infer(const PointCloud& scene) const override;

  const std::vector<double>& loss_trace() const { return loss_trace_; }
  std::vector<double> features(const PointCloud& scene, const Box3D& proposal) const;

 private:
  ToyDetectorConfig cfg_;
  OccupancyPredictor backbone_;
  bool warm_started_ = false;
  static constexpr int kFeatDim = 12;
  std::vector<double> reg_head_;    // kRegDim x (kFeatDim+1), residual refinement
  std::vector<double> cls_head_;    // kNumClasses x (kFeatDim+1)
  std::vector<double> loss_trace_;
};

struct Augmentation {
  bool flip_y = false;   // mirror about the x axis
  double yaw = 0.0;      // global rotation about +z
  double scale = 1.0;

  static Augmentation identity() { return {}; }
  PointCloud apply(const PointCloud& cloud) const;
  Box3D unapply(const Box3D& box) const;  // map a detection back to the original frame
};

/// Infer under each augmentation, inverse-transform detections, merge by NMS.
std::vector<Box3D> tta_infer(const Detector& det, const PointCloud& scene,
                             const std::vector<Augmentation>& augmentations,
                             double nms_iou_threshold = 0.5);

struct SelfTrainConfig {
  int rounds = 1;
  LossWeights loss;
  CueConfig cues;
  RefineConfig refine;
  RuleConfig rules;
  SizePrototypes prototypes = SizePrototypes::defaults();
  std::vector<Augmentation> tta = {Augmentation::identity()};
  double tta_nms_iou = 0.5;
};

struct RoundArtifacts {
  std::vector<std::vector<Box3D>> labels;   // per frame
  std::vector<std::vector<double>> omegas;  // per frame, aligned with labels
  int branch_corrected = 0, branch_replaced = 0, branch_dropped = 0;
  bool aborted = false;  // detector diverged; labels carried over
};

struct SelfTrainResult {
  std::vector<RoundArtifacts> rounds;
};

/// The WAS loop: train -> TTA inference -> cue mining -> refinement, per
/// round. Initial omegas come from mining cues on the initial labels.
SelfTrainResult self_train(const std::vector<PointCloud>& scenes,
                           const std::vector<std::vector<Box3D>>& initial_labels, Detector& det,
                           const SelfTrainConfig& cfg);

}  // namespace owl

#endif  // OWL_SELFTRAIN_HPP
