// SPDX-License-Identifier: Apache-2.0
#include "owl/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace owl {

namespace {

constexpr double kProbClamp = 1e-12;

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

double sample_weight(double s_cons, double s_rea, const LossWeights& w) {
  w.validate();
  if (s_cons < 0.0 || s_rea < 0.0)
    throw std::invalid_argument("sample_weight: scores must be non-negative");
  return w.lambda1 * s_cons + w.lambda2 * s_rea;
}

ValueGrad smooth_l1(std::span<const double> residual, double delta) {
  if (delta <= 0.0) throw std::invalid_argument("smooth_l1: delta must be > 0");
  ValueGrad out;
  out.grad.resize(residual.size());
  for (std::size_t i = 0; i < residual.size(); ++i) {
    const double x = residual[i];
    if (std::abs(x) < delta) {
      out.value += 0.5 * x * x / delta;
      out.grad[i] = x / delta;
    } else {
      out.value += std::abs(x) - 0.5 * delta;
      out.grad[i] = (x >= 0.0) ? 1.0 : -1.0;
    }
  }
  return out;
}

ValueGrad focal_loss(std::span<const double> logits, int target_class, double gamma,
                     double alpha_balance) {
  if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  if (target_class < 0 || target_class >= static_cast<int>(logits.size()))
    throw std::invalid_argument("focal_loss: target class out of range");
  const std::vector<double> p = softmax(logits);
  const double pt = std::clamp(p[target_class], kProbClamp, 1.0 - kProbClamp);
  const double one_minus = 1.0 - pt;
  const double focal_term = std::pow(one_minus, gamma);

  ValueGrad out;
  out.value = -alpha_balance * focal_term * std::log(pt);
  // dL/dpt, then chain through softmax.
  double dl_dpt = -alpha_balance * focal_term / pt;
  if (gamma > 0.0) dl_dpt += alpha_balance * gamma * std::pow(one_minus, gamma - 1.0) * std::log(pt);
  out.grad.resize(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double dpt_dzj = pt * ((static_cast<int>(j) == target_class ? 1.0 : 0.0) - p[j]);
    out.grad[j] = dl_dpt * dpt_dzj;
  }
  return out;
}

std::array<double, kRegDim> encode_box(const Box3D& box) {
  return {box.x,          box.y,          box.z,          std::log(box.l),
          std::log(box.w), std::log(box.h), std::sin(box.yaw), std::cos(box.yaw)};
}

Box3D decode_box(std::span<const double> code) {
  if (code.size() != kRegDim) throw std::invalid_argument("decode_box: bad code size");
  Box3D b;
  b.x = code[0];
  b.y = code[1];
  b.z = code[2];
  b.l = std::exp(code[3]);
  b.w = std::exp(code[4]);
  b.h = std::exp(code[5]);
  b.yaw = wrap_pi(std::atan2(code[6], code[7]));
  return b;
}

TotalLossResult total_loss(const std::vector<WeightedSample>& samples, const LossWeights& w,
                           const LossHyper& hyper) {
  w.validate();
  if (samples.empty()) throw std::invalid_argument("total_loss: empty sample set");
  TotalLossResult out;
  const double inv_n = 1.0 / samples.size();
  for (const WeightedSample& s : samples) {
    if (s.omega < 0.0) throw std::invalid_argument("total_loss: negative omega");
    if (s.reg_pred.size() != s.reg_target.size())
      throw std::invalid_argument("total_loss: regression size mismatch");
    std::vector<double> residual(s.reg_pred.size());
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = s.reg_pred[i] - s.reg_target[i];
    const ValueGrad reg = smooth_l1(residual, hyper.smooth_l1_delta);
    const ValueGrad cls = focal_loss(s.logits, s.target_class, hyper.focal_gamma, hyper.focal_alpha);
    const double scale = s.omega * inv_n;
    out.value += scale * (w.alpha_reg * reg.value + w.beta_cls * cls.value);

    std::vector<double> rg(reg.grad.size());
    for (std::size_t i = 0; i < rg.size(); ++i) rg[i] = scale * w.alpha_reg * reg.grad[i];
    std::vector<double> cg(cls.grad.size());
    for (std::size_t i = 0; i < cg.size(); ++i) cg[i] = scale * w.beta_cls * cls.grad[i];
    out.reg_grads.push_back(std::move(rg));
    out.logit_grads.push_back(std::move(cg));
  }
  return out;
}

void PassThroughDetector::train(const std::vector<PointCloud>& scenes,
                                const std::vector<WeightedLabels>& labels) {
  if (scenes.size() != labels.size())
    throw std::invalid_argument("PassThroughDetector: scenes/labels mismatch");
  labels_by_frame_.clear();
  for (std::size_t i = 0; i < scenes.size(); ++i)
    labels_by_frame_[scenes[i].frame_id] = labels[i].boxes;
}

std::vector<Box3D> PassThroughDetector::infer(const PointCloud& scene) const {
  const auto it = labels_by_frame_.find(scene.frame_id);
  return it == labels_by_frame_.end() ? std::vector<Box3D>{} : it->second;
}

ToyGridDetector::ToyGridDetector(const ToyDetectorConfig& cfg) : cfg_(cfg) {
  backbone_ = OccupancyPredictor::make();
  reg_head_.assign(static_cast<std::size_t>(kRegDim) * (kFeatDim + 1), 0.0);
  cls_head_.assign(static_cast<std::size_t>(kNumClasses) * (kFeatDim + 1), 0.0);
}

void ToyGridDetector::warm_start(const OccupancyPredictor& pred) {
  backbone_ = pred;
  warm_started_ = true;
}

std::vector<double> ToyGridDetector::features(const PointCloud& scene,
                                              const Box3D& proposal) const {
  const VoxelGrid grid = voxelize(scene, cfg_.voxel_origin, cfg_.voxel_cell, cfg_.voxel_extents);
  VoxelMask all_visible;
  for (const auto& [v, members] : grid.cells) {
    (void)members;
    all_visible.unmasked.push_back(v);
  }

  int occupied_cells = 0;
  const double s_dis = distribution_score(proposal, scene, 4, 75.0, &occupied_cells);
  (void)s_dis;
  const auto [count, intensity] = instance_attributes(scene, proposal);

  // Mean backbone (occupancy-predictor) response over the occupied voxels
  // inside the proposal.
  double backbone_score = 0.0;
  int backbone_cells = 0;
  for (const auto& [v, members] : grid.cells) {
    const Vec3 c = grid.cell_center(v);
    if (!point_in_box({c[0], c[1], c[2], 0.0}, proposal)) continue;
    backbone_score += backbone_.predict(voxel_features(grid, all_visible, v));
    if (++backbone_cells >= 64) break;  // cap per-box work
  }
  if (backbone_cells > 0) backbone_score /= backbone_cells;

  return {proposal.l / 5.0,
          proposal.w / 2.0,
          proposal.h / 2.0,
          std::log1p(static_cast<double>(count)) / 6.0,
          intensity,
          proposal.range() / 75.0,
          occupied_cells / 16.0,
          backbone_score,
          proposal.z / 3.0,
          proposal.volume() / 20.0,
          proposal.l / std::max(proposal.w, 1e-3) / 5.0,
          proposal.score};
}

void ToyGridDetector::train(const std::vector<PointCloud>& scenes,
                            const std::vector<WeightedLabels>& labels) {
  if (scenes.size() != labels.size())
    throw std::invalid_argument("ToyGridDetector: scenes/labels mismatch");

  // Assemble (feature, target) pairs once; heads are linear so features are
  // fixed during the epochs below.
  struct Pair {
    std::vector<double> feat;            // with bias term appended
    std::array<double, kRegDim> base;    // encode(proposal)
    std::array<double, kRegDim> target;
    int target_class = 0;
    double omega = 1.0;
  };
  std::vector<Pair> pairs;
  for (std::size_t f = 0; f < scenes.size(); ++f) {
    const std::vector<Box3D> proposals = initial_labels(scenes[f], cfg_.clustering, cfg_.nms_iou);
    std::vector<bool> label_used(labels[f].boxes.size(), false);
    for (const Box3D& prop : proposals) {
      Pair pr;
      pr.feat = features(scenes[f], prop);
      pr.feat.push_back(1.0);
      pr.base = encode_box(prop);
      // Best unconsumed label by BEV IoU.
      int best = -1;
      double best_iou = cfg_.match_iou;
      for (std::size_t j = 0; j < labels[f].boxes.size(); ++j) {
        if (label_used[j]) continue;
        const double iou = iou_bev(prop, labels[f].boxes[j]);
        if (iou > best_iou) {
          best_iou = iou;
          best = static_cast<int>(j);
        }
      }
      if (best >= 0) {
        label_used[best] = true;
        pr.target = encode_box(labels[f].boxes[best]);
        pr.target_class = static_cast<int>(labels[f].boxes[best].class_id);
        pr.omega = labels[f].omegas.empty() ? 1.0 : labels[f].omegas[best];
      } else {
        pr.target = pr.base;  // background: no regression pull
        pr.target_class = 0;
        pr.omega = 1.0;
      }
      pairs.push_back(std::move(pr));
    }
  }
  if (pairs.empty()) return;  // nothing to learn from; heads stay as they are

  loss_trace_.clear();
  auto head_out = [](const std::vector<double>& head, const std::vector<double>& feat, int rows) {
    std::vector<double> out(rows, 0.0);
    for (int r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < feat.size(); ++c) out[r] += head[r * feat.size() + c] * feat[c];
    }
    return out;
  };

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::vector<WeightedSample> samples;
    samples.reserve(pairs.size());
    for (const Pair& pr : pairs) {
      WeightedSample s;
      const std::vector<double> reg = head_out(reg_head_, pr.feat, kRegDim);
      s.reg_pred.resize(kRegDim);
      for (int r = 0; r < kRegDim; ++r) s.reg_pred[r] = pr.base[r] + reg[r];
      s.logits = head_out(cls_head_, pr.feat, kNumClasses);
      s.reg_target.assign(pr.target.begin(), pr.target.end());
      s.target_class = pr.target_class;
      s.omega = pr.omega;
      samples.push_back(std::move(s));
    }
    const TotalLossResult loss = total_loss(samples, cfg_.loss, cfg_.hyper);
    if (!std::isfinite(loss.value))
      throw std::runtime_error("ToyGridDetector: training diverged at epoch " +
                               std::to_string(epoch));
    loss_trace_.push_back(loss.value);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const std::vector<double>& feat = pairs[i].feat;
      for (int r = 0; r < kRegDim; ++r) {
        for (std::size_t c = 0; c < feat.size(); ++c)
          reg_head_[r * feat.size() + c] -= cfg_.learning_rate * loss.reg_grads[i][r] * feat[c];
      }
      for (int r = 0; r < kNumClasses; ++r) {
        for (std::size_t c = 0; c < feat.size(); ++c)
          cls_head_[r * feat.size() + c] -= cfg_.learning_rate * loss.logit_grads[i][r] * feat[c];
      }
    }
  }
}

std::vector<Box3D> ToyGridDetector::infer(const PointCloud& scene) const {
  const std::vector<Box3D> proposals = initial_labels(scene, cfg_.clustering, cfg_.nms_iou);
  std::vector<Box3D> out;
  for (const Box3D& prop : proposals) {
    std::vector<double> feat = features(scene, prop);
    feat.push_back(1.0);
    std::vector<double> logits(kNumClasses, 0.0);
    for (int r = 0; r < kNumClasses; ++r) {
      for (std::size_t c = 0; c < feat.size(); ++c)
        logits[r] += cls_head_[r * feat.size() + c] * feat[c];
    }
    const std::vector<double> p = softmax(logits);
    int best = 1;
    for (int k = 2; k < kNumClasses; ++k) {
      if (p[k] > p[best]) best = k;
    }
    const double fg_score = 1.0 - p[0];
    if (fg_score < cfg_.score_threshold) continue;

    std::array<double, kRegDim> code = encode_box(prop);
    for (int r = 0; r < kRegDim; ++r) {
      for (std::size_t c = 0; c < feat.size(); ++c)
        code[r] += reg_head_[r * feat.size() + c] * feat[c];
    }
    Box3D box = decode_box(code);
    box.class_id = static_cast<ClassId>(best);
    box.score = std::clamp(fg_score, 0.0, 1.0);
    box.weight = prop.weight;
    out.push_back(box);
  }
  return nms(out, cfg_.nms_iou);
}

PointCloud Augmentation::apply(const PointCloud& cloud) const {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  const double c = std::cos(yaw), s = std::sin(yaw);
  out.points.reserve(cloud.points.size());
  for (const Point& p : cloud.points) {
    double x = p.x * scale, y = p.y * scale, z = p.z * scale;
    const double rx = c * x - s * y, ry = s * x + c * y;
    x = rx;
    y = flip_y ? -ry : ry;
    out.points.push_back({x, y, z, p.intensity});
  }
  return out;
}

Box3D Augmentation::unapply(const Box3D& box) const {
  Box3D out = box;
  double x = box.x, y = box.y, th = box.yaw;
  if (flip_y) {
    y = -y;
    th = -th;
  }
  const double c = std::cos(-yaw), s = std::sin(-yaw);
  const double rx = c * x - s * y, ry = s * x + c * y;
  out.x = rx / scale;
  out.y = ry / scale;
  out.z = box.z / scale;
  out.l = box.l / scale;
  out.w = box.w / scale;
  out.h = box.h / scale;
  out.yaw = wrap_pi(th - yaw);
  return out;
}

std::vector<Box3D> tta_infer(const Detector& det, const PointCloud& scene,
                             const std::vector<Augmentation>& augmentations,
                             double nms_iou_threshold) {
  std::vector<Box3D> merged;
  const std::vector<Augmentation> augs =
      augmentations.empty() ? std::vector<Augmentation>{Augmentation::identity()} : augmentations;
  for (const Augmentation& aug : augs) {
    for (const Box3D& b : det.infer(aug.apply(scene))) merged.push_back(aug.unapply(b));
  }
  return nms(merged, nms_iou_threshold);
}

namespace {

// Cue mining + rule-based verdicts -> per-frame weights for the next
// training pass. Branch-B down-weighting is already baked into box.weight.
std::vector<WeightedLabels> weights_from_cues(const std::vector<PointCloud>& scenes,
                                              const std::vector<std::vector<Box3D>>& labels,
                                              const SelfTrainConfig& cfg) {
  const std::vector<CueRecord> cues = mine_cues(scenes, labels, cfg.prototypes, cfg.cues);
  std::vector<WeightedLabels> out(labels.size());
  std::size_t k = 0;
  for (std::size_t f = 0; f < labels.size(); ++f) {
    out[f].boxes = labels[f];
    ReasonerRequest req;
    req.frame_id = scenes[f].frame_id;
    for (std::size_t j = 0; j < labels[f].size(); ++j) req.cues.push_back(cues[k + j]);
    const auto verdicts = reason_rule_based(req, cfg.prototypes, cfg.rules);
    for (std::size_t j = 0; j < labels[f].size(); ++j) {
      const double omega =
          sample_weight(cues[k + j].s_cons, verdicts[j].s_rea, cfg.loss) * labels[f][j].weight;
      out[f].omegas.push_back(omega);
    }
    k += labels[f].size();
  }
  return out;
}

}  // namespace

SelfTrainResult self_train(const std::vector<PointCloud>& scenes,
                           const std::vector<std::vector<Box3D>>& initial_labels, Detector& det,
                           const SelfTrainConfig& cfg) {
  if (cfg.rounds < 1) throw std::invalid_argument("self_train: rounds must be >= 1");
  if (scenes.size() != initial_labels.size())
    throw std::invalid_argument("self_train: scenes/labels mismatch");

  SelfTrainResult result;
  std::vector<std::vector<Box3D>> labels = initial_labels;

  for (int round = 0; round < cfg.rounds; ++round) {
    RoundArtifacts art;
    const std::vector<WeightedLabels> weighted = weights_from_cues(scenes, labels, cfg);
    try {
      det.train(scenes, weighted);
    } catch (const std::runtime_error&) {
      art.aborted = true;
      art.labels = labels;
      for (const auto& wl : weighted) art.omegas.push_back(wl.omegas);
      result.rounds.push_back(std::move(art));
      continue;
    }

    std::vector<std::vector<Box3D>> predictions(scenes.size());
    for (std::size_t f = 0; f < scenes.size(); ++f)
      predictions[f] = tta_infer(det, scenes[f], cfg.tta, cfg.tta_nms_iou);

    const std::vector<CueRecord> cues = mine_cues(scenes, predictions, cfg.prototypes, cfg.cues);
    std::size_t k = 0;
    art.labels.resize(scenes.size());
    art.omegas.resize(scenes.size());
    for (std::size_t f = 0; f < scenes.size(); ++f) {
      ReasonerRequest req;
      req.frame_id = scenes[f].frame_id;
      for (std::size_t j = 0; j < predictions[f].size(); ++j) req.cues.push_back(cues[k + j]);
      k += predictions[f].size();
      const auto verdicts = reason_rule_based(req, cfg.prototypes, cfg.rules);
      const RefineResult refined = refine(predictions[f], verdicts, req.cues, cfg.refine);
      art.branch_corrected += refined.count_corrected;
      art.branch_replaced += refined.count_replaced;
      art.branch_dropped += refined.count_dropped;
      art.labels[f] = refined.boxes;
      for (std::size_t j = 0; j < refined.boxes.size(); ++j) {
        refined.boxes[j].validate();
        art.omegas[f].push_back(sample_weight(refined.s_cons[j], refined.s_rea[j], cfg.loss) *
                                refined.boxes[j].weight);
      }
    }
    labels = art.labels;
    result.rounds.push_back(std::move(art));
  }
  return result;
}

}  // namespace owl
