// SPDX-License-Identifier: Apache-2.0
#include "owl/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "owl/cues.hpp"
#include "owl/geometry.hpp"

namespace owl {

namespace {

struct ObjectState {
  ClassId cls = ClassId::Vehicle;
  double x = 0, y = 0, yaw = 0;
  double l = 1, w = 1, h = 1;
  double vx = 0, vy = 0;
  double intensity = 0.5;
};

double class_intensity(ClassId c) {
  switch (c) {
    case ClassId::Vehicle: return 0.7;
    case ClassId::Pedestrian: return 0.4;
    case ClassId::Cyclist: return 0.55;
    default: return 0.5;
  }
}

// Uniform sample on the surface of an axis-aligned unit cuboid (l, w, h),
// centered at the origin, then rotated/translated by the object pose.
Point sample_surface(const ObjectState& obj, double z_base, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double al = obj.w * obj.h, aw = obj.l * obj.h, ah = obj.l * obj.w;
  const double total = 2.0 * (al + aw + ah);
  double pick = uni(rng) * total;
  double lx, ly, lz;
  if (pick < 2.0 * al) {  // +-x faces
    lx = (pick < al ? 0.5 : -0.5) * obj.l;
    ly = (uni(rng) - 0.5) * obj.w;
    lz = uni(rng) * obj.h;
  } else if (pick < 2.0 * (al + aw)) {  // +-y faces
    pick -= 2.0 * al;
    ly = (pick < aw ? 0.5 : -0.5) * obj.w;
    lx = (uni(rng) - 0.5) * obj.l;
    lz = uni(rng) * obj.h;
  } else {  // top face (bottom is occluded against the ground)
    lx = (uni(rng) - 0.5) * obj.l;
    ly = (uni(rng) - 0.5) * obj.w;
    lz = obj.h;
  }
  const double c = std::cos(obj.yaw), s = std::sin(obj.yaw);
  return {obj.x + c * lx - s * ly, obj.y + s * lx + c * ly, z_base + lz, obj.intensity};
}

std::vector<int> greedy_match(const std::vector<Box3D>& preds, const std::vector<int>& pred_frame,
                              const std::vector<Box3D>& truths, const std::vector<int>& truth_frame,
                              double threshold, std::vector<double>* matched_ious) {
  // Returns, per prediction in score-descending order of the original index
  // list, the matched truth index or -1.
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });
  std::vector<int> match(preds.size(), -1);
  std::vector<bool> truth_used(truths.size(), false);
  for (int pi : order) {
    double best_iou = threshold;
    int best = -1;
    for (int ti = 0; ti < static_cast<int>(truths.size()); ++ti) {
      if (truth_used[ti] || truth_frame[ti] != pred_frame[pi]) continue;
      const double iou = iou_3d(preds[pi], truths[ti]);
      if (iou >= best_iou) {
        best_iou = iou;
        best = ti;
      }
    }
    if (best >= 0) {
      truth_used[best] = true;
      match[pi] = best;
      if (matched_ious) matched_ious->push_back(best_iou);
    }
  }
  return match;
}

PrMetrics pr_from_match(const std::vector<Box3D>& preds, const std::vector<int>& match,
                        std::size_t truth_count) {
  PrMetrics m;
  for (int t : match) (t >= 0) ? ++m.tp : ++m.fp;
  m.fn = static_cast<int>(truth_count) - m.tp;
  if (preds.empty()) {
    m.empty_prediction_flag = true;
    m.precision = 0.0;
  } else {
    m.precision = static_cast<double>(m.tp) / (m.tp + m.fp);
  }
  m.recall = truth_count == 0 ? 0.0 : static_cast<double>(m.tp) / truth_count;

  // 11-point interpolated AP over the score-descending sweep.
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });
  std::vector<double> precisions, recalls;
  int tp = 0, fp = 0;
  for (int pi : order) {
    (match[pi] >= 0) ? ++tp : ++fp;
    precisions.push_back(static_cast<double>(tp) / (tp + fp));
    recalls.push_back(truth_count == 0 ? 0.0 : static_cast<double>(tp) / truth_count);
  }
  double ap = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double t = k / 10.0;
    double best = 0.0;
    for (std::size_t i = 0; i < precisions.size(); ++i) {
      if (recalls[i] >= t) best = std::max(best, precisions[i]);
    }
    ap += best / 11.0;
  }
  m.ap = ap;
  return m;
}

}  // namespace

std::vector<GeneratedFrame> generate_frames(const SceneSpec& spec, int num_frames) {
  if (num_frames < 1) throw std::invalid_argument("generate_frames: num_frames must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const SizePrototypes protos = SizePrototypes::defaults();

  std::vector<ObjectState> objects;
  auto add_objects = [&](ClassId cls, int count) {
    const auto& proto = protos.at(cls);
    for (int i = 0; i < count; ++i) {
      ObjectState obj;
      obj.cls = cls;
      const double range =
          spec.min_object_range + uni(rng) * (spec.sensor_range - spec.min_object_range);
      const double angle = uni(rng) * 2.0 * M_PI;
      obj.x = range * std::cos(angle);
      obj.y = range * std::sin(angle);
      obj.yaw = wrap_pi(uni(rng) * 2.0 * M_PI);
      obj.l = proto[0];
      obj.w = proto[1];
      obj.h = proto[2];
      obj.intensity = class_intensity(cls);
      objects.push_back(obj);
    }
  };
  add_objects(ClassId::Vehicle, spec.vehicles);
  add_objects(ClassId::Pedestrian, spec.pedestrians);
  add_objects(ClassId::Cyclist, spec.cyclists);

  // Deterministic mover assignment: every k-th object moves.
  const int total = static_cast<int>(objects.size());
  const int movers = static_cast<int>(std::lround(spec.mover_fraction * total));
  for (int i = 0; i < movers && i < total; ++i) {
    const double speed = spec.speed_min + uni(rng) * (spec.speed_max - spec.speed_min);
    const double dir = uni(rng) * 2.0 * M_PI;
    objects[i].vx = speed * std::cos(dir);
    objects[i].vy = speed * std::sin(dir);
  }

  std::vector<GeneratedFrame> frames(num_frames);
  for (int f = 0; f < num_frames; ++f) {
    GeneratedFrame& frame = frames[f];
    frame.cloud.frame_id = f;

    // Ground plane patch.
    for (double gx = -spec.ground_extent; gx <= spec.ground_extent; gx += spec.ground_spacing) {
      for (double gy = -spec.ground_extent; gy <= spec.ground_extent; gy += spec.ground_spacing) {
        frame.cloud.points.push_back({gx, gy, gauss(rng) * spec.ground_noise, 0.2});
        frame.point_object.push_back(-1);
      }
    }

    for (int o = 0; o < total; ++o) {
      ObjectState obj = objects[o];
      obj.x += obj.vx * spec.frame_dt * f;
      obj.y += obj.vy * spec.frame_dt * f;
      const double d = std::max(std::hypot(obj.x, obj.y), 1.0);
      const int n_points = std::max(
          spec.min_object_points,
          static_cast<int>(std::lround(spec.points_at_10m * (10.0 / d) * (10.0 / d))));
      for (int p = 0; p < std::min(n_points, 1200); ++p) {
        Point pt = sample_surface(obj, 0.0, rng);
        pt.intensity = std::clamp(pt.intensity + gauss(rng) * 0.05, 0.0, 1.0);
        frame.cloud.points.push_back(pt);
        frame.point_object.push_back(o);
      }
      Box3D truth;
      truth.x = obj.x;
      truth.y = obj.y;
      truth.z = 0.5 * obj.h;
      truth.l = obj.l;
      truth.w = obj.w;
      truth.h = obj.h;
      truth.yaw = obj.yaw;
      truth.class_id = obj.cls;
      truth.score = 1.0;
      frame.truth.push_back(truth);
    }
  }
  return frames;
}

GeneratedFrame generate_scene(const SceneSpec& spec) { return generate_frames(spec, 1).front(); }

SweepSequence to_sweep_sequence(const std::vector<GeneratedFrame>& frames) {
  SweepSequence seq;
  for (const GeneratedFrame& f : frames) seq.sweeps.push_back({f.cloud, Pose::identity()});
  return seq;
}

void CorruptionSpec::validate() const {
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate_ok(fp_rate) || !rate_ok(yaw_flip_prob) || !rate_ok(drop_rate) || size_sigma < 0.0)
    throw std::invalid_argument("CorruptionSpec: rates must lie in [0,1]");
  for (const auto& [from, row] : class_confusion) {
    (void)from;
    for (const auto& [to, p] : row) {
      (void)to;
      if (!rate_ok(p)) throw std::invalid_argument("CorruptionSpec: confusion rate out of range");
    }
  }
}

CorruptedLabels corrupt_labels(const std::vector<Box3D>& truth, const CorruptionSpec& cspec,
                               std::uint64_t seed) {
  cspec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CorruptedLabels out;

  for (const Box3D& t : truth) {
    if (uni(rng) < cspec.drop_rate) {
      ++out.dropped;
      continue;
    }
    Box3D b = t;
    CorruptionKind kind = CorruptionKind::None;
    if (cspec.size_sigma > 0.0) {
      b.l = std::max(0.1, b.l * (1.0 + gauss(rng) * cspec.size_sigma));
      b.w = std::max(0.1, b.w * (1.0 + gauss(rng) * cspec.size_sigma));
      b.h = std::max(0.1, b.h * (1.0 + gauss(rng) * cspec.size_sigma));
      kind = CorruptionKind::SizeNoise;
    }
    if (uni(rng) < cspec.yaw_flip_prob) {
      b.yaw = wrap_pi(b.yaw + M_PI_2);
      kind = CorruptionKind::YawFlip;
    }
    if (const auto row = cspec.class_confusion.find(t.class_id);
        row != cspec.class_confusion.end()) {
      double draw = uni(rng);
      for (const auto& [to, p] : row->second) {
        if (draw < p) {
          b.class_id = to;
          kind = CorruptionKind::ClassConfusion;
          break;
        }
        draw -= p;
      }
    }
    b.score = std::clamp(0.75 + 0.2 * uni(rng), 0.0, 1.0);
    out.boxes.push_back(b);
    out.log.push_back(kind);

    if (uni(rng) < cspec.fp_rate) {
      Box3D fp;
      const double range = 5.0 + uni(rng) * 55.0;
      const double angle = uni(rng) * 2.0 * M_PI;
      fp.x = range * std::cos(angle);
      fp.y = range * std::sin(angle);
      fp.z = 0.5 + uni(rng);
      fp.l = 0.3 + uni(rng) * 5.0;
      fp.w = 0.3 + uni(rng) * 2.5;
      fp.h = 0.3 + uni(rng) * 2.0;
      if (fp.l < fp.w) std::swap(fp.l, fp.w);
      fp.yaw = wrap_pi(uni(rng) * 2.0 * M_PI);
      fp.class_id = ClassId::Unknown;
      fp.score = std::clamp(0.3 + 0.4 * uni(rng), 0.0, 1.0);
      out.boxes.push_back(fp);
      out.log.push_back(CorruptionKind::FalsePositive);
    }
  }
  return out;
}

EvalReport evaluate(const std::vector<std::vector<Box3D>>& predictions,
                    const std::vector<std::vector<Box3D>>& truths,
                    const std::vector<double>& thresholds) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("evaluate: prediction/truth frame count mismatch");
  if (thresholds.empty()) throw std::invalid_argument("evaluate: need at least one threshold");

  std::vector<Box3D> preds, gts;
  std::vector<int> pred_frame, truth_frame;
  for (std::size_t f = 0; f < predictions.size(); ++f) {
    for (const Box3D& b : predictions[f]) {
      preds.push_back(b);
      pred_frame.push_back(static_cast<int>(f));
    }
    for (const Box3D& b : truths[f]) {
      gts.push_back(b);
      truth_frame.push_back(static_cast<int>(f));
    }
  }

  EvalReport report;
  const double low = *std::min_element(thresholds.begin(), thresholds.end());
  for (double thr : thresholds) {
    std::vector<double> matched_ious;
    const std::vector<int> match =
        greedy_match(preds, pred_frame, gts, truth_frame, thr, &matched_ious);
    report.overall[thr] = pr_from_match(preds, match, gts.size());

    if (thr == low) {
      report.matched_pairs = static_cast<int>(matched_ious.size());
      for (double iou : matched_ious) {
        const int bin = std::min(9, static_cast<int>(iou * 10.0));
        ++report.iou_histogram[bin];
      }
      // Range bands, rematched on the filtered subsets.
      const double lo_edges[3] = {0.0, 30.0, 50.0};
      const double hi_edges[3] = {30.0, 50.0, 1e30};
      for (int band = 0; band < 3; ++band) {
        std::vector<Box3D> bp, bt;
        std::vector<int> bpf, btf;
        for (std::size_t i = 0; i < preds.size(); ++i) {
          const double r = std::hypot(preds[i].x, preds[i].y);
          if (r >= lo_edges[band] && r < hi_edges[band]) {
            bp.push_back(preds[i]);
            bpf.push_back(pred_frame[i]);
          }
        }
        for (std::size_t i = 0; i < gts.size(); ++i) {
          const double r = std::hypot(gts[i].x, gts[i].y);
          if (r >= lo_edges[band] && r < hi_edges[band]) {
            bt.push_back(gts[i]);
            btf.push_back(truth_frame[i]);
          }
        }
        report.range_bands[band] =
            pr_from_match(bp, greedy_match(bp, bpf, bt, btf, thr, nullptr), bt.size());
      }
    }

    // Per-class metrics on class-filtered subsets.
    for (ClassId cls :
         {ClassId::Unknown, ClassId::Vehicle, ClassId::Pedestrian, ClassId::Cyclist}) {
      std::vector<Box3D> cp, ct;
      std::vector<int> cpf, ctf;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].class_id == cls) {
          cp.push_back(preds[i]);
          cpf.push_back(pred_frame[i]);
        }
      }
      for (std::size_t i = 0; i < gts.size(); ++i) {
        if (gts[i].class_id == cls) {
          ct.push_back(gts[i]);
          ctf.push_back(truth_frame[i]);
        }
      }
      if (cp.empty() && ct.empty()) continue;
      report.per_class[thr][cls] =
          pr_from_match(cp, greedy_match(cp, cpf, ct, ctf, thr, nullptr), ct.size());
    }
  }
  return report;
}

}  // namespace owl
