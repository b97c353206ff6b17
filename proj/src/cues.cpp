// SPDX-License-Identifier: Apache-2.0
#include "owl/cues.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "owl/geometry.hpp"

namespace owl {

namespace {

void fit_velocity(Track& t, double frame_dt) {
  const std::size_t n = t.observations.size();
  if (n < 2) {
    t.vx = t.vy = 0.0;
    return;
  }
  // Least-squares slope of centroid vs time.
  double st = 0, sx = 0, sy = 0, stt = 0, stx = 0, sty = 0;
  for (const auto& obs : t.observations) {
    const double time = obs.frame * frame_dt;
    st += time;
    sx += obs.box.x;
    sy += obs.box.y;
    stt += time * time;
    stx += time * obs.box.x;
    sty += time * obs.box.y;
  }
  const double denom = n * stt - st * st;
  if (std::abs(denom) < 1e-12) {
    t.vx = t.vy = 0.0;
    return;
  }
  t.vx = (n * stx - st * sx) / denom;
  t.vy = (n * sty - st * sy) / denom;
}

Box3D predict(const Track& t, int frame, double frame_dt) {
  Box3D b = t.observations.back().box;
  const double dt = (frame - t.observations.back().frame) * frame_dt;
  b.x += t.vx * dt;
  b.y += t.vy * dt;
  return b;
}

}  // namespace

double Track::speed() const { return std::hypot(vx, vy); }

SizePrototypes SizePrototypes::defaults() {
  SizePrototypes p;
  p.sizes[ClassId::Vehicle] = {4.7, 1.9, 1.7};
  p.sizes[ClassId::Pedestrian] = {0.8, 0.8, 1.7};
  p.sizes[ClassId::Cyclist] = {1.8, 0.7, 1.7};
  return p;
}

const std::array<double, 3>& SizePrototypes::at(ClassId c) const {
  const auto it = sizes.find(c);
  if (it == sizes.end())
    throw std::invalid_argument(std::string("SizePrototypes: no prototype for class ") +
                                class_name(c));
  return it->second;
}

ClassId SizePrototypes::nearest(const Box3D& box) const {
  if (sizes.empty()) throw std::invalid_argument("SizePrototypes: empty table");
  ClassId best = sizes.begin()->first;
  double best_div = std::numeric_limits<double>::infinity();
  for (const auto& [cls, proto] : sizes) {
    // Raw (unclamped) divergence for ranking.
    const double a = proto[0] + proto[1] + proto[2];
    const double b = box.l + box.w + box.h;
    const double bs[3] = {box.l / b, box.w / b, box.h / b};
    const double ps[3] = {proto[0] / a, proto[1] / a, proto[2] / a};
    double div = 0.0;
    for (int k = 0; k < 3; ++k) div += ps[k] * std::log(ps[k] / bs[k]);
    // Also penalize absolute scale, otherwise a scaled-up pedestrian ties a vehicle.
    const double scale = std::abs(std::log(b / a));
    div = std::max(div, 0.0) + 0.2 * scale;
    if (div < best_div) {
      best_div = div;
      best = cls;
    }
  }
  return best;
}

std::vector<Track> track(const std::vector<std::vector<Box3D>>& frames,
                         const TrackingConfig& cfg) {
  std::vector<Track> finished;
  struct Active {
    Track t;
    int misses = 0;
  };
  std::vector<Active> active;
  int next_id = 0;

  for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
    const auto& dets = frames[f];
    std::vector<bool> det_used(dets.size(), false);
    std::vector<bool> trk_used(active.size(), false);

    // Greedy best-IoU association against constant-velocity predictions.
    while (true) {
      double best_iou = cfg.iou_gate;
      int bi = -1, bj = -1;
      for (int i = 0; i < static_cast<int>(active.size()); ++i) {
        if (trk_used[i]) continue;
        const Box3D pred = predict(active[i].t, f, cfg.frame_dt);
        for (int j = 0; j < static_cast<int>(dets.size()); ++j) {
          if (det_used[j]) continue;
          const double iou = iou_bev(pred, dets[j]);
          if (iou > best_iou) {
            best_iou = iou;
            bi = i;
            bj = j;
          }
        }
      }
      if (bi < 0) break;
      trk_used[bi] = true;
      det_used[bj] = true;
      active[bi].t.observations.push_back({f, bj, dets[bj]});
      active[bi].misses = 0;
      fit_velocity(active[bi].t, cfg.frame_dt);
    }

    // Centroid-distance fallback for the rest.
    while (true) {
      double best_dist = cfg.dist_gate;
      int bi = -1, bj = -1;
      for (int i = 0; i < static_cast<int>(active.size()); ++i) {
        if (trk_used[i]) continue;
        const Box3D pred = predict(active[i].t, f, cfg.frame_dt);
        for (int j = 0; j < static_cast<int>(dets.size()); ++j) {
          if (det_used[j]) continue;
          const double dist = std::hypot(pred.x - dets[j].x, pred.y - dets[j].y);
          if (dist < best_dist) {
            best_dist = dist;
            bi = i;
            bj = j;
          }
        }
      }
      if (bi < 0) break;
      trk_used[bi] = true;
      det_used[bj] = true;
      active[bi].t.observations.push_back({f, bj, dets[bj]});
      active[bi].misses = 0;
      fit_velocity(active[bi].t, cfg.frame_dt);
    }

    // Age out unmatched tracks.
    std::vector<Active> still_active;
    for (int i = 0; i < static_cast<int>(active.size()); ++i) {
      if (!trk_used[i]) {
        if (++active[i].misses > cfg.k_miss) {
          finished.push_back(std::move(active[i].t));
          continue;
        }
      }
      still_active.push_back(std::move(active[i]));
    }
    active = std::move(still_active);

    // New tracks for unmatched detections.
    for (int j = 0; j < static_cast<int>(dets.size()); ++j) {
      if (det_used[j]) continue;
      Active a;
      a.t.id = next_id++;
      a.t.observations.push_back({f, j, dets[j]});
      active.push_back(std::move(a));
    }
  }
  for (auto& a : active) finished.push_back(std::move(a.t));
  std::sort(finished.begin(), finished.end(),
            [](const Track& a, const Track& b) { return a.id < b.id; });
  return finished;
}

std::pair<int, double> instance_attributes(const PointCloud& scene, const Box3D& box) {
  const std::vector<int> inside = points_in_box(scene, box);
  if (inside.empty()) return {0, 0.0};
  double sum = 0.0;
  for (int idx : inside) sum += scene.points[idx].intensity;
  return {static_cast<int>(inside.size()), sum / inside.size()};
}

double distribution_score(const Box3D& box, const PointCloud& scene, int resolution,
                          double norm_range, int* occupied_cells) {
  if (resolution < 1) throw std::invalid_argument("distribution_score: resolution must be >= 1");
  if (norm_range <= 0.0) throw std::invalid_argument("distribution_score: norm_range must be > 0");
  const double dist_term =
      1.0 - std::clamp(std::sqrt(box.x * box.x + box.y * box.y + box.z * box.z) / norm_range,
                       0.0, 1.0);
  // Occupancy of the r x r BEV grid tiled over the box footprint.
  std::vector<char> occ(static_cast<std::size_t>(resolution) * resolution, 0);
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  for (int idx : points_in_box(scene, box)) {
    const Point& p = scene.points[idx];
    const double dx = p.x - box.x, dy = p.y - box.y;
    const double lx = c * dx + s * dy + 0.5 * box.l;
    const double ly = -s * dx + c * dy + 0.5 * box.w;
    int gx = static_cast<int>(std::floor(lx / box.l * resolution));
    int gy = static_cast<int>(std::floor(ly / box.w * resolution));
    gx = std::clamp(gx, 0, resolution - 1);
    gy = std::clamp(gy, 0, resolution - 1);
    occ[static_cast<std::size_t>(gy) * resolution + gx] = 1;
  }
  int n_occ = 0;
  for (char o : occ) n_occ += o;
  if (occupied_cells) *occupied_cells = n_occ;
  return dist_term + static_cast<double>(n_occ) / (static_cast<double>(resolution) * resolution);
}

double consistency_score(const Box3D& box, const SizePrototypes& prototypes, bool raw_sizes) {
  if (box.l <= 0.0 || box.w <= 0.0 || box.h <= 0.0)
    throw std::invalid_argument("consistency_score: box sizes must be positive");
  const auto& proto = prototypes.at(box.class_id);
  double ps[3] = {proto[0], proto[1], proto[2]};
  double bs[3] = {box.l, box.w, box.h};
  if (!raw_sizes) {
    const double pa = ps[0] + ps[1] + ps[2];
    const double ba = bs[0] + bs[1] + bs[2];
    for (int k = 0; k < 3; ++k) {
      ps[k] /= pa;
      bs[k] /= ba;
    }
  }
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) sum += ps[k] * std::log(ps[k] / bs[k]);
  sum = std::max(sum, 0.0);
  return std::min(0.05, sum) / 0.05;
}

std::vector<CueRecord> mine_cues(const std::vector<PointCloud>& scenes,
                                 const std::vector<std::vector<Box3D>>& labels,
                                 const SizePrototypes& prototypes, const CueConfig& cfg) {
  if (scenes.size() != labels.size())
    throw std::invalid_argument("mine_cues: scenes/labels frame count mismatch");
  const std::vector<Track> tracks = track(labels, cfg.tracking);

  // (frame, box_index) -> track.
  std::map<std::pair<int, int>, const Track*> assoc;
  for (const Track& t : tracks) {
    for (const auto& obs : t.observations) assoc[{obs.frame, obs.box_index}] = &t;
  }

  std::vector<CueRecord> out;
  for (int f = 0; f < static_cast<int>(labels.size()); ++f) {
    for (int j = 0; j < static_cast<int>(labels[f].size()); ++j) {
      const Box3D& box = labels[f][j];
      CueRecord rec;
      rec.frame_id = scenes[f].frame_id;
      rec.box_index = j;
      rec.box = box;
      rec.resolution = cfg.resolution;
      if (const auto it = assoc.find({f, j}); it != assoc.end()) {
        rec.track_id = it->second->id;
        rec.speed = it->second->speed();
      }
      rec.dynamic = rec.speed > cfg.dynamic_speed_threshold;
      std::tie(rec.point_count, rec.mean_intensity) = instance_attributes(scenes[f], box);
      rec.s_dis =
          distribution_score(box, scenes[f], cfg.resolution, cfg.norm_range, &rec.grid_occupancy);
      Box3D scored = box;
      if (scored.class_id == ClassId::Unknown || !prototypes.has(scored.class_id))
        scored.class_id = prototypes.nearest(box);
      rec.s_cons = consistency_score(scored, prototypes, cfg.raw_sizes);
      out.push_back(rec);
    }
  }
  return out;
}

}  // namespace owl
