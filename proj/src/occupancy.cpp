// SPDX-License-Identifier: Apache-2.0
#include "owl/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

namespace owl {

namespace {

constexpr double kProbClamp = 1e-7;
constexpr char kMagic[4] = {'O', 'W', 'L', 'W'};
constexpr std::uint32_t kVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double voxel_center_distance(const VoxelGrid& grid, const PointCloud& cloud, const VoxelIndex& v) {
  const auto it = grid.cells.find(v);
  if (it == grid.cells.end() || it->second.empty())
    throw std::invalid_argument("voxel_center_distance: empty voxel");
  double cx = 0, cy = 0, cz = 0;
  for (int idx : it->second) {
    cx += cloud.points[idx].x;
    cy += cloud.points[idx].y;
    cz += cloud.points[idx].z;
  }
  const double inv = 1.0 / it->second.size();
  cx *= inv;
  cy *= inv;
  cz *= inv;
  return std::sqrt(cx * cx + cy * cy + cz * cz);
}

double mask_ratio(double d, bool is_foreground, const MaskSchedule& sched) {
  if (d < 0.0) throw std::invalid_argument("mask_ratio: d must be >= 0");
  sched.validate();
  const double w = is_foreground ? sched.w_fr : sched.w_bg;
  return w * (0.1 + 0.5 * std::exp(-0.25 * std::floor(d / 10.0)));
}

VoxelMask sample_mask(const VoxelGrid& grid, const PointCloud& cloud,
                      const std::vector<Box3D>& labels, const MaskSchedule& sched) {
  sched.validate();
  std::mt19937_64 rng(sched.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  VoxelMask mask;
  for (const auto& [v, members] : grid.cells) {  // std::map: sorted, deterministic order
    double cx = 0, cy = 0, cz = 0;
    for (int idx : members) {
      cx += cloud.points[idx].x;
      cy += cloud.points[idx].y;
      cz += cloud.points[idx].z;
    }
    const double inv = 1.0 / members.size();
    const Point centroid{cx * inv, cy * inv, cz * inv, 0.0};
    bool fg = false;
    for (const Box3D& b : labels) {
      if (point_in_box(centroid, b)) {
        fg = true;
        break;
      }
    }
    const double d = std::sqrt(centroid.x * centroid.x + centroid.y * centroid.y +
                               centroid.z * centroid.z);
    const double p = mask_ratio(d, fg, sched);
    if (uni(rng) < p) {
      mask.masked.push_back(v);
    } else {
      mask.unmasked.push_back(v);
    }
  }
  return mask;
}

BceResult occupancy_loss(std::span<const double> pred, std::span<const std::uint8_t> targets) {
  if (pred.empty()) throw std::invalid_argument("occupancy_loss: empty prediction domain");
  if (pred.size() != targets.size())
    throw std::invalid_argument("occupancy_loss: pred/target size mismatch");
  BceResult res;
  res.grad.resize(pred.size());
  const double inv_n = 1.0 / pred.size();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double y_hat = pred[i];
    if (!(y_hat > 0.0 && y_hat < 1.0))
      throw std::invalid_argument("occupancy_loss: prediction outside (0,1)");
    const double p = std::clamp(y_hat, kProbClamp, 1.0 - kProbClamp);
    const double y = targets[i];
    res.loss += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) * inv_n;
    res.grad[i] = (-(y / p) + (1.0 - y) / (1.0 - p)) * inv_n;
  }
  return res;
}

OccupancyPredictor OccupancyPredictor::make(int input_dim, int hidden_dim, std::uint64_t seed) {
  OccupancyPredictor p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w1.resize(static_cast<std::size_t>(hidden_dim) * input_dim);
  p.b1.assign(hidden_dim, 0.0);
  p.w2.resize(hidden_dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  const double scale1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : p.w1) w = uni(rng) * scale1;
  const double scale2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (double& w : p.w2) w = uni(rng) * scale2;
  return p;
}

double OccupancyPredictor::predict(std::span<const double> features) const {
  if (static_cast<int>(features.size()) != input_dim)
    throw std::invalid_argument("OccupancyPredictor: feature dimension mismatch");
  double out = b2;
  for (int h = 0; h < hidden_dim; ++h) {
    double a = b1[h];
    for (int i = 0; i < input_dim; ++i) a += w1[h * input_dim + i] * features[i];
    out += w2[h] * std::tanh(a);
  }
  return sigmoid(out);
}

std::vector<double> OccupancyPredictor::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  out.insert(out.end(), w1.begin(), w1.end());
  out.insert(out.end(), b1.begin(), b1.end());
  out.insert(out.end(), w2.begin(), w2.end());
  out.push_back(b2);
  return out;
}

void OccupancyPredictor::unflatten(const std::vector<double>& params) {
  if (static_cast<int>(params.size()) != parameter_count())
    throw std::invalid_argument("OccupancyPredictor: parameter count mismatch");
  std::size_t k = 0;
  for (double& w : w1) w = params[k++];
  for (double& b : b1) b = params[k++];
  for (double& w : w2) w = params[k++];
  b2 = params[k];
}

std::vector<double> voxel_features(const VoxelGrid& grid, const VoxelMask& mask,
                                   const VoxelIndex& v, double distance_norm) {
  const std::set<VoxelIndex> visible(mask.unmasked.begin(), mask.unmasked.end());
  std::vector<double> feat;
  feat.reserve(28);
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const VoxelIndex nb{v.ix + dx, v.iy + dy, v.iz + dz};
        feat.push_back(visible.count(nb) ? 1.0 : 0.0);
      }
    }
  }
  const Vec3 c = grid.cell_center(v);
  feat.push_back(std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]) / distance_norm);
  return feat;
}

std::vector<TrainingExample> build_examples(const VoxelGrid& grid, const PointCloud& cloud,
                                            const VoxelMask& mask, std::uint64_t seed,
                                            double distance_norm) {
  (void)cloud;
  const std::set<VoxelIndex> visible(mask.unmasked.begin(), mask.unmasked.end());
  std::vector<TrainingExample> out;

  // Positives: masked occupied voxels.
  for (const VoxelIndex& v : mask.masked) {
    out.push_back({voxel_features(grid, mask, v, distance_norm), 1});
  }

  // Negatives: equal-size seeded sample of empty in-range voxels, drawn near
  // occupied ones so they carry informative neighborhoods.
  std::set<VoxelIndex> empty_candidates;
  for (const auto& [v, members] : grid.cells) {
    (void)members;
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const VoxelIndex nb{v.ix + dx, v.iy + dy, v.iz + dz};
          if (grid.in_extents(nb) && !grid.cells.count(nb)) empty_candidates.insert(nb);
        }
      }
    }
  }
  std::vector<VoxelIndex> empties(empty_candidates.begin(), empty_candidates.end());
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::shuffle(empties.begin(), empties.end(), rng);
  const std::size_t want = std::min(empties.size(), mask.masked.size());
  for (std::size_t i = 0; i < want; ++i) {
    out.push_back({voxel_features(grid, mask, empties[i], distance_norm), 0});
  }
  return out;
}

double warmup_loss_and_grad(const OccupancyPredictor& pred,
                            const std::vector<TrainingExample>& examples,
                            std::vector<double>* grad_out) {
  if (examples.empty()) throw std::invalid_argument("warmup_loss_and_grad: no examples");
  const int in = pred.input_dim, hid = pred.hidden_dim;
  std::vector<double> grad(pred.parameter_count(), 0.0);
  double loss = 0.0;
  const double inv_n = 1.0 / examples.size();
  std::vector<double> act(hid);

  for (const TrainingExample& ex : examples) {
    double out = pred.b2;
    for (int h = 0; h < hid; ++h) {
      double a = pred.b1[h];
      for (int i = 0; i < in; ++i) a += pred.w1[h * in + i] * ex.features[i];
      act[h] = std::tanh(a);
      out += pred.w2[h] * act[h];
    }
    const double y_hat = std::clamp(sigmoid(out), kProbClamp, 1.0 - kProbClamp);
    const double y = ex.target;
    loss += -(y * std::log(y_hat) + (1.0 - y) * std::log(1.0 - y_hat)) * inv_n;

    // d loss / d out for sigmoid + BCE.
    const double dout = (y_hat - y) * inv_n;
    for (int h = 0; h < hid; ++h) {
      grad[in * hid + hid + h] += dout * act[h];            // w2
      const double dh = dout * pred.w2[h] * (1.0 - act[h] * act[h]);
      grad[in * hid + h] += dh;                             // b1
      for (int i = 0; i < in; ++i) grad[h * in + i] += dh * ex.features[i];  // w1
    }
    grad[grad.size() - 1] += dout;  // b2
  }
  if (grad_out) *grad_out = std::move(grad);
  return loss;
}

WarmupResult train_warmup(const std::vector<WarmupScene>& scenes, const MaskSchedule& sched,
                          int epochs, double learning_rate) {
  if (epochs < 1) throw std::invalid_argument("train_warmup: epochs must be >= 1");
  if (scenes.empty()) throw std::invalid_argument("train_warmup: need at least one scene");

  std::vector<TrainingExample> examples;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const WarmupScene& sc = scenes[s];
    const VoxelMask mask = sample_mask(*sc.grid, *sc.cloud, *sc.labels, sched);
    auto ex = build_examples(*sc.grid, *sc.cloud, mask, sched.seed + s);
    examples.insert(examples.end(), ex.begin(), ex.end());
  }
  if (examples.empty()) throw std::invalid_argument("train_warmup: masking produced no examples");

  WarmupResult res;
  res.predictor = OccupancyPredictor::make(28, 8, sched.seed + 101);
  std::vector<double> params = res.predictor.flatten();
  std::vector<double> grad;
  for (int e = 0; e < epochs; ++e) {
    const double loss = warmup_loss_and_grad(res.predictor, examples, &grad);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_warmup: loss diverged at epoch " + std::to_string(e));
    res.loss_trace.push_back(loss);
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grad[i];
    res.predictor.unflatten(params);
  }
  return res;
}

void export_warmup(const OccupancyPredictor& pred, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_warmup: cannot open " + path);
  out.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  const std::uint32_t in = pred.input_dim, hid = pred.hidden_dim;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&in), 4);
  out.write(reinterpret_cast<const char*>(&hid), 4);
  const std::vector<double> params = pred.flatten();
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw std::runtime_error("export_warmup: write failed for " + path);
}

OccupancyPredictor import_warmup(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("import_warmup: cannot open " + path);
  char magic[4];
  std::uint32_t version = 0, input_dim = 0, hidden_dim = 0;
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("import_warmup: bad magic at offset 0");
  in.read(reinterpret_cast<char*>(&version), 4);
  if (!in) throw std::runtime_error("import_warmup: truncated header at offset 4");
  if (version != kVersion)
    throw std::runtime_error("import_warmup: unsupported version " + std::to_string(version));
  in.read(reinterpret_cast<char*>(&input_dim), 4);
  in.read(reinterpret_cast<char*>(&hidden_dim), 4);
  if (!in) throw std::runtime_error("import_warmup: truncated header at offset 8");
  if (input_dim == 0 || input_dim > 4096 || hidden_dim == 0 || hidden_dim > 4096)
    throw std::runtime_error("import_warmup: implausible layer sizes");

  OccupancyPredictor pred;
  pred.input_dim = static_cast<int>(input_dim);
  pred.hidden_dim = static_cast<int>(hidden_dim);
  pred.w1.resize(static_cast<std::size_t>(input_dim) * hidden_dim);
  pred.b1.resize(hidden_dim);
  pred.w2.resize(hidden_dim);
  std::vector<double> params(pred.parameter_count());
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != params.size() * sizeof(double)) {
    throw std::runtime_error("import_warmup: truncated parameter block at offset " +
                             std::to_string(16 + in.gcount()));
  }
  pred.unflatten(params);
  return pred;
}

}  // namespace owl
