// SPDX-License-Identifier: Apache-2.0
#include "owl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace owl {

namespace {

using nlohmann::json;

// Tracks which keys a section actually consumed so unknown ones can be
// reported all at once.
class Section {
 public:
  Section(const json* obj, std::string prefix, std::vector<std::string>* unknown)
      : obj_(obj), prefix_(std::move(prefix)), unknown_(unknown) {}

  ~Section() {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items()) {
      (void)value;
      if (!seen_.count(key)) unknown_->push_back(prefix_ + key);
    }
  }

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (obj_ && obj_->contains(key)) field = obj_->at(key).get<T>();
  }

  void get_vec3(const char* key, Vec3& field) {
    seen_.insert(key);
    if (obj_ && obj_->contains(key)) {
      const auto arr = obj_->at(key).get<std::vector<double>>();
      if (arr.size() != 3) throw ConfigError("config key " + prefix_ + key + ": expected 3 values");
      field = {arr[0], arr[1], arr[2]};
    }
  }

  void get_extents(const char* key, std::array<int, 3>& field) {
    seen_.insert(key);
    if (obj_ && obj_->contains(key)) {
      const auto arr = obj_->at(key).get<std::vector<int>>();
      if (arr.size() != 3) throw ConfigError("config key " + prefix_ + key + ": expected 3 values");
      field = {arr[0], arr[1], arr[2]};
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    if (obj_ && obj_->contains(key)) {
      if (!obj_->at(key).is_object())
        throw ConfigError("config key " + prefix_ + key + ": expected an object");
      return &obj_->at(key);
    }
    return nullptr;
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return (obj_ && obj_->contains(key)) ? &obj_->at(key) : nullptr;
  }

 private:
  const json* obj_;
  std::string prefix_;
  std::vector<std::string>* unknown_;
  std::set<std::string> seen_;
};

SizePrototypes prototypes_from_json(const json& j) {
  SizePrototypes p;
  for (const auto& [name, dims] : j.items()) {
    const auto arr = dims.get<std::vector<double>>();
    if (arr.size() != 3) throw ConfigError("prototypes." + name + ": expected [l, w, h]");
    p.sizes[class_from_name(name)] = {arr[0], arr[1], arr[2]};
  }
  return p;
}

}  // namespace

void PipelineConfig::validate() const {
  clustering.validate();
  mask.validate();
  loss.validate();
  corruption.validate();
  if (num_frames < 1) throw ConfigError("num_frames must be >= 1");
  if (selftrain_rounds < 1) throw ConfigError("selftrain.rounds must be >= 1");
  if (detector != "toy" && detector != "passthrough")
    throw ConfigError("detector must be 'toy' or 'passthrough'");
  if (reasoner != "rules" && reasoner != "remote" && reasoner != "replay")
    throw ConfigError("reasoner must be 'rules', 'remote' or 'replay'");
  if (persistence_radius <= 0.0) throw ConfigError("mar.persistence_radius must be > 0");
  if (mar_window < 0) throw ConfigError("mar.window must be >= 0");
  if (warmup_epochs < 1) throw ConfigError("warmup.epochs must be >= 1");
}

PipelineConfig config_from_json_text(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!doc.is_object()) throw ConfigError("config root must be an object");

  PipelineConfig cfg;
  std::vector<std::string> unknown;
  {
    Section root(&doc, "", &unknown);
    root.get("seed", cfg.seed);
    root.get("threads", cfg.threads);
    root.get("num_frames", cfg.num_frames);
    root.get("detector", cfg.detector);
    root.get("warm_start_detector", cfg.warm_start_detector);
    root.get("reasoner", cfg.reasoner);
    root.get("replay_log", cfg.replay_log);

    {
      Section s(root.child("scene"), "scene.", &unknown);
      s.get("vehicles", cfg.scene.vehicles);
      s.get("pedestrians", cfg.scene.pedestrians);
      s.get("cyclists", cfg.scene.cyclists);
      s.get("mover_fraction", cfg.scene.mover_fraction);
      s.get("speed_min", cfg.scene.speed_min);
      s.get("speed_max", cfg.scene.speed_max);
      s.get("sensor_range", cfg.scene.sensor_range);
      s.get("min_object_range", cfg.scene.min_object_range);
      s.get("points_at_10m", cfg.scene.points_at_10m);
      s.get("min_object_points", cfg.scene.min_object_points);
      s.get("ground_extent", cfg.scene.ground_extent);
      s.get("ground_spacing", cfg.scene.ground_spacing);
      s.get("ground_noise", cfg.scene.ground_noise);
      s.get("frame_dt", cfg.scene.frame_dt);
      s.get("seed", cfg.scene.seed);
    }
    {
      Section s(root.child("ground"), "ground.", &unknown);
      s.get("inlier_distance", cfg.ground.inlier_distance);
      s.get("max_iterations", cfg.ground.max_iterations);
      s.get("max_normal_angle_deg", cfg.ground.max_normal_angle_deg);
      s.get("min_inlier_fraction", cfg.ground.min_inlier_fraction);
      s.get("seed", cfg.ground.seed);
    }
    {
      Section s(root.child("mar"), "mar.", &unknown);
      s.get("window", cfg.mar_window);
      s.get("persistence_radius", cfg.persistence_radius);
      s.get("tau_static", cfg.tau_static);
    }
    {
      Section s(root.child("clustering"), "clustering.", &unknown);
      s.get("alpha", cfg.clustering.alpha);
      s.get("beta", cfg.clustering.beta);
      s.get("r0", cfg.clustering.r0);
      s.get("min_points", cfg.clustering.min_points);
      s.get("reference_neighbors", cfg.clustering.reference_neighbors);
      s.get("score_reference", cfg.clustering.score_reference);
      s.get("nms_iou", cfg.label_nms_iou);
    }
    {
      Section s(root.child("warmup"), "warmup.", &unknown);
      s.get("w_fr", cfg.mask.w_fr);
      s.get("w_bg", cfg.mask.w_bg);
      s.get("epochs", cfg.warmup_epochs);
      s.get("learning_rate", cfg.warmup_learning_rate);
      s.get_vec3("voxel_origin", cfg.voxel_origin);
      s.get_vec3("voxel_cell", cfg.voxel_cell);
      s.get_extents("voxel_extents", cfg.voxel_extents);
    }
    if (const json* p = root.raw("prototypes")) cfg.prototypes = prototypes_from_json(*p);
    {
      Section s(root.child("cues"), "cues.", &unknown);
      s.get("resolution", cfg.cues.resolution);
      s.get("norm_range", cfg.cues.norm_range);
      s.get("raw_sizes", cfg.cues.raw_sizes);
      s.get("dynamic_speed_threshold", cfg.cues.dynamic_speed_threshold);
      Section t(s.child("tracking"), "cues.tracking.", &unknown);
      t.get("iou_gate", cfg.cues.tracking.iou_gate);
      t.get("dist_gate", cfg.cues.tracking.dist_gate);
      t.get("k_miss", cfg.cues.tracking.k_miss);
      t.get("frame_dt", cfg.cues.tracking.frame_dt);
    }
    {
      Section s(root.child("rules"), "rules.", &unknown);
      s.get("min_point_count", cfg.rules.min_point_count);
      s.get("density_range_anchor", cfg.rules.density_range_anchor);
      s.get("density_floor_fraction", cfg.rules.density_floor_fraction);
      s.get("max_correction", cfg.rules.max_correction);
      s.get("size_penalty", cfg.rules.size_penalty);
      s.get("density_penalty", cfg.rules.density_penalty);
      s.get("motion_penalty", cfg.rules.motion_penalty);
      s.get("fast_static_speed", cfg.rules.fast_static_speed);
    }
    {
      Section s(root.child("refine"), "refine.", &unknown);
      s.get("eta", cfg.refine.eta);
      s.get("downweight_factor", cfg.refine.downweight_factor);
      s.get("invert_s_cons", cfg.refine.invert_s_cons);
      s.get("demote_bad_correction", cfg.refine.demote_bad_correction);
    }
    {
      Section s(root.child("loss"), "loss.", &unknown);
      s.get("lambda1", cfg.loss.lambda1);
      s.get("lambda2", cfg.loss.lambda2);
      s.get("alpha_reg", cfg.loss.alpha_reg);
      s.get("beta_cls", cfg.loss.beta_cls);
      s.get("smooth_l1_delta", cfg.loss_hyper.smooth_l1_delta);
      s.get("focal_gamma", cfg.loss_hyper.focal_gamma);
      s.get("focal_alpha", cfg.loss_hyper.focal_alpha);
    }
    {
      Section s(root.child("selftrain"), "selftrain.", &unknown);
      s.get("rounds", cfg.selftrain_rounds);
    }
    {
      Section s(root.child("remote"), "remote.", &unknown);
      s.get("endpoint", cfg.remote.endpoint);
      s.get("api_key", cfg.remote.api_key);
      s.get("model", cfg.remote.model);
      s.get("timeout_ms", cfg.remote.timeout_ms);
      s.get("max_retries", cfg.remote.max_retries);
      s.get("batch_size", cfg.remote.batch_size);
      s.get("log_path", cfg.remote.log_path);
    }
    {
      Section s(root.child("corruption"), "corruption.", &unknown);
      s.get("fp_rate", cfg.corruption.fp_rate);
      s.get("size_sigma", cfg.corruption.size_sigma);
      s.get("yaw_flip_prob", cfg.corruption.yaw_flip_prob);
      s.get("drop_rate", cfg.corruption.drop_rate);
      if (const json* conf = s.raw("class_confusion")) {
        for (const auto& [from, row] : conf->items()) {
          for (const auto& [to, p] : row.items()) {
            cfg.corruption.class_confusion[class_from_name(from)][class_from_name(to)] =
                p.get<double>();
          }
        }
      }
    }
  }
  if (!unknown.empty()) {
    std::ostringstream msg;
    msg << "unknown config keys:";
    for (const auto& k : unknown) msg << " " << k;
    throw ConfigError(msg.str(), unknown);
  }
  cfg.refine.common_sizes = cfg.prototypes;
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

std::string config_to_json(const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["num_frames"] = cfg.num_frames;
  j["detector"] = cfg.detector;
  j["warm_start_detector"] = cfg.warm_start_detector;
  j["reasoner"] = cfg.reasoner;
  j["replay_log"] = cfg.replay_log;
  j["scene"] = {{"vehicles", cfg.scene.vehicles},
                {"pedestrians", cfg.scene.pedestrians},
                {"cyclists", cfg.scene.cyclists},
                {"mover_fraction", cfg.scene.mover_fraction},
                {"speed_min", cfg.scene.speed_min},
                {"speed_max", cfg.scene.speed_max},
                {"sensor_range", cfg.scene.sensor_range},
                {"min_object_range", cfg.scene.min_object_range},
                {"points_at_10m", cfg.scene.points_at_10m},
                {"min_object_points", cfg.scene.min_object_points},
                {"ground_extent", cfg.scene.ground_extent},
                {"ground_spacing", cfg.scene.ground_spacing},
                {"ground_noise", cfg.scene.ground_noise},
                {"frame_dt", cfg.scene.frame_dt},
                {"seed", cfg.scene.seed}};
  j["ground"] = {{"inlier_distance", cfg.ground.inlier_distance},
                 {"max_iterations", cfg.ground.max_iterations},
                 {"max_normal_angle_deg", cfg.ground.max_normal_angle_deg},
                 {"min_inlier_fraction", cfg.ground.min_inlier_fraction},
                 {"seed", cfg.ground.seed}};
  j["mar"] = {{"window", cfg.mar_window},
              {"persistence_radius", cfg.persistence_radius},
              {"tau_static", cfg.tau_static}};
  j["clustering"] = {{"alpha", cfg.clustering.alpha},
                     {"beta", cfg.clustering.beta},
                     {"r0", cfg.clustering.r0},
                     {"min_points", cfg.clustering.min_points},
                     {"reference_neighbors", cfg.clustering.reference_neighbors},
                     {"score_reference", cfg.clustering.score_reference},
                     {"nms_iou", cfg.label_nms_iou}};
  j["warmup"] = {{"w_fr", cfg.mask.w_fr},
                 {"w_bg", cfg.mask.w_bg},
                 {"epochs", cfg.warmup_epochs},
                 {"learning_rate", cfg.warmup_learning_rate},
                 {"voxel_origin", cfg.voxel_origin},
                 {"voxel_cell", cfg.voxel_cell},
                 {"voxel_extents", cfg.voxel_extents}};
  for (const auto& [cls, dims] : cfg.prototypes.sizes) j["prototypes"][class_name(cls)] = dims;
  j["cues"] = {{"resolution", cfg.cues.resolution},
               {"norm_range", cfg.cues.norm_range},
               {"raw_sizes", cfg.cues.raw_sizes},
               {"dynamic_speed_threshold", cfg.cues.dynamic_speed_threshold},
               {"tracking",
                {{"iou_gate", cfg.cues.tracking.iou_gate},
                 {"dist_gate", cfg.cues.tracking.dist_gate},
                 {"k_miss", cfg.cues.tracking.k_miss},
                 {"frame_dt", cfg.cues.tracking.frame_dt}}}};
  j["rules"] = {{"min_point_count", cfg.rules.min_point_count},
                {"density_range_anchor", cfg.rules.density_range_anchor},
                {"density_floor_fraction", cfg.rules.density_floor_fraction},
                {"max_correction", cfg.rules.max_correction},
                {"size_penalty", cfg.rules.size_penalty},
                {"density_penalty", cfg.rules.density_penalty},
                {"motion_penalty", cfg.rules.motion_penalty},
                {"fast_static_speed", cfg.rules.fast_static_speed}};
  j["refine"] = {{"eta", cfg.refine.eta},
                 {"downweight_factor", cfg.refine.downweight_factor},
                 {"invert_s_cons", cfg.refine.invert_s_cons},
                 {"demote_bad_correction", cfg.refine.demote_bad_correction}};
  j["loss"] = {{"lambda1", cfg.loss.lambda1},
               {"lambda2", cfg.loss.lambda2},
               {"alpha_reg", cfg.loss.alpha_reg},
               {"beta_cls", cfg.loss.beta_cls},
               {"smooth_l1_delta", cfg.loss_hyper.smooth_l1_delta},
               {"focal_gamma", cfg.loss_hyper.focal_gamma},
               {"focal_alpha", cfg.loss_hyper.focal_alpha}};
  j["selftrain"] = {{"rounds", cfg.selftrain_rounds}};
  j["remote"] = {{"endpoint", cfg.remote.endpoint},
                 {"api_key", cfg.remote.api_key},
                 {"model", cfg.remote.model},
                 {"timeout_ms", cfg.remote.timeout_ms},
                 {"max_retries", cfg.remote.max_retries},
                 {"batch_size", cfg.remote.batch_size},
                 {"log_path", cfg.remote.log_path}};
  json confusion = json::object();
  for (const auto& [from, row] : cfg.corruption.class_confusion) {
    for (const auto& [to, p] : row) confusion[class_name(from)][class_name(to)] = p;
  }
  j["corruption"] = {{"fp_rate", cfg.corruption.fp_rate},
                     {"size_sigma", cfg.corruption.size_sigma},
                     {"yaw_flip_prob", cfg.corruption.yaw_flip_prob},
                     {"drop_rate", cfg.corruption.drop_rate},
                     {"class_confusion", confusion}};
  return j.dump(2);
}

}  // namespace owl
