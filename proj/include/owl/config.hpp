// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_CONFIG_HPP
#define OWL_CONFIG_HPP

#include <string>
#include <vector>

#include "owl/bench.hpp"
#include "owl/clustering.hpp"
#include "owl/cues.hpp"
#include "owl/occupancy.hpp"
#include "owl/reasoner.hpp"
#include "owl/selftrain.hpp"
#include "owl/sweeps.hpp"

namespace owl {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg, std::vector<std::string> keys = {})
      : std::runtime_error(msg), offending_keys(std::move(keys)) {}
  std::vector<std::string> offending_keys;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  int num_frames = 5;

  SceneSpec scene;
  GroundParams ground;

  // Motion artifact removal.
  int mar_window = 1;  // n; each frame aggregates up to 2n+1 sweeps
  double persistence_radius = 0.3;
  double tau_static = 0.7;

  ClusteringParams clustering;
  double label_nms_iou = 0.2;

  MaskSchedule mask;
  int warmup_epochs = 50;
  double warmup_learning_rate = 0.1;
  Vec3 voxel_origin{-80.0, -80.0, -4.0};
  Vec3 voxel_cell{0.4, 0.4, 0.4};
  std::array<int, 3> voxel_extents{400, 400, 25};

  SizePrototypes prototypes = SizePrototypes::defaults();
  CueConfig cues;
  RuleConfig rules;
  RefineConfig refine;
  LossWeights loss;
  LossHyper loss_hyper;

  int selftrain_rounds = 2;
  std::string detector = "toy";    // "toy" | "passthrough"
  bool warm_start_detector = true;

  std::string reasoner = "rules";  // "rules" | "remote" | "replay"
  RemoteConfig remote;
  std::string replay_log;

  CorruptionSpec corruption;

  void validate() const;
};

/// Parse and strictly validate a JSON config file; unknown keys are rejected
/// with a ConfigError listing them. Absent keys keep their defaults.
PipelineConfig load_config(const std::string& path);
PipelineConfig config_from_json_text(const std::string& text);

/// Effective config, serialized; re-loading reproduces the struct.
std::string config_to_json(const PipelineConfig& cfg);

}  // namespace owl

#endif  // OWL_CONFIG_HPP
