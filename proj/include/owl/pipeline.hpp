// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_PIPELINE_HPP
#define OWL_PIPELINE_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "owl/bench.hpp"
#include "owl/config.hpp"
#include "owl/labels_io.hpp"
#include "owl/occupancy.hpp"
#include "owl/reasoner.hpp"
#include "owl/selftrain.hpp"

namespace owl {

/// Deterministic chunked parallel for over [0, n); results must be written to
/// index-addressed slots. threads == 0 uses hardware concurrency.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

struct LoadedDataset {
  std::vector<PointCloud> clouds;  // sensor-frame, per frame
  std::vector<Pose> poses;
  std::map<int, std::vector<Box3D>> truth;
};

/// Writes sweeps/frame_NNNN.bin, poses.txt, truth.txt, truth.jsonl.
void write_dataset(const std::vector<GeneratedFrame>& frames, const std::string& dir);
/// Throws (via open failures) when the directory is missing the expected files.
LoadedDataset load_dataset(const std::string& dir);

/// generate_frames + write_dataset + effective_config.json.
void run_generate(const PipelineConfig& cfg, const std::string& out_dir);

struct LabelStageResult {
  std::vector<std::vector<Box3D>> labels;  // per frame
  std::vector<PointCloud> scenes;          // MAR-filtered, ground-removed, per frame
  int ground_warnings = 0;
};

/// Per frame: aggregate a centered sweep window, filter motion artifacts,
/// remove ground, cluster, fit boxes, NMS.
LabelStageResult make_initial_labels(const PipelineConfig& cfg,
                                     const std::vector<PointCloud>& clouds,
                                     const std::vector<Pose>& poses);

/// Masked-occupancy warm-up over the given scenes and labels.
WarmupResult run_warmup_stage(const PipelineConfig& cfg, const std::vector<PointCloud>& scenes,
                              const std::vector<std::vector<Box3D>>& labels);

std::vector<CueRecord> run_cue_stage(const PipelineConfig& cfg,
                                     const std::vector<PointCloud>& scenes,
                                     const std::vector<std::vector<Box3D>>& labels);

// Replayed remote responses keyed by (frame_id, batch_begin).
using ReplayLog = std::map<std::pair<int, int>, std::string>;

ReplayLog load_replay_log(const std::string& path);

/// Serve verdicts from a recorded remote log; batches absent from the log or
/// failing schema validation fall back to the rule-based reasoner.
std::vector<ReasonerVerdict> reason_replay(const ReasonerRequest& req, const ReplayLog& log,
                                           int batch_size, const SizePrototypes& prototypes,
                                           const RuleConfig& rules, int* fallbacks = nullptr);

struct RefineStageResult {
  std::vector<std::vector<Box3D>> labels;   // per frame
  std::vector<std::vector<double>> omegas;  // aligned with labels
  int corrected = 0, replaced = 0, dropped = 0;
  RemoteStats remote;
};

/// Cue mining + reasoner (rules | remote | replay per cfg.reasoner) +
/// three-branch refinement, per frame.
RefineStageResult run_refine_stage(const PipelineConfig& cfg,
                                   const std::vector<PointCloud>& scenes,
                                   const std::vector<std::vector<Box3D>>& labels);

SelfTrainConfig selftrain_config(const PipelineConfig& cfg);
std::unique_ptr<Detector> make_detector(const PipelineConfig& cfg,
                                        const OccupancyPredictor* warm_start);

struct E2eResult {
  LabelStageResult initial;
  WarmupResult warmup;
  RefineStageResult refined;
  SelfTrainResult selftrain;
  std::vector<std::vector<Box3D>> final_labels;
  std::vector<std::vector<Box3D>> truth;
  EvalReport initial_eval;
  EvalReport refined_eval;
  EvalReport final_eval;
};

/// Full pipeline on a generated dataset. When out_dir is non-empty every
/// stage's artifacts land under it (sweeps, labels, cues, warmup weights,
/// reports, effective config).
E2eResult run_e2e(const PipelineConfig& cfg, const std::string& out_dir = "");

std::vector<std::vector<Box3D>> truth_by_frame(const std::map<int, std::vector<Box3D>>& truth,
                                               int num_frames);
std::map<int, std::vector<Box3D>> labels_to_map(const std::vector<std::vector<Box3D>>& labels);

}  // namespace owl

#endif  // OWL_PIPELINE_HPP
