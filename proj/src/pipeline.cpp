// SPDX-License-Identifier: Apache-2.0
#include "owl/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"

namespace owl {

namespace fs = std::filesystem;

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = std::min(workers, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

namespace {

std::string sweep_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.bin", frame);
  return buf;
}

}  // namespace

void write_dataset(const std::vector<GeneratedFrame>& frames, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "sweeps");
  std::vector<Pose> poses;
  std::map<int, std::vector<Box3D>> truth;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    write_sweep_bin(frames[f].cloud, (fs::path(dir) / "sweeps" / sweep_name(int(f))).string());
    poses.push_back(Pose::identity());
    truth[int(f)] = frames[f].truth;
  }
  write_pose_file(poses, (fs::path(dir) / "poses.txt").string());
  write_labels_txt(truth, (fs::path(dir) / "truth.txt").string());
  write_labels_jsonl(truth, (fs::path(dir) / "truth.jsonl").string());
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset ds;
  ds.poses = read_pose_file((fs::path(dir) / "poses.txt").string());
  ds.truth = read_labels_txt((fs::path(dir) / "truth.txt").string());
  for (std::size_t f = 0; f < ds.poses.size(); ++f) {
    ds.clouds.push_back(
        read_sweep_bin((fs::path(dir) / "sweeps" / sweep_name(int(f))).string(), int(f)));
  }
  return ds;
}

void run_generate(const PipelineConfig& cfg, const std::string& out_dir) {
  const auto frames = generate_frames(cfg.scene, cfg.num_frames);
  write_dataset(frames, out_dir);
  std::ofstream((fs::path(out_dir) / "effective_config.json").string()) << config_to_json(cfg)
                                                                        << "\n";
}

LabelStageResult make_initial_labels(const PipelineConfig& cfg,
                                     const std::vector<PointCloud>& clouds,
                                     const std::vector<Pose>& poses) {
  const int n_frames = static_cast<int>(clouds.size());
  LabelStageResult res;
  res.labels.resize(n_frames);
  res.scenes.resize(n_frames);
  std::vector<int> warnings(n_frames, 0);

  parallel_for(n_frames, cfg.threads, [&](int f) {
    const int half = std::min({f, n_frames - 1 - f, cfg.mar_window});
    PointCloud dense;
    if (half >= 1) {
      SweepSequence seq;
      for (int g = f - half; g <= f + half; ++g)
        seq.sweeps.emplace_back(clouds[g], g < int(poses.size()) ? poses[g] : Pose::identity());
      const PersistenceField field = persistence_scores(seq, cfg.persistence_radius);
      dense = filter_motion_artifacts(seq, field, cfg.tau_static).cloud;
      dense.frame_id = clouds[f].frame_id;
    } else {
      dense = clouds[f];
    }
    GroundResult gr = remove_ground(dense, cfg.ground);
    if (gr.warning) warnings[f] = 1;
    gr.nonground.frame_id = clouds[f].frame_id;
    res.scenes[f] = std::move(gr.nonground);
    res.labels[f] = initial_labels(res.scenes[f], cfg.clustering, cfg.label_nms_iou);
  });

  for (int w : warnings) res.ground_warnings += w;
  return res;
}

WarmupResult run_warmup_stage(const PipelineConfig& cfg, const std::vector<PointCloud>& scenes,
                              const std::vector<std::vector<Box3D>>& labels) {
  std::vector<VoxelGrid> grids(scenes.size());
  parallel_for(static_cast<int>(scenes.size()), cfg.threads, [&](int f) {
    grids[f] = voxelize(scenes[f], cfg.voxel_origin, cfg.voxel_cell, cfg.voxel_extents);
  });
  std::vector<WarmupScene> ws;
  for (std::size_t f = 0; f < scenes.size(); ++f)
    ws.push_back({&scenes[f], &grids[f], &labels[f]});
  MaskSchedule sched = cfg.mask;
  if (sched.seed == 0) sched.seed = cfg.seed;
  return train_warmup(ws, sched, cfg.warmup_epochs, cfg.warmup_learning_rate);
}

std::vector<CueRecord> run_cue_stage(const PipelineConfig& cfg,
                                     const std::vector<PointCloud>& scenes,
                                     const std::vector<std::vector<Box3D>>& labels) {
  return mine_cues(scenes, labels, cfg.prototypes, cfg.cues);
}

ReplayLog load_replay_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay log: " + path);
  ReplayLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error("replay log line " + std::to_string(line_no) + ": parse error");
    if (!j.value("ok", false)) continue;
    log[{j.at("frame_id").get<int>(), j.at("batch_begin").get<int>()}] =
        j.at("response").get<std::string>();
  }
  return log;
}

std::vector<ReasonerVerdict> reason_replay(const ReasonerRequest& req, const ReplayLog& log,
                                           int batch_size, const SizePrototypes& prototypes,
                                           const RuleConfig& rules, int* fallbacks) {
  std::vector<ReasonerVerdict> out;
  const std::size_t batch = std::max(1, batch_size);
  for (std::size_t begin = 0; begin < req.cues.size(); begin += batch) {
    const std::size_t end = std::min(req.cues.size(), begin + batch);
    std::vector<ReasonerVerdict> batch_verdicts;
    const auto it = log.find({req.frame_id, static_cast<int>(begin)});
    const bool ok = it != log.end() &&
                    parse_verdict_json(it->second, end - begin, &batch_verdicts);
    for (std::size_t i = begin; i < end; ++i) {
      ReasonerVerdict v;
      if (ok && batch_verdicts[i - begin].valid()) {
        v = batch_verdicts[i - begin];
        v.source = VerdictSource::Remote;
      } else {
        ReasonerRequest one;
        one.cues = {req.cues[i]};
        one.frame_id = req.frame_id;
        one.sensor_range = req.sensor_range;
        v = reason_rule_based(one, prototypes, rules)[0];
        v.source = VerdictSource::Fallback;
        if (fallbacks) ++*fallbacks;
      }
      out.push_back(v);
    }
  }
  return out;
}

RefineStageResult run_refine_stage(const PipelineConfig& cfg,
                                   const std::vector<PointCloud>& scenes,
                                   const std::vector<std::vector<Box3D>>& labels) {
  const std::vector<CueRecord> cues = run_cue_stage(cfg, scenes, labels);

  ReplayLog replay;
  if (cfg.reasoner == "replay") {
    if (cfg.replay_log.empty())
      throw std::runtime_error("reasoner 'replay' needs replay_log");
    replay = load_replay_log(cfg.replay_log);
  }
  RemoteConfig remote = cfg.remote;
  if (cfg.reasoner == "remote") remote.apply_env();

  RefineConfig refine_cfg = cfg.refine;
  refine_cfg.common_sizes = cfg.prototypes;

  RefineStageResult res;
  res.labels.resize(labels.size());
  res.omegas.resize(labels.size());

  for (std::size_t f = 0; f < labels.size(); ++f) {
    ReasonerRequest req;
    req.frame_id = scenes[f].frame_id;
    req.sensor_range = cfg.cues.norm_range;
    std::vector<CueRecord> frame_cues;
    for (const CueRecord& c : cues)
      if (c.frame_id == scenes[f].frame_id) frame_cues.push_back(c);
    // mine_cues emits records ordered by (frame, box_index); keep alignment.
    std::sort(frame_cues.begin(), frame_cues.end(),
              [](const CueRecord& a, const CueRecord& b) { return a.box_index < b.box_index; });
    req.cues = frame_cues;

    std::vector<ReasonerVerdict> verdicts;
    if (cfg.reasoner == "remote") {
      verdicts = reason_remote(req, remote, cfg.prototypes, cfg.rules, &res.remote);
    } else if (cfg.reasoner == "replay") {
      verdicts = reason_replay(req, replay, remote.batch_size, cfg.prototypes, cfg.rules,
                               &res.remote.fallbacks);
    } else {
      verdicts = reason_rule_based(req, cfg.prototypes, cfg.rules);
    }

    const RefineResult rr = refine(labels[f], verdicts, frame_cues, refine_cfg);
    res.labels[f] = rr.boxes;
    res.corrected += rr.count_corrected;
    res.replaced += rr.count_replaced;
    res.dropped += rr.count_dropped;
    res.omegas[f].resize(rr.boxes.size());
    for (std::size_t i = 0; i < rr.boxes.size(); ++i) {
      const std::size_t src = rr.source_index[i];
      res.omegas[f][i] =
          sample_weight(rr.s_cons[i], rr.s_rea[i], cfg.loss) * labels[f][src].weight;
    }
  }
  return res;
}

SelfTrainConfig selftrain_config(const PipelineConfig& cfg) {
  SelfTrainConfig st;
  st.rounds = cfg.selftrain_rounds;
  st.loss = cfg.loss;
  st.cues = cfg.cues;
  st.refine = cfg.refine;
  st.refine.common_sizes = cfg.prototypes;
  st.refine.invert_s_cons = cfg.refine.invert_s_cons;
  st.rules = cfg.rules;
  st.prototypes = cfg.prototypes;
  st.tta = {Augmentation::identity(), {true, 0.0, 1.0}, {false, 0.08, 1.0},
            {false, 0.0, 1.03}};
  return st;
}

std::unique_ptr<Detector> make_detector(const PipelineConfig& cfg,
                                        const OccupancyPredictor* warm_start) {
  if (cfg.detector == "passthrough") return std::make_unique<PassThroughDetector>();
  ToyDetectorConfig tc;
  tc.clustering = cfg.clustering;
  tc.loss = cfg.loss;
  tc.hyper = cfg.loss_hyper;
  tc.nms_iou = cfg.label_nms_iou;
  tc.voxel_origin = cfg.voxel_origin;
  tc.voxel_cell = cfg.voxel_cell;
  tc.voxel_extents = cfg.voxel_extents;
  auto det = std::make_unique<ToyGridDetector>(tc);
  if (warm_start && cfg.warm_start_detector) det->warm_start(*warm_start);
  return det;
}

std::vector<std::vector<Box3D>> truth_by_frame(const std::map<int, std::vector<Box3D>>& truth,
                                               int num_frames) {
  std::vector<std::vector<Box3D>> out(num_frames);
  for (const auto& [frame, boxes] : truth) {
    if (frame >= 0 && frame < num_frames) out[frame] = boxes;
  }
  return out;
}

std::map<int, std::vector<Box3D>> labels_to_map(const std::vector<std::vector<Box3D>>& labels) {
  std::map<int, std::vector<Box3D>> out;
  for (std::size_t f = 0; f < labels.size(); ++f) out[int(f)] = labels[f];
  return out;
}

E2eResult run_e2e(const PipelineConfig& cfg, const std::string& out_dir) {
  const bool persist = !out_dir.empty();
  if (persist) fs::create_directories(out_dir);

  const auto frames = generate_frames(cfg.scene, cfg.num_frames);
  if (persist) {
    write_dataset(frames, out_dir);
    std::ofstream((fs::path(out_dir) / "effective_config.json").string())
        << config_to_json(cfg) << "\n";
  }

  std::vector<PointCloud> clouds;
  std::vector<Pose> poses;
  E2eResult res;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    clouds.push_back(frames[f].cloud);
    clouds.back().frame_id = int(f);
    poses.push_back(Pose::identity());
    res.truth.push_back(frames[f].truth);
  }

  res.initial = make_initial_labels(cfg, clouds, poses);
  res.initial_eval = evaluate(res.initial.labels, res.truth);
  if (persist)
    write_labels_txt(labels_to_map(res.initial.labels),
                     (fs::path(out_dir) / "labels_initial.txt").string());

  res.warmup = run_warmup_stage(cfg, res.initial.scenes, res.initial.labels);
  if (persist)
    export_warmup(res.warmup.predictor, (fs::path(out_dir) / "warmup.owlw").string());

  const std::vector<CueRecord> cues = run_cue_stage(cfg, res.initial.scenes, res.initial.labels);
  if (persist) write_cues_jsonl(cues, (fs::path(out_dir) / "cues.jsonl").string());

  res.refined = run_refine_stage(cfg, res.initial.scenes, res.initial.labels);
  res.refined_eval = evaluate(res.refined.labels, res.truth);
  if (persist)
    write_labels_txt(labels_to_map(res.refined.labels),
                     (fs::path(out_dir) / "labels_refined.txt").string());

  std::unique_ptr<Detector> det = make_detector(cfg, &res.warmup.predictor);
  res.selftrain = self_train(res.initial.scenes, res.refined.labels, *det, selftrain_config(cfg));
  res.final_labels = res.selftrain.rounds.back().labels;
  res.final_eval = evaluate(res.final_labels, res.truth);

  if (persist) {
    write_labels_txt(labels_to_map(res.final_labels),
                     (fs::path(out_dir) / "labels_final.txt").string());
    write_report(res.final_eval, (fs::path(out_dir) / "report.json").string(),
                 (fs::path(out_dir) / "report_frames.csv").string(),
                 (fs::path(out_dir) / "report_histogram.csv").string(), res.final_labels,
                 res.truth);
  }
  return res;
}

}  // namespace owl
