// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "owl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace owl;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string output = "out";
  std::string input;
  std::string labels_path;
  std::string reasoner;
  std::string replay_log;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
};

void add_common(CLI::App* cmd, CommonArgs* a, bool needs_input) {
  cmd->add_option("--config", a->config_path, "JSON config file");
  cmd->add_option("--output", a->output, "Output directory");
  cmd->add_option("--seed", a->seed, "Random seed override")->each([a](const std::string&) {
    a->seed_set = true;
  });
  cmd->add_option("--threads", a->threads, "Worker threads (0 = all cores)");
  cmd->add_option("--reasoner", a->reasoner, "Reasoner backend")
      ->check(CLI::IsMember({"rules", "remote", "replay"}));
  cmd->add_option("--replay-log", a->replay_log, "Recorded remote log for --reasoner replay");
  if (needs_input) cmd->add_option("--input", a->input, "Dataset directory")->required();
  cmd->add_option("--labels", a->labels_path, "Label file (labels.txt format)");
}

PipelineConfig resolve_config(const CommonArgs& a) {
  PipelineConfig cfg = a.config_path.empty() ? PipelineConfig{} : load_config(a.config_path);
  if (a.seed_set) {
    cfg.seed = a.seed;
    cfg.scene.seed = a.seed;
    cfg.ground.seed = a.seed;
  }
  if (a.threads >= 0) cfg.threads = a.threads;
  if (!a.reasoner.empty()) cfg.reasoner = a.reasoner;
  if (!a.replay_log.empty()) cfg.replay_log = a.replay_log;
  cfg.validate();
  return cfg;
}

void require_input(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing input path: " + path);
}

void write_effective_config(const PipelineConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream((fs::path(dir) / "effective_config.json").string()) << config_to_json(cfg) << "\n";
}

struct PreparedScenes {
  std::vector<PointCloud> scenes;
  std::vector<std::vector<Box3D>> labels;
  LoadedDataset dataset;
};

PreparedScenes prepare(const PipelineConfig& cfg, const CommonArgs& a) {
  require_input(a.input);
  PreparedScenes p;
  p.dataset = load_dataset(a.input);
  LabelStageResult st = make_initial_labels(cfg, p.dataset.clouds, p.dataset.poses);
  p.scenes = std::move(st.scenes);
  if (a.labels_path.empty()) {
    p.labels = std::move(st.labels);
  } else {
    require_input(a.labels_path);
    p.labels = truth_by_frame(read_labels_txt(a.labels_path),
                              static_cast<int>(p.scenes.size()));
  }
  return p;
}

void write_weights(const std::vector<std::vector<double>>& omegas, const std::string& path) {
  std::ofstream out(path);
  for (std::size_t f = 0; f < omegas.size(); ++f) {
    for (std::size_t i = 0; i < omegas[f].size(); ++i)
      out << f << " " << i << " " << omegas[f][i] << "\n";
  }
}

int dispatch(const std::string& cmd, const CommonArgs& a, const std::string& pred_path,
             const std::string& truth_path, const std::string& warmup_path) {
  PipelineConfig cfg = resolve_config(a);

  if (cmd == "generate") {
    run_generate(cfg, a.output);
    std::cout << "wrote dataset: " << a.output << " (" << cfg.num_frames << " frames)\n";
    return 0;
  }
  if (cmd == "eval") {
    require_input(pred_path);
    require_input(truth_path);
    const auto pred_map = read_labels_txt(pred_path);
    const auto truth_map = read_labels_txt(truth_path);
    int num_frames = 0;
    for (const auto& [f, _] : pred_map) num_frames = std::max(num_frames, f + 1);
    for (const auto& [f, _] : truth_map) num_frames = std::max(num_frames, f + 1);
    const auto pred = truth_by_frame(pred_map, num_frames);
    const auto truth = truth_by_frame(truth_map, num_frames);
    const EvalReport report = evaluate(pred, truth);
    fs::create_directories(a.output);
    write_report(report, (fs::path(a.output) / "report.json").string(),
                 (fs::path(a.output) / "report_frames.csv").string(),
                 (fs::path(a.output) / "report_histogram.csv").string(), pred, truth);
    const PrMetrics& m = report.overall.begin()->second;
    std::cout << "P=" << m.precision << " R=" << m.recall << " AP=" << m.ap << "\n";
    return 0;
  }
  if (cmd == "e2e") {
    const E2eResult res = run_e2e(cfg, a.output);
    const auto pr = [](const EvalReport& r) { return r.overall.begin()->second; };
    std::cout << "initial  P=" << pr(res.initial_eval).precision
              << " R=" << pr(res.initial_eval).recall << "\n"
              << "refined  P=" << pr(res.refined_eval).precision
              << " R=" << pr(res.refined_eval).recall << "\n"
              << "final    P=" << pr(res.final_eval).precision
              << " R=" << pr(res.final_eval).recall << "\n";
    return 0;
  }

  // Remaining stages consume a dataset directory.
  PreparedScenes p = prepare(cfg, a);
  write_effective_config(cfg, a.output);

  if (cmd == "labels") {
    write_labels_txt(labels_to_map(p.labels), (fs::path(a.output) / "labels.txt").string());
    write_labels_jsonl(labels_to_map(p.labels), (fs::path(a.output) / "labels.jsonl").string());
    std::size_t total = 0;
    for (const auto& l : p.labels) total += l.size();
    std::cout << "wrote " << total << " labels across " << p.labels.size() << " frames\n";
    return 0;
  }
  if (cmd == "warmup") {
    const WarmupResult res = run_warmup_stage(cfg, p.scenes, p.labels);
    export_warmup(res.predictor, (fs::path(a.output) / "warmup.owlw").string());
    std::cout << "warmup loss " << res.loss_trace.front() << " -> " << res.loss_trace.back()
              << " over " << res.loss_trace.size() << " epochs\n";
    return 0;
  }
  if (cmd == "cues") {
    const auto cues = run_cue_stage(cfg, p.scenes, p.labels);
    write_cues_jsonl(cues, (fs::path(a.output) / "cues.jsonl").string());
    std::cout << "wrote " << cues.size() << " cue records\n";
    return 0;
  }
  if (cmd == "refine") {
    const RefineStageResult res = run_refine_stage(cfg, p.scenes, p.labels);
    write_labels_txt(labels_to_map(res.labels),
                     (fs::path(a.output) / "labels_refined.txt").string());
    write_weights(res.omegas, (fs::path(a.output) / "weights.txt").string());
    std::cout << "corrected=" << res.corrected << " replaced=" << res.replaced
              << " dropped=" << res.dropped << "\n";
    return 0;
  }
  if (cmd == "selftrain") {
    OccupancyPredictor warm;
    bool have_warm = false;
    if (!warmup_path.empty()) {
      require_input(warmup_path);
      warm = import_warmup(warmup_path);
      have_warm = true;
    }
    std::unique_ptr<Detector> det = make_detector(cfg, have_warm ? &warm : nullptr);
    const SelfTrainResult res = self_train(p.scenes, p.labels, *det, selftrain_config(cfg));
    write_labels_txt(labels_to_map(res.rounds.back().labels),
                     (fs::path(a.output) / "labels_final.txt").string());
    for (std::size_t r = 0; r < res.rounds.size(); ++r) {
      const RoundArtifacts& ra = res.rounds[r];
      std::cout << "round " << r << ": A=" << ra.branch_corrected << " B=" << ra.branch_replaced
                << " C=" << ra.branch_dropped << (ra.aborted ? " (aborted)" : "") << "\n";
    }
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"owl: unsupervised 3D pseudo-label pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string pred_path, truth_path, warmup_path;

  add_common(app.add_subcommand("generate", "Write a synthetic dataset"), &args, false);
  add_common(app.add_subcommand("labels", "Initial pseudo-labels from a dataset"), &args, true);
  CLI::App* warm = app.add_subcommand("warmup", "Masked-occupancy warm-up training");
  add_common(warm, &args, true);
  CLI::App* cues = app.add_subcommand("cues", "Mine cue records");
  add_common(cues, &args, true);
  CLI::App* refine = app.add_subcommand("refine", "Reason over cues and refine labels");
  add_common(refine, &args, true);
  CLI::App* self = app.add_subcommand("selftrain", "Weight-aware self-training rounds");
  add_common(self, &args, true);
  self->add_option("--warmup", warmup_path, "Warm-start parameter file (warmup.owlw)");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score predictions against truth");
  add_common(eval_cmd, &args, false);
  eval_cmd->add_option("--pred", pred_path, "Predicted labels.txt")->required();
  eval_cmd->add_option("--truth", truth_path, "Ground-truth labels.txt")->required();
  add_common(app.add_subcommand("e2e", "Full pipeline on a generated scene"), &args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    return dispatch(app.get_subcommands().front()->get_name(), args, pred_path, truth_path,
                    warmup_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    for (const auto& k : e.offending_keys) std::cerr << "  offending key: " << k << "\n";
    return 3;
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    if (msg.find("no endpoint configured") != std::string::npos ||
        msg.find("authentication failed") != std::string::npos)
      return 4;
    if (msg.find("missing input path") != std::string::npos ||
        msg.find("cannot open") != std::string::npos)
      return 2;
    return 1;
  }
}
