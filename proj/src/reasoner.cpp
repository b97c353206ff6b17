// SPDX-License-Identifier: Apache-2.0
#include "owl/reasoner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace owl {

namespace {

using nlohmann::json;

struct RuleJudgement {
  ClassId nearest = ClassId::Unknown;
  double s_cons_nearest = 0.0;
  bool size_implausible = false;
  bool density_implausible = false;
};

RuleJudgement judge(const CueRecord& cue, const SizePrototypes& prototypes,
                    const RuleConfig& rules) {
  RuleJudgement j;
  j.nearest = prototypes.nearest(cue.box);
  Box3D probe = cue.box;
  probe.class_id = j.nearest;
  j.s_cons_nearest = consistency_score(probe, prototypes);
  j.size_implausible = j.s_cons_nearest >= 1.0;

  const double d = std::max(cue.box.range(), 1.0);
  const double expected = rules.density_range_anchor / std::max(1.0, (d / 10.0) * (d / 10.0));
  j.density_implausible = cue.point_count < rules.min_point_count ||
                          cue.point_count < rules.density_floor_fraction * expected;
  return j;
}

ReasonerVerdict rule_verdict(const CueRecord& cue, const SizePrototypes& prototypes,
                             const RuleConfig& rules) {
  const RuleJudgement j = judge(cue, prototypes, rules);
  ReasonerVerdict v;
  v.source = VerdictSource::Rules;
  v.keep = !(j.size_implausible && j.density_implausible);
  v.cls_new = j.nearest;

  const auto& proto = prototypes.at(j.nearest);
  const double dims[3] = {cue.box.l, cue.box.w, cue.box.h};
  for (int k = 0; k < 3; ++k) {
    v.delta[k] =
        std::clamp(proto[k] - dims[k], -rules.max_correction, rules.max_correction);
  }

  double score = 1.0 - rules.size_penalty * j.s_cons_nearest;
  if (j.density_implausible) score -= rules.density_penalty;
  if (cue.speed > rules.fast_static_speed && j.nearest == ClassId::Pedestrian)
    score -= rules.motion_penalty;
  v.s_rea = std::clamp(score, 0.0, 1.0);
  return v;
}

json cue_payload(const CueRecord& c) {
  return json{{"box_id", c.box_index},
              {"frame_id", c.frame_id},
              {"track_id", c.track_id},
              {"l", c.box.l},
              {"w", c.box.w},
              {"h", c.box.h},
              {"distance", c.box.range()},
              {"speed", c.speed},
              {"dynamic", c.dynamic},
              {"point_count", c.point_count},
              {"mean_intensity", c.mean_intensity},
              {"s_dis", c.s_dis},
              {"s_cons", c.s_cons}};
}

ClassId class_from_json(const json& j) {
  if (j.is_string()) return class_from_name(j.get<std::string>());
  return static_cast<ClassId>(j.get<int>());
}

}  // namespace

std::vector<ReasonerVerdict> reason_rule_based(const ReasonerRequest& req,
                                               const SizePrototypes& prototypes,
                                               const RuleConfig& rules) {
  std::vector<ReasonerVerdict> out;
  out.reserve(req.cues.size());
  for (const CueRecord& cue : req.cues) out.push_back(rule_verdict(cue, prototypes, rules));
  return out;
}

std::string render_prompt(const ReasonerRequest& req, std::size_t begin, std::size_t end) {
  std::ostringstream os;
  os << "[template " << req.prompt_template_id << "]\n"
     << "You are given candidate 3D bounding boxes from a LiDAR scene (frame " << req.frame_id
     << ", sensor range " << req.sensor_range << " m). For each box decide whether it is a "
     << "plausible object, score its plausibility in [0,1], propose a size correction "
     << "(dl, dw, dh) in meters, and assign a class from "
     << "{Unknown, Vehicle, Pedestrian, Cyclist}.\n"
     << "Respond with a JSON object {\"verdicts\": [{\"box_id\", \"keep\", \"score\", "
     << "\"dl\", \"dw\", \"dh\", \"class\"}]} covering every box, in order.\n";
  for (std::size_t i = begin; i < end; ++i) {
    const CueRecord& c = req.cues[i];
    os << "box " << i << ": size " << c.box.l << "x" << c.box.w << "x" << c.box.h << " m, distance "
       << c.box.range() << " m, speed " << c.speed << " m/s, points " << c.point_count
       << ", mean intensity " << c.mean_intensity << ", s_dis " << c.s_dis << ", s_cons "
       << c.s_cons << "\n";
  }
  return os.str();
}

bool parse_verdict_json(const std::string& json_text, std::size_t expected_count,
                        std::vector<ReasonerVerdict>* out) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("verdicts") ||
      !doc["verdicts"].is_array() || doc["verdicts"].size() != expected_count)
    return false;
  std::vector<ReasonerVerdict> parsed;
  for (const json& v : doc["verdicts"]) {
    if (!v.is_object() || !v.contains("keep") || !v.contains("score") || !v.contains("dl") ||
        !v.contains("dw") || !v.contains("dh") || !v.contains("class"))
      return false;
    ReasonerVerdict rv;
    try {
      rv.keep = v.at("keep").get<bool>();
      rv.s_rea = v.at("score").get<double>();
      rv.delta = {v.at("dl").get<double>(), v.at("dw").get<double>(), v.at("dh").get<double>()};
      rv.cls_new = class_from_json(v.at("class"));
    } catch (const std::exception&) {
      return false;
    }
    rv.source = VerdictSource::Remote;
    parsed.push_back(rv);
  }
  *out = std::move(parsed);
  return true;
}

void RemoteConfig::apply_env() {
  auto fill = [](std::string& field, const char* var) {
    if (field.empty()) {
      if (const char* v = std::getenv(var)) field = v;
    }
  };
  fill(endpoint, "OWL_LLM_ENDPOINT");
  fill(api_key, "OWL_LLM_API_KEY");
  if (model == "owl-reasoner") {
    if (const char* v = std::getenv("OWL_LLM_MODEL")) model = v;
  }
}

std::vector<ReasonerVerdict> reason_remote(const ReasonerRequest& req, const RemoteConfig& cfg,
                                           const SizePrototypes& prototypes,
                                           const RuleConfig& rules, RemoteStats* stats) {
  if (cfg.endpoint.empty())
    throw std::runtime_error("reason_remote: no endpoint configured (OWL_LLM_ENDPOINT)");

  // Split "http://host:port" and path.
  std::string base = cfg.endpoint, path = "/";
  const std::size_t scheme = base.find("://");
  if (scheme != std::string::npos) {
    const std::size_t slash = base.find('/', scheme + 3);
    if (slash != std::string::npos) {
      path = base.substr(slash);
      base = base.substr(0, slash);
    }
  }

  httplib::Client client(base);
  client.set_connection_timeout(0, cfg.timeout_ms * 1000);
  client.set_read_timeout(0, cfg.timeout_ms * 1000);
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

  std::ofstream log;
  if (!cfg.log_path.empty()) log.open(cfg.log_path, std::ios::app);

  std::vector<ReasonerVerdict> out;
  const std::size_t batch = std::max(1, cfg.batch_size);
  for (std::size_t begin = 0; begin < req.cues.size(); begin += batch) {
    const std::size_t end = std::min(req.cues.size(), begin + batch);
    json body;
    body["model"] = cfg.model;
    body["prompt"] = render_prompt(req, begin, end);
    body["cue_payload"] = json::array();
    for (std::size_t i = begin; i < end; ++i) body["cue_payload"].push_back(cue_payload(req.cues[i]));
    const std::string body_text = body.dump();

    std::vector<ReasonerVerdict> batch_verdicts;
    bool got_response = false;
    std::string response_text;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      if (attempt > 0) {
        if (stats) ++stats->retries;
        std::this_thread::sleep_for(std::chrono::milliseconds(50 << (attempt - 1)));
      }
      auto resp = client.Post(path, headers, body_text, "application/json");
      if (!resp) continue;  // network error / timeout
      if (resp->status == 401 || resp->status == 403)
        throw std::runtime_error("reason_remote: authentication failed (" +
                                 std::to_string(resp->status) + ")");
      if (resp->status != 200) continue;
      response_text = resp->body;
      got_response = true;
      break;
    }

    if (log.is_open()) {
      log << json{{"frame_id", req.frame_id},
                  {"batch_begin", begin},
                  {"request", body_text},
                  {"response", got_response ? response_text : ""},
                  {"ok", got_response}}
                 .dump()
          << "\n";
    }

    if (!got_response || !parse_verdict_json(response_text, end - begin, &batch_verdicts)) {
      // Whole-batch fallback.
      for (std::size_t i = begin; i < end; ++i) {
        ReasonerVerdict v = rule_verdict(req.cues[i], prototypes, rules);
        v.source = VerdictSource::Fallback;
        if (stats) ++stats->fallbacks;
        out.push_back(v);
      }
      continue;
    }
    // Per-box schema gate on parsed values.
    for (std::size_t i = 0; i < batch_verdicts.size(); ++i) {
      if (!batch_verdicts[i].valid()) {
        ReasonerVerdict v = rule_verdict(req.cues[begin + i], prototypes, rules);
        v.source = VerdictSource::Fallback;
        if (stats) ++stats->fallbacks;
        out.push_back(v);
      } else {
        out.push_back(batch_verdicts[i]);
      }
    }
  }
  return out;
}

RefineResult refine(const std::vector<Box3D>& boxes, const std::vector<ReasonerVerdict>& verdicts,
                    const std::vector<CueRecord>& cues, const RefineConfig& cfg) {
  if (boxes.size() != verdicts.size() || boxes.size() != cues.size())
    throw std::invalid_argument("refine: boxes/verdicts/cues must be aligned");
  RefineResult res;
  res.branches.resize(boxes.size(), RefineBranch::Dropped);

  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const ReasonerVerdict& v = verdicts[i];
    const double s_cons = cues[i].s_cons;
    const bool retained_by_consistency =
        cfg.invert_s_cons ? (1.0 - s_cons) > cfg.eta : s_cons > cfg.eta;

    bool take_corrected = false;
    Box3D corrected = boxes[i];
    if (v.keep) {
      corrected.l += v.delta[0];
      corrected.w += v.delta[1];
      corrected.h += v.delta[2];
      corrected.class_id = v.cls_new;
      if (corrected.l > 0.0 && corrected.w > 0.0 && corrected.h > 0.0) {
        take_corrected = true;
      } else {
        ++res.correction_warnings;
        if (!cfg.demote_bad_correction) {
          res.branches[i] = RefineBranch::Dropped;
          ++res.count_dropped;
          continue;
        }
        // else fall through to the branch-B test
      }
    }

    if (take_corrected) {
      res.branches[i] = RefineBranch::Corrected;
      ++res.count_corrected;
      res.boxes.push_back(corrected);
      res.source_index.push_back(static_cast<int>(i));
      res.s_cons.push_back(s_cons);
      res.s_rea.push_back(v.s_rea);
    } else if (retained_by_consistency) {
      Box3D replaced = boxes[i];
      ClassId cls = replaced.class_id;
      if (!cfg.common_sizes.has(cls)) cls = cfg.common_sizes.nearest(replaced);
      const auto& common = cfg.common_sizes.at(cls);
      replaced.l = common[0];
      replaced.w = common[1];
      replaced.h = common[2];
      replaced.class_id = cls;
      replaced.weight *= cfg.downweight_factor;
      res.branches[i] = RefineBranch::Replaced;
      ++res.count_replaced;
      res.boxes.push_back(replaced);
      res.source_index.push_back(static_cast<int>(i));
      res.s_cons.push_back(s_cons);
      res.s_rea.push_back(v.s_rea);
    } else {
      res.branches[i] = RefineBranch::Dropped;
      ++res.count_dropped;
    }
  }
  return res;
}

}  // namespace owl
