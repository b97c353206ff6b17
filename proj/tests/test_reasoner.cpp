// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "owl/reasoner.hpp"

using namespace owl;
using nlohmann::json;

namespace {

CueRecord good_vehicle_cue() {
  CueRecord c;
  c.box.x = 15.0;
  c.box.l = 4.6;
  c.box.w = 1.85;
  c.box.h = 1.7;
  c.box.class_id = ClassId::Vehicle;
  c.point_count = 80;
  c.s_cons = 0.05;
  c.s_dis = 1.2;
  return c;
}

CueRecord garbage_cue() {
  CueRecord c;
  c.box.x = 40.0;
  c.box.l = 9.0;  // far from every prototype shape
  c.box.w = 0.2;
  c.box.h = 6.0;
  c.box.class_id = ClassId::Unknown;
  c.point_count = 1;  // and nearly empty
  c.s_cons = 1.0;
  return c;
}

std::string valid_response(std::size_t n) {
  json verdicts = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    verdicts.push_back({{"box_id", static_cast<int>(i)},
                        {"keep", true},
                        {"score", 0.9},
                        {"dl", 0.1},
                        {"dw", -0.05},
                        {"dh", 0.0},
                        {"class", "Vehicle"}});
  }
  return json{{"verdicts", verdicts}}.dump();
}

struct MockServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server.Post("/reason", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockServer() {
    server.stop();
    thread.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port) + "/reason"; }
};

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("rule-based reasoner keeps plausible boxes, rejects garbage") {
  ReasonerRequest req;
  req.cues = {good_vehicle_cue(), garbage_cue()};
  const auto verdicts = reason_rule_based(req, SizePrototypes::defaults(), RuleConfig{});
  REQUIRE(verdicts.size() == 2);

  CHECK(verdicts[0].keep);
  CHECK(verdicts[0].cls_new == ClassId::Vehicle);
  CHECK(verdicts[0].s_rea > 0.8);
  // Correction pulls toward the prototype, clamped to +-0.5 m.
  CHECK(verdicts[0].delta[0] == doctest::Approx(0.1).epsilon(1e-9));
  for (double d : verdicts[0].delta) CHECK(std::abs(d) <= 0.5 + 1e-12);

  CHECK_FALSE(verdicts[1].keep);
  CHECK(verdicts[1].s_rea < verdicts[0].s_rea);
  for (const auto& v : verdicts) {
    CHECK(v.valid());
    CHECK(v.source == VerdictSource::Rules);
  }
}

TEST_CASE("prompt is versioned and covers every box in the batch") {
  ReasonerRequest req;
  req.frame_id = 3;
  req.cues = {good_vehicle_cue(), garbage_cue(), good_vehicle_cue()};
  const std::string prompt = render_prompt(req, 0, 2);
  CHECK(prompt.find("[template owl-cue-v1]") != std::string::npos);
  CHECK(prompt.find("frame 3") != std::string::npos);
  CHECK(prompt.find("box 0:") != std::string::npos);
  CHECK(prompt.find("box 1:") != std::string::npos);
  CHECK(prompt.find("box 2:") == std::string::npos);
}

TEST_CASE("verdict JSON schema gate") {
  std::vector<ReasonerVerdict> out;
  CHECK(parse_verdict_json(valid_response(2), 2, &out));
  REQUIRE(out.size() == 2);
  CHECK(out[0].cls_new == ClassId::Vehicle);
  CHECK(out[0].source == VerdictSource::Remote);

  CHECK_FALSE(parse_verdict_json(valid_response(2), 3, &out));  // count mismatch
  CHECK_FALSE(parse_verdict_json("not json", 1, &out));
  CHECK_FALSE(parse_verdict_json("{}", 0, &out));
  CHECK_FALSE(parse_verdict_json(R"({"verdicts":[{"keep":true}]})", 1, &out));  // fields missing
  CHECK_FALSE(parse_verdict_json(R"({"verdicts":[{"keep":"yes","score":0.5,"dl":0,"dw":0,"dh":0,"class":1}]})",
                                 1, &out));  // type violation
}

TEST_CASE("remote reasoner happy path with request log") {
  MockServer server([](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    REQUIRE(body.contains("model"));
    REQUIRE(body.contains("prompt"));
    REQUIRE(body.at("cue_payload").is_array());
    res.set_content(valid_response(body.at("cue_payload").size()), "application/json");
  });

  RemoteConfig cfg;
  cfg.endpoint = server.endpoint();
  cfg.log_path = temp_path("owl_remote_log.jsonl");
  std::remove(cfg.log_path.c_str());

  ReasonerRequest req;
  req.cues = {good_vehicle_cue(), garbage_cue()};
  RemoteStats stats;
  const auto verdicts = reason_remote(req, cfg, SizePrototypes::defaults(), RuleConfig{}, &stats);
  REQUIRE(verdicts.size() == 2);
  for (const auto& v : verdicts) CHECK(v.source == VerdictSource::Remote);
  CHECK(stats.retries == 0);
  CHECK(stats.fallbacks == 0);

  std::ifstream log(cfg.log_path);
  std::string line;
  REQUIRE(std::getline(log, line));
  const json entry = json::parse(line);
  CHECK(entry.at("ok").get<bool>());
  CHECK(entry.at("batch_begin").get<int>() == 0);
  std::remove(cfg.log_path.c_str());
}

TEST_CASE("schema-violating response falls back to rules per batch") {
  MockServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"verdicts":[{"bogus":1}]})", "application/json");
  });
  RemoteConfig cfg;
  cfg.endpoint = server.endpoint();
  ReasonerRequest req;
  req.cues = {good_vehicle_cue(), garbage_cue()};
  RemoteStats stats;
  const auto verdicts = reason_remote(req, cfg, SizePrototypes::defaults(), RuleConfig{}, &stats);
  REQUIRE(verdicts.size() == 2);
  CHECK(stats.fallbacks == 2);
  for (const auto& v : verdicts) CHECK(v.source == VerdictSource::Fallback);
  CHECK(verdicts[0].keep);
  CHECK_FALSE(verdicts[1].keep);
}

TEST_CASE("transient 500s are retried, then fall back") {
  std::atomic<int> calls{0};
  MockServer server([&](const httplib::Request& req, httplib::Response& res) {
    if (calls.fetch_add(1) == 0) {
      res.status = 500;
      return;
    }
    res.set_content(valid_response(json::parse(req.body).at("cue_payload").size()),
                    "application/json");
  });
  RemoteConfig cfg;
  cfg.endpoint = server.endpoint();
  cfg.max_retries = 2;
  ReasonerRequest req;
  req.cues = {good_vehicle_cue()};
  RemoteStats stats;
  const auto verdicts = reason_remote(req, cfg, SizePrototypes::defaults(), RuleConfig{}, &stats);
  REQUIRE(verdicts.size() == 1);
  CHECK(verdicts[0].source == VerdictSource::Remote);
  CHECK(stats.retries == 1);
  CHECK(calls.load() == 2);
}

TEST_CASE("authentication failure is fatal") {
  MockServer server([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  RemoteConfig cfg;
  cfg.endpoint = server.endpoint();
  ReasonerRequest req;
  req.cues = {good_vehicle_cue()};
  CHECK_THROWS_WITH_AS(
      reason_remote(req, cfg, SizePrototypes::defaults(), RuleConfig{}),
      "reason_remote: authentication failed (401)", std::runtime_error);
}

TEST_CASE("missing endpoint is fatal") {
  ReasonerRequest req;
  req.cues = {good_vehicle_cue()};
  CHECK_THROWS_AS(reason_remote(req, RemoteConfig{}, SizePrototypes::defaults(), RuleConfig{}),
                  std::runtime_error);
}

TEST_CASE("refine branch semantics are exact") {
  RefineConfig cfg;
  cfg.eta = 0.7;
  Box3D box;
  box.l = 4.0;
  box.w = 2.0;
  box.h = 1.6;
  box.class_id = ClassId::Unknown;
  box.weight = 1.0;
  CueRecord cue;
  cue.box = box;

  SUBCASE("branch A: keep and correct") {
    ReasonerVerdict v;
    v.keep = true;
    v.delta = {0.5, -0.1, 0.1};
    v.cls_new = ClassId::Vehicle;
    v.s_rea = 0.8;
    const RefineResult res = refine({box}, {v}, {cue}, cfg);
    REQUIRE(res.boxes.size() == 1);
    CHECK(res.branches[0] == RefineBranch::Corrected);
    CHECK(res.boxes[0].l == doctest::Approx(4.5));
    CHECK(res.boxes[0].w == doctest::Approx(1.9));
    CHECK(res.boxes[0].h == doctest::Approx(1.7));
    CHECK(res.boxes[0].class_id == ClassId::Vehicle);
    CHECK(res.count_corrected == 1);
    CHECK(res.s_rea[0] == 0.8);
  }
  SUBCASE("branch B: replace with the common size, down-weighted") {
    ReasonerVerdict v;
    v.keep = false;
    CueRecord consistent = cue;
    consistent.s_cons = 0.8;  // above eta
    const RefineResult res = refine({box}, {v}, {consistent}, cfg);
    REQUIRE(res.boxes.size() == 1);
    CHECK(res.branches[0] == RefineBranch::Replaced);
    const auto& proto = SizePrototypes::defaults().at(res.boxes[0].class_id);
    CHECK(res.boxes[0].l == proto[0]);
    CHECK(res.boxes[0].w == proto[1]);
    CHECK(res.boxes[0].h == proto[2]);
    CHECK(res.boxes[0].weight == doctest::Approx(0.5));
    CHECK(res.count_replaced == 1);
  }
  SUBCASE("branch C: drop") {
    ReasonerVerdict v;
    v.keep = false;
    CueRecord inconsistent = cue;
    inconsistent.s_cons = 0.2;  // below eta
    const RefineResult res = refine({box}, {v}, {inconsistent}, cfg);
    CHECK(res.boxes.empty());
    CHECK(res.branches[0] == RefineBranch::Dropped);
    CHECK(res.count_dropped == 1);
  }
  SUBCASE("inverted retention flips branch B and C") {
    cfg.invert_s_cons = true;
    ReasonerVerdict v;
    v.keep = false;
    CueRecord consistent = cue;
    consistent.s_cons = 0.2;  // low divergence now means retained
    CHECK(refine({box}, {v}, {consistent}, cfg).count_replaced == 1);
    consistent.s_cons = 0.8;
    CHECK(refine({box}, {v}, {consistent}, cfg).count_dropped == 1);
  }
  SUBCASE("non-positive corrected dims demote to the B/C test") {
    ReasonerVerdict v;
    v.keep = true;
    v.delta = {-4.5, 0.0, 0.0};
    CueRecord consistent = cue;
    consistent.s_cons = 0.9;
    const RefineResult res = refine({box}, {v}, {consistent}, cfg);
    CHECK(res.correction_warnings == 1);
    CHECK(res.count_replaced == 1);
    cfg.demote_bad_correction = false;
    CHECK(refine({box}, {v}, {consistent}, cfg).count_dropped == 1);
  }
}

TEST_CASE("refine branch counters always sum to the input count") {
  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(u(rng) * 8);
    std::vector<Box3D> boxes(n);
    std::vector<ReasonerVerdict> verdicts(n);
    std::vector<CueRecord> cues(n);
    for (int i = 0; i < n; ++i) {
      boxes[i].l = 0.3 + 5.0 * u(rng);
      boxes[i].w = 0.3 + 3.0 * u(rng);
      boxes[i].h = 0.3 + 2.0 * u(rng);
      boxes[i].class_id = static_cast<ClassId>(static_cast<int>(u(rng) * 4));
      verdicts[i].keep = u(rng) < 0.5;
      verdicts[i].s_rea = u(rng);
      verdicts[i].delta = {2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0};
      verdicts[i].cls_new = static_cast<ClassId>(static_cast<int>(u(rng) * 4));
      cues[i].box = boxes[i];
      cues[i].s_cons = u(rng);
    }
    RefineConfig cfg;
    cfg.invert_s_cons = u(rng) < 0.5;
    cfg.demote_bad_correction = u(rng) < 0.5;
    const RefineResult res = refine(boxes, verdicts, cues, cfg);
    CHECK(res.count_corrected + res.count_replaced + res.count_dropped == n);
    CHECK(res.boxes.size() == static_cast<std::size_t>(res.count_corrected + res.count_replaced));
    CHECK(res.boxes.size() == res.source_index.size());
    CHECK(res.boxes.size() == res.s_cons.size());
    for (const Box3D& b : res.boxes) CHECK(b.valid());
  }
  CHECK_THROWS_AS(refine({Box3D{}}, {}, {}, RefineConfig{}), std::invalid_argument);
}

TEST_CASE("refine of a corrected Unknown box adopts the verdict class") {
  Box3D box;
  box.l = 1.0;
  box.w = 0.8;
  box.h = 1.6;
  ReasonerVerdict v;
  v.keep = true;
  v.cls_new = ClassId::Pedestrian;
  CueRecord cue;
  cue.box = box;
  const RefineResult res = refine({box}, {v}, {cue}, RefineConfig{});
  REQUIRE(res.boxes.size() == 1);
  CHECK(res.boxes[0].class_id == ClassId::Pedestrian);
}
