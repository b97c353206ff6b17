// SPDX-License-Identifier: Apache-2.0
#include "owl/labels_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "owl/geometry.hpp"

namespace owl {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

json box_to_json(int frame_id, const Box3D& b) {
  return json{{"frame_id", frame_id}, {"x", b.x},       {"y", b.y},
              {"z", b.z},             {"l", b.l},       {"w", b.w},
              {"h", b.h},             {"yaw", b.yaw},   {"class", class_name(b.class_id)},
              {"score", b.score},     {"weight", b.weight}};
}

Box3D box_from_json(const json& j, int* frame_id) {
  Box3D b;
  *frame_id = j.at("frame_id").get<int>();
  b.x = j.at("x").get<double>();
  b.y = j.at("y").get<double>();
  b.z = j.at("z").get<double>();
  b.l = j.at("l").get<double>();
  b.w = j.at("w").get<double>();
  b.h = j.at("h").get<double>();
  b.yaw = j.at("yaw").get<double>();
  b.class_id = class_from_name(j.at("class").get<std::string>());
  b.score = j.at("score").get<double>();
  b.weight = j.at("weight").get<double>();
  return b;
}

}  // namespace

void write_sweep_bin(const PointCloud& cloud, const std::string& path) {
  std::ofstream out = open_out(path, true);
  for (const Point& p : cloud.points) {
    const float rec[4] = {static_cast<float>(p.x), static_cast<float>(p.y),
                          static_cast<float>(p.z), static_cast<float>(p.intensity)};
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

PointCloud read_sweep_bin(const std::string& path, int frame_id) {
  std::ifstream in = open_in(path, true);
  PointCloud cloud;
  cloud.frame_id = frame_id;
  float rec[4];
  while (in.read(reinterpret_cast<char*>(rec), sizeof(rec))) {
    cloud.points.push_back({rec[0], rec[1], rec[2], rec[3]});
  }
  if (in.gcount() != 0)
    throw std::runtime_error("truncated sweep file (trailing " + std::to_string(in.gcount()) +
                             " bytes): " + path);
  return cloud;
}

void write_pose_file(const std::vector<Pose>& poses, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const Pose& p : poses) {
    for (int i = 0; i < 16; ++i) out << (i ? " " : "") << format_double(p.m[i]);
    out << "\n";
  }
}

std::vector<Pose> read_pose_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<Pose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Pose p;
    for (int i = 0; i < 16; ++i) {
      if (!(ss >> p.m[i]))
        throw std::runtime_error("pose file line " + std::to_string(poses.size() + 1) +
                                 ": expected 16 floats: " + path);
    }
    poses.push_back(p);
  }
  return poses;
}

void write_labels_txt(const std::map<int, std::vector<Box3D>>& by_frame, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const auto& [frame, boxes] : by_frame) {
    for (const Box3D& b : boxes) {
      out << frame << " " << format_double(b.x) << " " << format_double(b.y) << " "
          << format_double(b.z) << " " << format_double(b.l) << " " << format_double(b.w) << " "
          << format_double(b.h) << " " << format_double(b.yaw) << " " << class_name(b.class_id)
          << " " << format_double(b.score) << " " << format_double(b.weight) << "\n";
    }
  }
}

std::map<int, std::vector<Box3D>> read_labels_txt(const std::string& path) {
  std::ifstream in = open_in(path);
  std::map<int, std::vector<Box3D>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int frame;
    Box3D b;
    std::string cls;
    if (!(ss >> frame >> b.x >> b.y >> b.z >> b.l >> b.w >> b.h >> b.yaw >> cls >> b.score >>
          b.weight))
      throw std::runtime_error("label file line " + std::to_string(line_no) + ": parse error: " +
                               path);
    b.class_id = class_from_name(cls);
    out[frame].push_back(b);
  }
  return out;
}

void write_labels_jsonl(const std::map<int, std::vector<Box3D>>& by_frame,
                        const std::string& path) {
  std::ofstream out = open_out(path);
  for (const auto& [frame, boxes] : by_frame) {
    for (const Box3D& b : boxes) out << box_to_json(frame, b).dump() << "\n";
  }
}

std::map<int, std::vector<Box3D>> read_labels_jsonl(const std::string& path) {
  std::ifstream in = open_in(path);
  std::map<int, std::vector<Box3D>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error("label jsonl line " + std::to_string(line_no) + ": parse error");
    int frame;
    const Box3D b = box_from_json(j, &frame);
    out[frame].push_back(b);
  }
  return out;
}

void write_cues_jsonl(const std::vector<CueRecord>& cues, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const CueRecord& c : cues) {
    json j = box_to_json(c.frame_id, c.box);
    j["box_index"] = c.box_index;
    j["track_id"] = c.track_id;
    j["point_count"] = c.point_count;
    j["mean_intensity"] = c.mean_intensity;
    j["speed"] = c.speed;
    j["dynamic"] = c.dynamic;
    j["s_dis"] = c.s_dis;
    j["s_cons"] = c.s_cons;
    j["grid_occupancy"] = c.grid_occupancy;
    j["resolution"] = c.resolution;
    out << j.dump() << "\n";
  }
}

std::vector<CueRecord> read_cues_jsonl(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<CueRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error("cue jsonl line " + std::to_string(line_no) + ": parse error");
    CueRecord c;
    c.box = box_from_json(j, &c.frame_id);
    c.box_index = j.at("box_index").get<int>();
    c.track_id = j.at("track_id").get<int>();
    c.point_count = j.at("point_count").get<int>();
    c.mean_intensity = j.at("mean_intensity").get<double>();
    c.speed = j.at("speed").get<double>();
    c.dynamic = j.at("dynamic").get<bool>();
    c.s_dis = j.at("s_dis").get<double>();
    c.s_cons = j.at("s_cons").get<double>();
    c.grid_occupancy = j.at("grid_occupancy").get<int>();
    c.resolution = j.at("resolution").get<int>();
    out.push_back(c);
  }
  return out;
}

namespace {

json pr_to_json(const PrMetrics& m) {
  return json{{"precision", m.precision},
              {"recall", m.recall},
              {"ap", m.ap},
              {"tp", m.tp},
              {"fp", m.fp},
              {"fn", m.fn},
              {"empty_prediction", m.empty_prediction_flag}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j;
  for (const auto& [thr, m] : report.overall) j["overall"][format_double(thr)] = pr_to_json(m);
  for (const auto& [thr, classes] : report.per_class) {
    for (const auto& [cls, m] : classes)
      j["per_class"][format_double(thr)][class_name(cls)] = pr_to_json(m);
  }
  j["iou_histogram"] = report.iou_histogram;
  j["matched_pairs"] = report.matched_pairs;
  const char* band_names[3] = {"0-30", "30-50", "50-inf"};
  for (int b = 0; b < 3; ++b) j["range_bands"][band_names[b]] = pr_to_json(report.range_bands[b]);
  return j.dump(2);
}

void write_report(const EvalReport& report, const std::string& json_path,
                  const std::string& per_frame_csv_path, const std::string& histogram_csv_path,
                  const std::vector<std::vector<Box3D>>& predictions,
                  const std::vector<std::vector<Box3D>>& truths) {
  open_out(json_path) << report_to_json(report) << "\n";

  std::ofstream csv = open_out(per_frame_csv_path);
  csv << "frame,predictions,truths,tp_at_low,precision,recall\n";
  for (std::size_t f = 0; f < predictions.size(); ++f) {
    const EvalReport fr = evaluate({predictions[f]}, {truths[f]},
                                   {report.overall.begin()->first});
    const PrMetrics& m = fr.overall.begin()->second;
    csv << f << "," << predictions[f].size() << "," << truths[f].size() << "," << m.tp << ","
        << format_double(m.precision) << "," << format_double(m.recall) << "\n";
  }

  std::ofstream hist = open_out(histogram_csv_path);
  hist << "bin_low,bin_high,count\n";
  for (int b = 0; b < 10; ++b) {
    hist << format_double(b / 10.0) << "," << format_double((b + 1) / 10.0) << ","
         << report.iou_histogram[b] << "\n";
  }
}

}  // namespace owl
