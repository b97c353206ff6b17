// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_LABELS_IO_HPP
#define OWL_LABELS_IO_HPP

#include <map>
#include <string>
#include <vector>

#include "owl/bench.hpp"
#include "owl/cues.hpp"
#include "owl/types.hpp"

namespace owl {

// KITTI-velodyne-compatible binary sweeps: little-endian float32
// (x, y, z, intensity) quadruples, one file per frame.
void write_sweep_bin(const PointCloud& cloud, const std::string& path);
PointCloud read_sweep_bin(const std::string& path, int frame_id = 0);

// Pose file: one 4x4 row-major transform (16 whitespace-separated floats)
// per line, frame-indexed.
void write_pose_file(const std::vector<Pose>& poses, const std::string& path);
std::vector<Pose> read_pose_file(const std::string& path);

// Label file: one box per line,
// "frame_id x y z l w h yaw class score weight".
void write_labels_txt(const std::map<int, std::vector<Box3D>>& by_frame, const std::string& path);
std::map<int, std::vector<Box3D>> read_labels_txt(const std::string& path);

// JSON-lines twin with identical fields.
void write_labels_jsonl(const std::map<int, std::vector<Box3D>>& by_frame,
                        const std::string& path);
std::map<int, std::vector<Box3D>> read_labels_jsonl(const std::string& path);

// Cue records as JSON lines keyed by (frame_id, box_index, track_id).
void write_cues_jsonl(const std::vector<CueRecord>& cues, const std::string& path);
std::vector<CueRecord> read_cues_jsonl(const std::string& path);

std::string report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& json_path,
                  const std::string& per_frame_csv_path, const std::string& histogram_csv_path,
                  const std::vector<std::vector<Box3D>>& predictions,
                  const std::vector<std::vector<Box3D>>& truths);

}  // namespace owl

#endif  // OWL_LABELS_IO_HPP
