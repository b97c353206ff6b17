// SPDX-License-Identifier: Apache-2.0
#ifndef OWL_REASONER_HPP
#define OWL_REASONER_HPP

#include <string>
#include <vector>

#include "owl/cues.hpp"
#include "owl/types.hpp"

namespace owl {

struct ReasonerRequest {
  std::vector<CueRecord> cues;  // one per box
  std::string prompt_template_id = "owl-cue-v1";
  int frame_id = 0;
  double sensor_range = 75.0;
};

enum class VerdictSource { Rules, Remote, Fallback };

struct ReasonerVerdict {
  bool keep = true;                      // m_k
  double s_rea = 0.0;                    // in [0,1]
  std::array<double, 3> delta{0, 0, 0};  // (dl, dw, dh), meters
  ClassId cls_new = ClassId::Unknown;
  VerdictSource source = VerdictSource::Rules;

  bool valid() const {
    return s_rea >= 0.0 && s_rea <= 1.0 && std::isfinite(delta[0]) && std::isfinite(delta[1]) &&
           std::isfinite(delta[2]);
  }
};

struct RuleConfig {
  double min_point_count = 3.0;          // below this, density is implausible outright
  double density_range_anchor = 150.0;   // expected points at 10 m, decaying ~1/d^2
  double density_floor_fraction = 0.05;  // implausible below this fraction of expected
  double max_correction = 0.5;           // per-dimension clamp on delta_L, meters
  double size_penalty = 0.4;             // s_rea deductions, fixed scoring table
  double density_penalty = 0.3;
  double motion_penalty = 0.2;
  double fast_static_speed = 3.0;        // m/s; faster than this cannot be a pedestrian
};

/// Deterministic stand-in for the large-model reasoner: a box is rejected
/// when its size deviates beyond tolerance AND its point density is
/// implausible; otherwise it is kept with a clamped size correction toward
/// the nearest prototype.
std::vector<ReasonerVerdict> reason_rule_based(const ReasonerRequest& req,
                                               const SizePrototypes& prototypes,
                                               const RuleConfig& rules);

struct RemoteConfig {
  std::string endpoint;  // http://host:port/path
  std::string api_key;
  std::string model = "owl-reasoner";
  int timeout_ms = 5000;
  int max_retries = 2;
  int batch_size = 32;
  std::string log_path;  // optional request/response log (JSON lines)

  /// Populate endpoint/api_key/model from OWL_LLM_* environment variables
  /// when unset.
  void apply_env();
};

struct RemoteStats {
  int retries = 0;
  int fallbacks = 0;
};

/// Render the prompt, POST to the endpoint, validate the structured response,
/// fall back per-box to the rule-based reasoner on schema violations or
/// exhausted retries. Throws only on fatal configuration errors
/// (authentication failure, empty endpoint).
std::vector<ReasonerVerdict> reason_remote(const ReasonerRequest& req, const RemoteConfig& cfg,
                                           const SizePrototypes& prototypes,
                                           const RuleConfig& rules, RemoteStats* stats = nullptr);

/// The versioned prompt text sent for one batch of cue records.
std::string render_prompt(const ReasonerRequest& req, std::size_t begin, std::size_t end);

/// Parse and schema-validate one verdict object; returns false on violation.
bool parse_verdict_json(const std::string& json_text, std::size_t expected_count,
                        std::vector<ReasonerVerdict>* out);

struct RefineConfig {
  double eta = 0.7;  // consistency threshold
  SizePrototypes common_sizes = SizePrototypes::defaults();  // L_com
  double downweight_factor = 0.5;
  bool invert_s_cons = false;  // flip the s_cons > eta retention test
  bool demote_bad_correction = true;  // non-positive branch-A dims fall through to B/C
};

enum class RefineBranch { Corrected, Replaced, Dropped };  // A, B, C

struct RefineResult {
  std::vector<Box3D> boxes;
  std::vector<RefineBranch> branches;       // one per input box
  std::vector<int> source_index;            // input index of each output box
  std::vector<double> s_cons, s_rea;        // per output box, for sample weights
  int count_corrected = 0, count_replaced = 0, count_dropped = 0;
  int correction_warnings = 0;
};

/// Three-branch refinement: keep-and-correct, replace-with-common-size
/// (down-weighted), or drop.
RefineResult refine(const std::vector<Box3D>& boxes, const std::vector<ReasonerVerdict>& verdicts,
                    const std::vector<CueRecord>& cues, const RefineConfig& cfg);

}  // namespace owl

#endif  // OWL_REASONER_HPP
