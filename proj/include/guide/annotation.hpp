#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guide/log.hpp"
#include "guide/perception.hpp"
#include "guide/provider.hpp"
#include "guide/subtitle.hpp"

// Inverse-dynamics annotation: for each keyframe pair, ask a vision-language
// model what happened between the two states and whether it matters.
namespace guide::annotation {

enum class Pairing { per_transition, sliding };

std::string_view to_string(Pairing p);
// Throws Error(ConfigError).
Pairing pairing_from_string(std::string_view s);

struct FramePair {
  std::size_t pair_index = 0;
  FrameRef first;
  FrameRef second;
};

// per_transition: (start, end) of each transition. sliding: consecutive
// keyframes after boundary dedup, so n keyframes give n - 1 pairs.
std::vector<FramePair> pair_keyframes(const std::vector<perception::TransitionSegment>& transitions,
                                      Pairing strategy = Pairing::per_transition);

struct AnnotationRequest {
  std::size_t pair_index = 0;
  FrameRef s_t;
  perception::ElementGraph e_t;
  FrameRef s_t1;
  perception::ElementGraph e_t1;
  std::string topic;
  subtitle::SubtitleContext context;
  std::string video_id;
};

struct IdmOptions {
  std::string model = "gpt-5.1";
  double temperature = 1.0;
  int max_output_tokens = 4096;
  // Requests re-issued when the reply has no readable annotation object.
  int parse_attempts = 3;
};

extern const char* const kIdmSystemPrompt;

provider::ModelRequest build_idm_prompt(const AnnotationRequest& req, const IdmOptions& options = {});

struct IdmReply {
  bool meaningful = false;
  std::string thought_action;
};

// First balanced JSON object carrying a boolean "meaningful" and a string
// "thought_action_nlp" (which must be non-empty when meaningful is true).
std::optional<IdmReply> parse_idm_reply(std::string_view raw);

enum class Status { ok, failed };

struct FramePairAnnotation {
  std::size_t pair_index = 0;
  FrameRef first;
  FrameRef second;
  bool meaningful = false;
  std::string thought_action;
  std::string raw_model_output;
  Status status = Status::failed;
  std::string error;
  std::vector<std::string> coordinate_violations;
  int attempts = 0;
  provider::Usage usage;
};

// Never throws for model or parse problems; those come back as status failed.
// AuthFailure is rethrown since every later pair would fail the same way.
FramePairAnnotation annotate_pair(const AnnotationRequest& req, provider::ModelGateway& gateway,
                                  const IdmOptions& options = {});

struct VideoAnnotationInput {
  std::string video_id;
  std::vector<perception::TransitionSegment> transitions;
  // Element graphs keyed by frame_index; a missing graph is sent as empty.
  std::map<std::int64_t, perception::ElementGraph> graphs;
  std::string topic;
  subtitle::SubtitleTrack track;
};

struct AnnotateOptions {
  IdmOptions idm;
  Pairing pairing = Pairing::per_transition;
  int max_in_flight = 4;
};

// One annotation per pair, in pair order, whatever the completion order.
std::vector<FramePairAnnotation> annotate_video(const VideoAnnotationInput& input, provider::ModelGateway& gateway,
                                                const AnnotateOptions& options = {}, WarningSink* warnings = nullptr);

// Keeps status ok and meaningful, preserving order.
std::vector<FramePairAnnotation> filter_meaningful(const std::vector<FramePairAnnotation>& annotations);

// AnnotationLog: one JSON line per pair.
nlohmann::json to_json(const FramePairAnnotation& a, const std::string& video_id = {});
FramePairAnnotation annotation_from_json(const nlohmann::json& j);

}  // namespace guide::annotation
