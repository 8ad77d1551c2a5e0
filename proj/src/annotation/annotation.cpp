#include "guide/annotation.hpp"

#include "guide/concurrency.hpp"
#include "guide/coordinates.hpp"
#include "guide/cost.hpp"
#include "guide/error.hpp"
#include "guide/text.hpp"

namespace guide::annotation {

const char* const kIdmSystemPrompt =
    "You are annotating a software tutorial video as an inverse dynamics model. You receive two consecutive "
    "keyframes of the screen (before and after), the UI element graph detected on each frame, the topic of the "
    "video and the narration around this moment.\n"
    "1. Compare the two frames and use the two element graphs to find which UI elements appeared, disappeared or "
    "changed.\n"
    "2. Decide whether the change is a meaningful step of the task described by the topic and narration. Mouse "
    "movement, window flicker, idle frames and non-GUI footage (slides, camera shots) are not meaningful.\n"
    "3. If it is meaningful, describe in the first person what I did and why: the reasoning behind the step, the "
    "UI elements involved with their appearance (colour, shape, text label, position on screen in words) and what "
    "they are for, and the actions (click, type, scroll, drag, ...) in natural language.\n"
    "Never use pixel coordinates.";

std::string_view to_string(Pairing p) { return p == Pairing::sliding ? "sliding" : "per_transition"; }

Pairing pairing_from_string(std::string_view s) {
  if (s == "per_transition") return Pairing::per_transition;
  if (s == "sliding") return Pairing::sliding;
  throw Error(ErrorKind::ConfigError, "unknown pairing strategy '" + std::string(s) + "'");
}

std::vector<FramePair> pair_keyframes(const std::vector<perception::TransitionSegment>& transitions,
                                      Pairing strategy) {
  std::vector<FramePair> out;
  if (strategy == Pairing::per_transition) {
    for (const auto& t : transitions) out.push_back({out.size(), t.start_frame, t.end_frame});
    return out;
  }
  std::vector<FrameRef> keyframes;
  for (const auto& t : transitions) {
    for (const FrameRef* f : {&t.start_frame, &t.end_frame}) {
      if (keyframes.empty() || keyframes.back().frame_index != f->frame_index) keyframes.push_back(*f);
    }
  }
  for (std::size_t i = 1; i < keyframes.size(); ++i) out.push_back({out.size(), keyframes[i - 1], keyframes[i]});
  return out;
}

provider::ModelRequest build_idm_prompt(const AnnotationRequest& req, const IdmOptions& options) {
  provider::ModelRequest m;
  m.model_name = options.model;
  m.temperature = options.temperature;
  m.max_output_tokens = options.max_output_tokens;
  m.stage = std::string(cost::stage::frame_pair_idm);
  m.video_id = req.video_id;
  m.item = static_cast<std::int64_t>(req.pair_index);

  std::string body;
  body += "Element graph of the first frame (JSON):\n";
  body += perception::serialize_elements(req.e_t)["elements"].dump() + "\n\n";
  body += "Element graph of the second frame (JSON):\n";
  body += perception::serialize_elements(req.e_t1)["elements"].dump() + "\n\n";
  body += "Video topic: " + req.topic + "\n\n";
  body += "Narration around this moment:\n";
  body += "Preceding: " + req.context.preceding + "\n";
  body += "Current: " + req.context.current + "\n";
  body += "Following: " + req.context.following + "\n\n";
  body += "Reply with one JSON object with exactly these fields:\n";
  body += "{\"meaningful\": true or false, \"thought_action_nlp\": \"first-person description, empty if not "
          "meaningful\"}";

  m.messages.push_back({"system", {provider::ContentPart::of_text(kIdmSystemPrompt)}});
  m.messages.push_back({"user",
                        {provider::ContentPart::of_image(req.s_t.image), provider::ContentPart::of_image(req.s_t1.image),
                         provider::ContentPart::of_text(std::move(body))}});
  return m;
}

std::optional<IdmReply> parse_idm_reply(std::string_view raw) {
  // Scan past objects that are not annotations (e.g. an echoed element).
  std::size_t offset = 0;
  while (offset < raw.size()) {
    auto obj = text::first_json_object(raw.substr(offset));
    if (!obj) return std::nullopt;
    auto j = nlohmann::json::parse(*obj, nullptr, false);
    if (j.is_object() && j.contains("meaningful") && j["meaningful"].is_boolean()) {
      IdmReply r;
      r.meaningful = j["meaningful"].get<bool>();
      auto it = j.find("thought_action_nlp");
      if (it != j.end() && it->is_string()) r.thought_action = std::string(text::trim(it->get<std::string>()));
      else if (it != j.end() && !it->is_null()) return std::nullopt;
      if (r.meaningful && r.thought_action.empty()) return std::nullopt;
      return r;
    }
    std::size_t at = raw.substr(offset).find(*obj);
    offset += (at == std::string_view::npos ? 0 : at) + 1;
  }
  return std::nullopt;
}

FramePairAnnotation annotate_pair(const AnnotationRequest& req, provider::ModelGateway& gateway,
                                  const IdmOptions& options) {
  FramePairAnnotation a;
  a.pair_index = req.pair_index;
  a.first = req.s_t;
  a.second = req.s_t1;
  auto prompt = build_idm_prompt(req, options);
  int budget = std::max(1, options.parse_attempts);
  for (int attempt = 1; attempt <= budget; ++attempt) {
    a.attempts = attempt;
    provider::ModelResponse resp;
    try {
      resp = gateway.chat(prompt);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::AuthFailure) throw;
      a.status = Status::failed;
      a.error = e.what();
      return a;
    }
    a.usage.input_tokens += resp.usage.input_tokens;
    a.usage.output_tokens += resp.usage.output_tokens;
    a.raw_model_output = resp.text;
    if (auto parsed = parse_idm_reply(resp.text)) {
      a.status = Status::ok;
      a.error.clear();
      a.meaningful = parsed->meaningful;
      a.thought_action = std::move(parsed->thought_action);
      a.coordinate_violations = find_coordinate_patterns(a.thought_action);
      return a;
    }
    a.error = "reply has no readable annotation object";
  }
  a.status = Status::failed;
  return a;
}

std::vector<FramePairAnnotation> annotate_video(const VideoAnnotationInput& input, provider::ModelGateway& gateway,
                                                const AnnotateOptions& options, WarningSink* warnings) {
  auto pairs = pair_keyframes(input.transitions, options.pairing);
  std::vector<AnnotationRequest> requests;
  for (const auto& p : pairs) {
    AnnotationRequest r;
    r.pair_index = p.pair_index;
    r.video_id = input.video_id;
    r.s_t = p.first;
    r.s_t1 = p.second;
    r.topic = input.topic;
    for (auto [frame, graph] : {std::pair{&p.first, &r.e_t}, std::pair{&p.second, &r.e_t1}}) {
      auto it = input.graphs.find(frame->frame_index);
      if (it != input.graphs.end()) {
        *graph = it->second;
      } else {
        graph->frame = *frame;
        if (warnings) {
          warnings->add("missing_element_graph", "frame " + std::to_string(frame->frame_index) + " sent with an empty graph",
                        input.video_id);
        }
      }
    }
    if (!input.track.cues.empty()) {
      r.context = subtitle::context_at(input.track, (p.first.timestamp_ms + p.second.timestamp_ms) / 2);
    }
    requests.push_back(std::move(r));
  }

  std::vector<FramePairAnnotation> out(requests.size());
  parallel_for(requests.size(), static_cast<std::size_t>(std::max(1, options.max_in_flight)),
               [&](std::size_t i) { out[i] = annotate_pair(requests[i], gateway, options.idm); });
  if (warnings) {
    for (const auto& a : out) {
      if (a.status == Status::failed) {
        warnings->add("pair_failed", "pair " + std::to_string(a.pair_index) + ": " + a.error, input.video_id);
      }
      if (!a.coordinate_violations.empty()) {
        warnings->add("coordinates_in_annotation",
                      "pair " + std::to_string(a.pair_index) + ": " + a.coordinate_violations.front(), input.video_id);
      }
    }
  }
  return out;
}

std::vector<FramePairAnnotation> filter_meaningful(const std::vector<FramePairAnnotation>& annotations) {
  std::vector<FramePairAnnotation> out;
  for (const auto& a : annotations)
    if (a.status == Status::ok && a.meaningful) out.push_back(a);
  return out;
}

nlohmann::json to_json(const FramePairAnnotation& a, const std::string& video_id) {
  nlohmann::json j;
  if (!video_id.empty()) j["video_id"] = video_id;
  j["pair_index"] = a.pair_index;
  j["status"] = a.status == Status::ok ? "ok" : "failed";
  j["meaningful"] = a.meaningful;
  j["thought_action_nlp"] = a.thought_action;
  j["model_usage"] = {{"input_tokens", a.usage.input_tokens}, {"output_tokens", a.usage.output_tokens}};
  j["attempts"] = a.attempts;
  j["frames"] = {to_json(a.first), to_json(a.second)};
  if (!a.error.empty()) j["error"] = a.error;
  if (!a.coordinate_violations.empty()) j["coordinate_violations"] = a.coordinate_violations;
  j["raw_model_output"] = a.raw_model_output;
  return j;
}

FramePairAnnotation annotation_from_json(const nlohmann::json& j) {
  FramePairAnnotation a;
  a.pair_index = j.at("pair_index").get<std::size_t>();
  a.status = j.at("status").get<std::string>() == "ok" ? Status::ok : Status::failed;
  a.meaningful = j.value("meaningful", false);
  a.thought_action = j.value("thought_action_nlp", std::string{});
  if (j.contains("model_usage")) {
    a.usage.input_tokens = j["model_usage"].value("input_tokens", std::int64_t{0});
    a.usage.output_tokens = j["model_usage"].value("output_tokens", std::int64_t{0});
  }
  a.attempts = j.value("attempts", 0);
  if (j.contains("frames") && j["frames"].size() == 2) {
    a.first = frame_from_json(j["frames"][0]);
    a.second = frame_from_json(j["frames"][1]);
  }
  a.error = j.value("error", std::string{});
  if (j.contains("coordinate_violations")) a.coordinate_violations = j["coordinate_violations"].get<std::vector<std::string>>();
  a.raw_model_output = j.value("raw_model_output", std::string{});
  return a;
}

}  // namespace guide::annotation
