#include "guide/knowledge.hpp"

#include <algorithm>

#include "guide/concurrency.hpp"
#include "guide/coordinates.hpp"
#include "guide/cost.hpp"
#include "guide/error.hpp"
#include "guide/text.hpp"

namespace guide::knowledge {

const char* const kPlanningSystemPrompt =
    "You turn the step-by-step log of a software tutorial into reusable planning knowledge for an agent that "
    "will perform a similar task on its own computer.\n"
    "Write two parts:\n"
    "- execution_flow: a coherent narrative of the workflow, in order, naming the menus, dialogs and controls used "
    "(for example a menu path such as File > Export As) and why each step is taken.\n"
    "- key_considerations: short notes of one or two sentences each about pitfalls, prerequisites, settings that "
    "matter and how to check the result.\n"
    "Describe positions in words only. Never write pixel coordinates, x/y values or sizes in px.";

const char* const kGroundingSystemPrompt =
    "You extract grounding knowledge from the step-by-step log of a software tutorial: the key interactive UI "
    "elements an agent needs to find on screen to repeat the task.\n"
    "List at most 15 elements, most important first. For each give:\n"
    "- name: the icon or control, e.g. the menu item or button label\n"
    "- appearance_position: how it looks (shape, colour, text label, icon) and where it sits relative to the "
    "window and to other elements\n"
    "- predicted_function: what using it does in this task\n"
    "Describe positions in words only. Never write pixel coordinates.";

namespace {

std::string render_steps(const Trajectory& traj) {
  std::string out = "Video topic: " + traj.topic + "\n\nOperation log:\n";
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    out += "Step " + std::to_string(i + 1) + ": " + traj.steps[i] + "\n";
  }
  return out;
}

provider::ModelRequest base_request(const Trajectory& traj, const DecomposeOptions& options, std::string_view stage) {
  provider::ModelRequest m;
  m.model_name = options.model;
  m.temperature = options.temperature;
  m.max_output_tokens = options.max_output_tokens;
  m.stage = std::string(stage);
  m.video_id = traj.video_id;
  return m;
}

// Accepts a string or an array of strings.
std::optional<std::string> text_field(const nlohmann::json& j) {
  if (j.is_string()) return std::string(text::trim(j.get<std::string>()));
  if (j.is_array()) {
    std::vector<std::string> parts;
    for (const auto& x : j) {
      if (!x.is_string()) return std::nullopt;
      auto t = std::string(text::trim(x.get<std::string>()));
      if (!t.empty()) parts.push_back(std::move(t));
    }
    return text::join(parts, "\n");
  }
  return std::nullopt;
}

std::string strip_bullet(std::string_view line) {
  line = text::trim(line);
  while (!line.empty() && (line.front() == '-' || line.front() == '*' || line.front() == '.' ||
                           (line.front() >= '0' && line.front() <= '9'))) {
    line.remove_prefix(1);
  }
  return std::string(text::trim(line));
}

const nlohmann::json* find_any(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = j.find(k);
    if (it != j.end()) return &*it;
  }
  return nullptr;
}

// First JSON object in `raw` for which `accept` holds.
template <typename Accept>
std::optional<nlohmann::json> find_object(std::string_view raw, Accept accept) {
  std::size_t offset = 0;
  while (offset < raw.size()) {
    auto obj = text::first_json_object(raw.substr(offset));
    if (!obj) return std::nullopt;
    auto j = nlohmann::json::parse(*obj, nullptr, false);
    if (j.is_object() && accept(j)) return j;
    std::size_t at = raw.substr(offset).find(*obj);
    offset += (at == std::string_view::npos ? 0 : at) + 1;
  }
  return std::nullopt;
}

std::vector<std::string> planning_violations(const PlanningKnowledge& p) {
  auto v = validate_coordinate_free(p.execution_flow);
  for (const auto& k : p.key_considerations) {
    auto more = validate_coordinate_free(k);
    v.insert(v.end(), more.begin(), more.end());
  }
  return v;
}

}  // namespace

Trajectory consolidate_trajectory(const std::vector<annotation::FramePairAnnotation>& annotations,
                                  const std::string& topic, const std::string& video_id) {
  Trajectory t;
  t.video_id = video_id;
  t.topic = topic;
  for (const auto& a : annotations) {
    if (a.status == annotation::Status::ok && a.meaningful && !a.thought_action.empty()) t.steps.push_back(a.thought_action);
  }
  if (t.steps.empty()) throw Error(ErrorKind::EmptyTrajectory, "video " + video_id + " has no meaningful steps");
  return t;
}

std::vector<std::string> validate_coordinate_free(std::string_view text) { return find_coordinate_patterns(text); }

provider::ModelRequest build_planning_prompt(const Trajectory& traj, const DecomposeOptions& options,
                                             const std::string& retry_note) {
  auto m = base_request(traj, options, cost::stage::planning_split);
  std::string body = render_steps(traj);
  body += "\nReply with one JSON object: {\"execution_flow\": \"...\", \"key_considerations\": [\"...\", \"...\"]}";
  if (!retry_note.empty()) body += "\n\n" + retry_note;
  m.messages.push_back({"system", {provider::ContentPart::of_text(kPlanningSystemPrompt)}});
  m.messages.push_back({"user", {provider::ContentPart::of_text(std::move(body))}});
  return m;
}

provider::ModelRequest build_grounding_prompt(const Trajectory& traj, const DecomposeOptions& options) {
  auto m = base_request(traj, options, cost::stage::grounding_split);
  std::string body = render_steps(traj);
  body += "\nReply with one JSON object: {\"elements\": [{\"name\": \"...\", \"appearance_position\": \"...\", "
          "\"predicted_function\": \"...\"}]}";
  m.messages.push_back({"system", {provider::ContentPart::of_text(kGroundingSystemPrompt)}});
  m.messages.push_back({"user", {provider::ContentPart::of_text(std::move(body))}});
  return m;
}

std::optional<PlanningKnowledge> parse_planning_reply(std::string_view raw) {
  auto j = find_object(raw, [](const nlohmann::json& o) { return o.contains("execution_flow"); });
  if (!j) return std::nullopt;
  PlanningKnowledge p;
  auto flow = text_field((*j)["execution_flow"]);
  if (!flow || flow->empty()) return std::nullopt;
  p.execution_flow = std::move(*flow);
  if (const auto* kc = find_any(*j, {"key_considerations", "considerations"})) {
    if (kc->is_array()) {
      for (const auto& x : *kc) {
        if (!x.is_string()) continue;
        auto t = std::string(text::trim(x.get<std::string>()));
        if (!t.empty()) p.key_considerations.push_back(std::move(t));
      }
    } else if (kc->is_string()) {
      const auto& raw_list = kc->get_ref<const std::string&>();
      for (auto line : text::split_lines(raw_list)) {
        auto t = strip_bullet(line);
        if (!t.empty()) p.key_considerations.push_back(std::move(t));
      }
    }
  }
  return p;
}

std::optional<GroundingKnowledge> parse_grounding_reply(std::string_view raw, WarningSink* warnings,
                                                        const std::string& subject) {
  nlohmann::json list;
  auto j = find_object(raw, [](const nlohmann::json& o) { return o.contains("elements") && o["elements"].is_array(); });
  if (j) {
    list = (*j)["elements"];
  } else {
    auto start = raw.find('[');
    auto stop = raw.rfind(']');
    if (start == std::string_view::npos || stop == std::string_view::npos || stop < start) return std::nullopt;
    list = nlohmann::json::parse(raw.substr(start, stop - start + 1), nullptr, false);
    if (!list.is_array()) return std::nullopt;
  }

  GroundingKnowledge g;
  std::size_t index = 0;
  for (const auto& e : list) {
    ++index;
    if (g.elements.size() == kMaxGroundingElements) {
      if (warnings) {
        warnings->add("grounding_truncated",
                      std::to_string(list.size()) + " elements returned, kept the first " +
                          std::to_string(kMaxGroundingElements),
                      subject);
      }
      break;
    }
    auto field = [&](std::initializer_list<const char*> keys) -> std::string {
      if (!e.is_object()) return {};
      const auto* v = find_any(e, keys);
      return v && v->is_string() ? std::string(text::trim(v->get<std::string>())) : std::string{};
    };
    GroundingElement el{field({"name", "icon", "control"}),
                        field({"appearance_position", "appearance", "appearance_and_position"}),
                        field({"predicted_function", "function"})};
    std::string problem;
    if (el.name.empty() || el.appearance_position.empty() || el.predicted_function.empty()) {
      problem = "missing field";
    } else if (auto v = validate_coordinate_free(el.appearance_position); !v.empty()) {
      problem = "pixel coordinates in appearance: " + v.front();
    }
    if (!problem.empty()) {
      if (warnings) warnings->add("grounding_element_dropped", "element " + std::to_string(index) + ": " + problem, subject);
      continue;
    }
    g.elements.push_back(std::move(el));
  }
  return g;
}

std::optional<PlanningKnowledge> decompose_planning(const Trajectory& traj, provider::ModelGateway& gateway,
                                                    const DecomposeOptions& options, WarningSink* warnings) {
  if (traj.steps.empty()) throw Error(ErrorKind::EmptyTrajectory, "video " + traj.video_id + " has no steps");
  std::string note;
  std::optional<PlanningKnowledge> last;
  // At most two rounds: the first answer and one coordinate-free regeneration.
  for (int round = 0; round < 2; ++round) {
    auto prompt = build_planning_prompt(traj, options, note);
    std::optional<PlanningKnowledge> parsed;
    for (int attempt = 0; attempt < std::max(1, options.parse_attempts) && !parsed; ++attempt) {
      try {
        parsed = parse_planning_reply(gateway.chat(prompt).text);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::AuthFailure) throw;
        if (warnings) warnings->add("planning_failed", e.what(), traj.video_id);
        return last;
      }
    }
    if (!parsed) {
      if (warnings && !last) warnings->add("planning_failed", "no readable plan in the reply", traj.video_id);
      return last;
    }
    parsed->violations = planning_violations(*parsed);
    parsed->coordinate_free_ok = parsed->violations.empty();
    last = std::move(parsed);
    if (last->coordinate_free_ok) return last;
    note = "Your previous answer contained pixel coordinates (" + text::join(last->violations, "; ") +
           "). Rewrite it describing positions in words only.";
  }
  if (warnings) {
    warnings->add("planning_coordinates", "kept with violations: " + text::join(last->violations, "; "), traj.video_id);
  }
  return last;
}

std::optional<GroundingKnowledge> decompose_grounding(const Trajectory& traj, provider::ModelGateway& gateway,
                                                      const DecomposeOptions& options, WarningSink* warnings) {
  if (traj.steps.empty()) throw Error(ErrorKind::EmptyTrajectory, "video " + traj.video_id + " has no steps");
  auto prompt = build_grounding_prompt(traj, options);
  for (int attempt = 0; attempt < std::max(1, options.parse_attempts); ++attempt) {
    std::string reply;
    try {
      reply = gateway.chat(prompt).text;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::AuthFailure) throw;
      if (warnings) warnings->add("grounding_failed", e.what(), traj.video_id);
      return std::nullopt;
    }
    auto g = parse_grounding_reply(reply, warnings, traj.video_id);
    if (!g) continue;
    if (g->elements.empty()) {
      if (warnings) warnings->add("grounding_empty", "no valid grounding element", traj.video_id);
      return std::nullopt;
    }
    return g;
  }
  if (warnings) warnings->add("grounding_failed", "no readable element list in the reply", traj.video_id);
  return std::nullopt;
}

GroundingKnowledge select_elements(const GroundingKnowledge& g, std::size_t k) {
  GroundingKnowledge out;
  auto n = std::min(k, g.elements.size());
  out.elements.assign(g.elements.begin(), g.elements.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

BundleEntry decompose_video(const Trajectory& traj, double relevance, provider::ModelGateway& gateway,
                            const DecomposeOptions& options, WarningSink* warnings) {
  BundleEntry e;
  e.video_id = traj.video_id;
  e.topic = traj.topic;
  e.relevance = relevance;
  parallel_for(2, 2, [&](std::size_t i) {
    if (i == 0) e.planning = decompose_planning(traj, gateway, options, warnings);
    else e.grounding = decompose_grounding(traj, gateway, options, warnings);
  });
  return e;
}

bool KnowledgeBundle::has_planning() const {
  return std::any_of(entries.begin(), entries.end(), [](const BundleEntry& e) { return e.planning.has_value(); });
}

bool KnowledgeBundle::has_grounding() const {
  return std::any_of(entries.begin(), entries.end(),
                     [](const BundleEntry& e) { return e.grounding && !e.grounding->elements.empty(); });
}

KnowledgeBundle assemble_bundle(std::string task_id, std::vector<BundleEntry> entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const BundleEntry& a, const BundleEntry& b) { return a.relevance > b.relevance; });
  return {std::move(task_id), std::move(entries)};
}

nlohmann::json to_json(const PlanningKnowledge& p) {
  return {{"execution_flow", p.execution_flow},
          {"key_considerations", p.key_considerations},
          {"coordinate_free_ok", p.coordinate_free_ok},
          {"violations", p.violations}};
}

nlohmann::json to_json(const GroundingKnowledge& g) {
  nlohmann::json elements = nlohmann::json::array();
  for (const auto& e : g.elements) {
    elements.push_back(
        {{"name", e.name}, {"appearance_position", e.appearance_position}, {"predicted_function", e.predicted_function}});
  }
  return {{"elements", elements}};
}

nlohmann::json to_json(const KnowledgeBundle& b) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : b.entries) {
    entries.push_back({{"video_id", e.video_id},
                       {"topic", e.topic},
                       {"relevance", e.relevance},
                       {"planning", e.planning ? to_json(*e.planning) : nlohmann::json(nullptr)},
                       {"grounding", e.grounding ? to_json(*e.grounding) : nlohmann::json(nullptr)}});
  }
  return {{"schema_version", kBundleSchemaVersion}, {"task_id", b.task_id}, {"entries", entries}};
}

KnowledgeBundle bundle_from_json(const nlohmann::json& j) {
  try {
    KnowledgeBundle b;
    b.task_id = j.at("task_id").get<std::string>();
    for (const auto& e : j.at("entries")) {
      BundleEntry entry;
      entry.video_id = e.at("video_id").get<std::string>();
      entry.topic = e.value("topic", std::string{});
      entry.relevance = e.value("relevance", 0.0);
      if (e.contains("planning") && !e["planning"].is_null()) {
        const auto& p = e["planning"];
        PlanningKnowledge pk;
        pk.execution_flow = p.at("execution_flow").get<std::string>();
        pk.key_considerations = p.value("key_considerations", std::vector<std::string>{});
        pk.violations = p.value("violations", std::vector<std::string>{});
        pk.coordinate_free_ok = p.value("coordinate_free_ok", pk.violations.empty());
        entry.planning = std::move(pk);
      }
      if (e.contains("grounding") && !e["grounding"].is_null()) {
        GroundingKnowledge gk;
        for (const auto& el : e["grounding"].at("elements")) {
          gk.elements.push_back({el.at("name").get<std::string>(), el.at("appearance_position").get<std::string>(),
                                 el.at("predicted_function").get<std::string>()});
        }
        entry.grounding = std::move(gk);
      }
      b.entries.push_back(std::move(entry));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed knowledge bundle: ") + e.what());
  }
}

}  // namespace guide::knowledge
