#include "guide/injection.hpp"

#include <stdexcept>

#include "guide/error.hpp"
#include "guide/text.hpp"

namespace guide::injection {

namespace {

constexpr std::string_view kWorkerBase = "[Agent guidelines and action API]";
constexpr std::string_view kWorkerTail = "\n[Screenshot + interaction history]";
constexpr std::string_view kWorkerPlaceholder = "VIDEO_PLANNING";
constexpr std::string_view kGroundingKnowledgePlaceholder = "{video_grounding}";
constexpr std::string_view kPlanningPlaceholder = "{video_planning}";
constexpr std::string_view kDescriptionPlaceholder = "{element_description}";
constexpr std::string_view kGroundingFirstLine = "Based on the screenshot";
constexpr std::string_view kGroundingTail = "\n[Current screenshot]";
constexpr std::string_view kToolsNote = "[Tool definitions and function call schema]";
constexpr std::string_view kKnowledgeHeader = "# External Knowledge from Similar Tasks";
constexpr std::string_view kPlanningSection = "## Video Planning Reference";
constexpr std::string_view kGroundingSection = "## Video Grounding Reference";

std::size_t locate(std::string_view hay, std::string_view needle) {
  auto at = hay.find(needle);
  if (at == std::string_view::npos) throw std::logic_error("template marker missing: " + std::string(needle));
  return at;
}

std::string replace_once(std::string s, std::string_view from, std::string_view to) {
  auto at = locate(s, from);
  s.replace(at, from.size(), to);
  return s;
}

std::string_view strip_suffix(std::string_view s, std::string_view suffix) {
  if (s.size() < suffix.size() || s.substr(s.size() - suffix.size()) != suffix)
    throw std::logic_error("template tail missing: " + std::string(suffix));
  return s.substr(0, s.size() - suffix.size());
}

// Sections of the Mode B knowledge template.
struct ModeBParts {
  std::string_view header;
  std::string_view planning;
  std::string_view grounding;
};

ModeBParts mode_b_parts() {
  std::string_view t = templates::mode_b_knowledge;
  auto h = locate(t, kKnowledgeHeader);
  auto p = locate(t, kPlanningSection);
  auto g = locate(t, kGroundingSection);
  return {t.substr(h, kKnowledgeHeader.size()), text::trim(t.substr(p, g - p)), text::trim(t.substr(g))};
}

constexpr std::string_view kFullThought =
    "1) **Thought**: Analyze the current screenshot. Use the\n"
    "   video planning to identify which stage of the\n"
    "   workflow you are in and what to do next. Use the\n"
    "   video grounding to help locate the relevant UI\n"
    "   element -- then verify it exists in your current\n"
    "   screenshot. Write 2-4 concise sentences.\n";
constexpr std::string_view kPlanningThought =
    "1) **Thought**: Analyze the current screenshot.\n"
    "   Reference the video planning to identify your\n"
    "   current stage in the workflow. Write 2-4 concise\n"
    "   sentences.\n";
constexpr std::string_view kGroundingThought =
    "1) **Thought**: Analyze the current screenshot. Check\n"
    "   the video grounding descriptions to understand what\n"
    "   the element looks like, then locate it in your\n"
    "   current screenshot. Write 2-4 concise sentences.\n";
constexpr std::string_view kPlainThought =
    "1) **Thought**: Analyze the current screenshot in 1-2\n"
    "   concise sentences.\n";
constexpr std::string_view kBothRule =
    "- Use video planning for workflow understanding; use\n"
    "  grounding to identify elements.\n";
constexpr std::string_view kVerifyRule =
    "- Always verify elements in your current screenshot\n"
    "  before acting. If they differ from the video, trust\n"
    "  the screenshot.\n";
constexpr std::string_view kExampleStart = "\nExample:\n";

}  // namespace

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::a_worker: return "a-worker";
    case Mode::a_grounding: return "a-grounding";
    case Mode::b_system: return "b";
  }
  return "b";
}

Mode mode_from_string(std::string_view s) {
  if (s == "a-worker") return Mode::a_worker;
  if (s == "a-grounding") return Mode::a_grounding;
  if (s == "b") return Mode::b_system;
  throw Error(ErrorKind::ConfigError, "unknown injection mode '" + std::string(s) + "'");
}

std::string video_label(std::size_t n, double relevance) {
  return "Video " + std::to_string(n) + " (relevance " + text::format_fixed(relevance, 2) + "):";
}

std::string planning_text(const knowledge::KnowledgeBundle& bundle) {
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < bundle.entries.size(); ++i) {
    const auto& e = bundle.entries[i];
    if (!e.planning) continue;
    std::string b = video_label(i + 1, e.relevance) + "\n" + e.planning->execution_flow;
    if (!e.planning->key_considerations.empty()) {
      b += "\nKey considerations:";
      for (const auto& k : e.planning->key_considerations) b += "\n- " + k;
    }
    blocks.push_back(std::move(b));
  }
  return text::join(blocks, "\n\n");
}

std::string grounding_text(const knowledge::KnowledgeBundle& bundle, const RenderOptions& options) {
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < bundle.entries.size(); ++i) {
    const auto& e = bundle.entries[i];
    if (!e.grounding) continue;
    auto g = knowledge::select_elements(*e.grounding, options.max_elements);
    if (g.elements.empty()) continue;
    std::string b = video_label(i + 1, e.relevance);
    for (const auto& el : g.elements) {
      b += "\n- " + el.name + "\n  Appearance & position: " + el.appearance_position + "\n  Function: " +
           el.predicted_function;
    }
    blocks.push_back(std::move(b));
  }
  return text::join(blocks, "\n\n");
}

RenderedPrompt render_mode_a_worker(const knowledge::KnowledgeBundle& bundle, std::string_view base_guidelines) {
  RenderedPrompt r;
  r.mode = Mode::a_worker;
  auto plan = planning_text(bundle);
  if (plan.empty()) {
    r.text = std::string(base_guidelines);
    return r;
  }
  r.planning = true;
  std::string t(strip_suffix(templates::mode_a_worker, kWorkerTail));
  t = replace_once(std::move(t), kWorkerPlaceholder, plan);
  r.text = replace_once(std::move(t), kWorkerBase, base_guidelines);
  return r;
}

RenderedPrompt render_mode_a_grounding(const knowledge::KnowledgeBundle& bundle, std::string_view element_description,
                                       const RenderOptions& options) {
  if (text::trim(element_description).empty()) throw Error(ErrorKind::EmptyDescription, "element description is empty");
  RenderedPrompt r;
  r.mode = Mode::a_grounding;
  std::string_view t = strip_suffix(templates::mode_a_grounding, kGroundingTail);
  auto ground = grounding_text(bundle, options);
  // The description slot comes last, so filling it first keeps user text out of the search.
  std::string out = replace_once(std::string(t), kDescriptionPlaceholder, element_description);
  if (ground.empty()) {
    out.erase(0, locate(out, kGroundingFirstLine));
  } else {
    r.grounding = true;
    out = replace_once(std::move(out), kGroundingKnowledgePlaceholder, ground);
  }
  r.text = std::move(out);
  return r;
}

std::string response_format(bool planning, bool grounding) {
  std::string t(templates::mode_b_response_format);
  if (planning && grounding) return t;
  t = t.substr(0, locate(t, kExampleStart));
  if (planning) {
    t = replace_once(std::move(t), kFullThought, kPlanningThought);
    return replace_once(std::move(t), kBothRule, "- Use video planning for workflow understanding.\n");
  }
  if (grounding) {
    t = replace_once(std::move(t), kFullThought, kGroundingThought);
    return replace_once(std::move(t), kBothRule, "- Use video grounding to identify elements.\n");
  }
  t = replace_once(std::move(t), kFullThought, kPlainThought);
  t = replace_once(std::move(t), kBothRule, "");
  return replace_once(std::move(t), kVerifyRule, "");
}

RenderedPrompt render_mode_b_system(const knowledge::KnowledgeBundle& bundle, std::string_view tool_schema,
                                    const RenderOptions& options) {
  RenderedPrompt r;
  r.mode = Mode::b_system;
  auto plan = planning_text(bundle);
  auto ground = grounding_text(bundle, options);
  r.planning = !plan.empty();
  r.grounding = !ground.empty();

  std::string_view t = templates::mode_b_knowledge;
  std::string out(t.substr(0, locate(t, kToolsNote)));
  out += tool_schema;
  if (r.planning || r.grounding) {
    auto parts = mode_b_parts();
    out += "\n\n";
    out += parts.header;
    if (r.planning) out += "\n\n" + replace_once(std::string(parts.planning), kPlanningPlaceholder, plan);
    if (r.grounding) out += "\n\n" + replace_once(std::string(parts.grounding), kGroundingKnowledgePlaceholder, ground);
  }
  out += "\n\n" + response_format(r.planning, r.grounding);
  r.text = std::move(out);
  return r;
}

}  // namespace guide::injection
