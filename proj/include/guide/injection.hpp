#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "guide/knowledge.hpp"

// Renders knowledge bundles into agent prompts. Mode A targets a multi-agent
// system (worker planner + grounding agent), Mode B a single model with tools.
namespace guide::injection {

// Bumped whenever a stored template changes.
inline constexpr int kTemplateVersion = 1;

namespace templates {
// Stored byte for byte, bracketed notes included.
extern const std::string_view mode_a_worker;
extern const std::string_view mode_a_grounding;
extern const std::string_view mode_b_knowledge;
extern const std::string_view mode_b_response_format;
}  // namespace templates

enum class Mode { a_worker, a_grounding, b_system };

std::string_view to_string(Mode m);
// Accepts "a-worker", "a-grounding", "b". Throws Error(ConfigError).
Mode mode_from_string(std::string_view s);

struct RenderedPrompt {
  Mode mode = Mode::a_worker;
  std::string text;
  bool planning = false;
  bool grounding = false;
};

struct RenderOptions {
  // Grounding elements kept per video.
  std::size_t max_elements = knowledge::kDefaultElementK;
};

// "Video <n> (relevance <x.xx>):" where n is the 1-based entry position.
std::string video_label(std::size_t n, double relevance);

// Labeled concatenation over entries that carry the channel; empty when none do.
std::string planning_text(const knowledge::KnowledgeBundle& bundle);
std::string grounding_text(const knowledge::KnowledgeBundle& bundle, const RenderOptions& options = {});

RenderedPrompt render_mode_a_worker(const knowledge::KnowledgeBundle& bundle, std::string_view base_guidelines);

// Throws Error(EmptyDescription) when the description is blank.
RenderedPrompt render_mode_a_grounding(const knowledge::KnowledgeBundle& bundle, std::string_view element_description,
                                       const RenderOptions& options = {});

RenderedPrompt render_mode_b_system(const knowledge::KnowledgeBundle& bundle, std::string_view tool_schema,
                                    const RenderOptions& options = {});

// The response-format block for the channels present.
std::string response_format(bool planning, bool grounding);

}  // namespace guide::injection
