#pragma once

// Small knowledge bundles used by the injection goldens.

#include <string>

#include "guide/knowledge.hpp"

namespace guide::testing::inject {

using knowledge::BundleEntry;
using knowledge::GroundingKnowledge;
using knowledge::KnowledgeBundle;
using knowledge::PlanningKnowledge;

inline const std::string kBase = "You are a GUI agent.\nUse agent.click(element_description) to click.";
inline const std::string kTools = "<tools>\n{\"name\": \"computer_use\"}\n</tools>";

inline PlanningKnowledge plan(const std::string& flow) {
  return {flow, {"Keep Preview on.", "Confirm with OK."}, true, {}};
}

inline GroundingKnowledge elements(std::size_t n, const std::string& prefix) {
  GroundingKnowledge g;
  for (std::size_t i = 0; i < n; ++i) {
    g.elements.push_back({prefix + " control " + std::to_string(i + 1),
                          "grey button in the toolbar, right of item " + std::to_string(i),
                          "runs step " + std::to_string(i + 1)});
  }
  return g;
}

inline KnowledgeBundle bundle(bool planning, bool grounding, std::size_t videos = 2) {
  KnowledgeBundle b;
  b.task_id = "task-gimp";
  const double rel[] = {1.0, 0.5, 0.25};
  for (std::size_t i = 0; i < videos; ++i) {
    BundleEntry e;
    e.video_id = "vid00" + std::to_string(i + 1);
    e.topic = "GIMP contrast";
    e.relevance = rel[i];
    if (planning) e.planning = plan("Go to Colors → Brightness-Contrast in video " + std::to_string(i + 1) + ".");
    if (grounding) e.grounding = elements(10, "V" + std::to_string(i + 1));
    b.entries.push_back(std::move(e));
  }
  return b;
}

}  // namespace guide::testing::inject
