#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "guide/annotation.hpp"
#include "guide/log.hpp"
#include "guide/provider.hpp"

// Turns the meaningful annotations of one video into Planning and Grounding
// knowledge, and assembles the per-task bundle.
namespace guide::knowledge {

inline constexpr std::size_t kMaxGroundingElements = 15;
inline constexpr std::size_t kDefaultElementK = 7;
inline constexpr int kBundleSchemaVersion = 1;

struct Trajectory {
  std::string video_id;
  std::string topic;
  std::vector<std::string> steps;
};

// Steps are the narratives in pair order. Throws Error(EmptyTrajectory).
Trajectory consolidate_trajectory(const std::vector<annotation::FramePairAnnotation>& annotations,
                                  const std::string& topic, const std::string& video_id);

struct PlanningKnowledge {
  std::string execution_flow;
  std::vector<std::string> key_considerations;
  bool coordinate_free_ok = true;
  std::vector<std::string> violations;
};

struct GroundingElement {
  std::string name;
  std::string appearance_position;
  std::string predicted_function;
};

struct GroundingKnowledge {
  std::vector<GroundingElement> elements;
};

struct DecomposeOptions {
  std::string model = "gpt-5.1";
  double temperature = 1.0;
  int max_output_tokens = 4096;
  // Requests issued while the reply cannot be parsed.
  int parse_attempts = 2;
};

extern const char* const kPlanningSystemPrompt;
extern const char* const kGroundingSystemPrompt;

std::vector<std::string> validate_coordinate_free(std::string_view text);

// `retry_note` is appended to the user message on a regeneration.
provider::ModelRequest build_planning_prompt(const Trajectory& traj, const DecomposeOptions& options = {},
                                             const std::string& retry_note = {});
provider::ModelRequest build_grounding_prompt(const Trajectory& traj, const DecomposeOptions& options = {});

// Violations are not filled in here.
std::optional<PlanningKnowledge> parse_planning_reply(std::string_view raw);

// Elements with a missing field or pixel coordinates in appearance_position
// are dropped (with a warning); more than kMaxGroundingElements are cut.
// nullopt only when the reply has no element list at all.
std::optional<GroundingKnowledge> parse_grounding_reply(std::string_view raw, WarningSink* warnings = nullptr,
                                                        const std::string& subject = {});

// nullopt when the model fails or never returns a readable plan. A plan that
// still contains coordinates after one regeneration is kept with its
// violations recorded. AuthFailure propagates.
std::optional<PlanningKnowledge> decompose_planning(const Trajectory& traj, provider::ModelGateway& gateway,
                                                    const DecomposeOptions& options = {},
                                                    WarningSink* warnings = nullptr);

// nullopt on model failure or when no valid element survives.
std::optional<GroundingKnowledge> decompose_grounding(const Trajectory& traj, provider::ModelGateway& gateway,
                                                      const DecomposeOptions& options = {},
                                                      WarningSink* warnings = nullptr);

// First min(k, size) elements in stored order.
GroundingKnowledge select_elements(const GroundingKnowledge& g, std::size_t k);

struct BundleEntry {
  std::string video_id;
  std::string topic;
  double relevance = 0;
  std::optional<PlanningKnowledge> planning;
  std::optional<GroundingKnowledge> grounding;
};

// Both calls for one video, run concurrently.
BundleEntry decompose_video(const Trajectory& traj, double relevance, provider::ModelGateway& gateway,
                            const DecomposeOptions& options = {}, WarningSink* warnings = nullptr);

struct KnowledgeBundle {
  std::string task_id;
  std::vector<BundleEntry> entries;

  bool has_planning() const;
  bool has_grounding() const;
};

// Stable sort by relevance descending.
KnowledgeBundle assemble_bundle(std::string task_id, std::vector<BundleEntry> entries);

nlohmann::json to_json(const PlanningKnowledge& p);
nlohmann::json to_json(const GroundingKnowledge& g);
nlohmann::json to_json(const KnowledgeBundle& b);
// Throws Error(InvalidInput) on a malformed document.
KnowledgeBundle bundle_from_json(const nlohmann::json& j);

}  // namespace guide::knowledge
