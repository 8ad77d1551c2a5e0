#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guide/log.hpp"
#include "guide/provider.hpp"
#include "guide/subtitle.hpp"
#include "guide/types.hpp"

// Task -> at most K tutorial videos: query generation, search, metadata
// pre-filter, GUI classification, topic extraction, relevance scoring, top-K.
namespace guide::retrieval {

struct TaskSpec {
  std::string task_id;
  std::string instruction;
  std::string application;

  bool operator==(const TaskSpec&) const = default;
};

nlohmann::json to_json(const TaskSpec& t);
// Throws Error(InvalidInput) when instruction or application is empty.
TaskSpec task_from_json(const nlohmann::json& j);

struct SearchQuery {
  std::string primary;
  std::optional<std::string> simplified;

  std::vector<std::string> variants() const;
};

struct StageOneVerdict {
  bool is_gui_demo = false;
  std::string rationale;
};

inline constexpr std::size_t kTopicMinWords = 12;
inline constexpr std::size_t kTopicMaxWords = 30;

struct Topic {
  std::string text;
  std::size_t word_count = 0;
};

struct ScoredCandidate {
  VideoCandidate candidate;
  Topic topic;
  double relevance = 0;
  std::size_t search_rank = 0;
};

struct RetrievalResult {
  std::string task_id;
  std::vector<ScoredCandidate> selected;
};

struct ModelChoice {
  std::string name;
  double temperature = 1.0;
  int max_output_tokens = 1024;
};

struct RetrievalModels {
  ModelChoice query{"gpt-4.1"};
  ModelChoice mini{"gpt-4.1-mini"};
};

// Removes filler words ("how to", "tutorial", articles, ...) from a query.
std::string strip_filler(std::string_view query);

// Two calls: the query model writes the primary query, the mini model the
// simplified one (filler stripping is then applied deterministically). A
// failed simplification degrades to stripping the primary query.
// Throws Error(ModelFailure) when the primary query cannot be produced.
SearchQuery generate_queries(const TaskSpec& task, provider::ModelGateway& gateway, const RetrievalModels& models,
                             WarningSink* warnings = nullptr);

// Union over variants, deduplicated by id, in first-seen order. Throws
// Error(SearchUnavailable) only when every variant fails.
std::vector<VideoCandidate> search_candidates(const SearchQuery& queries, provider::VideoSource& source,
                                              int min_total = 50, WarningSink* warnings = nullptr);

inline constexpr double kMaxDurationS = 3000.0;

// At least 3 characters left once control characters are removed, and at
// least one of them alphanumeric.
bool valid_title(std::string_view title);
std::vector<VideoCandidate> prefilter(const std::vector<VideoCandidate>& candidates);

// Fail-closed: a missing or empty transcript is rejected without a model call,
// and a model failure or unreadable reply counts as non-GUI.
StageOneVerdict classify_gui(const VideoCandidate& candidate, const subtitle::CleanTranscript* transcript,
                             provider::ModelGateway& gateway, const ModelChoice& model,
                             WarningSink* warnings = nullptr);

// Collapses whitespace, drops a leading "Topic:" label and wrapping quotes,
// and truncates to kTopicMaxWords words.
Topic normalize_topic(std::string_view raw);

// Regenerates once when the topic is shorter than kTopicMinWords and then
// accepts it with a warning. Throws Error(ModelFailure).
Topic extract_topic(const VideoCandidate& candidate, const subtitle::CleanTranscript& transcript,
                    provider::ModelGateway& gateway, const ModelChoice& model, WarningSink* warnings = nullptr);

struct ScoreItem {
  std::string title;
  std::string topic;
};

// The dual-anchored per-item text.
std::string render_score_item(const ScoreItem& item);

// One value per item; unreadable entries become 0.0 with a warning; values are
// clamped to [0, 1].
std::vector<double> parse_scores(std::string_view reply, std::size_t count, WarningSink* warnings = nullptr);

// Single batch call. Throws Error(ModelFailure).
std::vector<double> score_relevance(const TaskSpec& task, const std::vector<ScoreItem>& items,
                                    provider::ModelGateway& gateway, const ModelChoice& model,
                                    WarningSink* warnings = nullptr);

inline constexpr std::size_t kDefaultTopK = 2;
inline constexpr double kMinSecondaryRelevance = 0.5;

RetrievalResult select_top_k(const std::string& task_id, std::vector<ScoredCandidate> scored,
                             std::size_t k = kDefaultTopK, double min_relevance = kMinSecondaryRelevance);

struct FunnelOptions {
  int max_candidates = 50;
  std::size_t top_k = kDefaultTopK;
  int max_in_flight = 4;
  RetrievalModels models;
  subtitle::CleanOptions clean;
};

struct CandidateTrace {
  VideoCandidate candidate;
  std::size_t search_rank = 0;
  bool passed_prefilter = false;
  std::optional<StageOneVerdict> verdict;
  std::optional<Topic> topic;
  std::optional<double> relevance;
  std::string subtitle_format;  // "vtt", "srt" or empty when none
};

struct FunnelReport {
  TaskSpec task;
  SearchQuery queries;
  std::vector<CandidateTrace> candidates;
  RetrievalResult result;
  // Raw subtitle documents and cleaned transcripts keyed by video id.
  std::map<std::string, std::string> subtitles;
  std::map<std::string, subtitle::CleanTranscript> transcripts;
  std::vector<Warning> warnings;
};

FunnelReport run_funnel(const TaskSpec& task, provider::VideoSource& source, provider::ModelGateway& gateway,
                        const FunnelOptions& options);

nlohmann::json to_json(const ScoredCandidate& s);
ScoredCandidate scored_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RetrievalResult& r);
RetrievalResult retrieval_result_from_json(const nlohmann::json& j);
// The retrieval.json artifact: the selection plus a per-candidate funnel trace.
nlohmann::json to_json(const FunnelReport& r);

}  // namespace guide::retrieval
