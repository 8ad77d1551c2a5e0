#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// Pipeline-quality metrics computed from label files. All metrics are count
// derived; a zero denominator yields an absent value, never 0 or 100.
namespace guide::eval {

enum class FrameClass { gui_valid, non_gui, idle_no_action };

std::string_view to_string(FrameClass c);
FrameClass frame_class_from_string(std::string_view s);

struct FrameLabel {
  std::string frame_id;
  FrameClass label = FrameClass::gui_valid;
};

struct FilterOutcome {
  std::string frame_id;
  bool filtered = false;
};

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
};

struct MetricReport {
  Confusion confusion;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> accuracy;
  // Fraction of each category that was flagged positive (recall per category).
  std::map<std::string, std::optional<double>> per_category;
  std::map<std::string, std::int64_t> category_totals;
};

MetricReport metrics_from_confusion(const Confusion& c);

// Positive class: the frame was filtered out; positive truth: the frame is
// invalid (non-GUI or idle). Throws Error(UnmatchedIds) when the two sides do
// not join one-to-one.
MetricReport meaningful_metrics(const std::vector<FrameLabel>& labels, const std::vector<FilterOutcome>& outcomes);

struct VideoVerdict {
  std::string video_id;
  bool is_gui = false;
};

// GUI is the positive class.
MetricReport stage1_metrics(const std::vector<VideoVerdict>& truth, const std::vector<VideoVerdict>& predicted);

struct TopicStats {
  double mean = 0;
  double acceptable_rate = 0;
  std::int64_t count = 0;
};

// Scores must be in {0, 0.5, 1}. Throws Error(EmptyInput) on an empty list.
TopicStats topic_stats(const std::vector<double>& scores);

struct CoverageStats {
  std::int64_t tasks = 0;
  std::int64_t covered = 0;
  std::optional<double> covered_pct;
  std::optional<double> two_video_pct;
  std::int64_t total_videos = 0;
};

// One entry per task: the number of selected videos.
CoverageStats coverage_stats(const std::vector<std::size_t>& selected_per_task);

std::vector<FrameLabel> load_frame_labels(const std::filesystem::path& jsonl);
std::vector<FilterOutcome> load_filter_outcomes(const std::filesystem::path& jsonl);
// {id, gui} or {id, is_gui_demo}
std::vector<VideoVerdict> load_verdicts(const std::filesystem::path& jsonl);
std::vector<double> load_scores(const std::filesystem::path& jsonl);
// Reads every retrieval.json under dir (recursively) and counts selected entries.
std::vector<std::size_t> load_selection_counts(const std::filesystem::path& dir);

nlohmann::json to_json(const MetricReport& r);
nlohmann::json to_json(const TopicStats& s);
nlohmann::json to_json(const CoverageStats& s);
std::string format_table(const MetricReport& r);
std::string format_table(const TopicStats& s);
std::string format_table(const CoverageStats& s);

}  // namespace guide::eval
