#include "guide/eval.hpp"

#include <algorithm>
#include <unordered_map>

#include "guide/error.hpp"
#include "guide/io.hpp"
#include "guide/text.hpp"

namespace guide::eval {

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string pct(const std::optional<double>& v, int decimals = 2) {
  return v ? text::format_fixed(*v * 100.0, decimals) + "%" : "n/a";
}

template <typename T>
std::unordered_map<std::string, const T*> index_unique(const std::vector<T>& items, auto id_of, const char* what) {
  std::unordered_map<std::string, const T*> out;
  for (const auto& item : items) {
    if (!out.emplace(id_of(item), &item).second) {
      throw Error(ErrorKind::UnmatchedIds, std::string("duplicate id '") + id_of(item) + "' in " + what);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(FrameClass c) {
  switch (c) {
    case FrameClass::gui_valid: return "gui_valid";
    case FrameClass::non_gui: return "non_gui";
    case FrameClass::idle_no_action: return "idle_no_action";
  }
  return "gui_valid";
}

FrameClass frame_class_from_string(std::string_view s) {
  if (s == "gui_valid") return FrameClass::gui_valid;
  if (s == "non_gui") return FrameClass::non_gui;
  if (s == "idle_no_action" || s == "idle") return FrameClass::idle_no_action;
  throw Error(ErrorKind::InvalidInput, "unknown frame label '" + std::string(s) + "'");
}

MetricReport metrics_from_confusion(const Confusion& c) {
  MetricReport r;
  r.confusion = c;
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.accuracy = ratio(c.tp + c.tn, c.total());
  if (r.precision && r.recall && *r.precision + *r.recall > 0) {
    r.f1 = 2 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  return r;
}

MetricReport meaningful_metrics(const std::vector<FrameLabel>& labels, const std::vector<FilterOutcome>& outcomes) {
  auto label_index = index_unique(labels, [](const FrameLabel& l) { return l.frame_id; }, "labels");
  auto outcome_index = index_unique(outcomes, [](const FilterOutcome& o) { return o.frame_id; }, "outcomes");
  if (label_index.size() != outcome_index.size()) {
    throw Error(ErrorKind::UnmatchedIds, std::to_string(labels.size()) + " labels vs " +
                                             std::to_string(outcomes.size()) + " outcomes");
  }

  Confusion c;
  std::map<std::string, std::int64_t> totals, flagged;
  for (const auto& o : outcomes) {
    auto it = label_index.find(o.frame_id);
    if (it == label_index.end()) throw Error(ErrorKind::UnmatchedIds, "outcome '" + o.frame_id + "' has no label");
    FrameClass cls = it->second->label;
    bool invalid = cls != FrameClass::gui_valid;
    if (o.filtered && invalid) ++c.tp;
    if (o.filtered && !invalid) ++c.fp;
    if (!o.filtered && invalid) ++c.fn;
    if (!o.filtered && !invalid) ++c.tn;
    std::string key(to_string(cls));
    ++totals[key];
    if (o.filtered) ++flagged[key];
  }
  MetricReport r = metrics_from_confusion(c);
  for (FrameClass cls : {FrameClass::non_gui, FrameClass::idle_no_action}) {
    std::string key(to_string(cls));
    r.category_totals[key] = totals[key];
    r.per_category[key] = ratio(flagged[key], totals[key]);
  }
  return r;
}

MetricReport stage1_metrics(const std::vector<VideoVerdict>& truth, const std::vector<VideoVerdict>& predicted) {
  auto truth_index = index_unique(truth, [](const VideoVerdict& v) { return v.video_id; }, "truth");
  auto pred_index = index_unique(predicted, [](const VideoVerdict& v) { return v.video_id; }, "verdicts");
  if (truth_index.size() != pred_index.size()) {
    throw Error(ErrorKind::UnmatchedIds,
                std::to_string(truth.size()) + " truth labels vs " + std::to_string(predicted.size()) + " verdicts");
  }
  Confusion c;
  for (const auto& p : predicted) {
    auto it = truth_index.find(p.video_id);
    if (it == truth_index.end()) throw Error(ErrorKind::UnmatchedIds, "verdict '" + p.video_id + "' has no label");
    bool gui = it->second->is_gui;
    if (p.is_gui && gui) ++c.tp;
    if (p.is_gui && !gui) ++c.fp;
    if (!p.is_gui && gui) ++c.fn;
    if (!p.is_gui && !gui) ++c.tn;
  }
  return metrics_from_confusion(c);
}

TopicStats topic_stats(const std::vector<double>& scores) {
  if (scores.empty()) throw Error(ErrorKind::EmptyInput, "no topic scores");
  TopicStats s;
  std::int64_t halves = 0, acceptable = 0;
  for (double v : scores) {
    if (v != 0.0 && v != 0.5 && v != 1.0) {
      throw Error(ErrorKind::InvalidInput, "topic score must be 0, 0.5 or 1, got " + text::format_fixed(v, 3));
    }
    halves += static_cast<std::int64_t>(v * 2);
    if (v >= 0.5) ++acceptable;
  }
  s.count = static_cast<std::int64_t>(scores.size());
  s.mean = static_cast<double>(halves) / 2.0 / static_cast<double>(s.count);
  s.acceptable_rate = static_cast<double>(acceptable) / static_cast<double>(s.count);
  return s;
}

CoverageStats coverage_stats(const std::vector<std::size_t>& selected_per_task) {
  CoverageStats s;
  std::int64_t two = 0;
  s.tasks = static_cast<std::int64_t>(selected_per_task.size());
  for (std::size_t n : selected_per_task) {
    if (n >= 1) ++s.covered;
    if (n >= 2) ++two;
    s.total_videos += static_cast<std::int64_t>(n);
  }
  s.covered_pct = ratio(s.covered, s.tasks);
  s.two_video_pct = ratio(two, s.covered);
  return s;
}

std::vector<FrameLabel> load_frame_labels(const std::filesystem::path& jsonl) {
  std::vector<FrameLabel> out;
  for (const auto& j : io::read_jsonl(jsonl)) {
    out.push_back({j.at("id").get<std::string>(), frame_class_from_string(j.at("label").get<std::string>())});
  }
  return out;
}

std::vector<FilterOutcome> load_filter_outcomes(const std::filesystem::path& jsonl) {
  std::vector<FilterOutcome> out;
  for (const auto& j : io::read_jsonl(jsonl)) out.push_back({j.at("id").get<std::string>(), j.at("filtered").get<bool>()});
  return out;
}

std::vector<VideoVerdict> load_verdicts(const std::filesystem::path& jsonl) {
  std::vector<VideoVerdict> out;
  for (const auto& j : io::read_jsonl(jsonl)) {
    bool gui = j.contains("gui") ? j.at("gui").get<bool>() : j.at("is_gui_demo").get<bool>();
    out.push_back({j.at("id").get<std::string>(), gui});
  }
  return out;
}

std::vector<double> load_scores(const std::filesystem::path& jsonl) {
  std::vector<double> out;
  for (const auto& j : io::read_jsonl(jsonl)) out.push_back(j.at("score").get<double>());
  return out;
}

std::vector<std::size_t> load_selection_counts(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "retrieval.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::size_t> out;
  for (const auto& f : files) out.push_back(io::read_json(f).value("selected", nlohmann::json::array()).size());
  return out;
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [k, v] : r.per_category) per[k] = {{"recall", opt(v)}, {"total", r.category_totals.at(k)}};
  return {{"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
          {"precision", opt(r.precision)},
          {"recall", opt(r.recall)},
          {"f1", opt(r.f1)},
          {"accuracy", opt(r.accuracy)},
          {"per_category", per}};
}

nlohmann::json to_json(const TopicStats& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"acceptable_rate", s.acceptable_rate}};
}

nlohmann::json to_json(const CoverageStats& s) {
  return {{"tasks", s.tasks},
          {"covered", s.covered},
          {"covered_pct", opt(s.covered_pct)},
          {"two_video_pct", opt(s.two_video_pct)},
          {"total_videos", s.total_videos}};
}

std::string format_table(const MetricReport& r) {
  std::string out;
  out += "TP " + std::to_string(r.confusion.tp) + "  FP " + std::to_string(r.confusion.fp) + "  FN " +
         std::to_string(r.confusion.fn) + "  TN " + std::to_string(r.confusion.tn) + "\n";
  out += "precision " + pct(r.precision) + "\n";
  out += "recall    " + pct(r.recall) + "\n";
  out += "f1        " + pct(r.f1) + "\n";
  out += "accuracy  " + pct(r.accuracy) + "\n";
  for (const auto& [k, v] : r.per_category) out += "recall[" + k + "] " + pct(v) + "\n";
  return out;
}

std::string format_table(const TopicStats& s) {
  return "topics " + std::to_string(s.count) + "  mean " + text::format_fixed(s.mean, 3) + "  acceptable " +
         pct(s.acceptable_rate) + "\n";
}

std::string format_table(const CoverageStats& s) {
  return "tasks " + std::to_string(s.tasks) + "  covered " + std::to_string(s.covered) + " (" + pct(s.covered_pct, 1) +
         ")  two-video " + pct(s.two_video_pct, 1) + "  videos " + std::to_string(s.total_videos) + "\n";
}

}  // namespace guide::eval
