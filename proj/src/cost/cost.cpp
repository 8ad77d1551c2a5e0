#include "guide/cost.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "guide/error.hpp"
#include "guide/text.hpp"

namespace guide::cost {

namespace {

constexpr std::array<std::string_view, 9> kStageOrder = {
    stage::query_generation, stage::query_simplification, stage::gui_classification,
    stage::topic_extraction, stage::classification_and_topic, stage::relevance_scoring,
    stage::frame_pair_idm,   stage::planning_split,       stage::grounding_split,
};

std::size_t stage_rank(std::string_view s) {
  auto it = std::find(kStageOrder.begin(), kStageOrder.end(), s);
  return static_cast<std::size_t>(it - kStageOrder.begin());
}

std::int64_t pow10(int n) {
  std::int64_t v = 1;
  while (n-- > 0) v *= 10;
  return v;
}

}  // namespace

Price Price::from_usd(double in_per_1m, double out_per_1m) {
  if (in_per_1m < 0 || out_per_1m < 0) throw Error(ErrorKind::ConfigError, "negative price");
  return {std::llround(in_per_1m * 1e6), std::llround(out_per_1m * 1e6)};
}

PriceTable default_prices() {
  return {
      {"gpt-4.1", Price::from_usd(2.00, 8.00)},
      {"gpt-4.1-mini", Price::from_usd(0.40, 1.60)},
      {"gpt-5.1", Price::from_usd(1.25, 10.00)},
  };
}

PriceTable prices_from_json(const nlohmann::json& j) {
  PriceTable out;
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "pricing must be an object of model -> prices");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& p = it.value();
    if (!p.contains("in_per_1m") || !p.contains("out_per_1m")) {
      throw Error(ErrorKind::ConfigError, "pricing for " + it.key() + " needs in_per_1m and out_per_1m");
    }
    out[it.key()] = Price::from_usd(p.at("in_per_1m").get<double>(), p.at("out_per_1m").get<double>());
  }
  return out;
}

nlohmann::json prices_to_json(const PriceTable& prices) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [model, p] : prices) {
    j[model] = {{"in_per_1m", static_cast<double>(p.in_micro_per_1m) / 1e6},
                {"out_per_1m", static_cast<double>(p.out_micro_per_1m) / 1e6}};
  }
  return j;
}

std::string_view stage_display_name(std::string_view s) {
  if (s == stage::query_generation) return "Query generation";
  if (s == stage::query_simplification) return "Query simplification";
  if (s == stage::gui_classification) return "GUI classification";
  if (s == stage::topic_extraction) return "Topic extraction";
  if (s == stage::classification_and_topic) return "GUI class. + topic";
  if (s == stage::relevance_scoring) return "Relevance scoring";
  if (s == stage::frame_pair_idm) return "Frame-pair IDM";
  if (s == stage::planning_split) return "Planning split";
  if (s == stage::grounding_split) return "Grounding split";
  return s;
}

nlohmann::json to_json(const UsageRecord& r) {
  nlohmann::json j = {{"stage", r.stage},
                      {"model", r.model_name},
                      {"calls", r.calls},
                      {"input_tokens", r.input_tokens},
                      {"output_tokens", r.output_tokens},
                      {"status", r.status},
                      {"attempts", r.attempts}};
  if (!r.video_id.empty()) j["video_id"] = r.video_id;
  if (r.item >= 0) j["item"] = r.item;
  return j;
}

UsageRecord usage_from_json(const nlohmann::json& j) {
  UsageRecord r;
  r.stage = j.at("stage").get<std::string>();
  r.model_name = j.at("model").get<std::string>();
  r.calls = j.value("calls", std::int64_t{1});
  r.input_tokens = j.at("input_tokens").get<std::int64_t>();
  r.output_tokens = j.at("output_tokens").get<std::int64_t>();
  r.video_id = j.value("video_id", std::string{});
  r.item = j.value("item", std::int64_t{-1});
  r.status = j.value("status", std::string{"ok"});
  r.attempts = j.value("attempts", 1);
  if (r.calls < 0 || r.input_tokens < 0 || r.output_tokens < 0) {
    throw Error(ErrorKind::InvalidInput, "negative usage in ledger record");
  }
  return r;
}

void Ledger::append(UsageRecord record) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(record));
}

std::vector<UsageRecord> Ledger::snapshot() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t Ledger::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

void Ledger::clear() {
  std::lock_guard lock(mu_);
  records_.clear();
}

void sort_records(std::vector<UsageRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const UsageRecord& a, const UsageRecord& b) {
    auto ra = stage_rank(a.stage), rb = stage_rank(b.stage);
    if (ra != rb) return ra < rb;
    if (a.stage != b.stage) return a.stage < b.stage;
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    return a.item < b.item;
  });
}

std::int64_t estimate_tokens_for_chars(std::int64_t characters) {
  // Nearest integer, halves rounded up.
  return (characters + 2) / 4;
}

std::int64_t estimate_text_tokens(std::string_view text) {
  return estimate_tokens_for_chars(static_cast<std::int64_t>(text::utf8_length(text)));
}

ImageTokenTable::ImageTokenTable() { table_[{1920, 1080}] = 2125; }

void ImageTokenTable::set_override(int width, int height, std::int64_t tokens) {
  if (tokens < 0) throw Error(ErrorKind::ConfigError, "image token override must be >= 0");
  table_[{width, height}] = tokens;
}

std::int64_t ImageTokenTable::tokens(int width, int height) const {
  auto it = table_.find({width, height});
  if (it == table_.end()) {
    throw Error(ErrorKind::UnknownResolution,
                std::to_string(width) + "x" + std::to_string(height) + " has no image token entry");
  }
  return it->second;
}

std::int64_t image_tokens(int width, int height) { return ImageTokenTable{}.tokens(width, height); }

std::int64_t CostReport::total_calls() const {
  std::int64_t n = 0;
  for (const auto& r : rows) n += r.calls;
  return n;
}

std::int64_t CostReport::total_input_tokens() const {
  std::int64_t n = 0;
  for (const auto& r : rows) n += r.input_tokens;
  return n;
}

std::int64_t CostReport::total_output_tokens() const {
  std::int64_t n = 0;
  for (const auto& r : rows) n += r.output_tokens;
  return n;
}

double to_usd(Picodollars p) { return static_cast<double>(p) / static_cast<double>(kPicoPerUsd); }

Picodollars usd_to_pico(double usd) { return std::llround(usd * 1e12); }

std::string format_usd(Picodollars p, int decimals) {
  decimals = std::clamp(decimals, 0, 12);
  std::int64_t unit = pow10(12 - decimals);
  std::int64_t mag = std::llabs(p);
  std::int64_t q = (mag + unit / 2) / unit;
  std::int64_t scale = pow10(decimals);
  std::string out = (p < 0 && q != 0) ? "-" : "";
  out += std::to_string(q / scale);
  if (decimals > 0) {
    std::string frac = std::to_string(q % scale);
    out += "." + std::string(static_cast<std::size_t>(decimals) - frac.size(), '0') + frac;
  }
  return out;
}

Picodollars cost_of(std::int64_t input_tokens, std::int64_t output_tokens, const Price& price) {
  return input_tokens * price.in_micro_per_1m + output_tokens * price.out_micro_per_1m;
}

CostReport cost_of(const std::vector<UsageRecord>& records, const PriceTable& prices) {
  CostReport report;
  for (const auto& r : records) {
    auto price_it = prices.find(r.model_name);
    if (price_it == prices.end()) throw Error(ErrorKind::UnpricedModel, "no price for model '" + r.model_name + "'");
    auto row = std::find_if(report.rows.begin(), report.rows.end(), [&](const CostRow& c) {
      return c.stage == r.stage && c.model_name == r.model_name;
    });
    if (row == report.rows.end()) {
      report.rows.push_back({r.stage, r.model_name, 0, 0, 0, price_it->second, 0});
      row = report.rows.end() - 1;
    }
    row->calls += r.calls;
    row->input_tokens += r.input_tokens;
    row->output_tokens += r.output_tokens;
  }
  for (auto& row : report.rows) {
    row.cost = cost_of(row.input_tokens, row.output_tokens, row.price);
    report.total += row.cost;
  }
  return report;
}

nlohmann::json to_json(const CostReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"stage", r.stage},
                    {"model", r.model_name},
                    {"calls", r.calls},
                    {"input_tokens", r.input_tokens},
                    {"output_tokens", r.output_tokens},
                    {"in_per_1m", static_cast<double>(r.price.in_micro_per_1m) / 1e6},
                    {"out_per_1m", static_cast<double>(r.price.out_micro_per_1m) / 1e6},
                    {"usd", format_usd(r.cost, 6)},
                    {"picodollars", r.cost}});
  }
  return {{"schema_version", 1},
          {"rows", rows},
          {"total_calls", report.total_calls()},
          {"total_input_tokens", report.total_input_tokens()},
          {"total_output_tokens", report.total_output_tokens()},
          {"total_usd", format_usd(report.total, 6)},
          {"total_picodollars", report.total}};
}

std::string format_table(const CostReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %6s %12s %10s %14s %10s\n", "Stage", "Calls", "In tok", "Out tok",
                "Price in/out", "Cost");
  out += line;
  for (const auto& r : report.rows) {
    std::string price = text::format_fixed(static_cast<double>(r.price.in_micro_per_1m) / 1e6, 2) + " / " +
                        text::format_fixed(static_cast<double>(r.price.out_micro_per_1m) / 1e6, 2);
    std::snprintf(line, sizeof line, "%-22s %6lld %12lld %10lld %14s %10s\n",
                  std::string(stage_display_name(r.stage)).c_str(), static_cast<long long>(r.calls),
                  static_cast<long long>(r.input_tokens), static_cast<long long>(r.output_tokens), price.c_str(),
                  ("$" + format_usd(r.cost, 4)).c_str());
    out += line;
  }
  std::snprintf(line, sizeof line, "%-22s %6lld %12lld %10lld %14s %10s\n", "Total",
                static_cast<long long>(report.total_calls()), static_cast<long long>(report.total_input_tokens()),
                static_cast<long long>(report.total_output_tokens()), "", ("$" + format_usd(report.total, 4)).c_str());
  out += line;
  return out;
}

AnnotationProfileParams AnnotationProfileParams::for_regime(Regime regime) {
  AnnotationProfileParams p;
  // About 17K characters per valid frame; 17,072 is the value that reproduces the
  // reference complex-regime token total.
  if (regime == Regime::complex) p.valid_frame_chars = 17'072;
  return p;
}

std::vector<UsageRecord> annotation_profile(Regime regime) {
  return annotation_profile(AnnotationProfileParams::for_regime(regime));
}

std::vector<UsageRecord> annotation_profile(const AnnotationProfileParams& p) {
  if (p.valid_pairs < 0 || p.valid_pairs > p.pairs) throw Error(ErrorKind::InvalidInput, "valid_pairs out of range");
  std::int64_t image = image_tokens(p.width, p.height);
  std::int64_t valid_pair = 2 * image + 2 * estimate_tokens_for_chars(p.valid_frame_chars) + p.static_prompt_tokens;
  std::int64_t invalid_pair =
      2 * image + 2 * estimate_tokens_for_chars(p.invalid_frame_chars) + p.static_prompt_tokens;
  std::int64_t idm_in = p.valid_pairs * valid_pair + (p.pairs - p.valid_pairs) * invalid_pair;
  std::int64_t decomposition_in = p.trajectory_tokens + p.decomposition_static_tokens;

  UsageRecord idm{std::string(stage::frame_pair_idm), p.model_name, p.pairs, idm_in, p.idm_output_tokens};
  UsageRecord planning{std::string(stage::planning_split), p.model_name, 1, decomposition_in,
                       p.planning_output_tokens};
  UsageRecord grounding{std::string(stage::grounding_split), p.model_name, 1, decomposition_in,
                        p.grounding_output_tokens};
  return {idm, planning, grounding};
}

std::vector<UsageRecord> retrieval_profile() {
  return {
      {std::string(stage::query_generation), "gpt-4.1", 1, 109, 10},
      {std::string(stage::query_simplification), "gpt-4.1-mini", 1, 268, 20},
      {std::string(stage::classification_and_topic), "gpt-4.1-mini", 15, 43'380, 525},
      {std::string(stage::relevance_scoring), "gpt-4.1-mini", 1, 436, 25},
  };
}

BenchmarkReport benchmark_total(std::int64_t tasks, std::int64_t covered, double two_video_fraction,
                                double per_task_usd, double per_video_usd) {
  if (tasks < 0 || covered < 0 || covered > tasks) throw Error(ErrorKind::InvalidInput, "need 0 <= covered <= tasks");
  if (two_video_fraction < 0 || two_video_fraction > 1) {
    throw Error(ErrorKind::InvalidInput, "two-video fraction must be in [0, 1]");
  }
  BenchmarkReport r;
  r.tasks = tasks;
  r.covered = covered;
  r.videos = std::llround(static_cast<double>(covered) * (1.0 + two_video_fraction));
  r.retrieval = tasks * usd_to_pico(per_task_usd);
  r.annotation = r.videos * usd_to_pico(per_video_usd);
  r.total = r.retrieval + r.annotation;
  return r;
}

nlohmann::json to_json(const BenchmarkReport& r) {
  return {{"schema_version", 1},
          {"tasks", r.tasks},
          {"covered", r.covered},
          {"videos", r.videos},
          {"retrieval_usd", format_usd(r.retrieval, 4)},
          {"annotation_usd", format_usd(r.annotation, 4)},
          {"total_usd", format_usd(r.total, 4)}};
}

std::string format_table(const BenchmarkReport& r) {
  std::string out;
  out += "Retrieval  (" + std::to_string(r.tasks) + " tasks)   $" + format_usd(r.retrieval, 2) + "\n";
  out += "Annotation (" + std::to_string(r.videos) + " videos)  $" + format_usd(r.annotation, 2) + "\n";
  out += "Total                     $" + format_usd(r.total, 2) + "\n";
  return out;
}

}  // namespace guide::cost
