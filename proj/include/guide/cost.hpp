#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

// Token estimation and dollar accounting. Money is carried as integer
// picodollars (1e-12 USD) so sums are exact; rounding happens only when a
// figure is displayed.
namespace guide::cost {

using Picodollars = std::int64_t;

inline constexpr Picodollars kPicoPerUsd = 1'000'000'000'000;

// Prices are stored in micro-dollars per million tokens, so
// tokens * price is already in picodollars.
struct Price {
  std::int64_t in_micro_per_1m = 0;
  std::int64_t out_micro_per_1m = 0;

  static Price from_usd(double in_per_1m, double out_per_1m);
  bool operator==(const Price&) const = default;
};

using PriceTable = std::map<std::string, Price, std::less<>>;

// GPT-4.1, GPT-4.1-mini and GPT-5.1 list prices.
PriceTable default_prices();
PriceTable prices_from_json(const nlohmann::json& j);
nlohmann::json prices_to_json(const PriceTable& prices);

namespace stage {
inline constexpr std::string_view query_generation = "query_generation";
inline constexpr std::string_view query_simplification = "query_simplification";
inline constexpr std::string_view gui_classification = "gui_classification";
inline constexpr std::string_view topic_extraction = "topic_extraction";
inline constexpr std::string_view classification_and_topic = "gui_classification_topic";
inline constexpr std::string_view relevance_scoring = "relevance_scoring";
inline constexpr std::string_view frame_pair_idm = "frame_pair_idm";
inline constexpr std::string_view planning_split = "planning_split";
inline constexpr std::string_view grounding_split = "grounding_split";
}  // namespace stage

std::string_view stage_display_name(std::string_view stage);

struct UsageRecord {
  std::string stage;
  std::string model_name;
  std::int64_t calls = 1;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  // Accounting context. item is the pair or candidate index within the stage, -1 if none.
  std::string video_id;
  std::int64_t item = -1;
  std::string status = "ok";
  int attempts = 1;

  bool operator==(const UsageRecord&) const = default;
};

nlohmann::json to_json(const UsageRecord& r);
UsageRecord usage_from_json(const nlohmann::json& j);

// Append-only, internally synchronized usage sink shared by all gateways.
class Ledger {
 public:
  void append(UsageRecord record);
  std::vector<UsageRecord> snapshot() const;
  std::size_t size() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<UsageRecord> records_;
};

// Orders records by (stage order of first appearance, video_id, item) so ledgers
// written by concurrent workers serialize identically.
void sort_records(std::vector<UsageRecord>& records);

std::int64_t estimate_text_tokens(std::string_view text);
std::int64_t estimate_tokens_for_chars(std::int64_t characters);

class ImageTokenTable {
 public:
  ImageTokenTable();
  void set_override(int width, int height, std::int64_t tokens);
  // Throws Error(UnknownResolution) when the size has no entry.
  std::int64_t tokens(int width, int height) const;

 private:
  std::map<std::pair<int, int>, std::int64_t> table_;
};

std::int64_t image_tokens(int width, int height);

struct CostRow {
  std::string stage;
  std::string model_name;
  std::int64_t calls = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  Price price;
  Picodollars cost = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
  Picodollars total = 0;

  std::int64_t total_calls() const;
  std::int64_t total_input_tokens() const;
  std::int64_t total_output_tokens() const;
};

double to_usd(Picodollars p);
Picodollars usd_to_pico(double usd);
// Rounds half away from zero at the requested number of decimals.
std::string format_usd(Picodollars p, int decimals = 4);

Picodollars cost_of(std::int64_t input_tokens, std::int64_t output_tokens, const Price& price);
// Rows aggregate records sharing (stage, model), in order of first appearance.
// Throws Error(UnpricedModel) for a model missing from the table.
CostReport cost_of(const std::vector<UsageRecord>& records, const PriceTable& prices);

nlohmann::json to_json(const CostReport& report);
std::string format_table(const CostReport& report);

enum class Regime { typical, complex };

struct AnnotationProfileParams {
  std::string model_name = "gpt-5.1";
  int pairs = 15;
  int valid_pairs = 11;
  int width = 1920;
  int height = 1080;
  std::int64_t valid_frame_chars = 10'000;
  std::int64_t invalid_frame_chars = 100;
  std::int64_t static_prompt_tokens = 550;
  std::int64_t idm_output_tokens = 6'350;
  std::int64_t trajectory_tokens = 2'728;
  std::int64_t decomposition_static_tokens = 450;
  std::int64_t planning_output_tokens = 546;
  std::int64_t grounding_output_tokens = 1'650;

  static AnnotationProfileParams for_regime(Regime regime);
};

std::vector<UsageRecord> annotation_profile(Regime regime);
std::vector<UsageRecord> annotation_profile(const AnnotationProfileParams& params);
std::vector<UsageRecord> retrieval_profile();

struct BenchmarkReport {
  std::int64_t tasks = 0;
  std::int64_t covered = 0;
  std::int64_t videos = 0;
  Picodollars retrieval = 0;
  Picodollars annotation = 0;
  Picodollars total = 0;
};

BenchmarkReport benchmark_total(std::int64_t tasks, std::int64_t covered, double two_video_fraction,
                                double per_task_usd, double per_video_usd);
nlohmann::json to_json(const BenchmarkReport& report);
std::string format_table(const BenchmarkReport& report);

}  // namespace guide::cost
