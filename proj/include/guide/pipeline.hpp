#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guide/annotation.hpp"
#include "guide/cost.hpp"
#include "guide/knowledge.hpp"
#include "guide/log.hpp"
#include "guide/perception.hpp"
#include "guide/provider.hpp"
#include "guide/retrieval.hpp"

// End-to-end orchestration over a task workspace:
// retrieve -> perceive -> annotate -> decompose.
namespace guide::pipeline {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

struct ChatConfig {
  std::string backend = "fixture";  // fixture | live | record
  fs::path fixture;                  // replay file (fixture) or output file (record)
  std::string endpoint;
  std::string key_env;
  std::string model = "gpt-5.1";
  double temperature = 1.0;
  int retry_attempts = 3;
  std::int64_t base_backoff_ms = 500;
  int max_in_flight = 4;
  double rate_per_second = 0;
};

struct SearchConfig {
  std::string backend = "fixture";  // fixture | live
  fs::path dir;
  std::string binary = "yt-dlp";
};

struct TranscriptionConfig {
  std::string backend = "none";  // none | fixture | command
  fs::path dir;
  std::vector<std::string> argv;
};

struct ElementsConfig {
  std::string backend = "fixture";  // fixture | command | none
  fs::path dir;
  std::vector<std::string> argv;
};

struct FramesConfig {
  std::string backend = "fixture";  // fixture | live
  fs::path dir;
  double fps = 1.0;
  std::string ffmpeg = "ffmpeg";
  std::string ytdlp = "yt-dlp";
};

struct PipelineSettings {
  std::size_t top_k = retrieval::kDefaultTopK;
  std::size_t grounding_k = knowledge::kDefaultElementK;
  annotation::Pairing pairing = annotation::Pairing::per_transition;
  std::int64_t fg_threshold = 10'000;
  int max_candidates = 50;
  int max_in_flight = 4;
  int video_parallelism = 2;
  std::string query_model = "gpt-4.1";
  std::string mini_model = "gpt-4.1-mini";
};

struct Config {
  ChatConfig chat;
  SearchConfig search;
  TranscriptionConfig transcription;
  ElementsConfig elements;
  FramesConfig frames;
  PipelineSettings pipeline;
  cost::PriceTable prices = cost::default_prices();
};

// Relative paths resolve against base_dir. Throws Error(ConfigError).
Config config_from_json(const nlohmann::json& j, const fs::path& base_dir = {});
Config load_config(const fs::path& file);
// Normalized form with every default filled in; hashed for resume decisions.
nlohmann::json to_json(const Config& c);
std::string config_hash(const Config& c, const retrieval::TaskSpec& task);

enum class Stage { retrieve, perceive, annotate, decompose };
inline constexpr Stage kStages[] = {Stage::retrieve, Stage::perceive, Stage::annotate, Stage::decompose};

std::string_view to_string(Stage s);
// Throws Error(ConfigError).
Stage stage_from_string(std::string_view s);
// Ledger stage labels produced by a pipeline stage.
std::vector<std::string> ledger_stages(Stage s);

struct Workspace {
  fs::path root;

  fs::path task() const { return root / "task.json"; }
  fs::path config() const { return root / "config.json"; }
  fs::path candidates() const { return root / "candidates.json"; }
  fs::path retrieval() const { return root / "retrieval.json"; }
  fs::path transcripts() const { return root / "transcripts"; }
  fs::path frames() const { return root / "frames"; }
  fs::path keyframes() const { return root / "keyframes"; }
  fs::path elements() const { return root / "elements"; }
  fs::path annotations() const { return root / "annotations.jsonl"; }
  fs::path knowledge() const { return root / "knowledge.json"; }
  fs::path ledger() const { return root / "ledger.jsonl"; }
  fs::path warnings() const { return root / "warnings.jsonl"; }
  fs::path manifest() const { return root / "run_manifest.json"; }
};

struct StageRecord {
  bool done = false;
  std::string config_hash;
  int runs = 0;
};

struct Manifest {
  std::string task_id;
  std::string config_hash;
  std::map<std::string, std::string> backends;
  std::map<std::string, StageRecord> stages;
  std::string status = "pending";  // pending | running | completed | uncovered

  bool stage_done(Stage s, const std::string& hash) const;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
// Empty manifest when the file does not exist.
Manifest load_manifest(const Workspace& ws);

struct Providers {
  std::shared_ptr<provider::ChatModel> chat;
  std::shared_ptr<provider::RecordingChatModel> recorder;  // set for the record backend
  std::unique_ptr<provider::VideoSource> search;
  std::unique_ptr<provider::FrameExtractor> frames;
  std::unique_ptr<provider::Transcriber> transcriber;  // null when backend is none
  std::unique_ptr<provider::ElementDetector> elements;  // null when backend is none
  std::unique_ptr<cost::Ledger> ledger = std::make_unique<cost::Ledger>();
  std::unique_ptr<provider::ModelGateway> gateway;

  std::map<std::string, std::string> backend_names() const;
};

// `chat_override` replaces the configured chat backend (used by fixture
// generators and tests). Throws Error(ConfigError) for unusable settings.
Providers make_providers(const Config& config, std::shared_ptr<provider::ChatModel> chat_override = nullptr);

struct StageOutcome {
  Stage stage = Stage::retrieve;
  bool skipped = false;
  std::size_t warnings = 0;
};

struct RunOutcome {
  std::string status;
  std::vector<StageOutcome> stages;
  std::size_t entries = 0;
};

class Runner {
 public:
  // Writes task.json and the normalized config.json into the workspace.
  Runner(Config config, Workspace ws, Providers& providers, retrieval::TaskSpec task);

  // Skips a stage already completed under the same config hash unless forced.
  // Throws Error(MissingArtifact) when a prior stage's output is missing.
  StageOutcome run_stage(Stage s, bool force = false);
  RunOutcome run_all(bool force = false);

  const Manifest& manifest() const { return manifest_; }

 private:
  void perceive();
  void retrieve();
  void annotate();
  void decompose();
  std::vector<retrieval::ScoredCandidate> selected() const;
  void require(const fs::path& artifact, Stage producer) const;
  void save_manifest();
  void flush_ledger(Stage s);
  void flush_warnings(Stage s);

  Config config_;
  Workspace ws_;
  Providers& providers_;
  retrieval::TaskSpec task_;
  std::string hash_;
  Manifest manifest_;
  std::unique_ptr<WarningSink> sink_ = std::make_unique<WarningSink>();
};

// Reads the task for an existing workspace. Throws Error(MissingArtifact).
retrieval::TaskSpec load_task(const Workspace& ws);

// Environment hook for crash tests: when GUIDE_FAULT_ABORT_STAGE names a stage,
// the process exits with kFaultExitCode after that stage's model work and
// before any of its artifacts are written.
inline constexpr int kFaultExitCode = 86;

}  // namespace guide::pipeline
