#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guide/cost.hpp"
#include "guide/types.hpp"

// Contracts for every external capability plus the backends that satisfy them:
// live HTTP/subprocess implementations and deterministic fixture replay.
namespace guide::provider {

namespace fs = std::filesystem;

struct ContentPart {
  enum class Kind { text, image };
  Kind kind = Kind::text;
  std::string text;
  ImageRef image;

  static ContentPart of_text(std::string t) { return {Kind::text, std::move(t), {}}; }
  static ContentPart of_image(ImageRef img) { return {Kind::image, {}, std::move(img)}; }
};

struct Message {
  std::string role;
  std::vector<ContentPart> content;
};

struct ModelRequest {
  std::string model_name;
  std::vector<Message> messages;
  double temperature = 1.0;
  int max_output_tokens = 4096;
  // Accounting labels. They travel with the request but never reach the model
  // and are not part of the fixture key.
  std::string stage;
  std::string video_id;
  std::int64_t item = -1;

  std::size_t image_count() const;
};

struct Usage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
};

struct ModelResponse {
  std::string text;
  Usage usage;
  std::int64_t latency_ms = 0;
};

// Canonical form used for hashing: model, sampling settings and message content,
// with images replaced by the sha256 of their bytes.
nlohmann::json canonical_request(const ModelRequest& req);
std::string request_key(const ModelRequest& req);
// Human-readable rendering with images shown by file name; used for prompt snapshots.
std::string render_request(const ModelRequest& req);

class ChatModel {
 public:
  virtual ~ChatModel() = default;
  virtual ModelResponse chat(const ModelRequest& req) = 0;
  virtual std::string backend_name() const = 0;
};

// Replays responses recorded under request_key(). File layout:
// {"schema_version":1,"entries":{"<key>":{"text":..., "usage":{...}} | {"error":{...}}}}
class FixtureChatModel : public ChatModel {
 public:
  explicit FixtureChatModel(const fs::path& file);
  explicit FixtureChatModel(nlohmann::json entries);
  ModelResponse chat(const ModelRequest& req) override;
  std::string backend_name() const override { return "fixture"; }
  std::size_t size() const { return entries_.size(); }

 private:
  nlohmann::json entries_;
};

// Forwards to an inner model and remembers every successful exchange so the
// run can be replayed later by FixtureChatModel.
class RecordingChatModel : public ChatModel {
 public:
  explicit RecordingChatModel(std::shared_ptr<ChatModel> inner);
  ModelResponse chat(const ModelRequest& req) override;
  std::string backend_name() const override { return "record:" + inner_->backend_name(); }
  nlohmann::json fixture_json() const;
  void save(const fs::path& file) const;

 private:
  std::shared_ptr<ChatModel> inner_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> entries_;
};

// OpenAI-compatible chat-completions endpoint. Images are sent inline as
// base64 data URLs. The key is read from the named environment variable.
class HttpChatModel : public ChatModel {
 public:
  struct Options {
    std::string endpoint;  // full URL, e.g. https://api.openai.com/v1/chat/completions
    std::string key_env;   // empty means no Authorization header
    int timeout_s = 120;
  };
  explicit HttpChatModel(Options options);
  ModelResponse chat(const ModelRequest& req) override;
  std::string backend_name() const override { return "http"; }

  // Exposed for tests.
  static nlohmann::json wire_body(const ModelRequest& req);

 private:
  Options options_;
  std::string scheme_host_;
  std::string path_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

struct RetryPolicy {
  int attempts = 3;
  std::int64_t base_backoff_ms = 500;
};

// Token bucket; per_second <= 0 disables limiting.
class TokenBucket {
 public:
  TokenBucket(double per_second, double burst, Sleeper sleeper = real_sleeper());
  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  Sleeper sleeper_;
  std::mutex mu_;
};

struct GatewayOptions {
  RetryPolicy retry;
  int max_in_flight = 4;
  double rate_per_second = 0;
  double rate_burst = 4;
  Sleeper sleeper = real_sleeper();
};

// The one entry point pipeline code uses for model calls: bounded retries on
// transient failures, rate limiting, an in-flight cap, and exactly one
// UsageRecord per logical call whether it succeeds or not.
class ModelGateway {
 public:
  ModelGateway(std::shared_ptr<ChatModel> backend, GatewayOptions options, cost::Ledger* ledger);
  ModelResponse chat(const ModelRequest& req);

  const ChatModel& backend() const { return *backend_; }
  std::int64_t attempts_made() const { return attempts_.load(); }

 private:
  std::shared_ptr<ChatModel> backend_;
  GatewayOptions options_;
  cost::Ledger* ledger_;
  TokenBucket bucket_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<std::int64_t> attempts_{0};
};

// Video search plus subtitle download.
class VideoSource {
 public:
  virtual ~VideoSource() = default;
  virtual std::vector<VideoCandidate> search(const std::string& query, int max_results) = 0;
  // Raw VTT/SRT text, or nullopt when the video has no track.
  virtual std::optional<std::string> fetch_subtitles(const VideoCandidate& video) = 0;
  virtual std::string backend_name() const = 0;
};

// dir/search.json: {"queries": {"<query>": [records...]}, "fail": ["<query>", ...]}
// dir/subtitles/<id>.vtt or .srt
class FixtureVideoSource : public VideoSource {
 public:
  explicit FixtureVideoSource(fs::path dir);
  std::vector<VideoCandidate> search(const std::string& query, int max_results) override;
  std::optional<std::string> fetch_subtitles(const VideoCandidate& video) override;
  std::string backend_name() const override { return "fixture"; }

 private:
  fs::path dir_;
  nlohmann::json index_;
};

class YtDlpVideoSource : public VideoSource {
 public:
  struct Options {
    std::string binary = "yt-dlp";
    std::string sub_langs = "en.*,en";
    fs::path work_dir = fs::temp_directory_path() / "guide-ytdlp";
  };
  explicit YtDlpVideoSource(Options options);
  std::vector<VideoCandidate> search(const std::string& query, int max_results) override;
  std::optional<std::string> fetch_subtitles(const VideoCandidate& video) override;
  std::string backend_name() const override { return "yt-dlp"; }

  // Parses one line of `--dump-json --flat-playlist` output.
  static std::optional<VideoCandidate> parse_record(const nlohmann::json& j);

 private:
  Options options_;
};

// Decodes a video into numbered PNG frames plus index.json
// ([{frame_index, timestamp_ms, file, width, height}]).
class FrameExtractor {
 public:
  virtual ~FrameExtractor() = default;
  virtual std::vector<FrameRef> extract(const VideoCandidate& video, const fs::path& out_dir, double fps) = 0;
  virtual std::string backend_name() const = 0;
};

std::vector<FrameRef> read_frame_index(const fs::path& dir);
void write_frame_index(const fs::path& dir, const std::vector<FrameRef>& frames);

// Frames already on disk under root/<video_id>/ with an index.json.
class FixtureFrameExtractor : public FrameExtractor {
 public:
  explicit FixtureFrameExtractor(fs::path root);
  std::vector<FrameRef> extract(const VideoCandidate& video, const fs::path& out_dir, double fps) override;
  std::string backend_name() const override { return "fixture"; }

 private:
  fs::path root_;
};

// Downloads with yt-dlp and samples frames with ffmpeg.
class FfmpegFrameExtractor : public FrameExtractor {
 public:
  struct Options {
    std::string ytdlp = "yt-dlp";
    std::string ffmpeg = "ffmpeg";
  };
  explicit FfmpegFrameExtractor(Options options);
  std::vector<FrameRef> extract(const VideoCandidate& video, const fs::path& out_dir, double fps) override;
  std::string backend_name() const override { return "ffmpeg"; }

 private:
  Options options_;
};

// Speech-to-text returning a WebVTT document with word-level timing.
class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual std::string transcribe(const VideoCandidate& video, const fs::path& work_dir) = 0;
  virtual std::string backend_name() const = 0;
};

class FixtureTranscriber : public Transcriber {
 public:
  explicit FixtureTranscriber(fs::path root);
  std::string transcribe(const VideoCandidate& video, const fs::path& work_dir) override;
  std::string backend_name() const override { return "fixture"; }

 private:
  fs::path root_;
};

// Runs a command template; placeholders {url}, {video_id} and {out_dir} are
// substituted per argument. The first .vtt file written to out_dir is returned.
class CommandTranscriber : public Transcriber {
 public:
  explicit CommandTranscriber(std::vector<std::string> argv_template);
  std::string transcribe(const VideoCandidate& video, const fs::path& work_dir) override;
  std::string backend_name() const override { return "command"; }

 private:
  std::vector<std::string> template_;
};

// UI element detection for one keyframe. Returns the detector's raw JSON; the
// perception module validates it.
class ElementDetector {
 public:
  virtual ~ElementDetector() = default;
  virtual std::string detect(const std::string& video_id, const ImageRef& image) = 0;
  virtual std::string backend_name() const = 0;
};

// root/<video_id>/<image stem>.json
class FixtureElementDetector : public ElementDetector {
 public:
  explicit FixtureElementDetector(fs::path root);
  std::string detect(const std::string& video_id, const ImageRef& image) override;
  std::string backend_name() const override { return "fixture"; }

 private:
  fs::path root_;
};

// Command template with {image}; the command prints the element JSON on stdout.
class CommandElementDetector : public ElementDetector {
 public:
  explicit CommandElementDetector(std::vector<std::string> argv_template);
  std::string detect(const std::string& video_id, const ImageRef& image) override;
  std::string backend_name() const override { return "command"; }

 private:
  std::vector<std::string> template_;
};

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs argv without a shell and captures both streams. Throws IoError when the
// program cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, const fs::path& cwd = {});

std::vector<std::string> substitute(const std::vector<std::string>& argv_template,
                                    const std::map<std::string, std::string>& values);

}  // namespace guide::provider
