#include <algorithm>
#include <cstdlib>

#include "guide/error.hpp"
#include "guide/io.hpp"
#include "guide/pipeline.hpp"

namespace guide::pipeline {

namespace {

const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return empty;
  if (!it->is_object()) throw Error(ErrorKind::ConfigError, std::string("'") + key + "' must be an object");
  return *it;
}

template <typename T>
T get(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::ConfigError, std::string("config field '") + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : (base / path).lexically_normal();
}

void one_of(const std::string& value, std::initializer_list<const char*> allowed, const char* what) {
  for (const char* a : allowed)
    if (value == a) return;
  throw Error(ErrorKind::ConfigError, std::string("unknown ") + what + " backend '" + value + "'");
}

void need_dir(const std::string& backend, const fs::path& dir, const char* what) {
  if (backend == "fixture" && dir.empty()) {
    throw Error(ErrorKind::ConfigError, std::string(what) + " fixture backend needs a 'dir'");
  }
}

std::string to_string_path(const fs::path& p) { return p.empty() ? std::string{} : p.string(); }

}  // namespace

Config config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
  Config c;
  const auto& providers = section(j, "providers");

  const auto& chat = section(providers, "chat");
  for (const char* secret : {"api_key", "key", "token", "password"}) {
    if (chat.contains(secret)) {
      throw Error(ErrorKind::ConfigError,
                  std::string("credentials must not be inline (found '") + secret + "'); name an env var in key_env");
    }
  }
  c.chat.backend = get<std::string>(chat, "backend", c.chat.backend);
  one_of(c.chat.backend, {"fixture", "live", "record"}, "chat");
  c.chat.fixture = resolve(base_dir, get<std::string>(chat, "fixture", ""));
  c.chat.endpoint = get<std::string>(chat, "endpoint", "");
  c.chat.key_env = get<std::string>(chat, "key_env", "");
  c.chat.model = get<std::string>(chat, "model", c.chat.model);
  c.chat.temperature = get<double>(chat, "temperature", c.chat.temperature);
  const auto& retry = section(chat, "retry");
  c.chat.retry_attempts = get<int>(retry, "attempts", c.chat.retry_attempts);
  c.chat.base_backoff_ms = get<std::int64_t>(retry, "base_backoff_ms", c.chat.base_backoff_ms);
  c.chat.max_in_flight = get<int>(chat, "max_in_flight", c.chat.max_in_flight);
  c.chat.rate_per_second = get<double>(chat, "rate_per_second", c.chat.rate_per_second);
  if (c.chat.retry_attempts < 1) throw Error(ErrorKind::ConfigError, "retry.attempts must be >= 1");
  if (c.chat.max_in_flight < 1) throw Error(ErrorKind::ConfigError, "chat.max_in_flight must be >= 1");
  if (c.chat.backend == "fixture" && c.chat.fixture.empty()) {
    throw Error(ErrorKind::ConfigError, "chat fixture backend needs a 'fixture' file");
  }
  if (c.chat.backend != "fixture" && c.chat.endpoint.empty()) {
    throw Error(ErrorKind::ConfigError, "chat " + c.chat.backend + " backend needs an 'endpoint'");
  }

  const auto& search = section(providers, "search");
  c.search.backend = get<std::string>(search, "backend", c.search.backend);
  one_of(c.search.backend, {"fixture", "live"}, "search");
  c.search.dir = resolve(base_dir, get<std::string>(search, "dir", ""));
  c.search.binary = get<std::string>(search, "binary", c.search.binary);
  need_dir(c.search.backend, c.search.dir, "search");

  const auto& tr = section(providers, "transcription");
  c.transcription.backend = get<std::string>(tr, "backend", c.transcription.backend);
  one_of(c.transcription.backend, {"none", "fixture", "command"}, "transcription");
  c.transcription.dir = resolve(base_dir, get<std::string>(tr, "dir", ""));
  c.transcription.argv = get<std::vector<std::string>>(tr, "argv", {});
  need_dir(c.transcription.backend, c.transcription.dir, "transcription");
  if (c.transcription.backend == "command" && c.transcription.argv.empty()) {
    throw Error(ErrorKind::ConfigError, "transcription command backend needs 'argv'");
  }

  const auto& el = section(providers, "elements");
  c.elements.backend = get<std::string>(el, "backend", c.elements.backend);
  one_of(c.elements.backend, {"none", "fixture", "command"}, "elements");
  c.elements.dir = resolve(base_dir, get<std::string>(el, "dir", ""));
  c.elements.argv = get<std::vector<std::string>>(el, "argv", {});
  need_dir(c.elements.backend, c.elements.dir, "elements");
  if (c.elements.backend == "command" && c.elements.argv.empty()) {
    throw Error(ErrorKind::ConfigError, "elements command backend needs 'argv'");
  }

  const auto& fr = section(providers, "frames");
  c.frames.backend = get<std::string>(fr, "backend", c.frames.backend);
  one_of(c.frames.backend, {"fixture", "live"}, "frames");
  c.frames.dir = resolve(base_dir, get<std::string>(fr, "dir", ""));
  c.frames.fps = get<double>(fr, "fps", c.frames.fps);
  c.frames.ffmpeg = get<std::string>(fr, "ffmpeg", c.frames.ffmpeg);
  c.frames.ytdlp = get<std::string>(fr, "ytdlp", c.frames.ytdlp);
  need_dir(c.frames.backend, c.frames.dir, "frames");
  if (c.frames.fps <= 0) throw Error(ErrorKind::ConfigError, "frames.fps must be positive");

  const auto& p = section(j, "pipeline");
  c.pipeline.top_k = get<std::size_t>(p, "top_k", c.pipeline.top_k);
  c.pipeline.grounding_k = get<std::size_t>(p, "grounding_k", c.pipeline.grounding_k);
  c.pipeline.pairing = annotation::pairing_from_string(get<std::string>(p, "pairing", "per_transition"));
  c.pipeline.fg_threshold = get<std::int64_t>(p, "fg_threshold", c.pipeline.fg_threshold);
  c.pipeline.max_candidates = get<int>(p, "max_candidates", c.pipeline.max_candidates);
  c.pipeline.max_in_flight = get<int>(p, "max_in_flight", c.pipeline.max_in_flight);
  c.pipeline.video_parallelism = get<int>(p, "video_parallelism", c.pipeline.video_parallelism);
  c.pipeline.query_model = get<std::string>(p, "query_model", c.pipeline.query_model);
  c.pipeline.mini_model = get<std::string>(p, "mini_model", c.pipeline.mini_model);
  if (c.pipeline.max_candidates < 1) throw Error(ErrorKind::ConfigError, "max_candidates must be >= 1");
  if (c.pipeline.max_in_flight < 1 || c.pipeline.video_parallelism < 1) {
    throw Error(ErrorKind::ConfigError, "max_in_flight and video_parallelism must be >= 1");
  }
  if (c.pipeline.fg_threshold < 0) throw Error(ErrorKind::ConfigError, "fg_threshold must be >= 0");

  if (j.contains("pricing") && !j["pricing"].is_null()) {
    for (auto& [model, price] : cost::prices_from_json(j["pricing"])) c.prices[model] = price;
  }
  return c;
}

Config load_config(const fs::path& file) {
  if (!fs::exists(file)) throw Error(ErrorKind::ConfigError, "config file not found: " + file.string());
  nlohmann::json j = nlohmann::json::parse(io::read_file(file), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::ConfigError, "config is not valid JSON: " + file.string());
  return config_from_json(j, fs::absolute(file).parent_path());
}

nlohmann::json to_json(const Config& c) {
  return {
      {"schema_version", kSchemaVersion},
      {"providers",
       {{"chat",
         {{"backend", c.chat.backend},
          {"fixture", to_string_path(c.chat.fixture)},
          {"endpoint", c.chat.endpoint},
          {"key_env", c.chat.key_env},
          {"model", c.chat.model},
          {"temperature", c.chat.temperature},
          {"retry", {{"attempts", c.chat.retry_attempts}, {"base_backoff_ms", c.chat.base_backoff_ms}}},
          {"max_in_flight", c.chat.max_in_flight},
          {"rate_per_second", c.chat.rate_per_second}}},
        {"search", {{"backend", c.search.backend}, {"dir", to_string_path(c.search.dir)}, {"binary", c.search.binary}}},
        {"transcription",
         {{"backend", c.transcription.backend},
          {"dir", to_string_path(c.transcription.dir)},
          {"argv", c.transcription.argv}}},
        {"elements",
         {{"backend", c.elements.backend}, {"dir", to_string_path(c.elements.dir)}, {"argv", c.elements.argv}}},
        {"frames",
         {{"backend", c.frames.backend},
          {"dir", to_string_path(c.frames.dir)},
          {"fps", c.frames.fps},
          {"ffmpeg", c.frames.ffmpeg},
          {"ytdlp", c.frames.ytdlp}}}}},
      {"pipeline",
       {{"top_k", c.pipeline.top_k},
        {"grounding_k", c.pipeline.grounding_k},
        {"pairing", annotation::to_string(c.pipeline.pairing)},
        {"fg_threshold", c.pipeline.fg_threshold},
        {"max_candidates", c.pipeline.max_candidates},
        {"max_in_flight", c.pipeline.max_in_flight},
        {"video_parallelism", c.pipeline.video_parallelism},
        {"query_model", c.pipeline.query_model},
        {"mini_model", c.pipeline.mini_model}}},
      {"pricing", cost::prices_to_json(c.prices)}};
}

std::string config_hash(const Config& c, const retrieval::TaskSpec& task) {
  nlohmann::json j = to_json(c);
  // Concurrency and pacing do not change results.
  j["providers"]["chat"].erase("max_in_flight");
  j["providers"]["chat"].erase("rate_per_second");
  j["pipeline"].erase("max_in_flight");
  j["pipeline"].erase("video_parallelism");
  return io::sha256_hex(j.dump() + "\n" + retrieval::to_json(task).dump());
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::retrieve: return "retrieve";
    case Stage::perceive: return "perceive";
    case Stage::annotate: return "annotate";
    case Stage::decompose: return "decompose";
  }
  return "retrieve";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : kStages)
    if (to_string(st) == s) return st;
  throw Error(ErrorKind::ConfigError, "unknown stage '" + std::string(s) + "'");
}

std::vector<std::string> ledger_stages(Stage s) {
  using namespace cost::stage;
  switch (s) {
    case Stage::retrieve:
      return {std::string(query_generation), std::string(query_simplification), std::string(gui_classification),
              std::string(topic_extraction), std::string(classification_and_topic), std::string(relevance_scoring)};
    case Stage::perceive: return {};
    case Stage::annotate: return {std::string(frame_pair_idm)};
    case Stage::decompose: return {std::string(planning_split), std::string(grounding_split)};
  }
  return {};
}

bool Manifest::stage_done(Stage s, const std::string& hash) const {
  auto it = stages.find(std::string(to_string(s)));
  return it != stages.end() && it->second.done && it->second.config_hash == hash;
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [name, r] : m.stages) stages[name] = {{"done", r.done}, {"config_hash", r.config_hash}, {"runs", r.runs}};
  return {{"schema_version", kSchemaVersion},
          {"task_id", m.task_id},
          {"config_hash", m.config_hash},
          {"backends", m.backends},
          {"stages", stages},
          {"status", m.status}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.task_id = j.value("task_id", std::string{});
    m.config_hash = j.value("config_hash", std::string{});
    m.backends = j.value("backends", std::map<std::string, std::string>{});
    m.status = j.value("status", std::string("pending"));
    if (j.contains("stages")) {
      for (const auto& [name, r] : j["stages"].items()) {
        m.stages[name] = {r.value("done", false), r.value("config_hash", std::string{}), r.value("runs", 0)};
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed run manifest: ") + e.what());
  }
}

Manifest load_manifest(const Workspace& ws) {
  if (!fs::exists(ws.manifest())) return {};
  return manifest_from_json(io::read_json(ws.manifest()));
}

retrieval::TaskSpec load_task(const Workspace& ws) {
  if (!fs::exists(ws.task())) {
    throw Error(ErrorKind::MissingArtifact, "workspace has no task.json (run 'guide run' or 'guide retrieve' first)");
  }
  return retrieval::task_from_json(io::read_json(ws.task()));
}

std::map<std::string, std::string> Providers::backend_names() const {
  std::map<std::string, std::string> out;
  if (chat) out["chat"] = chat->backend_name();
  if (search) out["search"] = search->backend_name();
  if (frames) out["frames"] = frames->backend_name();
  out["transcription"] = transcriber ? transcriber->backend_name() : "none";
  out["elements"] = elements ? elements->backend_name() : "none";
  return out;
}

Providers make_providers(const Config& config, std::shared_ptr<provider::ChatModel> chat_override) {
  Providers p;
  if (chat_override) {
    p.chat = std::move(chat_override);
  } else if (config.chat.backend == "fixture") {
    if (!fs::exists(config.chat.fixture)) {
      throw Error(ErrorKind::ConfigError, "chat fixture not found: " + config.chat.fixture.string());
    }
    p.chat = std::make_shared<provider::FixtureChatModel>(config.chat.fixture);
  } else {
    auto http = std::make_shared<provider::HttpChatModel>(
        provider::HttpChatModel::Options{config.chat.endpoint, config.chat.key_env});
    if (!config.chat.key_env.empty() && !std::getenv(config.chat.key_env.c_str())) {
      throw Error(ErrorKind::ConfigError, "environment variable " + config.chat.key_env + " is not set");
    }
    if (config.chat.backend == "record") {
      p.recorder = std::make_shared<provider::RecordingChatModel>(http);
      p.chat = p.recorder;
    } else {
      p.chat = http;
    }
  }

  if (config.search.backend == "fixture") {
    p.search = std::make_unique<provider::FixtureVideoSource>(config.search.dir);
  } else {
    provider::YtDlpVideoSource::Options o;
    o.binary = config.search.binary;
    p.search = std::make_unique<provider::YtDlpVideoSource>(o);
  }

  if (config.frames.backend == "fixture") {
    p.frames = std::make_unique<provider::FixtureFrameExtractor>(config.frames.dir);
  } else {
    p.frames = std::make_unique<provider::FfmpegFrameExtractor>(
        provider::FfmpegFrameExtractor::Options{config.frames.ytdlp, config.frames.ffmpeg});
  }

  if (config.transcription.backend == "fixture") {
    p.transcriber = std::make_unique<provider::FixtureTranscriber>(config.transcription.dir);
  } else if (config.transcription.backend == "command") {
    p.transcriber = std::make_unique<provider::CommandTranscriber>(config.transcription.argv);
  }

  if (config.elements.backend == "fixture") {
    p.elements = std::make_unique<provider::FixtureElementDetector>(config.elements.dir);
  } else if (config.elements.backend == "command") {
    p.elements = std::make_unique<provider::CommandElementDetector>(config.elements.argv);
  }

  provider::GatewayOptions g;
  g.retry = {config.chat.retry_attempts, config.chat.base_backoff_ms};
  g.max_in_flight = config.chat.max_in_flight;
  g.rate_per_second = config.chat.rate_per_second;
  p.gateway = std::make_unique<provider::ModelGateway>(p.chat, g, p.ledger.get());
  return p;
}

}  // namespace guide::pipeline
