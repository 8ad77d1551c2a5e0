#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <regex>

#include "guide/error.hpp"
#include "guide/io.hpp"
#include "guide/provider.hpp"

namespace guide::provider {

std::size_t ModelRequest::image_count() const {
  std::size_t n = 0;
  for (const auto& m : messages)
    for (const auto& p : m.content)
      if (p.kind == ContentPart::Kind::image) ++n;
  return n;
}

nlohmann::json canonical_request(const ModelRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& p : m.content) {
      if (p.kind == ContentPart::Kind::text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back({{"type", "image"},
                           {"sha256", io::sha256_hex(io::read_file(p.image.path))},
                           {"width", p.image.width},
                           {"height", p.image.height}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", content}});
  }
  return {{"model", req.model_name},
          {"temperature", req.temperature},
          {"max_output_tokens", req.max_output_tokens},
          {"messages", messages}};
}

std::string request_key(const ModelRequest& req) { return io::sha256_hex(canonical_request(req).dump()); }

std::string render_request(const ModelRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& p : m.content) {
      if (p.kind == ContentPart::Kind::text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back({{"type", "image"},
                           {"file", fs::path(p.image.path).filename().string()},
                           {"width", p.image.width},
                           {"height", p.image.height}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", content}});
  }
  nlohmann::json j = {{"model", req.model_name},
                      {"temperature", req.temperature},
                      {"max_output_tokens", req.max_output_tokens},
                      {"messages", messages}};
  return j.dump(2) + "\n";
}

FixtureChatModel::FixtureChatModel(const fs::path& file) {
  nlohmann::json j = io::read_json(file);
  entries_ = j.contains("entries") ? j.at("entries") : nlohmann::json::object();
}

FixtureChatModel::FixtureChatModel(nlohmann::json entries) : entries_(std::move(entries)) {}

ModelResponse FixtureChatModel::chat(const ModelRequest& req) {
  std::string key = request_key(req);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw Error(ErrorKind::ModelFailure,
                "no fixture recorded for request key " + key + " (stage '" + req.stage + "')");
  }
  const auto& e = *it;
  if (e.contains("error")) {
    const auto& err = e.at("error");
    ErrorKind kind = ErrorKind::ModelFailure;
    std::string k = err.value("kind", std::string{"ModelFailure"});
    if (k == "AuthFailure") kind = ErrorKind::AuthFailure;
    if (k == "RateLimited") kind = ErrorKind::RateLimited;
    throw Error(kind, err.value("message", std::string{"recorded failure"}), err.value("transient", false));
  }
  ModelResponse r;
  r.text = e.value("text", std::string{});
  if (e.contains("usage")) {
    r.usage.input_tokens = e.at("usage").value("input_tokens", std::int64_t{0});
    r.usage.output_tokens = e.at("usage").value("output_tokens", std::int64_t{0});
  }
  return r;
}

RecordingChatModel::RecordingChatModel(std::shared_ptr<ChatModel> inner) : inner_(std::move(inner)) {}

ModelResponse RecordingChatModel::chat(const ModelRequest& req) {
  ModelResponse r = inner_->chat(req);
  nlohmann::json entry = {
      {"stage", req.stage},
      {"text", r.text},
      {"usage", {{"input_tokens", r.usage.input_tokens}, {"output_tokens", r.usage.output_tokens}}}};
  std::string key = request_key(req);
  std::lock_guard lock(mu_);
  entries_[key] = std::move(entry);
  return r;
}

nlohmann::json RecordingChatModel::fixture_json() const {
  std::lock_guard lock(mu_);
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [k, v] : entries_) entries[k] = v;
  return {{"schema_version", 1}, {"entries", entries}};
}

void RecordingChatModel::save(const fs::path& file) const { io::write_json_atomic(file, fixture_json()); }

HttpChatModel::HttpChatModel(Options options) : options_(std::move(options)) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(options_.endpoint, m, url_re)) {
    throw Error(ErrorKind::ConfigError, "chat endpoint is not an http(s) URL: " + options_.endpoint);
  }
  scheme_host_ = m[1];
  path_ = m[2].matched ? std::string(m[2]) : "/";
}

nlohmann::json HttpChatModel::wire_body(const ModelRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& p : m.content) {
      if (p.kind == ContentPart::Kind::text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        std::string ext = fs::path(p.image.path).extension().string();
        std::string mime = (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg" : "image/png";
        content.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:" + mime + ";base64," + io::base64_encode(io::read_file(p.image.path))}}}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", content}});
  }
  return {{"model", req.model_name},
          {"messages", messages},
          {"temperature", req.temperature},
          {"max_completion_tokens", req.max_output_tokens}};
}

ModelResponse HttpChatModel::chat(const ModelRequest& req) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(options_.timeout_s);
  client.set_read_timeout(options_.timeout_s);
  httplib::Headers headers;
  if (!options_.key_env.empty()) {
    const char* key = std::getenv(options_.key_env.c_str());
    if (!key || !*key) throw Error(ErrorKind::AuthFailure, "environment variable " + options_.key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  auto start = std::chrono::steady_clock::now();
  auto res = client.Post(path_, headers, wire_body(req).dump(), "application/json");
  auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  if (!res) {
    throw Error(ErrorKind::ModelFailure, "request to " + scheme_host_ + " failed: " + httplib::to_string(res.error()),
                true);
  }
  int status = res->status;
  std::string snippet = res->body.substr(0, 300);
  if (status == 401 || status == 403) throw Error(ErrorKind::AuthFailure, "HTTP " + std::to_string(status));
  if (status == 429) throw Error(ErrorKind::RateLimited, "HTTP 429: " + snippet, true);
  if (status >= 500 || status == 408) {
    throw Error(ErrorKind::ModelFailure, "HTTP " + std::to_string(status) + ": " + snippet, true);
  }
  if (status != 200) throw Error(ErrorKind::ModelFailure, "HTTP " + std::to_string(status) + ": " + snippet);

  ModelResponse out;
  out.latency_ms = latency.count();
  try {
    auto body = nlohmann::json::parse(res->body);
    const auto& content = body.at("choices").at(0).at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string{};
    if (body.contains("usage")) {
      out.usage.input_tokens = body["usage"].value("prompt_tokens", std::int64_t{0});
      out.usage.output_tokens = body["usage"].value("completion_tokens", std::int64_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ModelFailure, std::string("unreadable response body: ") + e.what(), true);
  }
  return out;
}

}  // namespace guide::provider
