#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "guide/error.hpp"
#include "guide/provider.hpp"

namespace guide::testing {

// Concatenated text parts of every message in the request.
inline std::string request_text(const provider::ModelRequest& req) {
  std::string out;
  for (const auto& m : req.messages)
    for (const auto& p : m.content)
      if (p.kind == provider::ContentPart::Kind::text) out += p.text + "\n";
  return out;
}

inline std::string user_text(const provider::ModelRequest& req) {
  std::string out;
  for (const auto& m : req.messages) {
    if (m.role != "user") continue;
    for (const auto& p : m.content)
      if (p.kind == provider::ContentPart::Kind::text) out += p.text + "\n";
  }
  return out;
}

// Chat backend driven by a callback; keeps every request it saw.
class ScriptedChatModel : public provider::ChatModel {
 public:
  using Handler = std::function<provider::ModelResponse(const provider::ModelRequest&)>;

  explicit ScriptedChatModel(Handler handler) : handler_(std::move(handler)) {}

  provider::ModelResponse chat(const provider::ModelRequest& req) override {
    {
      std::lock_guard lock(mu_);
      requests_.push_back(req);
    }
    return handler_(req);
  }
  std::string backend_name() const override { return "scripted"; }

  std::vector<provider::ModelRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::size_t count(const std::string& stage) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& r : requests_) n += r.stage == stage;
    return n;
  }

 private:
  Handler handler_;
  mutable std::mutex mu_;
  std::vector<provider::ModelRequest> requests_;
};

inline provider::GatewayOptions instant_options() {
  provider::GatewayOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

// In-memory search results and subtitle documents.
class MemoryVideoSource : public provider::VideoSource {
 public:
  std::map<std::string, std::vector<VideoCandidate>> results;
  std::map<std::string, std::string> subtitles;
  std::vector<std::string> failing;

  std::vector<VideoCandidate> search(const std::string& query, int max_results) override {
    for (const auto& f : failing)
      if (f == query) throw Error(ErrorKind::SearchUnavailable, "injected failure for " + query);
    auto it = results.find(query);
    if (it == results.end()) return {};
    std::vector<VideoCandidate> out = it->second;
    if (static_cast<int>(out.size()) > max_results) out.resize(static_cast<std::size_t>(max_results));
    return out;
  }
  std::optional<std::string> fetch_subtitles(const VideoCandidate& video) override {
    auto it = subtitles.find(video.video_id);
    if (it == subtitles.end()) return std::nullopt;
    return it->second;
  }
  std::string backend_name() const override { return "memory"; }
};

}  // namespace guide::testing
