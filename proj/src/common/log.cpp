#include "guide/log.hpp"

#include <atomic>
#include <iostream>

namespace guide {

nlohmann::json to_json(const Warning& w) {
  nlohmann::json j = {{"code", w.code}, {"message", w.message}};
  if (!w.subject.empty()) j["subject"] = w.subject;
  return j;
}

void WarningSink::add(Warning w) {
  log::warn(w);
  std::lock_guard lock(mu_);
  items_.push_back(std::move(w));
}

void WarningSink::add(std::string code, std::string message, std::string subject) {
  add(Warning{std::move(code), std::move(message), std::move(subject)});
}

std::vector<Warning> WarningSink::snapshot() const {
  std::lock_guard lock(mu_);
  return items_;
}

std::size_t WarningSink::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

namespace log {

namespace {
std::atomic<Level> g_level{Level::quiet};
std::mutex g_out;
}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void info(const std::string& msg) {
  if (g_level == Level::quiet) return;
  std::lock_guard lock(g_out);
  std::cerr << "[info] " << msg << "\n";
}

void debug(const std::string& msg) {
  if (g_level != Level::debug) return;
  std::lock_guard lock(g_out);
  std::cerr << "[debug] " << msg << "\n";
}

void warn(const Warning& w) {
  if (g_level == Level::quiet) return;
  std::lock_guard lock(g_out);
  std::cerr << "[warn] " << w.code;
  if (!w.subject.empty()) std::cerr << " (" << w.subject << ")";
  std::cerr << ": " << w.message << "\n";
}

}  // namespace log

}  // namespace guide
