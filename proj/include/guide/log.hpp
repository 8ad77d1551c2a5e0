#pragma once

#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace guide {

// Structured, non-fatal problem reported by a stage.
struct Warning {
  std::string code;
  std::string message;
  std::string subject;  // video id, frame path, ... (may be empty)
};

nlohmann::json to_json(const Warning& w);

class WarningSink {
 public:
  void add(Warning w);
  void add(std::string code, std::string message, std::string subject = {});
  std::vector<Warning> snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<Warning> items_;
};

namespace log {

enum class Level { quiet, info, debug };

void set_level(Level level);
Level level();
void info(const std::string& msg);
void debug(const std::string& msg);
void warn(const Warning& w);

}  // namespace log

}  // namespace guide
