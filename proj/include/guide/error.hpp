#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace guide {

enum class ErrorKind {
  UnrecognizedFormat,
  EmptyTrack,
  ModelFailure,
  AuthFailure,
  RateLimited,
  SearchUnavailable,
  DecodeFailure,
  EmptyVideo,
  MalformedGraph,
  EmptyTrajectory,
  EmptyDescription,
  UnknownResolution,
  UnpricedModel,
  UnmatchedIds,
  EmptyInput,
  InvalidInput,
  MissingArtifact,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, bool transient = false)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        transient_(transient) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Transient failures are worth retrying (timeouts, 5xx, throttling).
  bool transient() const noexcept { return transient_; }

 private:
  ErrorKind kind_;
  bool transient_;
};

}  // namespace guide
