#include "guide/error.hpp"

namespace guide {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::UnrecognizedFormat: return "UnrecognizedFormat";
    case ErrorKind::EmptyTrack: return "EmptyTrack";
    case ErrorKind::ModelFailure: return "ModelFailure";
    case ErrorKind::AuthFailure: return "AuthFailure";
    case ErrorKind::RateLimited: return "RateLimited";
    case ErrorKind::SearchUnavailable: return "SearchUnavailable";
    case ErrorKind::DecodeFailure: return "DecodeFailure";
    case ErrorKind::EmptyVideo: return "EmptyVideo";
    case ErrorKind::MalformedGraph: return "MalformedGraph";
    case ErrorKind::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorKind::EmptyDescription: return "EmptyDescription";
    case ErrorKind::UnknownResolution: return "UnknownResolution";
    case ErrorKind::UnpricedModel: return "UnpricedModel";
    case ErrorKind::UnmatchedIds: return "UnmatchedIds";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::MissingArtifact: return "MissingArtifact";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace guide
