#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

// Plain records shared between providers and the pipeline stages.
namespace guide {

struct VideoCandidate {
  std::string video_id;
  std::string url;
  std::string title;
  double duration_s = 0;
  bool has_subtitles = false;

  bool operator==(const VideoCandidate&) const = default;
};

nlohmann::json to_json(const VideoCandidate& c);
VideoCandidate candidate_from_json(const nlohmann::json& j);

struct ImageRef {
  std::string path;
  int width = 0;
  int height = 0;

  bool operator==(const ImageRef&) const = default;
};

// One decoded frame (s_t when it is a keyframe).
struct FrameRef {
  std::int64_t frame_index = 0;
  std::int64_t timestamp_ms = 0;
  ImageRef image;

  bool operator==(const FrameRef&) const = default;
};

nlohmann::json to_json(const FrameRef& f);
FrameRef frame_from_json(const nlohmann::json& j);

}  // namespace guide
