#include "guide/types.hpp"

#include "guide/error.hpp"

namespace guide {

nlohmann::json to_json(const VideoCandidate& c) {
  return {{"id", c.video_id},
          {"url", c.url},
          {"title", c.title},
          {"duration_s", c.duration_s},
          {"has_subtitles", c.has_subtitles}};
}

VideoCandidate candidate_from_json(const nlohmann::json& j) {
  try {
    VideoCandidate c;
    c.video_id = j.at("id").get<std::string>();
    c.url = j.value("url", std::string{});
    c.title = j.value("title", std::string{});
    c.duration_s = j.value("duration_s", 0.0);
    c.has_subtitles = j.value("has_subtitles", false);
    if (c.duration_s < 0) throw Error(ErrorKind::InvalidInput, "negative duration for " + c.video_id);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("bad candidate record: ") + e.what());
  }
}

nlohmann::json to_json(const FrameRef& f) {
  return {{"frame_index", f.frame_index},
          {"timestamp_ms", f.timestamp_ms},
          {"path", f.image.path},
          {"width", f.image.width},
          {"height", f.image.height}};
}

FrameRef frame_from_json(const nlohmann::json& j) {
  try {
    FrameRef f;
    f.frame_index = j.at("frame_index").get<std::int64_t>();
    f.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    f.image.path = j.value("path", std::string{});
    f.image.width = j.value("width", 0);
    f.image.height = j.value("height", 0);
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("bad frame record: ") + e.what());
  }
}

}  // namespace guide
