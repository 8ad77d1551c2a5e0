#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "guide/error.hpp"
#include "guide/io.hpp"
#include "guide/provider.hpp"
#include "guide/text.hpp"

namespace guide::provider {

namespace {

std::optional<std::string> read_if_exists(const fs::path& p) {
  if (!fs::is_regular_file(p)) return std::nullopt;
  return io::read_file(p);
}

// Width and height from a PNG IHDR chunk.
std::pair<int, int> png_size(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  unsigned char h[24];
  if (!in.read(reinterpret_cast<char*>(h), sizeof h) || h[1] != 'P' || h[2] != 'N' || h[3] != 'G') {
    throw Error(ErrorKind::DecodeFailure, "not a PNG: " + p.string());
  }
  auto be32 = [&](int off) { return (h[off] << 24) | (h[off + 1] << 16) | (h[off + 2] << 8) | h[off + 3]; };
  return {be32(16), be32(20)};
}

std::vector<fs::path> files_with_extension(const fs::path& dir, std::string_view ext) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

FixtureVideoSource::FixtureVideoSource(fs::path dir) : dir_(std::move(dir)) {
  fs::path index = dir_ / "search.json";
  if (!fs::exists(index)) throw Error(ErrorKind::ConfigError, "search fixture missing: " + index.string());
  index_ = io::read_json(index);
}

std::vector<VideoCandidate> FixtureVideoSource::search(const std::string& query, int max_results) {
  if (index_.contains("fail")) {
    for (const auto& q : index_["fail"])
      if (q.get<std::string>() == query) throw Error(ErrorKind::SearchUnavailable, "recorded failure for: " + query);
  }
  const auto& queries = index_.value("queries", nlohmann::json::object());
  auto it = queries.find(query);
  if (it == queries.end()) throw Error(ErrorKind::SearchUnavailable, "no search fixture for query '" + query + "'");
  std::vector<VideoCandidate> out;
  for (const auto& rec : *it) {
    if (static_cast<int>(out.size()) >= max_results) break;
    out.push_back(candidate_from_json(rec));
  }
  return out;
}

std::optional<std::string> FixtureVideoSource::fetch_subtitles(const VideoCandidate& video) {
  for (const char* ext : {".vtt", ".srt"}) {
    if (auto raw = read_if_exists(dir_ / "subtitles" / (video.video_id + ext))) return raw;
  }
  return std::nullopt;
}

YtDlpVideoSource::YtDlpVideoSource(Options options) : options_(std::move(options)) {}

std::optional<VideoCandidate> YtDlpVideoSource::parse_record(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) return std::nullopt;
  VideoCandidate c;
  c.video_id = j["id"].get<std::string>();
  c.url = j.value("webpage_url", j.value("url", "https://www.youtube.com/watch?v=" + c.video_id));
  c.title = j.contains("title") && j["title"].is_string() ? j["title"].get<std::string>() : "";
  c.duration_s = j.contains("duration") && j["duration"].is_number() ? j["duration"].get<double>() : 0.0;
  if (c.duration_s < 0) c.duration_s = 0;
  // Flat search listings carry no caption info; treat as unknown and let the
  // subtitle download decide.
  bool known = j.contains("subtitles") || j.contains("automatic_captions");
  c.has_subtitles = !known || !j.value("subtitles", nlohmann::json::object()).empty() ||
                    !j.value("automatic_captions", nlohmann::json::object()).empty();
  return c;
}

std::vector<VideoCandidate> YtDlpVideoSource::search(const std::string& query, int max_results) {
  auto res = run_process({options_.binary, "--dump-json", "--flat-playlist", "--no-warnings",
                          "ytsearch" + std::to_string(max_results) + ":" + query});
  if (res.exit_code != 0) {
    throw Error(ErrorKind::SearchUnavailable, "yt-dlp exited " + std::to_string(res.exit_code) + ": " + res.err, true);
  }
  std::vector<VideoCandidate> out;
  std::istringstream in(res.out);
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (auto c = parse_record(j)) out.push_back(std::move(*c));
  }
  return out;
}

std::optional<std::string> YtDlpVideoSource::fetch_subtitles(const VideoCandidate& video) {
  fs::path dir = options_.work_dir / video.video_id;
  fs::create_directories(dir);
  auto res = run_process({options_.binary, "--skip-download", "--write-subs", "--write-auto-subs", "--sub-langs",
                          options_.sub_langs, "--sub-format", "vtt/srt/best", "--no-warnings", "-o",
                          (dir / "%(id)s.%(ext)s").string(), video.url});
  if (res.exit_code != 0) {
    throw Error(ErrorKind::SearchUnavailable, "subtitle download failed for " + video.video_id + ": " + res.err, true);
  }
  for (const char* ext : {".vtt", ".srt"}) {
    auto files = files_with_extension(dir, ext);
    if (!files.empty()) return io::read_file(files.front());
  }
  return std::nullopt;
}

std::vector<FrameRef> read_frame_index(const fs::path& dir) {
  fs::path index = dir / "index.json";
  if (!fs::exists(index)) throw Error(ErrorKind::DecodeFailure, "frame index missing: " + index.string());
  nlohmann::json j = io::read_json(index);
  std::vector<FrameRef> frames;
  for (const auto& rec : j) {
    FrameRef f;
    f.frame_index = rec.at("frame_index").get<std::int64_t>();
    f.timestamp_ms = rec.at("timestamp_ms").get<std::int64_t>();
    f.image.path = (dir / rec.at("file").get<std::string>()).string();
    f.image.width = rec.value("width", 0);
    f.image.height = rec.value("height", 0);
    if (f.image.width <= 0 || f.image.height <= 0) std::tie(f.image.width, f.image.height) = png_size(f.image.path);
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_frame_index(const fs::path& dir, const std::vector<FrameRef>& frames) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& f : frames) {
    j.push_back({{"frame_index", f.frame_index},
                 {"timestamp_ms", f.timestamp_ms},
                 {"file", fs::path(f.image.path).filename().string()},
                 {"width", f.image.width},
                 {"height", f.image.height}});
  }
  io::write_json_atomic(dir / "index.json", j);
}

FixtureFrameExtractor::FixtureFrameExtractor(fs::path root) : root_(std::move(root)) {}

std::vector<FrameRef> FixtureFrameExtractor::extract(const VideoCandidate& video, const fs::path&, double) {
  fs::path dir = root_ / video.video_id;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::DecodeFailure, "no frame fixture for " + video.video_id);
  return read_frame_index(dir);
}

FfmpegFrameExtractor::FfmpegFrameExtractor(Options options) : options_(std::move(options)) {}

std::vector<FrameRef> FfmpegFrameExtractor::extract(const VideoCandidate& video, const fs::path& out_dir, double fps) {
  if (fps <= 0) throw Error(ErrorKind::ConfigError, "fps must be positive");
  fs::create_directories(out_dir);
  auto dl = run_process({options_.ytdlp, "-f", "bv*[height<=1080]/b", "--no-warnings", "-o",
                         (out_dir / "source.%(ext)s").string(), video.url});
  if (dl.exit_code != 0) throw Error(ErrorKind::DecodeFailure, "download failed for " + video.video_id + ": " + dl.err);
  fs::path source;
  for (const auto& e : fs::directory_iterator(out_dir)) {
    if (e.path().stem() == "source") source = e.path();
  }
  if (source.empty()) throw Error(ErrorKind::DecodeFailure, "downloaded file not found for " + video.video_id);

  auto dec = run_process({options_.ffmpeg, "-hide_banner", "-loglevel", "error", "-y", "-i", source.string(), "-vf",
                          "fps=" + text::format_fixed(fps, 3), (out_dir / "frame_%06d.png").string()});
  fs::remove(source);
  if (dec.exit_code != 0) throw Error(ErrorKind::DecodeFailure, "ffmpeg failed for " + video.video_id + ": " + dec.err);

  std::vector<FrameRef> frames;
  for (const auto& p : files_with_extension(out_dir, ".png")) {
    FrameRef f;
    f.frame_index = static_cast<std::int64_t>(frames.size());
    f.timestamp_ms = std::llround(static_cast<double>(f.frame_index) * 1000.0 / fps);
    f.image.path = p.string();
    std::tie(f.image.width, f.image.height) = png_size(p);
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw Error(ErrorKind::EmptyVideo, video.video_id + " decoded to zero frames");
  write_frame_index(out_dir, frames);
  return frames;
}

FixtureTranscriber::FixtureTranscriber(fs::path root) : root_(std::move(root)) {}

std::string FixtureTranscriber::transcribe(const VideoCandidate& video, const fs::path&) {
  auto raw = read_if_exists(root_ / (video.video_id + ".vtt"));
  if (!raw) throw Error(ErrorKind::DecodeFailure, "no transcription fixture for " + video.video_id);
  return *raw;
}

CommandTranscriber::CommandTranscriber(std::vector<std::string> argv_template) : template_(std::move(argv_template)) {}

std::string CommandTranscriber::transcribe(const VideoCandidate& video, const fs::path& work_dir) {
  fs::create_directories(work_dir);
  auto argv = substitute(template_, {{"url", video.url}, {"video_id", video.video_id}, {"out_dir", work_dir.string()}});
  auto res = run_process(argv);
  if (res.exit_code != 0) {
    throw Error(ErrorKind::DecodeFailure, "transcriber exited " + std::to_string(res.exit_code) + ": " + res.err);
  }
  auto files = files_with_extension(work_dir, ".vtt");
  if (files.empty()) throw Error(ErrorKind::DecodeFailure, "transcriber wrote no .vtt into " + work_dir.string());
  return io::read_file(files.front());
}

FixtureElementDetector::FixtureElementDetector(fs::path root) : root_(std::move(root)) {}

std::string FixtureElementDetector::detect(const std::string& video_id, const ImageRef& image) {
  fs::path p = root_ / video_id / (fs::path(image.path).stem().string() + ".json");
  auto raw = read_if_exists(p);
  if (!raw) throw Error(ErrorKind::MalformedGraph, "no element fixture " + p.string());
  return *raw;
}

CommandElementDetector::CommandElementDetector(std::vector<std::string> argv_template)
    : template_(std::move(argv_template)) {}

std::string CommandElementDetector::detect(const std::string& video_id, const ImageRef& image) {
  auto res = run_process(substitute(template_, {{"image", image.path}, {"video_id", video_id}}));
  if (res.exit_code != 0) {
    throw Error(ErrorKind::MalformedGraph, "element detector exited " + std::to_string(res.exit_code) + ": " + res.err);
  }
  return res.out;
}

}  // namespace guide::provider
