#include <algorithm>

#include "guide/error.hpp"
#include "guide/perception.hpp"

namespace guide::perception {

nlohmann::json to_json(const BackgroundModelParams& p) {
  return {{"components", p.components},
          {"history", p.history},
          {"var_threshold", p.var_threshold},
          {"var_threshold_gen", p.var_threshold_gen},
          {"var_init", p.var_init},
          {"var_min", p.var_min},
          {"var_max", p.var_max},
          {"complexity_reduction", p.complexity_reduction},
          {"background_ratio", p.background_ratio},
          {"fg_threshold", p.fg_threshold},
          {"reference_width", p.reference_width},
          {"reference_height", p.reference_height}};
}

BackgroundModelParams background_params_from_json(const nlohmann::json& j) {
  BackgroundModelParams p;
  p.components = j.value("components", p.components);
  p.history = j.value("history", p.history);
  p.var_threshold = j.value("var_threshold", p.var_threshold);
  p.var_threshold_gen = j.value("var_threshold_gen", p.var_threshold_gen);
  p.var_init = j.value("var_init", p.var_init);
  p.var_min = j.value("var_min", p.var_min);
  p.var_max = j.value("var_max", p.var_max);
  p.complexity_reduction = j.value("complexity_reduction", p.complexity_reduction);
  p.background_ratio = j.value("background_ratio", p.background_ratio);
  p.fg_threshold = j.value("fg_threshold", p.fg_threshold);
  p.reference_width = j.value("reference_width", p.reference_width);
  p.reference_height = j.value("reference_height", p.reference_height);
  if (p.components < 1 || p.components > 8) throw Error(ErrorKind::ConfigError, "components must be in [1, 8]");
  if (p.history < 1) throw Error(ErrorKind::ConfigError, "history must be positive");
  if (p.reference_width <= 0 || p.reference_height <= 0) {
    throw Error(ErrorKind::ConfigError, "reference resolution must be positive");
  }
  return p;
}

bool exceeds_threshold(std::int64_t fg_count, int width, int height, const BackgroundModelParams& p) {
  // fg > T * (W*H) / (Wref*Href), kept in integers.
  std::int64_t ref_area = static_cast<std::int64_t>(p.reference_width) * p.reference_height;
  std::int64_t area = static_cast<std::int64_t>(width) * height;
  return fg_count * ref_area > p.fg_threshold * area;
}

BackgroundModel::BackgroundModel(int width, int height, BackgroundModelParams params)
    : width_(width), height_(height), p_(params) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidInput, "frame dimensions must be positive");
  std::size_t pixels = static_cast<std::size_t>(width) * height;
  modes_.resize(pixels * p_.components);
  used_.assign(pixels, 0);
}

std::int64_t BackgroundModel::apply(const Image& frame) {
  if (frame.width != width_ || frame.height != height_) {
    throw Error(ErrorKind::DecodeFailure, "frame size changed mid-segment");
  }
  ++frames_;
  const float alpha = 1.0f / static_cast<float>(std::min<std::int64_t>(2 * frames_, p_.history));
  const float alpha1 = 1.0f - alpha;
  const float prune = -alpha * static_cast<float>(p_.complexity_reduction);
  const float tb = static_cast<float>(p_.var_threshold);
  const float tg = static_cast<float>(p_.var_threshold_gen);
  const float var_init = static_cast<float>(p_.var_init);
  const float var_min = static_cast<float>(p_.var_min);
  const float var_max = static_cast<float>(p_.var_max);
  const double ratio = p_.background_ratio;
  const int k_max = p_.components;
  const bool seeding = frames_ == 1;

  std::int64_t foreground = 0;
  std::size_t pixels = static_cast<std::size_t>(width_) * height_;
  for (std::size_t px = 0; px < pixels; ++px) {
    Mode* m = &modes_[px * k_max];
    int n = used_[px];
    const std::uint8_t* data = frame.rgb.data() + px * 3;
    float x[3] = {static_cast<float>(data[0]), static_cast<float>(data[1]), static_cast<float>(data[2])};

    bool fits = false;
    bool background = false;
    double total = 0;
    for (int i = 0; i < n; ++i) {
      float weight = alpha1 * m[i].weight + prune;
      if (!fits) {
        float d0 = m[i].mean[0] - x[0];
        float d1 = m[i].mean[1] - x[1];
        float d2 = m[i].mean[2] - x[2];
        float dist2 = d0 * d0 + d1 * d1 + d2 * d2;
        float var = m[i].var;
        if (total < ratio && dist2 < tb * var) background = true;
        if (dist2 < tg * var) {
          fits = true;
          weight += alpha;
          float k = alpha / weight;
          m[i].mean[0] -= k * d0;
          m[i].mean[1] -= k * d1;
          m[i].mean[2] -= k * d2;
          m[i].var = std::clamp(var + k * (dist2 - var), var_min, var_max);
          m[i].weight = weight;
          for (int j = i; j > 0 && m[j].weight >= m[j - 1].weight; --j) std::swap(m[j], m[j - 1]);
          total += weight;
          continue;
        }
      }
      m[i].weight = weight;
      total += weight;
    }

    // Drop components whose weight decayed to nothing, then renormalise.
    int kept = 0;
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      if (m[i].weight > -prune) {
        m[kept++] = m[i];
        sum += m[i].weight;
      }
    }
    n = kept;
    if (sum > 0) {
      float inv = static_cast<float>(1.0 / sum);
      for (int i = 0; i < n; ++i) m[i].weight *= inv;
    }

    if (!fits) {
      int slot = n < k_max ? n++ : k_max - 1;
      if (n == 1) {
        m[0].weight = 1.0f;
      } else {
        for (int i = 0; i < n; ++i)
          if (i != slot) m[i].weight *= alpha1;
        m[slot].weight = alpha;
      }
      m[slot].mean[0] = x[0];
      m[slot].mean[1] = x[1];
      m[slot].mean[2] = x[2];
      m[slot].var = var_init;
      for (int j = slot; j > 0 && m[j].weight >= m[j - 1].weight; --j) std::swap(m[j], m[j - 1]);
    }
    used_[px] = static_cast<std::uint8_t>(n);
    if (!background) ++foreground;
  }
  return seeding ? 0 : foreground;
}

nlohmann::json to_json(const TransitionSegment& t) {
  return {{"cue_index", t.cue_index}, {"start", to_json(t.start_frame)}, {"end", to_json(t.end_frame)}};
}

TransitionSegment transition_from_json(const nlohmann::json& j) {
  return {j.at("cue_index").get<std::size_t>(), frame_from_json(j.at("start")), frame_from_json(j.at("end"))};
}

std::vector<CueSegment> segment_by_cues(const std::vector<FrameRef>& frames, const subtitle::SubtitleTrack& track) {
  if (track.cues.empty()) {
    if (frames.empty()) return {};
    return {CueSegment{0, frames}};
  }
  std::vector<CueSegment> buckets(track.cues.size());
  for (std::size_t i = 0; i < buckets.size(); ++i) buckets[i].cue_index = i;
  for (const auto& f : frames) {
    // Last cue starting at or before the frame; earlier frames go to cue 0.
    std::size_t owner = 0;
    for (std::size_t i = 0; i < track.cues.size(); ++i) {
      if (track.cues[i].start_ms <= f.timestamp_ms) owner = i;
    }
    buckets[owner].frames.push_back(f);
  }
  std::vector<CueSegment> out;
  for (auto& b : buckets)
    if (!b.frames.empty()) out.push_back(std::move(b));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> runs_to_transitions(const std::vector<bool>& changing) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t n = changing.size();
  std::size_t i = 0;
  while (i < n) {
    if (!changing[i]) {
      ++i;
      continue;
    }
    std::size_t a = i;
    while (i < n && changing[i]) ++i;
    std::size_t b = i - 1;
    out.emplace_back(a > 0 ? a - 1 : a, b + 1 < n ? b + 1 : b);
  }
  return out;
}

std::vector<std::int64_t> foreground_counts(const std::vector<Image>& frames, const BackgroundModelParams& params) {
  std::vector<std::int64_t> out;
  if (frames.empty()) return out;
  BackgroundModel model(frames.front().width, frames.front().height, params);
  for (const auto& f : frames) out.push_back(model.apply(f));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> detect_transitions(const std::vector<Image>& frames,
                                                                    const BackgroundModelParams& params) {
  if (frames.size() < 2) return {};
  auto counts = foreground_counts(frames, params);
  std::vector<bool> changing(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    changing[i] = exceeds_threshold(counts[i], frames[i].width, frames[i].height, params);
  }
  return runs_to_transitions(changing);
}

FrameLoader png_loader() {
  return [](const FrameRef& f) { return read_png(f.image.path); };
}

std::vector<TransitionSegment> detect_transitions(const std::vector<FrameRef>& segment_frames, std::size_t cue_index,
                                                  const BackgroundModelParams& params, const FrameLoader& load) {
  if (segment_frames.size() < 2) return {};
  std::vector<bool> changing;
  changing.reserve(segment_frames.size());
  std::optional<BackgroundModel> model;
  for (const auto& f : segment_frames) {
    Image img = load(f);
    if (!model) model.emplace(img.width, img.height, params);
    changing.push_back(exceeds_threshold(model->apply(img), img.width, img.height, params));
  }
  std::vector<TransitionSegment> out;
  for (auto [s, e] : runs_to_transitions(changing)) {
    out.push_back({cue_index, segment_frames[s], segment_frames[e]});
  }
  return out;
}

KeyframeResult extract_keyframes(const std::vector<FrameRef>& frames, const subtitle::SubtitleTrack& track,
                                 const BackgroundModelParams& params, const FrameLoader& load) {
  if (frames.empty()) throw Error(ErrorKind::EmptyVideo, "no frames decoded");
  KeyframeResult r;
  for (const auto& seg : segment_by_cues(frames, track)) {
    auto ts = detect_transitions(seg.frames, seg.cue_index, params, load);
    r.transitions.insert(r.transitions.end(), ts.begin(), ts.end());
  }
  for (const auto& t : r.transitions) {
    for (const FrameRef* f : {&t.start_frame, &t.end_frame}) {
      if (r.keyframes.empty() || r.keyframes.back().frame_index != f->frame_index) r.keyframes.push_back(*f);
    }
  }
  return r;
}

nlohmann::json to_json(const KeyframeResult& r) {
  nlohmann::json kf = nlohmann::json::array();
  for (const auto& f : r.keyframes) kf.push_back(to_json(f));
  nlohmann::json tr = nlohmann::json::array();
  for (const auto& t : r.transitions) tr.push_back(to_json(t));
  return {{"keyframes", kf}, {"transitions", tr}};
}

KeyframeResult keyframes_from_json(const nlohmann::json& j) {
  KeyframeResult r;
  for (const auto& f : j.at("keyframes")) r.keyframes.push_back(frame_from_json(f));
  for (const auto& t : j.at("transitions")) r.transitions.push_back(transition_from_json(t));
  return r;
}

}  // namespace guide::perception
