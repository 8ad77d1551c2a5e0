#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guide/log.hpp"
#include "guide/subtitle.hpp"
#include "guide/types.hpp"

// Turns a decoded frame stream into keyframes (subtitle-aligned transitions
// found with a per-pixel background model) and validates element graphs.
namespace guide::perception {

namespace fs = std::filesystem;

// Interleaved 8-bit RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t* at(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

Image make_image(int width, int height, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);
void fill_rect(Image& img, int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

// Throws Error(DecodeFailure).
Image read_png(const fs::path& path);
// compression 0..9; fixtures use a low level to keep generation quick.
void write_png(const fs::path& path, const Image& img, int compression = 1);

struct BackgroundModelParams {
  int components = 3;
  int history = 500;
  double var_threshold = 16.0;      // squared Mahalanobis distance for the background test
  double var_threshold_gen = 9.0;   // squared distance for matching an existing component
  double var_init = 15.0;
  double var_min = 4.0;
  double var_max = 75.0;
  double complexity_reduction = 0.05;
  // Cumulative weight that counts as background. 1.0 lets a value seen on two
  // consecutive frames settle into the background on the second one.
  double background_ratio = 1.0;
  // Foreground pixels needed for a frame to count as changing, stated at the
  // reference resolution and scaled by pixel area.
  std::int64_t fg_threshold = 10'000;
  int reference_width = 1920;
  int reference_height = 1080;
};

nlohmann::json to_json(const BackgroundModelParams& p);
BackgroundModelParams background_params_from_json(const nlohmann::json& j);

// True when fg_count exceeds the threshold scaled to a width x height frame.
bool exceeds_threshold(std::int64_t fg_count, int width, int height, const BackgroundModelParams& p);

// Per-pixel Gaussian mixture over RGB, in the style of MOG2 with shadow
// detection off.
class BackgroundModel {
 public:
  BackgroundModel(int width, int height, BackgroundModelParams params);

  // Updates the model and returns the number of foreground pixels. The first
  // frame only seeds the model and reports 0.
  std::int64_t apply(const Image& frame);
  std::int64_t frames_seen() const { return frames_; }

 private:
  struct Mode {
    float weight;
    float var;
    float mean[3];
  };

  int width_;
  int height_;
  BackgroundModelParams p_;
  std::vector<Mode> modes_;          // components per pixel, sorted by weight
  std::vector<std::uint8_t> used_;   // active components per pixel
  std::int64_t frames_ = 0;
};

struct TransitionSegment {
  std::size_t cue_index = 0;
  FrameRef start_frame;
  FrameRef end_frame;

  bool operator==(const TransitionSegment&) const = default;
};

nlohmann::json to_json(const TransitionSegment& t);
TransitionSegment transition_from_json(const nlohmann::json& j);

struct CueSegment {
  std::size_t cue_index = 0;
  std::vector<FrameRef> frames;
};

// Frames in a gap attach to the preceding cue; frames before the first cue
// attach to the first one. A frame on a cue's start belongs to that cue.
// Cues without frames are omitted.
std::vector<CueSegment> segment_by_cues(const std::vector<FrameRef>& frames, const subtitle::SubtitleTrack& track);

// Groups a changing-frame mask into maximal runs and returns
// (start, end) positions per run following the transition rule.
std::vector<std::pair<std::size_t, std::size_t>> runs_to_transitions(const std::vector<bool>& changing);

// Foreground count per frame for an in-memory sequence (first entry is 0).
std::vector<std::int64_t> foreground_counts(const std::vector<Image>& frames, const BackgroundModelParams& params);

// In-memory variant returning (start, end) frame positions.
std::vector<std::pair<std::size_t, std::size_t>> detect_transitions(const std::vector<Image>& frames,
                                                                    const BackgroundModelParams& params);

using FrameLoader = std::function<Image(const FrameRef&)>;
FrameLoader png_loader();

// Frames are loaded one at a time; the model is fresh for each call.
std::vector<TransitionSegment> detect_transitions(const std::vector<FrameRef>& segment_frames, std::size_t cue_index,
                                                  const BackgroundModelParams& params,
                                                  const FrameLoader& load = png_loader());

struct KeyframeResult {
  std::vector<FrameRef> keyframes;
  std::vector<TransitionSegment> transitions;
};

// Throws Error(EmptyVideo) on an empty frame list and Error(DecodeFailure)
// when a frame cannot be read.
KeyframeResult extract_keyframes(const std::vector<FrameRef>& frames, const subtitle::SubtitleTrack& track,
                                 const BackgroundModelParams& params, const FrameLoader& load = png_loader());

nlohmann::json to_json(const KeyframeResult& r);
KeyframeResult keyframes_from_json(const nlohmann::json& j);

enum class ElementKind { button, text_field, menu, icon, other };

std::string_view to_string(ElementKind k);
ElementKind element_kind_from_string(std::string_view s);

struct BBox {
  double x0 = 0;
  double y0 = 0;
  double x1 = 0;
  double y1 = 0;

  bool operator==(const BBox&) const = default;
};

struct UIElement {
  std::string element_id;
  BBox bbox;
  ElementKind kind = ElementKind::other;
  std::string text_label;
  bool interactive = false;

  bool operator==(const UIElement&) const = default;
};

struct ElementGraph {
  FrameRef frame;
  std::vector<UIElement> elements;

  bool operator==(const ElementGraph&) const = default;
};

// Accepts a bare array or {"elements": [...]}. Element fields follow the
// detector schema {id, bbox:[x0,y0,x1,y1], type, text, interactivity}; common
// aliases are accepted. Throws Error(MalformedGraph) when the top level is
// unreadable. Element-level problems are repaired or dropped with a warning.
ElementGraph parse_element_graph(std::string_view raw, const FrameRef& frame, WarningSink* warnings = nullptr);

nlohmann::json serialize_elements(const ElementGraph& g);
std::string serialize_element_graph(const ElementGraph& g);

}  // namespace guide::perception
