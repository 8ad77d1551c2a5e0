#pragma once

// Synthetic screen recordings and a frame-difference oracle for keyframe tests.

#include <algorithm>
#include <array>
#include <random>
#include <utility>
#include <vector>

#include "guide/perception.hpp"

namespace guide::testing {

using perception::fill_rect;
using perception::FrameLoader;
using perception::Image;
using perception::make_image;

struct Rect {
  int frame;
  int x, y, w, h;
  std::uint8_t r, g, b;
};

// Synthetic screen recording: a fixed background plus rectangles that appear
// at given frames and stay.
struct Sequence {
  int width = 0;
  int height = 0;
  std::size_t length = 0;
  Image background;
  std::vector<Rect> rects;

  Image frame(std::size_t i) const {
    Image img = background;
    for (const auto& r : rects)
      if (static_cast<std::size_t>(r.frame) <= i) fill_rect(img, r.x, r.y, r.w, r.h, r.r, r.g, r.b);
    return img;
  }
  std::vector<Image> frames() const {
    std::vector<Image> out;
    for (std::size_t i = 0; i < length; ++i) out.push_back(frame(i));
    return out;
  }
  FrameLoader loader() const {
    return [this](const FrameRef& f) { return frame(static_cast<std::size_t>(f.frame_index)); };
  }
};

inline Sequence flat_sequence(int w, int h, std::size_t length) {
  Sequence s;
  s.width = w;
  s.height = h;
  s.length = length;
  s.background = make_image(w, h, 30, 30, 30);
  return s;
}

// Independent oracle: count pixels that differ from the previous frame.
inline std::vector<std::pair<std::size_t, std::size_t>> oracle_transitions(const std::vector<Image>& frames,
                                                                    std::int64_t threshold) {
  std::vector<int> changing(frames.size(), 0);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    std::int64_t diff = 0;
    for (std::size_t p = 0; p < frames[i].rgb.size(); p += 3) {
      if (frames[i].rgb[p] != frames[i - 1].rgb[p] || frames[i].rgb[p + 1] != frames[i - 1].rgb[p + 1] ||
          frames[i].rgb[p + 2] != frames[i - 1].rgb[p + 2]) {
        ++diff;
      }
    }
    changing[i] = diff > threshold;
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t n = frames.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!changing[i] || (i > 0 && changing[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 < n && changing[j + 1]) ++j;
    std::size_t start = i == 0 ? 0 : i - 1;
    std::size_t end = j + 1 < n ? j + 1 : j;
    out.emplace_back(start, end);
  }
  return out;
}

inline Sequence random_sequence(std::mt19937& rng, int w, int h) {
  Sequence s;
  s.width = w;
  s.height = h;
  s.length = std::uniform_int_distribution<std::size_t>(2, 24)(rng);
  s.background = make_image(w, h);
  std::uniform_int_distribution<int> bg(0, 50);
  for (auto& c : s.background.rgb) c = static_cast<std::uint8_t>(bg(rng));

  // Every rectangle gets a colour no other rectangle uses, far from the
  // background and from each other.
  std::vector<std::array<std::uint8_t, 3>> palette;
  for (std::uint8_t r : {100, 175, 250})
    for (std::uint8_t g : {100, 175, 250})
      for (std::uint8_t b : {100, 175, 250}) palette.push_back({r, g, b});
  std::shuffle(palette.begin(), palette.end(), rng);

  std::uniform_real_distribution<double> coin(0, 1);
  std::uniform_int_distribution<int> side(40, 160);
  for (std::size_t f = 1; f < s.length && !palette.empty(); ++f) {
    if (coin(rng) > 0.4) continue;
    int count = coin(rng) < 0.7 ? 1 : 2;
    for (int k = 0; k < count && !palette.empty(); ++k) {
      int rw = side(rng);
      // Areas cluster around the 10,000 px threshold.
      int rh = std::clamp(static_cast<int>(std::uniform_int_distribution<int>(6'000, 14'000)(rng) / rw), 1, h);
      if (coin(rng) < 0.15) rh = std::uniform_int_distribution<int>(1, 40)(rng);
      int x = std::uniform_int_distribution<int>(0, w - 1)(rng);
      int y = std::uniform_int_distribution<int>(0, h - 1)(rng);
      auto c = palette.back();
      palette.pop_back();
      s.rects.push_back({static_cast<int>(f), x, y, rw, rh, c[0], c[1], c[2]});
    }
  }
  return s;
}

}  // namespace guide::testing
