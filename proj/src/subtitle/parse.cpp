#include <algorithm>
#include <cctype>
#include <cstdio>
#include <optional>

#include "guide/error.hpp"
#include "guide/subtitle.hpp"
#include "guide/text.hpp"

namespace guide::subtitle {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool parse_uint(std::string_view s, Millis& out) {
  if (!all_digits(s) || s.size() > 12) return false;
  out = 0;
  for (char c : s) out = out * 10 + (c - '0');
  return true;
}

// Accepts [H+:]MM:SS(.|,)mmm with one to three fractional digits.
std::optional<Millis> parse_timestamp(std::string_view s) {
  s = text::trim(s);
  std::size_t frac_sep = s.find_last_of(".,");
  if (frac_sep == std::string_view::npos) return std::nullopt;
  std::string_view frac = s.substr(frac_sep + 1);
  std::string_view clock = s.substr(0, frac_sep);
  if (frac.empty() || frac.size() > 3 || !all_digits(frac)) return std::nullopt;

  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    std::size_t colon = clock.find(':', pos);
    parts.push_back(clock.substr(pos, colon == std::string_view::npos ? std::string_view::npos : colon - pos));
    if (colon == std::string_view::npos) break;
    pos = colon + 1;
  }
  if (parts.size() < 2 || parts.size() > 3) return std::nullopt;

  Millis hours = 0, minutes = 0, seconds = 0, millis = 0;
  if (parts.size() == 3 && !parse_uint(parts[0], hours)) return std::nullopt;
  if (!parse_uint(parts[parts.size() - 2], minutes)) return std::nullopt;
  if (!parse_uint(parts.back(), seconds)) return std::nullopt;
  if (minutes >= 60 || seconds >= 60) return std::nullopt;
  parse_uint(frac, millis);
  for (std::size_t i = frac.size(); i < 3; ++i) millis *= 10;
  return ((hours * 60 + minutes) * 60 + seconds) * 1000 + millis;
}

struct Timing {
  Millis start;
  Millis end;
};

std::optional<Timing> parse_timing_line(std::string_view line) {
  std::size_t arrow = line.find("-->");
  if (arrow == std::string_view::npos) return std::nullopt;
  auto start = parse_timestamp(line.substr(0, arrow));
  std::string_view rest = text::trim(line.substr(arrow + 3));
  std::size_t ws = rest.find_first_of(" \t");
  auto end = parse_timestamp(rest.substr(0, ws));
  if (!start || !end || *end < *start) return std::nullopt;
  return Timing{*start, *end};
}

// Removes inline karaoke timestamps such as <00:00:01.520>.
std::string strip_inline_timestamps(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '<') {
      std::size_t close = s.find('>', i);
      if (close != std::string_view::npos && parse_timestamp(s.substr(i + 1, close - i - 1))) {
        i = close + 1;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

bool has_inline_timestamps(std::string_view s) {
  for (std::size_t i = s.find('<'); i != std::string_view::npos; i = s.find('<', i + 1)) {
    std::size_t close = s.find('>', i);
    if (close == std::string_view::npos) return false;
    if (parse_timestamp(s.substr(i + 1, close - i - 1))) return true;
  }
  return false;
}

using Block = std::vector<std::string_view>;

std::vector<Block> split_blocks(std::string_view raw) {
  std::vector<Block> blocks;
  Block current;
  for (std::string_view line : text::split_lines(raw)) {
    if (text::trim(line).empty()) {
      if (!current.empty()) blocks.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(line);
    }
  }
  if (!current.empty()) blocks.push_back(std::move(current));
  return blocks;
}

std::string join_text(const Block& block, std::size_t from) {
  std::string out;
  for (std::size_t i = from; i < block.size(); ++i) {
    if (!out.empty()) out += '\n';
    out += strip_inline_timestamps(block[i]);
  }
  return out;
}

ParseResult parse_vtt(std::string_view raw) {
  ParseResult result;
  bool saw_inline_timestamps = false;

  auto add_cue_block = [&](const Block& block) {
    std::string_view first = text::trim(block.front());
    if (first.substr(0, 4) == "NOTE" || first == "STYLE" || first == "REGION") return;
    std::size_t timing_at = block.size();
    for (std::size_t i = 0; i < std::min<std::size_t>(block.size(), 2); ++i) {
      if (block[i].find("-->") != std::string_view::npos) {
        timing_at = i;
        break;
      }
    }
    auto timing = timing_at < block.size() ? parse_timing_line(block[timing_at]) : std::nullopt;
    if (!timing) {
      ++result.skipped_cues;
      return;
    }
    for (std::size_t i = timing_at + 1; i < block.size(); ++i) {
      saw_inline_timestamps = saw_inline_timestamps || has_inline_timestamps(block[i]);
    }
    result.track.cues.push_back({0, timing->start, timing->end, join_text(block, timing_at + 1)});
  };

  auto blocks = split_blocks(raw);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Block& block = blocks[b];
    if (b == 0 && text::trim(block.front()).substr(0, 6) == "WEBVTT") {
      auto cue_start = block.end();
      for (auto it = block.begin() + 1; it != block.end(); ++it) {
        std::string_view line = text::trim(*it);
        if (line.find("-->") != std::string_view::npos) {
          // A cue glued to the header without a blank line; keep an id line if present.
          cue_start = (it - 1 != block.begin()) ? it - 1 : it;
          if (cue_start != it && text::starts_with_ci(text::trim(*cue_start), "Language:")) cue_start = it;
          break;
        }
        if (text::starts_with_ci(line, "Language:")) {
          result.track.language = std::string(text::trim(line.substr(9)));
        }
      }
      if (cue_start != block.end()) add_cue_block(Block(cue_start, block.end()));
      continue;
    }
    add_cue_block(block);
  }
  if (saw_inline_timestamps) result.track.origin = CaptionOrigin::auto_generated;
  return result;
}

ParseResult parse_srt(std::string_view raw) {
  ParseResult result;
  for (const Block& block : split_blocks(raw)) {
    std::size_t timing_at = block.size();
    for (std::size_t i = 0; i < std::min<std::size_t>(block.size(), 2); ++i) {
      if (block[i].find("-->") != std::string_view::npos) {
        timing_at = i;
        break;
      }
    }
    if (timing_at == block.size()) {
      ++result.skipped_cues;
      continue;
    }
    if (timing_at == 1 && !all_digits(text::trim(block[0]))) {
      ++result.skipped_cues;
      continue;
    }
    auto timing = parse_timing_line(block[timing_at]);
    if (!timing) {
      ++result.skipped_cues;
      continue;
    }
    result.track.cues.push_back({0, timing->start, timing->end, join_text(block, timing_at + 1)});
  }
  return result;
}

std::string_view strip_bom(std::string_view raw) {
  if (raw.substr(0, 3) == "\xEF\xBB\xBF") raw.remove_prefix(3);
  return raw;
}

}  // namespace

ParseResult parse_subtitles(std::string_view raw, SubtitleFormat hint) {
  raw = strip_bom(raw);
  std::string_view body = text::trim(raw);
  if (body.empty()) return {};

  bool has_arrow = body.find("-->") != std::string_view::npos;
  bool has_header = body.substr(0, 6) == "WEBVTT";
  if (!has_arrow && !has_header) {
    throw Error(ErrorKind::UnrecognizedFormat, "no WEBVTT header and no cue timing lines");
  }

  SubtitleFormat format = hint;
  if (format == SubtitleFormat::automatic) {
    if (has_header) {
      format = SubtitleFormat::vtt;
    } else {
      // First timing line decides: SubRip uses a comma before the milliseconds.
      std::size_t arrow = body.find("-->");
      std::size_t line_start = body.rfind('\n', arrow);
      line_start = line_start == std::string_view::npos ? 0 : line_start + 1;
      std::string_view left = body.substr(line_start, arrow - line_start);
      format = left.find(',') != std::string_view::npos ? SubtitleFormat::srt : SubtitleFormat::vtt;
    }
  }

  ParseResult result = format == SubtitleFormat::srt ? parse_srt(raw) : parse_vtt(raw);
  std::stable_sort(result.track.cues.begin(), result.track.cues.end(),
                   [](const SubtitleCue& a, const SubtitleCue& b) { return a.start_ms < b.start_ms; });
  for (std::size_t i = 0; i < result.track.cues.size(); ++i) result.track.cues[i].index = i;
  return result;
}

std::string format_vtt_timestamp(Millis ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld.%03lld", static_cast<long long>(ms / 3'600'000),
                static_cast<long long>(ms / 60'000 % 60), static_cast<long long>(ms / 1000 % 60),
                static_cast<long long>(ms % 1000));
  return buf;
}

std::string format_srt_timestamp(Millis ms) {
  std::string s = format_vtt_timestamp(ms);
  s[8] = ',';
  return s;
}

std::string to_vtt(const SubtitleTrack& track) {
  std::string out = "WEBVTT\n";
  if (track.language != "unknown") out += "Language: " + track.language + "\n";
  for (const auto& cue : track.cues) {
    out += "\n" + format_vtt_timestamp(cue.start_ms) + " --> " + format_vtt_timestamp(cue.end_ms) + "\n";
    out += cue.text + "\n";
  }
  return out;
}

}  // namespace guide::subtitle
