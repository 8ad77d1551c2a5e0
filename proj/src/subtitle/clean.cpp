#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <optional>

#include "guide/error.hpp"
#include "guide/subtitle.hpp"
#include "guide/text.hpp"

namespace guide::subtitle {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::size_t digits_at(std::string_view s, std::size_t i) {
  std::size_t n = 0;
  while (i + n < s.size() && is_digit(s[i + n])) ++n;
  return n;
}

// Length of a [H+:]MM:SS(.|,)mmm timestamp starting at i, or 0.
std::size_t timestamp_at(std::string_view s, std::size_t i) {
  auto two_digits_colon = [&](std::size_t p) {
    return p + 3 <= s.size() && is_digit(s[p]) && is_digit(s[p + 1]) && s[p + 2] == ':';
  };
  auto tail = [&](std::size_t p) -> std::size_t {
    // SS.mmm
    if (p + 6 > s.size()) return 0;
    if (!is_digit(s[p]) || !is_digit(s[p + 1])) return 0;
    if (s[p + 2] != '.' && s[p + 2] != ',') return 0;
    if (!is_digit(s[p + 3]) || !is_digit(s[p + 4]) || !is_digit(s[p + 5])) return 0;
    return 6;
  };
  std::size_t lead = digits_at(s, i);
  if (lead > 0 && i + lead < s.size() && s[i + lead] == ':' && two_digits_colon(i + lead + 1)) {
    if (std::size_t t = tail(i + lead + 4)) return lead + 4 + t;
  }
  if (two_digits_colon(i)) {
    if (std::size_t t = tail(i + 3)) return 3 + t;
  }
  return 0;
}

std::string strip_timestamps(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (is_digit(s[i])) {
      if (std::size_t n = timestamp_at(s, i)) {
        i += n;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

// Removes <...> spans that contain no other '<', and {\...} override blocks.
std::string strip_tags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '<') {
      std::size_t close = s.find_first_of("<>", i + 1);
      if (close != std::string_view::npos && s[close] == '>') {
        i = close + 1;
        continue;
      }
    } else if (s[i] == '{' && i + 1 < s.size() && s[i + 1] == '\\') {
      std::size_t close = s.find('}', i + 2);
      if (close != std::string_view::npos) {
        i = close + 1;
        continue;
      }
    }
    out += s[i++];
  }
  return out;
}

struct Entity {
  std::string_view name;
  std::string_view value;
};

constexpr std::array<Entity, 7> kEntities{{
    {"&amp;", "&"},
    {"&lt;", "<"},
    {"&gt;", ">"},
    {"&quot;", "\""},
    {"&#39;", "'"},
    {"&apos;", "'"},
    {"&nbsp;", " "},
}};

std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    bool replaced = false;
    if (s[i] == '&') {
      for (const auto& e : kEntities) {
        if (s.substr(i, e.name.size()) == e.name) {
          out += e.value;
          i += e.name.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += s[i++];
  }
  return out;
}

bool is_header_line(std::string_view line) {
  auto word_prefix = [&](std::string_view w) {
    return line.substr(0, w.size()) == w && (line.size() == w.size() || line[w.size()] == ' ' || line[w.size()] == '\t');
  };
  return word_prefix("WEBVTT") || word_prefix("NOTE") || word_prefix("STYLE") || word_prefix("REGION") ||
         text::starts_with_ci(line, "Kind:") || text::starts_with_ci(line, "Language:");
}

std::string clean_line_once(std::string_view line) {
  std::string_view trimmed = text::trim(line);
  if (trimmed.find("-->") != std::string_view::npos || is_header_line(trimmed)) return {};
  std::string s = strip_tags(trimmed);
  s = strip_timestamps(s);
  s = decode_entities(s);
  return text::collapse_whitespace(s);
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Splits after terminal punctuation (plus closing quotes/brackets) followed by
// whitespace or end of line.
std::vector<std::string> split_sentences(std::string_view line) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (!is_terminal(line[i])) continue;
    std::size_t j = i + 1;
    while (j < line.size() && (is_terminal(line[j]) || is_closer(line[j]))) ++j;
    if (j == line.size() || is_space(line[j])) {
      std::string_view piece = text::trim(line.substr(begin, j - begin));
      if (!piece.empty()) out.emplace_back(piece);
      begin = j;
      i = j;
    } else {
      i = j - 1;
    }
  }
  std::string_view rest = text::trim(line.substr(std::min(begin, line.size())));
  if (!rest.empty()) out.emplace_back(rest);
  return out;
}

std::vector<std::string> canonical_pass(const std::vector<std::string>& lines) {
  std::vector<std::string> out;
  for (const auto& line : lines) {
    std::string cleaned = clean_line(line);
    if (cleaned.empty()) continue;
    for (auto& sentence : split_sentences(cleaned)) {
      if (!out.empty() && out.back() == sentence) continue;
      out.push_back(std::move(sentence));
    }
  }
  return out;
}

std::vector<std::string> canonicalize(std::vector<std::string> lines) {
  while (true) {
    auto next = canonical_pass(lines);
    if (next == lines) return next;
    lines = std::move(next);
  }
}

CleanTranscript assemble(std::vector<std::string> sentences, std::size_t max_chars) {
  std::size_t total = 0;
  std::size_t keep = 0;
  for (; keep < sentences.size(); ++keep) {
    std::size_t add = text::utf8_length(sentences[keep]) + (keep > 0 ? 1 : 0);
    if (total + add > max_chars) break;
    total += add;
  }
  if (keep == 0 && !sentences.empty()) {
    std::string& first = sentences.front();
    first = std::string(text::trim(std::string_view(first).substr(0, text::utf8_offset(first, max_chars))));
    keep = first.empty() ? 0 : 1;
  }
  sentences.resize(keep);

  CleanTranscript out;
  for (const auto& s : sentences) {
    if (!out.text.empty()) out.text += '\n';
    std::size_t start = out.text.size();
    out.text += s;
    out.sentence_spans.emplace_back(start, out.text.size());
  }
  return out;
}

}  // namespace

std::string clean_line(std::string_view line) {
  std::string current(line);
  while (true) {
    std::string next = clean_line_once(current);
    if (next == current) return next;
    current = std::move(next);
  }
}

CleanTranscript clean_transcript(const SubtitleTrack& track, const CleanOptions& options) {
  // Cleaned lines grouped into runs of cues with no long silence between them.
  std::vector<std::string> groups;
  std::string group;
  std::string last_line;
  Millis prev_end = 0;
  bool first = true;
  for (const auto& cue : track.cues) {
    if (!first && cue.start_ms - prev_end > options.gap_threshold_ms && !group.empty()) {
      groups.push_back(std::move(group));
      group.clear();
    }
    first = false;
    prev_end = std::max(prev_end, cue.end_ms);
    for (std::string_view raw : text::split_lines(cue.text)) {
      std::string line = clean_line(raw);
      if (line.empty() || line == last_line) continue;
      last_line = line;
      if (!group.empty()) group += ' ';
      group += line;
    }
  }
  if (!group.empty()) groups.push_back(std::move(group));
  return assemble(canonicalize(std::move(groups)), options.max_chars);
}

CleanTranscript clean_transcript_text(std::string_view text, const CleanOptions& options) {
  std::vector<std::string> lines;
  for (std::string_view line : text::split_lines(text)) lines.emplace_back(line);
  return assemble(canonicalize(std::move(lines)), options.max_chars);
}

SubtitleTrack merge_sentences(const SubtitleTrack& track, const MergeOptions& options) {
  SubtitleTrack out;
  out.language = track.language;
  out.origin = track.origin;

  std::optional<SubtitleCue> buffer;
  auto flush = [&] {
    if (!buffer) return;
    buffer->index = out.cues.size();
    out.cues.push_back(std::move(*buffer));
    buffer.reset();
  };
  auto ends_sentence = [](std::string_view s) {
    s = text::trim(s);
    while (!s.empty() && is_closer(s.back())) s.remove_suffix(1);
    return !s.empty() && is_terminal(s.back());
  };

  for (const auto& cue : track.cues) {
    if (buffer && cue.start_ms - buffer->end_ms > options.gap_threshold_ms) flush();
    if (!buffer) {
      buffer = cue;
    } else {
      buffer->end_ms = std::max(buffer->end_ms, cue.end_ms);
      std::string_view piece = text::trim(cue.text);
      if (!piece.empty()) {
        std::string_view existing = text::trim(buffer->text);
        buffer->text = existing.empty() ? std::string(piece) : std::string(existing) + " " + std::string(piece);
      }
    }
    if (ends_sentence(buffer->text)) flush();
  }
  flush();
  return out;
}

std::size_t cue_at(const SubtitleTrack& track, Millis t) {
  if (track.cues.empty()) throw Error(ErrorKind::EmptyTrack, "context requested on a track with no cues");
  std::size_t best = 0;
  Millis best_distance = std::numeric_limits<Millis>::max();
  for (std::size_t i = 0; i < track.cues.size(); ++i) {
    const auto& cue = track.cues[i];
    Millis distance = t < cue.start_ms ? cue.start_ms - t : (t > cue.end_ms ? t - cue.end_ms : 0);
    bool better = distance < best_distance;
    // Among covering cues the latest one to start wins, so a cue starting exactly at t beats
    // the one ending at t. Gap ties keep the earlier cue.
    if (distance == 0 && best_distance == 0 && cue.start_ms >= track.cues[best].start_ms) better = true;
    if (better) {
      best = i;
      best_distance = distance;
    }
  }
  return best;
}

SubtitleContext context_at(const SubtitleTrack& track, Millis t) {
  std::size_t i = cue_at(track, t);
  SubtitleContext ctx;
  ctx.current = track.cues[i].text;
  if (i > 0) ctx.preceding = track.cues[i - 1].text;
  if (i + 1 < track.cues.size()) ctx.following = track.cues[i + 1].text;
  return ctx;
}

}  // namespace guide::subtitle
