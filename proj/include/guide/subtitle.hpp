#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Parsing, cleaning, sentence merging and context windows over subtitle tracks.
// Everything here is a pure function over immutable inputs.
namespace guide::subtitle {

using Millis = std::int64_t;

struct SubtitleCue {
  std::size_t index = 0;
  Millis start_ms = 0;
  Millis end_ms = 0;
  std::string text;

  bool operator==(const SubtitleCue&) const = default;
};

enum class CaptionOrigin { manual, auto_generated };

struct SubtitleTrack {
  std::vector<SubtitleCue> cues;
  std::string language = "unknown";
  CaptionOrigin origin = CaptionOrigin::manual;

  bool operator==(const SubtitleTrack&) const = default;
};

enum class SubtitleFormat { vtt, srt, automatic };

struct ParseResult {
  SubtitleTrack track;
  std::size_t skipped_cues = 0;  // malformed cues dropped while parsing
};

// Throws Error(UnrecognizedFormat) when the input is non-empty and carries no
// detectable VTT or SRT cue structure.
ParseResult parse_subtitles(std::string_view raw, SubtitleFormat hint = SubtitleFormat::automatic);

inline constexpr std::size_t kTranscriptCap = 10'000;
inline constexpr Millis kDefaultSentenceGapMs = 1'500;

struct CleanTranscript {
  // One sentence per line.
  std::string text;
  // Byte ranges [first, second) of each sentence within text.
  std::vector<std::pair<std::size_t, std::size_t>> sentence_spans;
};

struct CleanOptions {
  std::size_t max_chars = kTranscriptCap;
  Millis gap_threshold_ms = kDefaultSentenceGapMs;
};

CleanTranscript clean_transcript(const SubtitleTrack& track, const CleanOptions& options = {});
// Re-cleans already segmented text (one segment per line). Used for idempotence
// checks and for transcripts that arrive as plain text.
CleanTranscript clean_transcript_text(std::string_view text, const CleanOptions& options = {});

// Strips markup, inline timestamps and cue markers from one line of caption text.
std::string clean_line(std::string_view line);

struct MergeOptions {
  Millis gap_threshold_ms = kDefaultSentenceGapMs;
};

SubtitleTrack merge_sentences(const SubtitleTrack& track, const MergeOptions& options = {});

struct SubtitleContext {
  std::string preceding;
  std::string current;
  std::string following;

  bool operator==(const SubtitleContext&) const = default;
};

// Index of the cue covering t, or of the nearest cue when t falls in a gap
// (ties go to the earlier cue). When t sits on a shared boundary the cue that
// starts at t wins. Throws Error(EmptyTrack) on an empty track.
std::size_t cue_at(const SubtitleTrack& track, Millis t);
SubtitleContext context_at(const SubtitleTrack& track, Millis t);

// Timestamp helpers shared with the writers below.
std::string format_vtt_timestamp(Millis ms);
std::string format_srt_timestamp(Millis ms);
std::string to_vtt(const SubtitleTrack& track);

}  // namespace guide::subtitle
