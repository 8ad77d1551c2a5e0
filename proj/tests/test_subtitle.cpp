#include <doctest.h>

#include <random>

#include "guide/error.hpp"
#include "guide/subtitle.hpp"
#include "guide/text.hpp"
#include "support/subtitle_fuzz.hpp"

using namespace guide;
using namespace guide::subtitle;

namespace {

SubtitleTrack make_track(std::vector<std::tuple<Millis, Millis, std::string>> cues) {
  SubtitleTrack track;
  for (auto& [s, e, text] : cues) track.cues.push_back({track.cues.size(), s, e, text});
  return track;
}

std::string squash(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != ' ' && c != '\n' && c != '\t') out += c;
  return out;
}

}  // namespace

TEST_CASE("empty input parses to an empty track") {
  auto r = parse_subtitles("");
  CHECK(r.track.cues.empty());
  CHECK(r.skipped_cues == 0);
  CHECK(parse_subtitles("WEBVTT\n").track.cues.empty());
}

TEST_CASE("two-cue vtt") {
  auto r = parse_subtitles(
      "WEBVTT\n\n00:00:01.000 --> 00:00:03.000\nclick File\n\n00:00:03.500 --> 00:00:05.250\nthen Save\n");
  REQUIRE(r.track.cues.size() == 2);
  CHECK(r.track.cues[0] == SubtitleCue{0, 1000, 3000, "click File"});
  CHECK(r.track.cues[1] == SubtitleCue{1, 3500, 5250, "then Save"});
  CHECK(r.track.origin == CaptionOrigin::manual);
}

TEST_CASE("srt with a corrupt index line skips one cue") {
  auto r = parse_subtitles("1\n00:00:01,000 --> 00:00:02,000\nfirst\n\nx7\n00:00:03,000 --> 00:00:04,000\nsecond\n");
  REQUIRE(r.track.cues.size() == 1);
  CHECK(r.track.cues[0].text == "first");
  CHECK(r.skipped_cues == 1);
}

TEST_CASE("vtt details") {
  SUBCASE("language header, cue ids, settings, notes") {
    auto r = parse_subtitles(
        "WEBVTT\nKind: captions\nLanguage: de\n\nNOTE hello\n\nintro\n00:01.000 --> 00:02.000 align:start\nHallo\n\n"
        "STYLE\n::cue { color: red }\n\n01:00:00.000 --> 01:00:01.500\nzwei\nZeilen\n");
    REQUIRE(r.track.cues.size() == 2);
    CHECK(r.track.language == "de");
    CHECK(r.track.cues[0].start_ms == 1000);
    CHECK(r.track.cues[1].start_ms == 3'600'000);
    CHECK(r.track.cues[1].text == "zwei\nZeilen");
    CHECK(r.skipped_cues == 0);
  }
  SUBCASE("inline timestamps mark auto captions and are stripped") {
    auto r = parse_subtitles("WEBVTT\n\n00:00:01.000 --> 00:00:02.000\nclick<00:00:01.500><c> the</c> menu\n");
    REQUIRE(r.track.cues.size() == 1);
    CHECK(r.track.origin == CaptionOrigin::auto_generated);
    CHECK(r.track.cues[0].text == "click<c> the</c> menu");
  }
  SUBCASE("cue glued to the header") {
    auto r = parse_subtitles("WEBVTT\n00:00:01.000 --> 00:00:02.000\nhi\n");
    REQUIRE(r.track.cues.size() == 1);
    CHECK(r.track.cues[0].text == "hi");
  }
  SUBCASE("end before start is skipped, cues sorted") {
    auto r = parse_subtitles(
        "WEBVTT\n\n00:00:05.000 --> 00:00:06.000\nb\n\n00:00:03.000 --> 00:00:02.000\nbad\n\n00:00:01.000 --> "
        "00:00:02.000\na\n");
    REQUIRE(r.track.cues.size() == 2);
    CHECK(r.track.cues[0].text == "a");
    CHECK(r.track.cues[1].index == 1);
    CHECK(r.skipped_cues == 1);
  }
  SUBCASE("BOM and CRLF") {
    auto r = parse_subtitles("\xEF\xBB\xBFWEBVTT\r\n\r\n00:00:01.000 --> 00:00:02.000\r\nhi\r\n");
    REQUIRE(r.track.cues.size() == 1);
    CHECK(r.track.cues[0].text == "hi");
  }
}

TEST_CASE("format detection") {
  CHECK(parse_subtitles("00:00:01.000 --> 00:00:02.000\nheadless vtt\n").track.cues.size() == 1);
  CHECK(parse_subtitles("00:00:01,000 --> 00:00:02,000\nsrt without index\n").track.cues.size() == 1);
  CHECK_THROWS_AS(parse_subtitles("just some prose\nwith no cues"), Error);
  try {
    parse_subtitles("nothing here");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnrecognizedFormat);
  }
}

TEST_CASE("to_vtt round trips") {
  auto track = make_track({{0, 1500, "one"}, {1500, 3000, "two\nlines"}});
  auto r = parse_subtitles(to_vtt(track));
  CHECK(r.track.cues == track.cues);
}

TEST_CASE("clean_transcript examples") {
  CHECK(clean_transcript(SubtitleTrack{}).text.empty());
  CHECK(clean_transcript(SubtitleTrack{}).sentence_spans.empty());

  auto track = make_track({{0, 1000, "click <b>File</b>"}, {1000, 2000, "click File"}, {2000, 3000, "then Save"}});
  auto clean = clean_transcript(track);
  CHECK(clean.text == "click File then Save");
  REQUIRE(clean.sentence_spans.size() == 1);
  CHECK(clean.sentence_spans[0] == std::pair<std::size_t, std::size_t>{0, clean.text.size()});
}

TEST_CASE("clean_transcript segmentation") {
  auto track = make_track({{0, 1000, "Open GIMP. Then click"},
                           {1000, 2000, "the Colors menu!"},
                           {5000, 6000, "no punctuation here"},
                           {6000, 7000, "still going"}});
  auto clean = clean_transcript(track);
  CHECK(clean.text == "Open GIMP.\nThen click the Colors menu!\nno punctuation here still going");
  REQUIRE(clean.sentence_spans.size() == 3);
  CHECK(clean.text.substr(clean.sentence_spans[1].first,
                          clean.sentence_spans[1].second - clean.sentence_spans[1].first) ==
        "Then click the Colors menu!");
}

TEST_CASE("clean_line") {
  CHECK(clean_line("00:00:01.000 --> 00:00:02.000") == "");
  CHECK(clean_line("WEBVTT") == "");
  CHECK(clean_line("at 00:01:02.345 we <i>click</i>") == "at we click");
  CHECK(clean_line("Tom &amp; Jerry &lt;b&gt;bold&lt;/b&gt;") == "Tom & Jerry bold");
  CHECK(clean_line("{\\an8}top line") == "top line");
  CHECK(clean_line("a < b and c") == "a < b and c");
  CHECK(clean_line("1 > 0") == "1 > 0");
  CHECK(clean_line("12:30 is lunch") == "12:30 is lunch");
}

TEST_CASE("truncation at sentence boundary") {
  std::string sentence(99, 'a');
  sentence += '.';
  std::vector<std::tuple<Millis, Millis, std::string>> cues;
  for (int i = 0; i < 300; ++i) cues.emplace_back(i * 1000, i * 1000 + 1000, sentence + " " + std::to_string(i));
  auto clean = clean_transcript(make_track(cues));
  CHECK(text::utf8_length(clean.text) <= kTranscriptCap);
  CHECK(text::utf8_length(clean.text) > kTranscriptCap - 200);
  CHECK(clean.text.back() != ' ');
  for (auto [a, b] : clean.sentence_spans) CHECK(b - a <= 104);

  SUBCASE("single over-long sentence hard-cuts") {
    std::string big(30'000, 'x');
    auto c = clean_transcript(make_track({{0, 1000, big}}));
    CHECK(c.text.size() == kTranscriptCap);
  }
  SUBCASE("multi-byte text counts code points") {
    std::string big;
    for (int i = 0; i < 12'000; ++i) big += "\xC3\xA9";
    auto c = clean_transcript(make_track({{0, 1000, big}}));
    CHECK(text::utf8_length(c.text) == kTranscriptCap);
    CHECK(c.text.size() == 2 * kTranscriptCap);
  }
}

TEST_CASE("30,000 character track stays under the cap") {
  std::vector<std::tuple<Millis, Millis, std::string>> cues;
  std::string total;
  for (int i = 0; total.size() < 30'000; ++i) {
    std::string line = "Step " + std::to_string(i) + " we click the Layer menu and pick an option.";
    total += line;
    cues.emplace_back(i * 2000, i * 2000 + 2000, line);
  }
  CHECK(text::utf8_length(clean_transcript(make_track(cues)).text) <= kTranscriptCap);
}

TEST_CASE("cleaning invariants over fuzzed documents") {
  std::mt19937 rng(1234);
  for (int i = 0; i < 200; ++i) {
    std::string doc = guide::testing::fuzz_subtitle_document(rng);
    auto parsed = parse_subtitles(doc);
    auto clean = clean_transcript(parsed.track);
    INFO(doc);
    CHECK_FALSE(guide::testing::has_timestamp(clean.text));
    CHECK_FALSE(guide::testing::has_angle_tag(clean.text));
    CHECK_FALSE(guide::testing::has_consecutive_duplicate(clean.text));
    CHECK(clean.text.find("-->") == std::string::npos);
    CHECK(text::utf8_length(clean.text) <= kTranscriptCap);
    CHECK(clean_transcript_text(clean.text).text == clean.text);
    for (auto [a, b] : clean.sentence_spans) {
      CHECK(a < b);
      CHECK(b <= clean.text.size());
    }
  }
}

TEST_CASE("merge_sentences") {
  SUBCASE("contiguous fragments join") {
    auto merged = merge_sentences(make_track({{0, 1000, "click on"}, {1000, 2500, "the File menu."}}));
    REQUIRE(merged.cues.size() == 1);
    CHECK(merged.cues[0] == SubtitleCue{0, 0, 2500, "click on the File menu."});
  }
  SUBCASE("sentence aligned track is a fixed point") {
    auto track = make_track({{0, 1000, "Open GIMP."}, {1000, 2000, "Click Colors!"}, {2100, 3000, "Done?"}});
    CHECK(merge_sentences(track) == track);
  }
  SUBCASE("gap above threshold splits, gap at threshold does not") {
    auto split = merge_sentences(make_track({{0, 1000, "click on"}, {2501, 3000, "the menu"}}));
    CHECK(split.cues.size() == 2);
    auto joined = merge_sentences(make_track({{0, 1000, "click on"}, {2500, 3000, "the menu"}}));
    CHECK(joined.cues.size() == 1);
  }
  SUBCASE("content preserved modulo whitespace") {
    std::mt19937 rng(7);
    for (int i = 0; i < 100; ++i) {
      auto track = parse_subtitles(guide::testing::fuzz_subtitle_document(rng)).track;
      std::string before, after;
      for (auto& c : track.cues) before += c.text;
      auto merged = merge_sentences(track);
      for (auto& c : merged.cues) after += c.text;
      CHECK(squash(before) == squash(after));
      for (std::size_t k = 1; k < merged.cues.size(); ++k) CHECK(merged.cues[k - 1].start_ms <= merged.cues[k].start_ms);
    }
  }
}

TEST_CASE("context_at") {
  CHECK_THROWS_AS(context_at(SubtitleTrack{}, 0), Error);

  auto single = make_track({{1000, 2000, "only"}});
  CHECK(context_at(single, 0) == SubtitleContext{"", "only", ""});
  CHECK(context_at(single, 99'999) == SubtitleContext{"", "only", ""});

  auto three = make_track({{0, 1000, "a"}, {2000, 3000, "b"}, {4000, 5000, "c"}});
  CHECK(context_at(three, 2500) == SubtitleContext{"a", "b", "c"});
  CHECK(context_at(three, 1500).current == "a");  // equidistant gap goes to the earlier cue
  CHECK(context_at(three, 1501).current == "b");

  auto touching = make_track({{0, 1000, "a"}, {1000, 2000, "b"}});
  CHECK(context_at(touching, 1000).current == "b");
}

TEST_CASE("context_at picks a nearest cue") {
  std::mt19937 rng(99);
  for (int round = 0; round < 300; ++round) {
    SubtitleTrack track;
    Millis t = 0;
    int n = std::uniform_int_distribution<int>(1, 12)(rng);
    for (int i = 0; i < n; ++i) {
      Millis s = t + std::uniform_int_distribution<int>(0, 2000)(rng);
      Millis e = s + std::uniform_int_distribution<int>(0, 2000)(rng);
      track.cues.push_back({track.cues.size(), s, e, std::to_string(i)});
      t = e;
    }
    Millis q = std::uniform_int_distribution<Millis>(-500, t + 500)(rng);
    auto dist = [&](const SubtitleCue& c) { return q < c.start_ms ? c.start_ms - q : (q > c.end_ms ? q - c.end_ms : 0); };
    std::size_t got = cue_at(track, q);
    for (const auto& c : track.cues) CHECK(dist(track.cues[got]) <= dist(c));
  }
}
