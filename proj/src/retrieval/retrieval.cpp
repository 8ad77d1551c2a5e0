#include "guide/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <set>
#include <tuple>

#include "guide/concurrency.hpp"
#include "guide/cost.hpp"
#include "guide/error.hpp"
#include "guide/io.hpp"
#include "guide/text.hpp"

namespace guide::retrieval {

namespace {

constexpr const char* kQuerySystem =
    "You write YouTube search queries for software tutorials. Given a computer task and the application it runs in, "
    "reply with one short search-friendly query phrased as \"How to ...\" that names the application. Reply with the "
    "query only.";

constexpr const char* kSimplifySystem =
    "Simplify a YouTube search query by removing filler words such as \"how to\", \"tutorial\", \"guide\" and "
    "articles, keeping the application name and the key action words. Reply with the simplified query only.";

constexpr const char* kClassifySystem =
    "You screen YouTube videos for a GUI agent. Decide from the title and the subtitle transcript whether the video "
    "shows actual GUI operation demonstrations (someone operating the software on screen) rather than theoretical "
    "explanations, reviews, news or entertainment. Reply with a JSON object: "
    "{\"is_gui_demo\": true or false, \"rationale\": \"one sentence\"}.";

constexpr const char* kTopicSystem =
    "You summarise GUI tutorial videos. From the title and the subtitle transcript, write a topic of 12 to 30 words "
    "that states the software, the task and the key operations actually demonstrated. Trust the narration over the "
    "title when they disagree. Reply with the topic text only.";

constexpr const char* kScoreSystem =
    "You rate how useful tutorial videos are for completing a computer task. Each video is described by its topic "
    "and title; the topic takes priority. Give every video a relevance score between 0.0 and 1.0.";

provider::ModelRequest make_request(const ModelChoice& model, std::string_view stage, std::string system,
                                    std::string user) {
  provider::ModelRequest req;
  req.model_name = model.name;
  req.temperature = model.temperature;
  req.max_output_tokens = model.max_output_tokens;
  req.stage = std::string(stage);
  req.messages.push_back({"system", {provider::ContentPart::of_text(std::move(system))}});
  req.messages.push_back({"user", {provider::ContentPart::of_text(std::move(user))}});
  return req;
}

void add_warning(WarningSink* sink, std::string code, std::string msg, std::string subject = {}) {
  if (sink) sink->add(std::move(code), std::move(msg), std::move(subject));
}

// Drops wrapping quotes and a leading label such as "Query:".
std::string unwrap_reply(std::string_view reply, std::string_view label) {
  std::string s = text::collapse_whitespace(reply);
  if (text::starts_with_ci(s, label)) {
    s = std::string(text::trim(std::string_view(s).substr(label.size())));
    if (!s.empty() && s.front() == ':') s = std::string(text::trim(std::string_view(s).substr(1)));
  }
  while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = std::string(text::trim(std::string_view(s).substr(1, s.size() - 2)));
  }
  return s;
}

std::string transcript_prompt(const VideoCandidate& c, const subtitle::CleanTranscript& t) {
  return "Title: " + c.title + "\nTranscript:\n" + t.text;
}

}  // namespace

nlohmann::json to_json(const TaskSpec& t) {
  return {{"task_id", t.task_id}, {"instruction", t.instruction}, {"application", t.application}};
}

TaskSpec task_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidInput, "task must be a JSON object");
  TaskSpec t;
  t.task_id = j.value("task_id", j.value("id", std::string{}));
  t.instruction = std::string(text::trim(j.value("instruction", std::string{})));
  t.application = std::string(text::trim(j.value("application", std::string{})));
  if (t.instruction.empty()) throw Error(ErrorKind::InvalidInput, "task instruction is empty");
  if (t.application.empty()) throw Error(ErrorKind::InvalidInput, "task application is empty");
  if (t.task_id.empty()) t.task_id = "task-" + io::sha256_hex(t.application + "\n" + t.instruction).substr(0, 12);
  return t;
}

std::vector<std::string> SearchQuery::variants() const {
  std::vector<std::string> out{primary};
  if (simplified && *simplified != primary) out.push_back(*simplified);
  return out;
}

std::string strip_filler(std::string_view query) {
  static const std::set<std::string> filler_words = {
      "how", "to", "tutorial", "tutorials", "guide", "a", "an", "the", "in", "on", "with", "using",
      "easy", "easily", "quick", "quickly", "beginner", "beginners", "for", "step", "by", "your", "my", "do", "i", "you"};
  std::string cleaned;
  for (char c : query) {
    bool keep = std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80 ||
                c == '-' || c == '+' || c == '.' || c == '#' || c == '\'';
    cleaned += keep ? c : ' ';
  }
  std::vector<std::string> kept;
  for (auto& w : text::split_words(cleaned)) {
    std::string trimmed = w;
    while (!trimmed.empty() && (trimmed.back() == '.' || trimmed.back() == '\'')) trimmed.pop_back();
    if (trimmed.empty() || filler_words.count(text::to_lower(trimmed))) continue;
    kept.push_back(trimmed);
  }
  return text::join(kept, " ");
}

SearchQuery generate_queries(const TaskSpec& task, provider::ModelGateway& gateway, const RetrievalModels& models,
                             WarningSink* warnings) {
  SearchQuery q;
  auto primary_req = make_request(models.query, cost::stage::query_generation, kQuerySystem,
                                  "Task: " + task.instruction + "\nApplication: " + task.application);
  q.primary = unwrap_reply(gateway.chat(primary_req).text, "query");
  if (q.primary.empty()) throw Error(ErrorKind::ModelFailure, "query generation returned no query");

  std::string simplified;
  try {
    auto req = make_request(models.mini, cost::stage::query_simplification, kSimplifySystem, "Query: " + q.primary);
    simplified = strip_filler(unwrap_reply(gateway.chat(req).text, "query"));
  } catch (const Error& e) {
    add_warning(warnings, "simplification_failed", std::string(e.what()) + "; stripping the primary query instead");
    simplified = strip_filler(q.primary);
  }
  if (!simplified.empty() && text::to_lower(simplified) != text::to_lower(q.primary)) q.simplified = simplified;
  return q;
}

std::vector<VideoCandidate> search_candidates(const SearchQuery& queries, provider::VideoSource& source, int min_total,
                                              WarningSink* warnings) {
  std::vector<VideoCandidate> out;
  std::set<std::string> seen;
  auto variants = queries.variants();
  std::size_t failures = 0;
  std::string last_error;
  for (const auto& v : variants) {
    std::vector<VideoCandidate> found;
    try {
      found = source.search(v, min_total);
    } catch (const Error& e) {
      ++failures;
      last_error = e.what();
      add_warning(warnings, "search_failed", e.what(), v);
      continue;
    }
    for (auto& c : found)
      if (seen.insert(c.video_id).second) out.push_back(std::move(c));
  }
  if (failures == variants.size()) throw Error(ErrorKind::SearchUnavailable, "every query variant failed: " + last_error);
  return out;
}

namespace {

// Letters and digits outside ASCII, by block: Latin-1 and Latin Extended,
// Greek through the Indic and South-East Asian scripts, kana and CJK, Hangul.
bool non_ascii_alnum(char32_t cp) {
  return (cp >= 0xC0 && cp <= 0x24F && cp != 0xD7 && cp != 0xF7) || (cp >= 0x370 && cp <= 0x1FFF) ||
         (cp >= 0x3040 && cp <= 0x9FFF) || (cp >= 0xAC00 && cp <= 0xD7AF);
}

}  // namespace

bool valid_title(std::string_view title) {
  std::size_t kept = 0;
  bool alnum = false;
  std::size_t i = 0;
  while (i < title.size()) {
    unsigned char c = static_cast<unsigned char>(title[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    if (i + len > title.size()) len = 1;
    char32_t cp = len == 1 ? c : c & (0xFF >> (len + 1));
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(title[i + k]) & 0x3F);
    i += len;
    bool control = cp < 0x20 || (cp >= 0x7F && cp < 0xA0);
    if (control) continue;
    ++kept;
    if (cp < 0x80 ? std::isalnum(static_cast<int>(cp)) != 0 : non_ascii_alnum(cp)) alnum = true;
  }
  return kept >= 3 && alnum;
}

std::vector<VideoCandidate> prefilter(const std::vector<VideoCandidate>& candidates) {
  std::vector<VideoCandidate> out;
  for (const auto& c : candidates) {
    if (c.duration_s >= 0 && c.duration_s < kMaxDurationS && valid_title(c.title)) out.push_back(c);
  }
  return out;
}

StageOneVerdict classify_gui(const VideoCandidate& candidate, const subtitle::CleanTranscript* transcript,
                             provider::ModelGateway& gateway, const ModelChoice& model, WarningSink* warnings) {
  if (!transcript || text::trim(transcript->text).empty()) return {false, "no subtitles available"};
  auto req = make_request(model, cost::stage::gui_classification, kClassifySystem,
                          transcript_prompt(candidate, *transcript));
  req.video_id = candidate.video_id;
  std::string reply;
  try {
    reply = gateway.chat(req).text;
  } catch (const Error& e) {
    add_warning(warnings, "classification_failed", std::string(e.what()) + "; treated as non-GUI", candidate.video_id);
    return {false, "classification failed"};
  }
  auto obj = text::first_json_object(reply);
  if (obj) {
    auto j = nlohmann::json::parse(*obj, nullptr, false);
    if (j.is_object() && j.contains("is_gui_demo") && j["is_gui_demo"].is_boolean()) {
      StageOneVerdict v;
      v.is_gui_demo = j["is_gui_demo"].get<bool>();
      if (j.contains("rationale") && j["rationale"].is_string()) v.rationale = j["rationale"].get<std::string>();
      return v;
    }
  }
  add_warning(warnings, "classification_unreadable", "reply is not a verdict object; treated as non-GUI",
              candidate.video_id);
  return {false, "unreadable verdict"};
}

Topic normalize_topic(std::string_view raw) {
  std::string s = unwrap_reply(raw, "topic");
  auto words = text::split_words(s);
  if (words.size() > kTopicMaxWords) words.resize(kTopicMaxWords);
  Topic t;
  t.text = text::join(words, " ");
  t.word_count = words.size();
  return t;
}

Topic extract_topic(const VideoCandidate& candidate, const subtitle::CleanTranscript& transcript,
                    provider::ModelGateway& gateway, const ModelChoice& model, WarningSink* warnings) {
  auto req = make_request(model, cost::stage::topic_extraction, kTopicSystem, transcript_prompt(candidate, transcript));
  req.video_id = candidate.video_id;
  Topic t = normalize_topic(gateway.chat(req).text);
  if (t.word_count >= kTopicMinWords) return t;

  // The note makes the retry a distinct request, so replayed fixtures can differ.
  req.messages.back().content.push_back(provider::ContentPart::of_text(
      "Your previous topic had only " + std::to_string(t.word_count) + " words: \"" + t.text +
      "\". Write 12 to 30 words."));
  Topic retry = normalize_topic(gateway.chat(req).text);
  if (retry.word_count < kTopicMinWords) {
    add_warning(warnings, "topic_short", "topic has " + std::to_string(retry.word_count) + " words after a retry",
                candidate.video_id);
  }
  return retry;
}

std::string render_score_item(const ScoreItem& item) {
  return "TOPIC (higher priority): " + item.topic + ". TITLE: " + item.title + ". TOPIC: " + item.topic;
}

std::vector<double> parse_scores(std::string_view reply, std::size_t count, WarningSink* warnings) {
  std::string s(reply);
  for (char& c : s)
    if (c == '[' || c == ']' || c == ';' || c == '\n' || c == '\r') c = ',';
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    std::string tok(text::trim(std::string_view(s).substr(start, comma - start)));
    if (!tok.empty()) tokens.push_back(tok);
    start = comma + 1;
  }

  static const std::regex labelled(R"(^.*[:=]\s*(-?\d*\.?\d+)\s*$)");
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (i >= tokens.size()) {
      add_warning(warnings, "score_missing", "no score for item " + std::to_string(i) + "; using 0.0");
      out.push_back(0.0);
      continue;
    }
    const std::string& tok = tokens[i];
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    bool ok = end && end != tok.c_str() && *end == '\0';
    if (!ok) {
      std::smatch m;
      if (std::regex_match(tok, m, labelled)) {
        v = std::strtod(m[1].str().c_str(), nullptr);
        ok = true;
      }
    }
    if (!ok || std::isnan(v)) {
      add_warning(warnings, "score_unparseable", "item " + std::to_string(i) + " score '" + tok + "'; using 0.0");
      out.push_back(0.0);
      continue;
    }
    out.push_back(std::clamp(v, 0.0, 1.0));
  }
  if (tokens.size() > count) {
    add_warning(warnings, "score_extra", std::to_string(tokens.size() - count) + " extra scores ignored");
  }
  return out;
}

std::vector<double> score_relevance(const TaskSpec& task, const std::vector<ScoreItem>& items,
                                    provider::ModelGateway& gateway, const ModelChoice& model,
                                    WarningSink* warnings) {
  if (items.empty()) return {};
  std::string user = "Task: " + task.instruction + "\nApplication: " + task.application + "\n\nVideos:\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    user += std::to_string(i + 1) + ". " + render_score_item(items[i]) + "\n";
  }
  user += "\nReply with " + std::to_string(items.size()) +
          " comma-separated scores between 0.0 and 1.0, one per video, in the order listed, and nothing else.";
  auto req = make_request(model, cost::stage::relevance_scoring, kScoreSystem, std::move(user));
  return parse_scores(gateway.chat(req).text, items.size(), warnings);
}

RetrievalResult select_top_k(const std::string& task_id, std::vector<ScoredCandidate> scored, std::size_t k,
                             double min_relevance) {
  RetrievalResult r;
  r.task_id = task_id;
  std::stable_sort(scored.begin(), scored.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    return a.search_rank < b.search_rank;
  });
  for (auto& s : scored) {
    if (r.selected.size() >= k) break;
    if (!r.selected.empty() && s.relevance < min_relevance) break;
    r.selected.push_back(std::move(s));
  }
  return r;
}

FunnelReport run_funnel(const TaskSpec& task, provider::VideoSource& source, provider::ModelGateway& gateway,
                        const FunnelOptions& options) {
  WarningSink sink;
  FunnelReport report;
  report.task = task;
  report.queries = generate_queries(task, gateway, options.models, &sink);
  auto found = search_candidates(report.queries, source, options.max_candidates, &sink);
  auto kept = prefilter(found);
  std::set<std::string> kept_ids;
  for (const auto& c : kept) kept_ids.insert(c.video_id);

  for (std::size_t i = 0; i < found.size(); ++i) {
    CandidateTrace t;
    t.candidate = found[i];
    t.search_rank = i;
    t.passed_prefilter = kept_ids.count(found[i].video_id) > 0;
    report.candidates.push_back(std::move(t));
  }

  std::vector<std::size_t> stage1;
  for (std::size_t i = 0; i < report.candidates.size(); ++i)
    if (report.candidates[i].passed_prefilter) stage1.push_back(i);

  std::vector<std::optional<std::string>> raw(stage1.size());
  std::vector<std::optional<subtitle::CleanTranscript>> cleaned(stage1.size());
  std::size_t limit = static_cast<std::size_t>(std::max(1, options.max_in_flight));
  parallel_for(stage1.size(), limit, [&](std::size_t n) {
    CandidateTrace& t = report.candidates[stage1[n]];
    const std::string& id = t.candidate.video_id;
    try {
      raw[n] = source.fetch_subtitles(t.candidate);
    } catch (const Error& e) {
      sink.add("subtitles_unavailable", e.what(), id);
    }
    if (raw[n]) {
      try {
        auto parsed = subtitle::parse_subtitles(*raw[n]);
        t.subtitle_format = text::starts_with_ci(text::trim(*raw[n]), "WEBVTT") ? "vtt" : "srt";
        cleaned[n] = subtitle::clean_transcript(parsed.track, options.clean);
      } catch (const Error& e) {
        sink.add("subtitles_unreadable", e.what(), id);
      }
    }
    t.verdict = classify_gui(t.candidate, cleaned[n] ? &*cleaned[n] : nullptr, gateway, options.models.mini, &sink);
  });

  std::vector<std::size_t> stage2;
  for (std::size_t n = 0; n < stage1.size(); ++n) {
    CandidateTrace& t = report.candidates[stage1[n]];
    if (raw[n]) report.subtitles[t.candidate.video_id] = *raw[n];
    if (cleaned[n]) report.transcripts[t.candidate.video_id] = *cleaned[n];
    if (t.verdict && t.verdict->is_gui_demo) stage2.push_back(n);
  }

  parallel_for(stage2.size(), limit, [&](std::size_t m) {
    std::size_t n = stage2[m];
    CandidateTrace& t = report.candidates[stage1[n]];
    try {
      t.topic = extract_topic(t.candidate, *cleaned[n], gateway, options.models.mini, &sink);
    } catch (const Error& e) {
      sink.add("topic_failed", std::string(e.what()) + "; candidate dropped", t.candidate.video_id);
    }
  });

  std::vector<std::size_t> stage3;
  for (std::size_t i = 0; i < report.candidates.size(); ++i)
    if (report.candidates[i].topic) stage3.push_back(i);
  std::vector<ScoreItem> items;
  for (std::size_t i : stage3) items.push_back({report.candidates[i].candidate.title, report.candidates[i].topic->text});

  std::vector<double> scores(items.size(), 0.0);
  try {
    scores = score_relevance(task, items, gateway, options.models.mini, &sink);
  } catch (const Error& e) {
    sink.add("scoring_failed", std::string(e.what()) + "; all candidates scored 0.0");
  }

  std::vector<ScoredCandidate> scored;
  for (std::size_t j = 0; j < stage3.size(); ++j) {
    CandidateTrace& t = report.candidates[stage3[j]];
    t.relevance = scores[j];
    scored.push_back({t.candidate, *t.topic, scores[j], t.search_rank});
  }
  report.result = select_top_k(task.task_id, std::move(scored), options.top_k);
  // Worker threads add warnings in completion order; sort for stable artifacts.
  report.warnings = sink.snapshot();
  std::stable_sort(report.warnings.begin(), report.warnings.end(), [](const Warning& a, const Warning& b) {
    return std::tie(a.subject, a.code, a.message) < std::tie(b.subject, b.code, b.message);
  });
  return report;
}

nlohmann::json to_json(const ScoredCandidate& s) {
  return {{"candidate", to_json(s.candidate)},
          {"topic", s.topic.text},
          {"topic_words", s.topic.word_count},
          {"relevance", s.relevance},
          {"search_rank", s.search_rank}};
}

ScoredCandidate scored_from_json(const nlohmann::json& j) {
  ScoredCandidate s;
  s.candidate = candidate_from_json(j.at("candidate"));
  s.topic.text = j.at("topic").get<std::string>();
  s.topic.word_count = j.value("topic_words", text::split_words(s.topic.text).size());
  s.relevance = j.at("relevance").get<double>();
  s.search_rank = j.value("search_rank", std::size_t{0});
  return s;
}

nlohmann::json to_json(const RetrievalResult& r) {
  nlohmann::json sel = nlohmann::json::array();
  for (const auto& s : r.selected) sel.push_back(to_json(s));
  return {{"task_id", r.task_id}, {"selected", sel}};
}

RetrievalResult retrieval_result_from_json(const nlohmann::json& j) {
  RetrievalResult r;
  r.task_id = j.value("task_id", std::string{});
  for (const auto& s : j.at("selected")) r.selected.push_back(scored_from_json(s));
  return r;
}

nlohmann::json to_json(const FunnelReport& r) {
  nlohmann::json j = to_json(r.result);
  j["queries"] = {{"primary", r.queries.primary},
                  {"simplified", r.queries.simplified ? nlohmann::json(*r.queries.simplified) : nlohmann::json()}};
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    nlohmann::json t = {{"id", c.candidate.video_id},
                        {"search_rank", c.search_rank},
                        {"prefilter", c.passed_prefilter}};
    if (c.verdict) t["stage1"] = {{"is_gui_demo", c.verdict->is_gui_demo}, {"rationale", c.verdict->rationale}};
    if (c.topic) t["topic"] = c.topic->text;
    if (c.relevance) t["relevance"] = *c.relevance;
    if (!c.subtitle_format.empty()) t["subtitles"] = c.subtitle_format;
    trace.push_back(std::move(t));
  }
  j["funnel"] = trace;
  std::size_t prefiltered = 0, gui = 0, topics = 0;
  for (const auto& c : r.candidates) {
    prefiltered += c.passed_prefilter;
    gui += c.verdict && c.verdict->is_gui_demo;
    topics += c.topic.has_value();
  }
  j["counts"] = {{"candidates", r.candidates.size()},
                 {"prefiltered", prefiltered},
                 {"gui", gui},
                 {"topics", topics},
                 {"selected", r.result.selected.size()}};
  nlohmann::json w = nlohmann::json::array();
  for (const auto& x : r.warnings) w.push_back(to_json(x));
  j["warnings"] = w;
  return j;
}

}  // namespace guide::retrieval
