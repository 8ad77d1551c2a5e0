#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "guide/concurrency.hpp"
#include "guide/error.hpp"
#include "guide/io.hpp"
#include "guide/pipeline.hpp"

namespace guide::pipeline {

namespace {

void fault_point(Stage s) {
  const char* target = std::getenv("GUIDE_FAULT_ABORT_STAGE");
  if (target && to_string(s) == target) {
    std::fflush(stdout);
    std::fflush(stderr);
    std::_Exit(kFaultExitCode);
  }
}

nlohmann::json versioned(nlohmann::json j) {
  j["schema_version"] = kSchemaVersion;
  return j;
}

std::optional<fs::path> subtitle_file(const Workspace& ws, const std::string& id) {
  for (const char* ext : {".vtt", ".srt"}) {
    fs::path p = ws.transcripts() / (id + ext);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

subtitle::SubtitleTrack parse_or_empty(const std::string& raw, const std::string& id, WarningSink& sink) {
  if (raw.empty()) return {};
  try {
    return subtitle::parse_subtitles(raw).track;
  } catch (const Error& e) {
    sink.add("subtitles_unreadable", e.what(), id);
    return {};
  }
}

fs::path keyframes_file(const Workspace& ws, const std::string& id) { return ws.keyframes() / (id + ".json"); }
fs::path track_file(const Workspace& ws, const std::string& id) { return ws.transcripts() / (id + ".track.vtt"); }

struct PerceiveResult {
  std::string track_vtt;
  std::optional<std::string> asr;
  nlohmann::json keyframes;
  std::vector<std::pair<std::int64_t, nlohmann::json>> graphs;
};

}  // namespace

Runner::Runner(Config config, Workspace ws, Providers& providers, retrieval::TaskSpec task)
    : config_(std::move(config)), ws_(std::move(ws)), providers_(providers), task_(std::move(task)) {
  fs::create_directories(ws_.root);
  hash_ = config_hash(config_, task_);
  manifest_ = load_manifest(ws_);
  manifest_.task_id = task_.task_id;
  manifest_.config_hash = hash_;
  manifest_.backends = providers_.backend_names();
  io::write_json_atomic(ws_.task(), versioned(retrieval::to_json(task_)));
  io::write_json_atomic(ws_.config(), to_json(config_));
}

void Runner::save_manifest() { io::write_json_atomic(ws_.manifest(), to_json(manifest_)); }

void Runner::require(const fs::path& artifact, Stage producer) const {
  if (!fs::exists(artifact)) {
    throw Error(ErrorKind::MissingArtifact, artifact.filename().string() + " not found in " + ws_.root.string() +
                                                "; run the '" + std::string(to_string(producer)) + "' stage first");
  }
}

std::vector<retrieval::ScoredCandidate> Runner::selected() const {
  require(ws_.retrieval(), Stage::retrieve);
  return retrieval::retrieval_result_from_json(io::read_json(ws_.retrieval())).selected;
}

StageOutcome Runner::run_stage(Stage s, bool force) {
  StageOutcome out;
  out.stage = s;
  if (!force && manifest_.stage_done(s, hash_)) {
    out.skipped = true;
    log::info(std::string(to_string(s)) + ": already complete, skipped");
    return out;
  }
  bool later = false;
  for (Stage st : kStages) {
    if (later) manifest_.stages[std::string(to_string(st))].done = false;
    if (st == s) later = true;
  }
  auto& rec = manifest_.stages[std::string(to_string(s))];
  rec.done = false;
  rec.config_hash = hash_;
  ++rec.runs;
  if (manifest_.status != "running") manifest_.status = "running";
  save_manifest();

  sink_ = std::make_unique<WarningSink>();
  providers_.ledger->clear();
  log::info(std::string(to_string(s)) + ": running");
  switch (s) {
    case Stage::retrieve: retrieve(); break;
    case Stage::perceive: perceive(); break;
    case Stage::annotate: annotate(); break;
    case Stage::decompose: decompose(); break;
  }
  flush_ledger(s);
  out.warnings = sink_->size();
  flush_warnings(s);

  manifest_.stages[std::string(to_string(s))].done = true;
  if (s == Stage::decompose) manifest_.status = selected().empty() ? "uncovered" : "completed";
  save_manifest();
  return out;
}

RunOutcome Runner::run_all(bool force) {
  RunOutcome r;
  for (Stage s : kStages) r.stages.push_back(run_stage(s, force));
  r.status = manifest_.status;
  r.entries = knowledge::bundle_from_json(io::read_json(ws_.knowledge())).entries.size();
  return r;
}

void Runner::flush_ledger(Stage s) {
  auto labels = ledger_stages(s);
  auto rank = [&](const std::string& stage) {
    auto it = std::find(labels.begin(), labels.end(), stage);
    return static_cast<std::size_t>(it - labels.begin());
  };
  std::vector<cost::UsageRecord> rows;
  if (fs::exists(ws_.ledger())) {
    for (const auto& j : io::read_jsonl(ws_.ledger())) {
      auto r = cost::usage_from_json(j);
      if (rank(r.stage) == labels.size()) rows.push_back(std::move(r));
    }
  }
  std::vector<cost::UsageRecord> fresh;
  for (auto& r : providers_.ledger->snapshot())
    if (rank(r.stage) < labels.size()) fresh.push_back(std::move(r));
  // Completion order varies with concurrency; the file must not.
  std::stable_sort(fresh.begin(), fresh.end(), [&](const cost::UsageRecord& a, const cost::UsageRecord& b) {
    return std::make_tuple(rank(a.stage), a.video_id, a.item, a.status, a.input_tokens) <
           std::make_tuple(rank(b.stage), b.video_id, b.item, b.status, b.input_tokens);
  });
  rows.insert(rows.end(), fresh.begin(), fresh.end());
  std::vector<nlohmann::json> lines;
  for (const auto& r : rows) lines.push_back(cost::to_json(r));
  io::write_file_atomic(ws_.ledger(), io::to_jsonl(lines));
}

void Runner::flush_warnings(Stage s) {
  std::string name(to_string(s));
  std::vector<nlohmann::json> lines;
  if (fs::exists(ws_.warnings())) {
    for (auto& j : io::read_jsonl(ws_.warnings()))
      if (j.value("stage", std::string{}) != name) lines.push_back(std::move(j));
  }
  auto fresh = sink_->snapshot();
  std::sort(fresh.begin(), fresh.end(), [](const Warning& a, const Warning& b) {
    return std::tie(a.subject, a.code, a.message) < std::tie(b.subject, b.code, b.message);
  });
  for (const auto& w : fresh) {
    auto j = to_json(w);
    j["stage"] = name;
    lines.push_back(std::move(j));
  }
  io::write_file_atomic(ws_.warnings(), io::to_jsonl(lines));
}

void Runner::retrieve() {
  retrieval::FunnelOptions o;
  o.max_candidates = config_.pipeline.max_candidates;
  o.top_k = config_.pipeline.top_k;
  o.max_in_flight = config_.pipeline.max_in_flight;
  o.models.query = {config_.pipeline.query_model, config_.chat.temperature};
  o.models.mini = {config_.pipeline.mini_model, config_.chat.temperature};

  retrieval::FunnelReport report;
  try {
    report = retrieval::run_funnel(task_, *providers_.search, *providers_.gateway, o);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SearchUnavailable && e.kind() != ErrorKind::ModelFailure &&
        e.kind() != ErrorKind::RateLimited) {
      throw;
    }
    // The task degrades to uncovered rather than failing the run.
    report = {};
    report.task = task_;
    report.result.task_id = task_.task_id;
    sink_->add("retrieval_failed", e.what(), task_.task_id);
  }
  for (const auto& w : report.warnings) sink_->add(w);

  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& c : report.candidates) {
    auto j = to_json(c.candidate);
    j["search_rank"] = c.search_rank;
    j["passed_prefilter"] = c.passed_prefilter;
    candidates.push_back(std::move(j));
  }

  fault_point(Stage::retrieve);
  fs::create_directories(ws_.transcripts());
  for (const auto& s : report.result.selected) {
    const auto& id = s.candidate.video_id;
    std::string ext = ".vtt";
    for (const auto& c : report.candidates)
      if (c.candidate.video_id == id && c.subtitle_format == "srt") ext = ".srt";
    if (auto it = report.subtitles.find(id); it != report.subtitles.end()) {
      io::write_file_atomic(ws_.transcripts() / (id + ext), it->second);
    }
    if (auto it = report.transcripts.find(id); it != report.transcripts.end()) {
      io::write_file_atomic(ws_.transcripts() / (id + ".txt"), it->second.text);
    }
  }
  io::write_json_atomic(ws_.candidates(),
                        versioned({{"task_id", task_.task_id}, {"candidates", candidates}}));
  io::write_json_atomic(ws_.retrieval(), versioned(retrieval::to_json(report)));
}

void Runner::perceive() {
  auto videos = selected();
  perception::BackgroundModelParams params;
  params.fg_threshold = config_.pipeline.fg_threshold;
  std::vector<PerceiveResult> results(videos.size());

  parallel_for(videos.size(), static_cast<std::size_t>(config_.pipeline.video_parallelism), [&](std::size_t i) {
    const auto& video = videos[i].candidate;
    const auto& id = video.video_id;
    auto& res = results[i];

    std::string raw;
    if (providers_.transcriber) {
      try {
        raw = providers_.transcriber->transcribe(video, ws_.transcripts() / (id + "-asr"));
        res.asr = raw;
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::AuthFailure) throw;
        sink_->add("transcription_failed", std::string(e.what()) + "; using downloaded subtitles", id);
      }
    }
    if (raw.empty()) {
      if (auto f = subtitle_file(ws_, id)) raw = io::read_file(*f);
    }
    auto track = subtitle::merge_sentences(parse_or_empty(raw, id, *sink_));
    if (track.cues.empty()) sink_->add("no_subtitles", "keyframes are taken from one segment", id);
    res.track_vtt = subtitle::to_vtt(track);

    nlohmann::json doc = {{"video_id", id}, {"status", "ok"}};
    perception::KeyframeResult kf;
    try {
      auto frames = providers_.frames->extract(video, ws_.frames() / id, config_.frames.fps);
      kf = perception::extract_keyframes(frames, track, params);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::AuthFailure) throw;
      doc["status"] = "failed";
      doc["error"] = e.what();
      sink_->add("perception_failed", e.what(), id);
    }
    if (doc["status"] == "ok" && kf.transitions.empty()) {
      sink_->add("no_keyframes", "no visual transitions detected; video skipped", id);
    }
    doc.update(to_json(kf));
    res.keyframes = versioned(doc);

    for (const auto& frame : kf.keyframes) {
      perception::ElementGraph g;
      g.frame = frame;
      if (providers_.elements) {
        try {
          g = perception::parse_element_graph(providers_.elements->detect(id, frame.image), frame, sink_.get());
        } catch (const Error& e) {
          sink_->add("elements_unavailable", std::string(e.what()) + "; using an empty graph", id);
          g.frame = frame;
        }
      }
      auto j = perception::serialize_elements(g);
      j["frame"] = to_json(frame);
      res.graphs.emplace_back(frame.frame_index, versioned(std::move(j)));
    }
  });

  fault_point(Stage::perceive);
  fs::create_directories(ws_.keyframes());
  fs::create_directories(ws_.transcripts());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto& id = videos[i].candidate.video_id;
    auto& res = results[i];
    if (res.asr) io::write_file_atomic(ws_.transcripts() / (id + ".asr.vtt"), *res.asr);
    io::write_file_atomic(track_file(ws_, id), res.track_vtt);
    fs::path dir = ws_.elements() / id;
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& [index, j] : res.graphs) io::write_json_atomic(dir / (std::to_string(index) + ".json"), j);
    io::write_json_atomic(keyframes_file(ws_, id), res.keyframes);
  }
}

void Runner::annotate() {
  auto videos = selected();
  for (const auto& v : videos) require(keyframes_file(ws_, v.candidate.video_id), Stage::perceive);

  annotation::AnnotateOptions options;
  options.idm.model = config_.chat.model;
  options.idm.temperature = config_.chat.temperature;
  options.pairing = config_.pipeline.pairing;
  options.max_in_flight = config_.pipeline.max_in_flight;

  std::vector<std::vector<annotation::FramePairAnnotation>> results(videos.size());
  parallel_for(videos.size(), static_cast<std::size_t>(config_.pipeline.video_parallelism), [&](std::size_t i) {
    const auto& id = videos[i].candidate.video_id;
    auto doc = io::read_json(keyframes_file(ws_, id));
    if (doc.value("status", std::string("ok")) != "ok") return;
    annotation::VideoAnnotationInput input;
    input.video_id = id;
    input.topic = videos[i].topic.text;
    input.transitions = perception::keyframes_from_json(doc).transitions;
    if (input.transitions.empty()) return;
    if (fs::exists(track_file(ws_, id))) input.track = parse_or_empty(io::read_file(track_file(ws_, id)), id, *sink_);
    fs::path dir = ws_.elements() / id;
    for (const auto& t : input.transitions) {
      for (const FrameRef* f : {&t.start_frame, &t.end_frame}) {
        fs::path p = dir / (std::to_string(f->frame_index) + ".json");
        if (input.graphs.count(f->frame_index) || !fs::exists(p)) continue;
        try {
          input.graphs[f->frame_index] = perception::parse_element_graph(io::read_file(p), *f, sink_.get());
        } catch (const Error& e) {
          sink_->add("element_graph_unreadable", e.what(), id);
        }
      }
    }
    results[i] = annotation::annotate_video(input, *providers_.gateway, options, sink_.get());
  });

  fault_point(Stage::annotate);
  std::vector<nlohmann::json> lines;
  for (std::size_t i = 0; i < videos.size(); ++i)
    for (const auto& a : results[i]) lines.push_back(versioned(annotation::to_json(a, videos[i].candidate.video_id)));
  io::write_file_atomic(ws_.annotations(), io::to_jsonl(lines));
}

void Runner::decompose() {
  auto videos = selected();
  require(ws_.annotations(), Stage::annotate);
  std::map<std::string, std::vector<annotation::FramePairAnnotation>> by_video;
  for (const auto& j : io::read_jsonl(ws_.annotations())) {
    by_video[j.value("video_id", std::string{})].push_back(annotation::annotation_from_json(j));
  }

  knowledge::DecomposeOptions options;
  options.model = config_.chat.model;
  options.temperature = config_.chat.temperature;

  std::vector<std::optional<knowledge::BundleEntry>> entries(videos.size());
  parallel_for(videos.size(), static_cast<std::size_t>(config_.pipeline.video_parallelism), [&](std::size_t i) {
    const auto& v = videos[i];
    const auto& id = v.candidate.video_id;
    knowledge::Trajectory traj;
    try {
      traj = knowledge::consolidate_trajectory(annotation::filter_meaningful(by_video[id]), v.topic.text, id);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyTrajectory) throw;
      sink_->add("empty_trajectory", "no meaningful steps; video left out of the bundle", id);
      return;
    }
    entries[i] = knowledge::decompose_video(traj, v.relevance, *providers_.gateway, options, sink_.get());
  });

  std::vector<knowledge::BundleEntry> kept;
  for (auto& e : entries)
    if (e) kept.push_back(std::move(*e));
  auto bundle = knowledge::assemble_bundle(task_.task_id, std::move(kept));

  fault_point(Stage::decompose);
  io::write_json_atomic(ws_.knowledge(), knowledge::to_json(bundle));
}

}  // namespace guide::pipeline
