#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>

#include "guide/cost.hpp"
#include "guide/error.hpp"
#include "guide/injection.hpp"
#include "guide/io.hpp"
#include "guide/pipeline.hpp"
#include "support/e2e_fixture.hpp"
#include "support/scenario.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;
using namespace guide;
using nlohmann::json;
namespace e2e = guide::testing::e2e;
using guide::testing::TempDir;
using guide::testing::e2e::Scenario;

namespace {

const fs::path kFixture = GUIDE_E2E_DIR;
const fs::path kGuide = GUIDE_BIN;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

CliResult cli(const std::string& args, const std::string& env = "") {
  static TempDir scratch;
  auto out = scratch.path() / "stdout";
  auto err = scratch.path() / "stderr";
  std::string cmd = "cd " + quote(kFixture.string()) + " && " + env + " " + quote(kGuide.string()) + " -q " + args +
                    " > " + quote(out.string()) + " 2> " + quote(err.string());
  int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = fs::exists(out) ? io::read_file(out) : "";
  r.err = fs::exists(err) ? io::read_file(err) : "";
  return r;
}

std::string run_args(const fs::path& ws, const char* task = "tasks/gimp.json", const std::string& config = "config.json") {
  return std::string("run --task ") + task + " --config " + quote(config) + " --workspace " + quote(ws.string());
}

// One uninterrupted run of the covered task, shared by the cases below.
struct Baseline {
  TempDir dir;
  fs::path ws;
  CliResult result;
  double seconds = 0;

  Baseline() : ws(dir.path() / "ws") {
    auto t0 = std::chrono::steady_clock::now();
    result = cli(run_args(ws));
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

const Baseline& baseline() {
  static Baseline b;
  return b;
}

void check_bundle_schema(const json& k) {
  REQUIRE(k.is_object());
  CHECK(k.at("schema_version") == 1);
  CHECK(k.at("task_id").is_string());
  REQUIRE(k.at("entries").is_array());
  for (const auto& e : k["entries"]) {
    CHECK(e.at("video_id").is_string());
    CHECK(e.at("topic").is_string());
    CHECK(e.at("relevance").is_number());
    const auto& p = e.at("planning");
    if (!p.is_null()) {
      CHECK(p.at("execution_flow").is_string());
      CHECK(p.at("key_considerations").is_array());
      CHECK(p.at("coordinate_free_ok").is_boolean());
      CHECK(p.at("violations").is_array());
    }
    const auto& g = e.at("grounding");
    if (!g.is_null()) {
      REQUIRE(g.at("elements").is_array());
      CHECK(g["elements"].size() <= knowledge::kMaxGroundingElements);
      for (const auto& el : g["elements"]) {
        CHECK(el.at("name").is_string());
        CHECK(el.at("appearance_position").is_string());
        CHECK(el.at("predicted_function").is_string());
      }
    }
  }
}

std::vector<cost::UsageRecord> ledger_rows(const fs::path& ws) {
  std::vector<cost::UsageRecord> out;
  for (const auto& j : io::read_jsonl(pipeline::Workspace{ws}.ledger())) out.push_back(cost::usage_from_json(j));
  return out;
}

// (stage, model) -> (calls, input, output)
using Totals = std::map<std::pair<std::string, std::string>, std::tuple<std::int64_t, std::int64_t, std::int64_t>>;

Totals totals(const std::vector<cost::UsageRecord>& records) {
  Totals t;
  for (const auto& r : records) {
    auto& [c, i, o] = t[{r.stage, r.model_name}];
    c += r.calls;
    i += r.input_tokens;
    o += r.output_tokens;
  }
  return t;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("fixture task end to end through the CLI") {
  const auto& b = baseline();
  INFO(b.result.err);
  REQUIRE(b.result.code == 0);
  CHECK(b.seconds < 60.0);
  pipeline::Workspace ws{b.ws};

  auto k = io::read_json(ws.knowledge());
  check_bundle_schema(k);
  REQUIRE(k["entries"].size() == 2);
  CHECK(k["entries"][0]["video_id"] == "gimp_bc_210");
  CHECK(k["entries"][1]["video_id"] == "gimp_dark_photo");
  for (const auto& e : k["entries"]) {
    REQUIRE(e["planning"].is_object());
    CHECK(e["planning"]["coordinate_free_ok"] == true);
    CHECK(e["planning"]["execution_flow"].get<std::string>().find("Colors → Brightness-Contrast") != std::string::npos);
    CHECK(e["grounding"]["elements"].size() == 15);  // 18 returned
  }

  auto manifest = pipeline::load_manifest(ws);
  CHECK(manifest.status == "completed");
  for (auto s : pipeline::kStages) CHECK(manifest.stages.at(std::string(pipeline::to_string(s))).runs == 1);
  CHECK(manifest.backends.at("chat") == "fixture");

  // Labeled planning in the worker prompt; k = 7 elements per video at render time.
  auto worker = cli("inject --workspace " + quote(b.ws.string()) + " --mode a-worker");
  REQUIRE(worker.code == 0);
  CHECK(worker.out.find("Video 1 (relevance 0.92):") != std::string::npos);
  CHECK(worker.out.find("Video 2 (relevance 0.81):") != std::string::npos);
  auto ground = cli("inject --workspace " + quote(b.ws.string()) + " --mode a-grounding --element-desc 'the Contrast slider'");
  REQUIRE(ground.code == 0);
  CHECK(count(ground.out, "Appearance & position:") == 14);
  auto ground3 = cli("inject --workspace " + quote(b.ws.string()) + " --mode a-grounding --element-desc x --k 3");
  CHECK(count(ground3.out, "Appearance & position:") == 6);
}

TEST_CASE("annotation ledger rows equal the typical profile per video") {
  const auto& b = baseline();
  REQUIRE(b.result.code == 0);
  auto rows = ledger_rows(b.ws);
  auto profile = totals(cost::annotation_profile(cost::Regime::typical));
  for (const char* video : {"gimp_bc_210", "gimp_dark_photo"}) {
    std::vector<cost::UsageRecord> mine;
    for (const auto& r : rows)
      if (r.video_id == video && (r.stage == "frame_pair_idm" || r.stage == "planning_split" || r.stage == "grounding_split"))
        mine.push_back(r);
    CHECK(totals(mine) == profile);
  }
  std::size_t idm = 0;
  for (const auto& r : rows) idm += r.stage == "frame_pair_idm";
  CHECK(idm == 30);

  // The CLI report over one video's annotation rows prints the profile table.
  auto from_ledger = cli("cost --ledger " + quote(pipeline::Workspace{b.ws}.ledger().string()) +
                         " --annotation --video gimp_bc_210");
  auto from_profile = cli("cost --profile typical");
  REQUIRE(from_ledger.code == 0);
  CHECK(from_ledger.out == from_profile.out);
  CHECK(from_profile.out.find("$0.2524") != std::string::npos);
}

TEST_CASE("resume after a crash in annotate reproduces the bundle") {
  const auto& b = baseline();
  REQUIRE(b.result.code == 0);
  TempDir dir;
  auto ws_path = dir.path() / "ws";
  pipeline::Workspace ws{ws_path};

  auto killed = cli(run_args(ws_path), "GUIDE_FAULT_ABORT_STAGE=annotate");
  CHECK(killed.code == pipeline::kFaultExitCode);
  CHECK_FALSE(fs::exists(ws.annotations()));
  CHECK_FALSE(fs::exists(ws.knowledge()));
  auto mid = pipeline::load_manifest(ws);
  CHECK(mid.status == "running");
  CHECK(mid.stages.at("perceive").done);
  CHECK_FALSE(mid.stages.at("annotate").done);

  auto resumed = cli(run_args(ws_path));
  REQUIRE(resumed.code == 0);
  auto m = pipeline::load_manifest(ws);
  CHECK(m.stages.at("retrieve").runs == 1);
  CHECK(m.stages.at("perceive").runs == 1);
  CHECK(m.stages.at("annotate").runs == 2);
  CHECK(m.stages.at("decompose").runs == 1);
  CHECK(io::read_file(ws.knowledge()) == io::read_file(pipeline::Workspace{b.ws}.knowledge()));
  CHECK(io::read_file(ws.ledger()) == io::read_file(pipeline::Workspace{b.ws}.ledger()));
  CHECK(io::read_file(ws.annotations()) == io::read_file(pipeline::Workspace{b.ws}.annotations()));
}

TEST_CASE("rerunning a completed workspace is a no-op") {
  TempDir dir;
  auto ws_path = dir.path() / "ws";
  pipeline::Workspace ws{ws_path};
  REQUIRE(cli(run_args(ws_path)).code == 0);
  auto before = io::read_file(ws.knowledge());
  auto stamp = fs::last_write_time(ws.knowledge());

  auto again = cli(run_args(ws_path));
  REQUIRE(again.code == 0);
  CHECK(fs::last_write_time(ws.knowledge()) == stamp);
  CHECK(io::read_file(ws.knowledge()) == before);
  for (auto s : pipeline::kStages)
    CHECK(pipeline::load_manifest(ws).stages.at(std::string(pipeline::to_string(s))).runs == 1);

  auto stage = cli("decompose --workspace " + quote(ws_path.string()));
  CHECK(stage.code == 0);
  CHECK(pipeline::load_manifest(ws).stages.at("decompose").runs == 1);
  auto forced = cli("decompose --force --workspace " + quote(ws_path.string()));
  CHECK(forced.code == 0);
  CHECK(pipeline::load_manifest(ws).stages.at("decompose").runs == 2);
  CHECK(io::read_file(ws.knowledge()) == before);
}

TEST_CASE("a task with no usable videos ends uncovered") {
  TempDir dir;
  auto ws_path = dir.path() / "ws";
  pipeline::Workspace ws{ws_path};
  auto r = cli(run_args(ws_path, "tasks/uncovered.json"));
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("status: uncovered") != std::string::npos);
  auto k = io::read_json(ws.knowledge());
  check_bundle_schema(k);
  CHECK(k["entries"].empty());
  CHECK(pipeline::load_manifest(ws).status == "uncovered");

  auto b = cli("inject --mode b --workspace " + quote(ws_path.string()));
  REQUIRE(b.code == 0);
  auto expected = injection::render_mode_b_system(knowledge::KnowledgeBundle{}, "").text;
  expected.erase(0, expected.find_first_not_of('\n'));
  CHECK(b.out == expected);
  CHECK(b.out.find("External Knowledge") == std::string::npos);
  CHECK(b.out.find("in 1-2\n   concise sentences.") != std::string::npos);

  auto w = cli("inject --mode a-worker --workspace " + quote(ws_path.string()));
  CHECK(w.code == 0);
  CHECK(w.out.find("Reference Plan") == std::string::npos);
}

TEST_CASE("stage commands need the prior stage's artifacts") {
  TempDir dir;
  auto ws_path = dir.path() / "ws";
  auto retrieve = cli("retrieve --workspace " + quote(ws_path.string()) +
                      " --config config.json --task tasks/gimp.json");
  CHECK(retrieve.code == 1);  // workspace does not exist yet
  fs::create_directories(ws_path);
  REQUIRE(cli("retrieve --workspace " + quote(ws_path.string()) + " --config config.json --task tasks/gimp.json").code == 0);

  auto decompose = cli("decompose --workspace " + quote(ws_path.string()));
  CHECK(decompose.code == 1);
  CHECK(decompose.err.find("MissingArtifact") != std::string::npos);
  CHECK(decompose.err.find("annotations.jsonl") != std::string::npos);
  CHECK(decompose.err.find("annotate") != std::string::npos);

  auto annotate = cli("annotate --workspace " + quote(ws_path.string()));
  CHECK(annotate.code == 1);
  CHECK(annotate.err.find("perceive") != std::string::npos);

  REQUIRE(cli("perceive --workspace " + quote(ws_path.string())).code == 0);
  REQUIRE(cli("annotate --workspace " + quote(ws_path.string())).code == 0);
  REQUIRE(cli("decompose --workspace " + quote(ws_path.string())).code == 0);
  CHECK(io::read_file(pipeline::Workspace{ws_path}.knowledge()) ==
        io::read_file(pipeline::Workspace{baseline().ws}.knowledge()));

  auto inject = cli("inject --mode b --bundle " + quote((dir.path() / "nope.json").string()));
  CHECK(inject.code == 1);
}

TEST_CASE("exit codes for usage and configuration failures") {
  TempDir dir;
  CHECK(cli("").code == 1);
  CHECK(cli("run --task tasks/gimp.json").code == 1);
  CHECK(cli("inject --mode c --bundle x").code == 1);
  CHECK(cli("cost --profile typical --ledger x").code == 1);

  auto cfg = e2e::config_json("fixture", "responses.json");
  cfg["providers"]["chat"]["api_key"] = "sk-inline";
  io::write_json_atomic(dir.path() / "inline.json", cfg);
  auto inline_key = cli(run_args(dir.path() / "ws1", "tasks/gimp.json", (dir.path() / "inline.json").string()));
  CHECK(inline_key.code == 2);
  CHECK(inline_key.err.find("ConfigError") != std::string::npos);

  auto missing = e2e::config_json("fixture", (kFixture / "no-such-responses.json").string());
  io::write_json_atomic(dir.path() / "missing.json", missing);
  CHECK(cli(run_args(dir.path() / "ws2", "tasks/gimp.json", (dir.path() / "missing.json").string())).code == 2);

  auto live = e2e::config_json("live", "");
  live["providers"]["chat"]["endpoint"] = "http://127.0.0.1:9/v1/chat/completions";
  live["providers"]["chat"]["key_env"] = "GUIDE_TEST_KEY_THAT_IS_NOT_SET";
  io::write_json_atomic(dir.path() / "live.json", live);
  CHECK(cli(run_args(dir.path() / "ws3", "tasks/gimp.json", (dir.path() / "live.json").string())).code == 2);

  auto bad_backend = e2e::config_json("fixture", "responses.json");
  bad_backend["providers"]["search"]["backend"] = "carrier-pigeon";
  io::write_json_atomic(dir.path() / "bad.json", bad_backend);
  CHECK(cli(run_args(dir.path() / "ws4", "tasks/gimp.json", (dir.path() / "bad.json").string())).code == 2);
}

// ---- in-process robustness runs at reduced resolution ------------------------

namespace {

std::string cue_of(const provider::ModelRequest& r) { return e2e::line_after(testing::user_text(r), "Current: "); }

}  // namespace

TEST_CASE("per-pair failures and malformed replies do not abort a run") {
  Scenario s({}, [](const provider::ModelRequest& r) -> provider::ModelResponse {
    if (r.stage == "frame_pair_idm" && r.video_id == "gimp_bc_210") {
      auto cue = cue_of(r);
      if (cue.find("Brightness slider") != std::string::npos) throw Error(ErrorKind::ModelFailure, "backend 500");
      if (cue.find("Preview") != std::string::npos) throw Error(ErrorKind::RateLimited, "slow down", true);
      if (cue.find("Type 25") != std::string::npos) return e2e::reply("I think they typed something.", 10, 10);
      if (cue.find("Auto") != std::string::npos) return e2e::reply("{\"meaningful\": \"yes\"", 10, 10);
    }
    if (r.stage == "planning_split" && r.video_id == "gimp_dark_photo") return e2e::reply("no json at all", 10, 10);
    if (r.stage == "grounding_split" && r.video_id == "gimp_dark_photo")
      return e2e::reply(R"({"elements": [{"name": "OK"}]})", 10, 10);
    return e2e::respond(r);
  });
  auto outcome = s.run();
  CHECK(outcome.status == "completed");
  auto k = s.bundle();
  check_bundle_schema(k);
  REQUIRE(k["entries"].size() == 2);
  CHECK(k["entries"][0]["planning"].is_object());
  CHECK(k["entries"][1]["planning"].is_null());
  CHECK(k["entries"][1]["grounding"].is_null());

  std::size_t failed = 0;
  std::size_t ok = 0;
  for (const auto& a : io::read_jsonl(s.ws.annotations())) {
    if (a["video_id"] != "gimp_bc_210") continue;
    (a["status"] == "ok" ? ok : failed)++;
  }
  CHECK(failed == 4);
  CHECK(ok == 11);
  CHECK(s.has_warning("grounding_empty", "gimp_dark_photo"));
  // Failed calls still leave ledger rows.
  std::size_t failed_rows = 0;
  for (const auto& r : ledger_rows(s.ws.root)) failed_rows += r.status != "ok";
  CHECK(failed_rows >= 2);
}

TEST_CASE("malformed element graphs degrade to empty graphs") {
  e2e::Options o;
  o.garbage_elements = {"gimp_bc_210"};
  o.missing_elements = {"gimp_dark_photo"};
  Scenario s(o, e2e::respond);
  auto outcome = s.run();
  CHECK(outcome.status == "completed");
  CHECK(s.bundle()["entries"].size() == 2);
  CHECK_FALSE(s.warnings().empty());
  // Garbage frames are stored as empty graphs.
  auto g = io::read_json(s.ws.elements() / "gimp_bc_210" / "0.json");
  CHECK(g["elements"].empty());
}

TEST_CASE("a video without keyframes is skipped") {
  e2e::Options o;
  o.static_videos = {"gimp_dark_photo"};
  Scenario s(o, e2e::respond);
  auto outcome = s.run();
  CHECK(outcome.status == "completed");
  auto k = s.bundle();
  REQUIRE(k["entries"].size() == 1);
  CHECK(k["entries"][0]["video_id"] == "gimp_bc_210");
  CHECK(s.has_warning("no_keyframes", "gimp_dark_photo"));
  CHECK(s.model->count("frame_pair_idm") == 15);
}

TEST_CASE("every annotation failing leaves an empty but valid bundle") {
  Scenario s({}, [](const provider::ModelRequest& r) -> provider::ModelResponse {
    if (r.stage == "frame_pair_idm") throw Error(ErrorKind::ModelFailure, "down");
    return e2e::respond(r);
  });
  auto outcome = s.run();
  CHECK(outcome.status == "completed");
  auto k = s.bundle();
  check_bundle_schema(k);
  CHECK(k["entries"].empty());
  CHECK(s.model->count("planning_split") == 0);
}

TEST_CASE("search outage degrades to uncovered") {
  Scenario s({}, e2e::respond);
  auto j = io::read_json(s.config.search.dir / "search.json");
  j["fail"] = {"How to increase contrast in GIMP", "increase contrast GIMP"};
  io::write_json_atomic(s.config.search.dir / "search.json", j);
  auto outcome = s.run();
  CHECK(outcome.status == "uncovered");
  CHECK(s.bundle()["entries"].empty());
}

TEST_CASE("auth failures stop the run") {
  Scenario s({}, [](const provider::ModelRequest&) -> provider::ModelResponse {
    throw Error(ErrorKind::AuthFailure, "bad key");
  });
  try {
    s.run();
    FAIL("expected AuthFailure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AuthFailure);
  }
}
