#include <doctest.h>

#include <cstdlib>
#include <random>
#include <thread>

#include "guide/annotation.hpp"
#include "guide/coordinates.hpp"
#include "guide/cost.hpp"
#include "guide/error.hpp"
#include "guide/io.hpp"
#include "support/scripted.hpp"
#include "support/temp_dir.hpp"

using namespace guide;
using namespace guide::annotation;
using guide::testing::ScriptedChatModel;
using perception::TransitionSegment;
using provider::ModelRequest;
using provider::ModelResponse;

namespace {

FrameRef frame(std::int64_t idx, std::int64_t ms, const std::string& dir = "kf") {
  return {idx, ms, {dir + "/" + std::to_string(idx) + ".png", 1920, 1080}};
}

// n disjoint transitions, one per 2-second cue.
std::vector<TransitionSegment> transitions(std::size_t n) {
  std::vector<TransitionSegment> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto base = static_cast<std::int64_t>(i) * 4;
    out.push_back({i, frame(base + 1, (base + 1) * 500), frame(base + 3, (base + 3) * 500)});
  }
  return out;
}

subtitle::SubtitleTrack narration(std::size_t n) {
  subtitle::SubtitleTrack t;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = static_cast<subtitle::Millis>(i) * 2000;
    t.cues.push_back({i + 1, s, s + 2000, "Sentence " + std::to_string(i) + "."});
  }
  return t;
}

perception::ElementGraph colors_graph(const FrameRef& f) {
  perception::ElementGraph g;
  g.frame = f;
  g.elements.push_back({"e1", {0.1, 0.1, 0.3, 0.2}, perception::ElementKind::menu, "Colors", true});
  return g;
}

AnnotationRequest golden_request() {
  AnnotationRequest r;
  r.pair_index = 3;
  r.video_id = "vid001";
  r.s_t = frame(12, 6000);
  r.s_t1 = frame(14, 7000);
  r.e_t = colors_graph(r.s_t);
  r.e_t1.frame = r.s_t1;
  r.e_t1.elements.push_back({"e1", {0.1, 0.1, 0.3, 0.2}, perception::ElementKind::menu, "Colors", true});
  r.e_t1.elements.push_back({"e2", {0.1, 0.2, 0.3, 0.25}, perception::ElementKind::button, "Brightness-Contrast...", true});
  r.topic = "Adjusting image brightness and contrast in GIMP through the Colors menu and the Brightness-Contrast dialog";
  r.context = {"Open your image first.", "Now click on the Colors menu.", "Pick Brightness-Contrast."};
  return r;
}

ModelResponse reply(std::string text, std::int64_t in = 8480, std::int64_t out = 424) {
  return {std::move(text), {in, out}, 0};
}

std::string annotation_json(bool meaningful, const std::string& text) {
  return nlohmann::json{{"meaningful", meaningful}, {"thought_action_nlp", text}}.dump();
}

struct Harness {
  std::shared_ptr<ScriptedChatModel> model;
  cost::Ledger ledger;
  std::unique_ptr<provider::ModelGateway> gateway;

  explicit Harness(ScriptedChatModel::Handler h) : model(std::make_shared<ScriptedChatModel>(std::move(h))) {
    gateway = std::make_unique<provider::ModelGateway>(model, guide::testing::instant_options(), &ledger);
  }
};

}  // namespace

TEST_CASE("keyframe pairing") {
  CHECK(pair_keyframes(transitions(15)).size() == 15);
  CHECK(pair_keyframes(transitions(15), Pairing::sliding).size() == 29);
  CHECK(pair_keyframes(transitions(1)).size() == 1);
  CHECK(pair_keyframes(transitions(1), Pairing::sliding).size() == 1);
  CHECK(pair_keyframes({}).empty());
  CHECK(pair_keyframes({}, Pairing::sliding).empty());

  // A shared boundary frame is one keyframe for sliding pairs.
  std::vector<TransitionSegment> shared{{0, frame(1, 500), frame(3, 1500)}, {0, frame(3, 1500), frame(5, 2500)}};
  auto pairs = pair_keyframes(shared, Pairing::sliding);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[1].first.frame_index == 3);
  CHECK(pair_keyframes(shared).size() == 2);

  auto p = pair_keyframes(transitions(3));
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i].pair_index == i);
    CHECK(p[i].first.timestamp_ms <= p[i].second.timestamp_ms);
  }
  CHECK(pairing_from_string("sliding") == Pairing::sliding);
  CHECK_THROWS_AS(pairing_from_string("random"), Error);
}

TEST_CASE("idm prompt structure") {
  auto req = golden_request();
  auto prompt = build_idm_prompt(req);
  CHECK(prompt.model_name == "gpt-5.1");
  CHECK(prompt.temperature == 1.0);
  CHECK(prompt.stage == "frame_pair_idm");
  CHECK(prompt.image_count() == 2);
  REQUIRE(prompt.messages.size() == 2);
  CHECK(prompt.messages[0].role == "system");
  const auto& user = prompt.messages[1].content;
  REQUIRE(user.size() == 3);
  CHECK(user[0].image.path == req.s_t.image.path);
  CHECK(user[1].image.path == req.s_t1.image.path);
  const std::string& body = user[2].text;
  auto g0 = body.find(perception::serialize_elements(req.e_t)["elements"].dump());
  auto g1 = body.find(perception::serialize_elements(req.e_t1)["elements"].dump());
  auto topic = body.find(req.topic);
  auto ctx = body.find(req.context.current);
  CHECK(g0 < g1);
  CHECK(g1 < topic);
  CHECK(topic < ctx);
  CHECK(body.find(req.context.preceding) < ctx);
  CHECK(body.find(req.context.following) > ctx);
  CHECK(body.find("\"meaningful\"") != std::string::npos);
  CHECK(body.find("\"thought_action_nlp\"") != std::string::npos);

  // Determinism.
  CHECK(provider::render_request(build_idm_prompt(req)) == provider::render_request(prompt));

  SUBCASE("empty graphs are still sent") {
    AnnotationRequest empty = req;
    empty.e_t.elements.clear();
    empty.e_t1.elements.clear();
    auto b = build_idm_prompt(empty).messages[1].content[2].text;
    auto first = b.find("\n[]\n");
    REQUIRE(first != std::string::npos);
    CHECK(b.find("\n[]\n", first + 1) != std::string::npos);
  }
  SUBCASE("golden prompt") {
    auto golden = std::filesystem::path(GUIDE_TEST_DATA) / "idm_prompt.golden";
    std::string rendered = provider::render_request(prompt);
    if (std::getenv("GUIDE_UPDATE_GOLDEN")) io::write_file_atomic(golden, rendered);
    REQUIRE(std::filesystem::exists(golden));
    CHECK(io::read_file(golden) == rendered);
  }
}

TEST_CASE("idm reply parsing") {
  auto r = parse_idm_reply("Sure!\n```json\n" + annotation_json(true, "I click the Colors menu.") + "\n```");
  REQUIRE(r);
  CHECK(r->meaningful);
  CHECK(r->thought_action == "I click the Colors menu.");
  CHECK(parse_idm_reply(annotation_json(false, ""))->meaningful == false);
  CHECK(parse_idm_reply(R"({"meaningful": false})").has_value());
  CHECK_FALSE(parse_idm_reply("The user clicked the menu.").has_value());
  CHECK_FALSE(parse_idm_reply(annotation_json(true, "  ")).has_value());
  CHECK_FALSE(parse_idm_reply(R"({"meaningful": "yes", "thought_action_nlp": "x"})").has_value());
  auto skip = parse_idm_reply(R"(Element {"id": "e1"} changed. {"meaningful": true, "thought_action_nlp": "I open it."})");
  REQUIRE(skip);
  CHECK(skip->thought_action == "I open it.");
}

TEST_CASE("annotate one pair") {
  auto req = golden_request();
  SUBCASE("meaningful") {
    Harness h([](const ModelRequest&) { return reply(annotation_json(true, "I click the Colors menu to open it.")); });
    auto a = annotate_pair(req, *h.gateway);
    CHECK(a.status == Status::ok);
    CHECK(a.meaningful);
    CHECK(a.usage.input_tokens == 8480);
    CHECK(a.coordinate_violations.empty());
    auto recs = h.ledger.snapshot();
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].stage == "frame_pair_idm");
    CHECK(recs[0].video_id == "vid001");
    CHECK(recs[0].item == 3);
  }
  SUBCASE("mouse move is not meaningful") {
    Harness h([](const ModelRequest&) { return reply(annotation_json(false, "")); });
    auto a = annotate_pair(req, *h.gateway);
    CHECK(a.status == Status::ok);
    CHECK_FALSE(a.meaningful);
  }
  SUBCASE("prose fails after the parse budget") {
    Harness h([](const ModelRequest&) { return reply("I think the user opened a menu.", 100, 10); });
    auto a = annotate_pair(req, *h.gateway);
    CHECK(a.status == Status::failed);
    CHECK(a.attempts == 3);
    CHECK(a.usage.input_tokens == 300);
    CHECK(h.ledger.size() == 3);
  }
  SUBCASE("model failure") {
    Harness h([](const ModelRequest&) -> ModelResponse { throw Error(ErrorKind::ModelFailure, "boom"); });
    auto a = annotate_pair(req, *h.gateway);
    CHECK(a.status == Status::failed);
    CHECK(a.error.find("boom") != std::string::npos);
  }
  SUBCASE("auth failure propagates") {
    Harness h([](const ModelRequest&) -> ModelResponse { throw Error(ErrorKind::AuthFailure, "no key"); });
    CHECK_THROWS_AS(annotate_pair(req, *h.gateway), Error);
  }
  SUBCASE("coordinates are recorded") {
    Harness h([](const ModelRequest&) { return reply(annotation_json(true, "I click at (120, 40) on the menu.")); });
    auto a = annotate_pair(req, *h.gateway);
    CHECK(a.status == Status::ok);
    REQUIRE(a.coordinate_violations.size() == 1);
  }
}

TEST_CASE("coordinate patterns") {
  CHECK(find_coordinate_patterns("I click the blue Colors menu near the top left.").empty());
  CHECK(find_coordinate_patterns("Click at (100, 200)").size() == 1);
  CHECK(find_coordinate_patterns("tapped the icon at (5,6)").size() == 1);
  CHECK(find_coordinate_patterns("Steps (1, 2) and (3, 4) follow").empty());
  CHECK(find_coordinate_patterns("click(x=100, y=200)").size() == 2);
  CHECK(find_coordinate_patterns("a 300px wide panel, 20 PX margin").size() == 2);
  CHECK(find_coordinate_patterns("the x-axis and 3 pixels").empty());
}

TEST_CASE("annotate a video") {
  VideoAnnotationInput in;
  in.video_id = "vid001";
  in.transitions = transitions(15);
  in.topic = "Adjusting brightness in GIMP";
  in.track = narration(15);
  for (const auto& t : in.transitions) {
    in.graphs[t.start_frame.frame_index] = colors_graph(t.start_frame);
    in.graphs[t.end_frame.frame_index] = colors_graph(t.end_frame);
  }
  std::mt19937 jitter(1);
  std::mutex jitter_mu;
  auto handler = [&](const ModelRequest& r) -> ModelResponse {
    int delay;
    {
      std::lock_guard lock(jitter_mu);
      delay = std::uniform_int_distribution<int>(0, 3)(jitter);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    // Pairs 2, 6, 9 and 13 are idle.
    bool idle = r.item == 2 || r.item == 6 || r.item == 9 || r.item == 13;
    if (r.item == 7 && guide::testing::user_text(r).find("FAIL") != std::string::npos) {
      throw Error(ErrorKind::ModelFailure, "injected");
    }
    return reply(annotation_json(!idle, idle ? "" : "I perform step " + std::to_string(r.item) + "."));
  };

  SUBCASE("order and meaningful count") {
    Harness h(handler);
    AnnotateOptions opts;
    opts.max_in_flight = 4;
    auto out = annotate_video(in, *h.gateway, opts);
    REQUIRE(out.size() == 15);
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].pair_index == i);
      CHECK(out[i].status == Status::ok);
    }
    auto kept = filter_meaningful(out);
    CHECK(kept.size() == 11);
    for (std::size_t i = 1; i < kept.size(); ++i) CHECK(kept[i - 1].pair_index < kept[i].pair_index);
  }
  SUBCASE("context comes from the pair midpoint") {
    Harness h(handler);
    annotate_video(in, *h.gateway);
    for (const auto& r : h.model->requests()) {
      // Pair i spans frames 4i+1 .. 4i+3, i.e. (2i + 1) s at the midpoint: cue i.
      auto text = guide::testing::user_text(r);
      CHECK(text.find("Current: Sentence " + std::to_string(r.item) + ".") != std::string::npos);
    }
  }
  SUBCASE("one failed pair") {
    in.topic = "FAIL";
    Harness h([&](const ModelRequest& r) -> ModelResponse {
      if (r.item == 7) throw Error(ErrorKind::ModelFailure, "injected");
      return reply(annotation_json(true, "I act."));
    });
    WarningSink sink;
    auto out = annotate_video(in, *h.gateway, {}, &sink);
    REQUIRE(out.size() == 15);
    std::size_t failed = 0;
    for (const auto& a : out) failed += a.status == Status::failed;
    CHECK(failed == 1);
    CHECK(out[7].status == Status::failed);
    CHECK(filter_meaningful(out).size() == 14);
    CHECK(sink.size() == 1);
  }
  SUBCASE("missing graphs are sent empty") {
    in.graphs.clear();
    Harness h(handler);
    WarningSink sink;
    auto out = annotate_video(in, *h.gateway, {}, &sink);
    CHECK(out.size() == 15);
    CHECK(sink.size() == 30);
  }
  SUBCASE("no keyframes") {
    in.transitions.clear();
    Harness h(handler);
    CHECK(annotate_video(in, *h.gateway).empty());
    CHECK(h.model->requests().empty());
  }
}

TEST_CASE("meaningful filter is an order-preserving subsequence") {
  std::mt19937 rng(9);
  for (int round = 0; round < 300; ++round) {
    std::vector<FramePairAnnotation> in(std::uniform_int_distribution<int>(0, 20)(rng));
    for (std::size_t i = 0; i < in.size(); ++i) {
      in[i].pair_index = i;
      in[i].status = rng() % 4 == 0 ? Status::failed : Status::ok;
      in[i].meaningful = rng() % 3 != 0;
    }
    auto out = filter_meaningful(in);
    std::size_t j = 0;
    for (const auto& a : out) {
      while (j < in.size() && in[j].pair_index != a.pair_index) ++j;
      REQUIRE(j < in.size());
      CHECK(in[j].status == Status::ok);
      CHECK(in[j].meaningful);
    }
    std::size_t expected = 0;
    for (const auto& a : in) expected += a.status == Status::ok && a.meaningful;
    CHECK(out.size() == expected);
  }
}

TEST_CASE("annotation log round trip") {
  FramePairAnnotation a;
  a.pair_index = 4;
  a.first = frame(1, 500);
  a.second = frame(3, 1500);
  a.meaningful = true;
  a.thought_action = "I click \"OK\".";
  a.status = Status::ok;
  a.attempts = 2;
  a.usage = {8480, 424};
  a.raw_model_output = "{...}";
  a.coordinate_violations = {"x=3"};
  auto j = to_json(a, "vid");
  CHECK(j["video_id"] == "vid");
  CHECK(j["model_usage"]["output_tokens"] == 424);
  auto back = annotation_from_json(nlohmann::json::parse(io::to_jsonl({j})));
  CHECK(back.pair_index == 4);
  CHECK(back.thought_action == a.thought_action);
  CHECK(back.first == a.first);
  CHECK(back.usage.input_tokens == 8480);
  CHECK(back.coordinate_violations == a.coordinate_violations);
  CHECK(back.status == Status::ok);
}
