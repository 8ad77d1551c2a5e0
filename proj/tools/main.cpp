#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "guide/cost.hpp"
#include "guide/error.hpp"
#include "guide/eval.hpp"
#include "guide/injection.hpp"
#include "guide/io.hpp"
#include "guide/log.hpp"
#include "guide/pipeline.hpp"

namespace fs = std::filesystem;
using namespace guide;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitProvider = 2;

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::MissingArtifact:
    case ErrorKind::InvalidInput:
    case ErrorKind::EmptyInput:
    case ErrorKind::EmptyDescription:
    case ErrorKind::UnmatchedIds:
      return kExitUsage;
    default:
      return kExitProvider;
  }
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    io::write_file_atomic(out, text);
  }
}

struct RunArgs {
  std::string task;
  std::string config;
  std::string workspace;
  bool force = false;
};

pipeline::Config resolve_config(const RunArgs& a, const pipeline::Workspace& ws) {
  fs::path file = a.config.empty() ? ws.config() : fs::path(a.config);
  if (!fs::exists(file))
    throw Error(ErrorKind::MissingArtifact, "no config at " + file.string() + "; pass --config or run `guide run` first");
  return pipeline::load_config(fs::absolute(file));
}

retrieval::TaskSpec resolve_task(const RunArgs& a, const pipeline::Workspace& ws) {
  if (!a.task.empty()) return retrieval::task_from_json(io::read_json(a.task));
  return pipeline::load_task(ws);
}

void save_recording(const pipeline::Config& config, const pipeline::Providers& p) {
  if (p.recorder) {
    p.recorder->save(config.chat.fixture);
    log::info("recorded chat fixture written to " + config.chat.fixture.string());
  }
}

int do_run(const RunArgs& a) {
  pipeline::Workspace ws{fs::absolute(a.workspace)};
  fs::create_directories(ws.root);
  auto config = resolve_config(a, ws);
  auto task = resolve_task(a, ws);
  auto providers = pipeline::make_providers(config);
  pipeline::Runner runner(config, ws, providers, task);
  auto outcome = runner.run_all(a.force);
  save_recording(config, providers);
  std::cout << "status: " << outcome.status << "\n";
  for (const auto& s : outcome.stages) {
    std::cout << "  " << pipeline::to_string(s.stage) << ": " << (s.skipped ? "skipped" : "done");
    if (s.warnings) std::cout << " (" << s.warnings << " warnings)";
    std::cout << "\n";
  }
  std::cout << "bundle entries: " << outcome.entries << "\n";
  return kExitOk;
}

int do_stage(pipeline::Stage stage, const RunArgs& a) {
  pipeline::Workspace ws{fs::absolute(a.workspace)};
  if (!fs::exists(ws.root)) throw Error(ErrorKind::MissingArtifact, "workspace " + ws.root.string() + " does not exist");
  auto config = resolve_config(a, ws);
  auto task = resolve_task(a, ws);
  auto providers = pipeline::make_providers(config);
  pipeline::Runner runner(config, ws, providers, task);
  auto s = runner.run_stage(stage, a.force);
  save_recording(config, providers);
  std::cout << pipeline::to_string(stage) << ": " << (s.skipped ? "skipped (already complete)" : "done");
  if (s.warnings) std::cout << " (" << s.warnings << " warnings)";
  std::cout << "\n";
  return kExitOk;
}

struct InjectArgs {
  std::string bundle;
  std::string workspace;
  std::string mode;
  std::string element_desc;
  std::string tools;
  std::string base;
  std::size_t k = knowledge::kDefaultElementK;
  std::string out;
};

std::string read_optional(const std::string& file) { return file.empty() ? std::string() : io::read_file(file); }

int do_inject(const InjectArgs& a) {
  fs::path file = a.bundle;
  if (file.empty()) {
    if (a.workspace.empty()) throw Error(ErrorKind::InvalidInput, "pass --bundle or --workspace");
    file = pipeline::Workspace{a.workspace}.knowledge();
  }
  if (!fs::exists(file)) throw Error(ErrorKind::MissingArtifact, "no knowledge bundle at " + file.string() + "; run `guide decompose` first");
  auto bundle = knowledge::bundle_from_json(io::read_json(file));
  injection::RenderOptions opts;
  opts.max_elements = a.k;
  injection::RenderedPrompt r;
  switch (injection::mode_from_string(a.mode)) {
    case injection::Mode::a_worker:
      r = injection::render_mode_a_worker(bundle, read_optional(a.base));
      break;
    case injection::Mode::a_grounding:
      r = injection::render_mode_a_grounding(bundle, a.element_desc, opts);
      break;
    case injection::Mode::b_system:
      r = injection::render_mode_b_system(bundle, read_optional(a.tools), opts);
      break;
  }
  auto text = r.text;
  // Without a base or tool schema the rendering would open with blank lines.
  text.erase(0, text.find_first_not_of('\n') == std::string::npos ? 0 : text.find_first_not_of('\n'));
  log::info(std::string("channels: planning=") + (r.planning ? "yes" : "no") + " grounding=" + (r.grounding ? "yes" : "no"));
  emit(text, a.out);
  return kExitOk;
}

struct EvalArgs {
  std::string labels;
  std::string outcomes;
  std::string truth;
  std::string predicted;
  std::string scores;
  std::string runs;
  bool json = false;
};

int print_report(const nlohmann::json& j, const std::string& table, bool json) {
  std::cout << (json ? j.dump(2) + "\n" : table);
  return kExitOk;
}

struct CostArgs {
  std::string profile;
  std::string ledger;
  std::string prices;
  std::string video;
  bool annotation_only = false;
  std::int64_t tasks = 361;
  std::int64_t covered = 299;
  double two_video_fraction = 0.427;
  double per_task = 0.0188;
  double per_video = 0.252;
  bool json = false;
};

bool is_annotation_stage(const std::string& s) {
  return s == cost::stage::frame_pair_idm || s == cost::stage::planning_split || s == cost::stage::grounding_split;
}

int do_cost(const CostArgs& a) {
  if (a.profile.empty() == a.ledger.empty()) throw Error(ErrorKind::InvalidInput, "pass exactly one of --profile or --ledger");
  auto prices = cost::default_prices();
  if (!a.prices.empty()) {
    for (auto& [model, price] : cost::prices_from_json(io::read_json(a.prices))) prices[model] = price;
  }
  if (a.profile == "benchmark") {
    auto r = cost::benchmark_total(a.tasks, a.covered, a.two_video_fraction, a.per_task, a.per_video);
    return print_report(cost::to_json(r), cost::format_table(r), a.json);
  }
  std::vector<cost::UsageRecord> records;
  if (a.profile == "typical") {
    records = cost::annotation_profile(cost::Regime::typical);
  } else if (a.profile == "complex") {
    records = cost::annotation_profile(cost::Regime::complex);
  } else if (a.profile == "retrieval") {
    records = cost::retrieval_profile();
  } else if (!a.profile.empty()) {
    throw Error(ErrorKind::InvalidInput, "unknown profile '" + a.profile + "'");
  } else {
    if (!fs::exists(a.ledger)) throw Error(ErrorKind::MissingArtifact, "no ledger at " + a.ledger);
    for (const auto& j : io::read_jsonl(a.ledger)) {
      auto r = cost::usage_from_json(j);
      if (!a.video.empty() && r.video_id != a.video) continue;
      if (a.annotation_only && !is_annotation_stage(r.stage)) continue;
      records.push_back(std::move(r));
    }
  }
  auto report = cost::cost_of(records, prices);
  return print_report(cost::to_json(report), cost::format_table(report), a.json);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mine GUI tutorial videos for planning and grounding knowledge"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only errors");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run every stage for a task");
  run->add_option("--task", run_args.task, "Task JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--config", run_args.config, "Config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--workspace", run_args.workspace, "Workspace directory")->required();
  run->add_flag("--force", run_args.force, "Rerun completed stages");

  RunArgs stage_args;
  std::map<CLI::App*, pipeline::Stage> stage_cmds;
  for (auto s : pipeline::kStages) {
    auto* cmd = app.add_subcommand(std::string(pipeline::to_string(s)), "Run the " + std::string(pipeline::to_string(s)) + " stage");
    cmd->add_option("--workspace", stage_args.workspace, "Workspace directory")->required();
    cmd->add_option("--config", stage_args.config, "Config JSON (default: workspace config.json)");
    cmd->add_option("--task", stage_args.task, "Task JSON (default: workspace task.json)");
    cmd->add_flag("--force", stage_args.force, "Rerun even if complete");
    stage_cmds[cmd] = s;
  }

  InjectArgs inject_args;
  auto* inject = app.add_subcommand("inject", "Render a knowledge bundle into an agent prompt");
  auto* bundle_opt = inject->add_option("--bundle", inject_args.bundle, "knowledge.json");
  inject->add_option("--workspace", inject_args.workspace, "Workspace holding knowledge.json")->excludes(bundle_opt);
  inject->add_option("--mode", inject_args.mode, "a-worker | a-grounding | b")
      ->required()
      ->check(CLI::IsMember({"a-worker", "a-grounding", "b"}));
  inject->add_option("--element-desc", inject_args.element_desc, "Target element description (a-grounding)");
  inject->add_option("--tools", inject_args.tools, "Tool schema file (b)")->check(CLI::ExistingFile);
  inject->add_option("--base", inject_args.base, "Worker guidelines file (a-worker)")->check(CLI::ExistingFile);
  inject->add_option("--k", inject_args.k, "Grounding elements per video");
  inject->add_option("--out", inject_args.out, "Output file (default stdout)");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Compute evaluation metrics");
  eval->require_subcommand(1);
  auto* meaningful = eval->add_subcommand("meaningful", "Meaningful-filter metrics");
  meaningful->add_option("--labels", eval_args.labels, "Frame labels JSONL")->required()->check(CLI::ExistingFile);
  meaningful->add_option("--outcomes", eval_args.outcomes, "Filter outcomes JSONL")->required()->check(CLI::ExistingFile);
  auto* stage1 = eval->add_subcommand("stage1", "GUI classifier metrics");
  stage1->add_option("--truth", eval_args.truth, "Ground-truth verdicts JSONL")->required()->check(CLI::ExistingFile);
  stage1->add_option("--predicted", eval_args.predicted, "Predicted verdicts JSONL")->required()->check(CLI::ExistingFile);
  auto* topics = eval->add_subcommand("topics", "Topic quality scores");
  topics->add_option("--scores", eval_args.scores, "Scores JSONL")->required()->check(CLI::ExistingFile);
  auto* coverage = eval->add_subcommand("coverage", "Retrieval coverage over workspaces");
  coverage->add_option("--runs", eval_args.runs, "Directory of task workspaces")->required()->check(CLI::ExistingDirectory);
  for (auto* c : {meaningful, stage1, topics, coverage}) c->add_flag("--json", eval_args.json, "JSON output");

  CostArgs cost_args;
  auto* costcmd = app.add_subcommand("cost", "Cost reports from profiles or a run ledger");
  costcmd->add_option("--profile", cost_args.profile, "typical | complex | retrieval | benchmark")
      ->check(CLI::IsMember({"typical", "complex", "retrieval", "benchmark"}));
  costcmd->add_option("--ledger", cost_args.ledger, "ledger.jsonl");
  costcmd->add_option("--prices", cost_args.prices, "Price overrides JSON")->check(CLI::ExistingFile);
  costcmd->add_option("--video", cost_args.video, "Restrict ledger rows to one video");
  costcmd->add_flag("--annotation", cost_args.annotation_only, "Only annotation-stage ledger rows");
  costcmd->add_option("--tasks", cost_args.tasks, "Benchmark task count");
  costcmd->add_option("--covered", cost_args.covered, "Covered tasks");
  costcmd->add_option("--two-video-fraction", cost_args.two_video_fraction, "Share of covered tasks with two videos");
  costcmd->add_option("--per-task", cost_args.per_task, "Retrieval cost per task (USD)");
  costcmd->add_option("--per-video", cost_args.per_video, "Annotation cost per video (USD)");
  costcmd->add_flag("--json", cost_args.json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  log::set_level(quiet ? log::Level::quiet : verbose ? log::Level::debug : log::Level::info);

  try {
    if (run->parsed()) return do_run(run_args);
    for (auto& [cmd, s] : stage_cmds)
      if (cmd->parsed()) return do_stage(s, stage_args);
    if (inject->parsed()) return do_inject(inject_args);
    if (meaningful->parsed()) {
      auto r = eval::meaningful_metrics(eval::load_frame_labels(eval_args.labels), eval::load_filter_outcomes(eval_args.outcomes));
      return print_report(eval::to_json(r), eval::format_table(r), eval_args.json);
    }
    if (stage1->parsed()) {
      auto r = eval::stage1_metrics(eval::load_verdicts(eval_args.truth), eval::load_verdicts(eval_args.predicted));
      return print_report(eval::to_json(r), eval::format_table(r), eval_args.json);
    }
    if (topics->parsed()) {
      auto r = eval::topic_stats(eval::load_scores(eval_args.scores));
      return print_report(eval::to_json(r), eval::format_table(r), eval_args.json);
    }
    if (coverage->parsed()) {
      auto r = eval::coverage_stats(eval::load_selection_counts(eval_args.runs));
      return print_report(eval::to_json(r), eval::format_table(r), eval_args.json);
    }
    if (costcmd->parsed()) return do_cost(cost_args);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitProvider;
  }
  return kExitUsage;
}
