// Builds the end-to-end fixture directory and records the model replies the
// pipeline needs for both fixture tasks into responses.json.
//
//   make_e2e_fixture <out-dir>

#include <filesystem>
#include <iostream>

#include "guide/io.hpp"
#include "guide/log.hpp"
#include "guide/pipeline.hpp"
#include "support/e2e_fixture.hpp"

namespace fs = std::filesystem;
using namespace guide;
namespace e2e = guide::testing::e2e;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_e2e_fixture <out-dir>\n";
    return 1;
  }
  log::set_level(log::Level::quiet);
  fs::path out = fs::absolute(argv[1]);
  try {
    fs::remove_all(out);
    e2e::write_assets(out);
    io::write_json_atomic(out / "config.json", e2e::config_json("fixture", "responses.json"));

    auto config = pipeline::config_from_json(e2e::config_json("fixture", "responses.json"), out);
    auto scripted = std::make_shared<testing::ScriptedChatModel>(e2e::respond);
    auto recorder = std::make_shared<provider::RecordingChatModel>(scripted);
    for (const char* task : {"gimp.json", "uncovered.json"}) {
      auto providers = pipeline::make_providers(config, recorder);
      fs::path ws = out / "recording" / fs::path(task).stem();
      pipeline::Runner runner(config, {ws}, providers, retrieval::task_from_json(io::read_json(out / "tasks" / task)));
      auto outcome = runner.run_all();
      std::cout << task << ": " << outcome.status << ", " << outcome.entries << " entries\n";
    }
    recorder->save(out / "responses.json");
    fs::remove_all(out / "recording");
  } catch (const std::exception& e) {
    std::cerr << "fixture generation failed: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
