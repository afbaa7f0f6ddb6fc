// Copyright 2026 The REKI Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Command-line front end: one pipeline stage per subcommand.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "reki/common.hpp"
#include "reki/config.hpp"
#include "reki/pipeline.hpp"

namespace {

using nlohmann::json;
using reki::pipeline::Pipeline;

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string adaptor;
  std::string ablation;
  std::string path;
  bool dry_run = false;
  bool quiet = false;
};

reki::pipeline::RunConfig resolve(const Flags& f) {
  std::vector<std::string> overrides = f.sets;
  if (f.seed) overrides.push_back(fmt::format("seed={}", *f.seed));
  if (!f.mode.empty()) overrides.push_back("mode=\"" + f.mode + "\"");
  if (!f.adaptor.empty()) overrides.push_back("adaptor=\"" + f.adaptor + "\"");
  if (!f.ablation.empty()) overrides.push_back("ablation=\"" + f.ablation + "\"");
  return reki::pipeline::load_config(f.config, overrides);
}

json run_command(const std::string& command, Pipeline& p, const Flags& f) {
  namespace rp = reki::pipeline;
  if (command == "synth") {
    if (!p.config().data.interactions.empty())
      throw reki::Error("data.interactions is set; synth only writes the synthetic corpus");
    return {{"data_dir", p.synth()}};
  }
  if (command == "factors") {
    const auto set = p.factors();
    return {{"scenario", set.scenario}, {"factors", set.factors}};
  }
  if (command == "cluster") {
    const auto r = p.cluster();
    return {{"dir", r.dir}, {"user_clusters", r.user_clusters}, {"item_clusters", r.item_clusters}};
  }
  if (command == "knowledge") {
    const auto r = p.knowledge();
    return {{"dir", r.dir},
            {"requests", r.requests},
            {"llm_calls", r.llm_calls},
            {"cache_hits", r.cache_hits},
            {"failures", r.failures}};
  }
  if (command == "encode") return {{"store", p.encode()}};
  if (command == "train") {
    const auto r = p.train();
    return {{"report", r.report}, {"checkpoint", r.checkpoint}, {"final", r.report_json.at("final")}};
  }
  if (command == "eval") {
    std::optional<rp::ServingPath> path;
    if (!f.path.empty()) path = rp::serving_path_from_string(f.path);
    return p.eval(path);
  }
  if (command == "precompute") {
    const auto r = p.precompute();
    return {{"store", r.store}, {"manifest", r.manifest}, {"entries", r.entries}};
  }
  if (command == "bench") {
    const auto path = f.path.empty() ? rp::ServingPath::kDetached : rp::serving_path_from_string(f.path);
    return p.bench(path).to_json();
  }
  throw reki::Error(fmt::format("unhandled subcommand '{}'", command));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reki: knowledge-augmented CTR pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON config file");
  app.add_option("--set", f.sets, "Override a config key, dotted.key=value (repeatable)");
  app.add_option("--seed", f.seed, "Run seed");
  app.add_option("--mode", f.mode, "base | reki_i | reki_c")->check(CLI::IsMember({"base", "reki_i", "reki_c"}));
  app.add_option("--adaptor", f.adaptor, "hein | moe | mlp")->check(CLI::IsMember({"hein", "moe", "mlp"}));
  app.add_option("--ablation", f.ablation, "none | user | item | both")
      ->check(CLI::IsMember({"none", "user", "item", "both"}));
  app.add_option("--path", f.path, "Serving path for eval and bench")
      ->check(CLI::IsMember({"full_hein", "detached", "base"}));
  app.add_flag("--dry-run", f.dry_run, "Print the resolved plan without running");
  app.add_flag("--quiet", f.quiet, "Suppress progress logging");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "Write the synthetic corpus"},
      {"factors", "Resolve the scenario factor set"},
      {"cluster", "Build user and item clusters"},
      {"knowledge", "Generate knowledge texts with the LLM"},
      {"encode", "Encode knowledge into the representation store"},
      {"train", "Jointly train the adaptor and backbone"},
      {"eval", "Evaluate the trained model on the test split"},
      {"precompute", "Prestore augmented vectors for detached serving"},
      {"bench", "Measure per-batch inference latency"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\nerror: " << e.what() << "\n";
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    Pipeline pipeline(resolve(f), f.quiet ? nullptr : &std::cerr);
    if (f.dry_run) {
      json stages = json::array();
      for (const auto& [stage, artifact] : pipeline.plan()) stages.push_back({{"stage", stage}, {"artifact", artifact}});
      std::cout << json{{"command", command}, {"plan", stages}}.dump(2) << "\n";
      return 0;
    }
    std::cout << run_command(command, pipeline, f).dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
