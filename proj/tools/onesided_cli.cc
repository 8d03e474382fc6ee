/* Copyright 2026 The onesided Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// onesided: scenario runner for the one-sided communication library.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "onesided/errors.h"
#include "onesided/scenario.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Flags {
  std::string config;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string scheduler;
  std::string out = ".";
  std::optional<int> timeout_ms;
  std::optional<int> trials;
  bool inject_corruption = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("scenario,--scenario", f.scenario, "Built-in scenario name");
  cmd->add_option("--config", f.config, "Scenario JSON file");
  cmd->add_option("--seed", f.seed, "Scheduler and input seed");
  cmd->add_option("--scheduler", f.scheduler, "Interleaving policy")->check(CLI::IsMember({"det", "random"}));
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--timeout-ms", f.timeout_ms, "Wait timeout in milliseconds");
}

onesided::ScenarioConfig resolve(const Flags& f, onesided::Command command) {
  if (f.config.empty() == f.scenario.empty()) {
    throw onesided::UsageError("give exactly one of --config or a scenario name");
  }
  onesided::ScenarioConfig c = f.config.empty() ? onesided::find_scenario(f.scenario)
                                                : onesided::ScenarioConfig::load(f.config);
  if (c.command != command) {
    throw onesided::ConfigError("scenario '" + c.name + "' is a " + std::string(onesided::to_string(c.command)) +
                                " scenario");
  }
  if (!f.scheduler.empty()) c.scheduler = onesided::parse_scheduler_mode(f.scheduler);
  if (f.seed) c.seed = *f.seed;
  if (f.timeout_ms) c.timeout_ms = *f.timeout_ms;
  if (f.trials) c.trials = *f.trials;
  if (f.inject_corruption) c.inject_corruption = true;
  return c;
}

void write_json(const std::string& dir, const std::string& file, const nlohmann::ordered_json& j) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const std::string path = (std::filesystem::path(dir) / file).string();
  std::ofstream out(path);
  if (!out) throw onesided::ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

int cmd_verify(const Flags& f) {
  const onesided::VerifyOutcome v = onesided::run_verify(resolve(f, onesided::Command::kVerify));
  write_json(f.out, "verify_report.json", v.report);
  std::cout << v.report.dump(2) << "\n";
  return v.ok ? kExitOk : kExitFailure;
}

int cmd_simulate(const Flags& f) {
  const onesided::SimulateOutcome s = onesided::run_simulate(resolve(f, onesided::Command::kSimulate));
  write_json(f.out, "trace.json", s.timeline.to_chrome_trace());
  write_json(f.out, "summary.json", s.summary);
  std::cout << s.summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_tune(const Flags& f) {
  const onesided::TuneReport r = onesided::run_tune(resolve(f, onesided::Command::kTune));
  const nlohmann::ordered_json j = r.to_json();
  write_json(f.out, "tune_report.json", j);
  std::cout << "chosen " << j["chosen"].dump() << "\n";
  return kExitOk;
}

int cmd_list() {
  for (const auto& s : onesided::builtin_scenarios()) {
    std::cout << onesided::to_string(s.command) << "\t" << s.name << "\t" << s.kind << "\t" << s.n_nodes << "x"
              << s.local_world_size << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"onesided scenario runner"};
  app.require_subcommand(1);
  Flags flags;
  CLI::App* verify = app.add_subcommand("verify", "Check a collective or pipeline against a reference");
  add_common(verify, flags);
  verify->add_option("--trials", flags.trials, "Number of trials");
  verify->add_flag("--inject-corruption", flags.inject_corruption, "Flip one output byte before comparing");
  CLI::App* simulate = app.add_subcommand("simulate", "Run the timed model and write a Chrome trace");
  add_common(simulate, flags);
  CLI::App* tune = app.add_subcommand("tune", "Run the autotuner and write its report");
  add_common(tune, flags);
  app.add_subcommand("list-scenarios", "Print the built-in scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (verify->parsed()) return cmd_verify(flags);
    if (simulate->parsed()) return cmd_simulate(flags);
    if (tune->parsed()) return cmd_tune(flags);
    return cmd_list();
  } catch (const onesided::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const onesided::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const onesided::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const onesided::TuningError& e) {
    std::cerr << "tuning error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const onesided::SyncFault& e) {
    std::cerr << "sync fault: " << e.what() << "\n";
    return kExitFailure;
  } catch (const onesided::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
