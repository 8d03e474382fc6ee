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

// Scenario descriptions and the verify / simulate / tune drivers behind the
// command-line tool.

#ifndef ONESIDED_SCENARIO_H_
#define ONESIDED_SCENARIO_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "onesided/autotuner.h"
#include "onesided/collectives.h"
#include "onesided/costmodel.h"
#include "onesided/scheduler.h"
#include "onesided/timeline.h"

namespace onesided {

enum class Command { kVerify, kSimulate, kTune };

std::string_view to_string(Command c);

struct ScenarioConfig {
  std::string name = "custom";
  Command command = Command::kVerify;
  // verify: allgather-push, allgather-pull, reducescatter-intra,
  //         allgather-ll, reducescatter-inter, alltoall, ag-gemm, gemm-rs
  // simulate: ag-ll, ag-baseline, rs-threshold, partition, ag-schedule, ag-gemm
  // tune: ag-gemm
  std::string kind = "allgather-push";
  int n_nodes = 1;
  int local_world_size = 8;
  std::string topology = "h800";
  CostConfig cost;

  DType dtype = DType::kI32;
  // Elements per rank for the collectives.
  std::size_t elems = 64;
  ProblemShape shape;
  // default, switch, fullmesh or rs_inter.
  std::string schedule = "default";
  int subchunks = 1;
  int tokens = 4;
  int topk = 2;
  int experts = 8;
  std::size_t bytes_per_rank = 0;
  double chunk_gb = 0.01;
  ResourcePartition partition;
  GemmCost gemm;

  SchedulerMode scheduler = SchedulerMode::kRoundRobin;
  std::optional<std::uint64_t> seed;
  int trials = 1;
  int timeout_ms = 5000;
  bool inject_corruption = false;

  ConfigSpace tune_space;
  int tune_iterations = 3;

  int world_size() const { return n_nodes * local_world_size; }
  // Throws ConfigError when the scenario cannot run as described.
  void validate() const;

  // Missing fields keep their defaults. Throws ConfigError.
  static ScenarioConfig from_json(const nlohmann::json& j);
  static ScenarioConfig load(const std::string& path);
  nlohmann::ordered_json to_json() const;
};

// Cost configuration shipped for "h800" or "mi308x". Throws ConfigError.
CostConfig builtin_cost_config(const std::string& name);

std::vector<ScenarioConfig> builtin_scenarios();
// Throws ConfigError for an unknown name.
ScenarioConfig find_scenario(const std::string& name);

struct VerifyOutcome {
  bool ok = true;
  nlohmann::ordered_json report;
};

struct SimulateOutcome {
  Timeline timeline;
  nlohmann::ordered_json summary;
};

// Runs the functional collective or pipeline against a brute-force
// reference for every trial.
VerifyOutcome run_verify(const ScenarioConfig& config);
SimulateOutcome run_simulate(const ScenarioConfig& config);
TuneReport run_tune(const ScenarioConfig& config);

}  // namespace onesided

#endif  // ONESIDED_SCENARIO_H_
