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

// Exhaustive distributed tuning of a whole collective function.
//
// Every measurement starts from all-zero signals. Ranks report per-config
// medians to rank 0, which picks the configuration with the smallest
// straggler time and broadcasts its index so every rank returns the same
// choice.

#ifndef ONESIDED_AUTOTUNER_H_
#define ONESIDED_AUTOTUNER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "onesided/task_runtime.h"
#include "onesided/world.h"

namespace onesided {

struct TuneAxis {
  std::string name;
  std::vector<std::int64_t> values;
};

// One point of a ConfigSpace: (axis name, value) in axis order.
struct TuneConfig {
  std::vector<std::pair<std::string, std::int64_t>> values;

  // Throws ArgumentError for an unknown axis.
  std::int64_t get(const std::string& axis) const;
  std::string label() const;
  nlohmann::ordered_json to_json() const;

  friend bool operator==(const TuneConfig&, const TuneConfig&) = default;
};

class ConfigSpace {
 public:
  ConfigSpace() = default;
  explicit ConfigSpace(std::vector<TuneAxis> axes);

  // Appends an axis. Throws ArgumentError on a duplicate name.
  ConfigSpace& axis(std::string name, std::vector<std::int64_t> values);

  const std::vector<TuneAxis>& axes() const { return axes_; }
  // Product of the axis sizes; 0 for an empty space.
  std::size_t size() const;
  // Lexicographic: the last axis varies fastest.
  TuneConfig at(std::size_t index) const;
  std::vector<TuneConfig> enumerate() const;

  nlohmann::ordered_json to_json() const;
  // Throws ConfigError on malformed input.
  static ConfigSpace from_json(const nlohmann::json& j);

 private:
  std::vector<TuneAxis> axes_;
};

// One whole invocation of the function being tuned. Returns the time each
// rank spent, in microseconds.
using TuneTarget = std::function<std::vector<double>(World& world, const TuneConfig& config)>;

struct TuneOptions {
  int iterations = 3;
  // Scheduling of the aggregation and broadcast program.
  LaunchOptions launch;
};

struct ConfigResult {
  TuneConfig config;
  bool valid = true;
  std::string error;
  // timings_us[rank][iteration]
  std::vector<std::vector<double>> timings_us;
  std::vector<double> median_us;
  // Max over ranks of the per-rank median.
  double score_us = 0.0;
};

struct TuneReport {
  ConfigSpace space;
  int iterations = 0;
  int world_size = 0;
  std::vector<ConfigResult> results;
  int chosen = -1;
  // Index each rank received from the broadcast.
  std::vector<int> per_rank_choice;
  // Measurements that started with every signal verified zero.
  int zero_signal_starts = 0;

  const TuneConfig& chosen_config() const;
  bool agreed() const;
  nlohmann::ordered_json to_json() const;
};

// Middle element for odd sizes, mean of the two middle elements otherwise.
double median(std::vector<double> v);

// Index of the smallest score among valid results, first on ties; -1 when
// none is valid.
int select_config(const std::vector<ConfigResult>& results);

// Zeroes every signal and sweeps them back. Throws UsageError while a
// collective or non-blocking operation is in flight.
void reset_signals(World& world);

// Per-rank end of the last task of a timed launch.
std::vector<double> rank_times(const LaunchReport& report, int world_size);

// Throws TuningError for an empty space or when every config faults.
TuneReport tune(World& world, const TuneTarget& target, const ConfigSpace& space, const TuneOptions& options = {});

}  // namespace onesided

#endif  // ONESIDED_AUTOTUNER_H_
