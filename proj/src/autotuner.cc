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

#include "onesided/autotuner.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include "onesided/errors.h"
#include "onesided/primitives.h"

namespace onesided {

std::int64_t TuneConfig::get(const std::string& axis) const {
  for (const auto& [name, value] : values) {
    if (name == axis) return value;
  }
  throw ArgumentError("config has no axis '" + axis + "'");
}

std::string TuneConfig::label() const {
  std::string out;
  for (const auto& [name, value] : values) {
    if (!out.empty()) out += ",";
    out += name + "=" + std::to_string(value);
  }
  return out;
}

nlohmann::ordered_json TuneConfig::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, value] : values) j[name] = value;
  return j;
}

ConfigSpace::ConfigSpace(std::vector<TuneAxis> axes) {
  for (auto& a : axes) axis(std::move(a.name), std::move(a.values));
}

ConfigSpace& ConfigSpace::axis(std::string name, std::vector<std::int64_t> values) {
  for (const auto& a : axes_) {
    if (a.name == name) throw ArgumentError("duplicate axis '" + name + "'");
  }
  axes_.push_back(TuneAxis{std::move(name), std::move(values)});
  return *this;
}

std::size_t ConfigSpace::size() const {
  if (axes_.empty()) return 0;
  std::size_t n = 1;
  for (const auto& a : axes_) n *= a.values.size();
  return n;
}

TuneConfig ConfigSpace::at(std::size_t index) const {
  if (index >= size()) throw ArgumentError("config index " + std::to_string(index) + " out of range");
  TuneConfig c;
  c.values.resize(axes_.size());
  for (std::size_t i = axes_.size(); i-- > 0;) {
    const auto& a = axes_[i];
    c.values[i] = {a.name, a.values[index % a.values.size()]};
    index /= a.values.size();
  }
  return c;
}

std::vector<TuneConfig> ConfigSpace::enumerate() const {
  std::vector<TuneConfig> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i));
  return out;
}

nlohmann::ordered_json ConfigSpace::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& a : axes_) j.push_back({{"name", a.name}, {"values", a.values}});
  return j;
}

ConfigSpace ConfigSpace::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("config space must be an array of axes");
  ConfigSpace s;
  try {
    for (const auto& a : j) s.axis(a.at("name").get<std::string>(), a.at("values").get<std::vector<std::int64_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config space: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

const TuneConfig& TuneReport::chosen_config() const {
  if (chosen < 0) throw TuningError("no configuration was chosen");
  return results.at(static_cast<std::size_t>(chosen)).config;
}

bool TuneReport::agreed() const {
  return !per_rank_choice.empty() &&
         std::all_of(per_rank_choice.begin(), per_rank_choice.end(), [&](int c) { return c == chosen; });
}

nlohmann::ordered_json TuneReport::to_json() const {
  nlohmann::ordered_json j;
  j["axes"] = space.to_json();
  j["iterations"] = iterations;
  j["world_size"] = world_size;
  j["configs"] = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json c;
    c["config"] = r.config.to_json();
    c["valid"] = r.valid;
    if (!r.valid) c["error"] = r.error;
    c["timings_us"] = r.timings_us;
    c["median_us"] = r.median_us;
    if (r.valid) c["score_us"] = r.score_us;
    j["configs"].push_back(std::move(c));
  }
  j["chosen_index"] = chosen;
  j["chosen"] = chosen >= 0 ? chosen_config().to_json() : nlohmann::ordered_json();
  j["per_rank_choice"] = per_rank_choice;
  j["zero_signal_starts"] = zero_signal_starts;
  return j;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

int select_config(const std::vector<ConfigResult>& results) {
  int best = -1;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].valid) continue;
    if (best < 0 || results[i].score_us < results[static_cast<std::size_t>(best)].score_us) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

void reset_signals(World& world) {
  world.reset_signals();
  if (!world.signals_all_zero()) throw UsageError("signal sweep found a nonzero word after reset");
}

std::vector<double> rank_times(const LaunchReport& report, int world_size) {
  if (!report.timeline.has_value()) throw UsageError("rank_times needs a timed launch");
  std::vector<double> out(static_cast<std::size_t>(world_size), 0.0);
  for (const auto& ev : report.timeline->events()) {
    if (ev.rank >= 0 && ev.rank < world_size) {
      out[static_cast<std::size_t>(ev.rank)] = std::max(out[static_cast<std::size_t>(ev.rank)], ev.end_us());
    }
  }
  return out;
}

TuneReport tune(World& world, const TuneTarget& target, const ConfigSpace& space, const TuneOptions& options) {
  if (space.size() == 0) throw TuningError("empty configuration space");
  if (options.iterations < 1) throw ArgumentError("iterations must be at least 1");
  const int w = world.world_size();
  TuneReport rep;
  rep.space = space;
  rep.iterations = options.iterations;
  rep.world_size = w;

  for (std::size_t i = 0; i < space.size(); ++i) {
    ConfigResult res;
    res.config = space.at(i);
    res.timings_us.assign(static_cast<std::size_t>(w), {});
    for (int it = 0; it < options.iterations && res.valid; ++it) {
      reset_signals(world);
      ++rep.zero_signal_starts;
      try {
        const std::vector<double> t = target(world, res.config);
        if (static_cast<int>(t.size()) != w) throw TuningError("target returned timings for the wrong number of ranks");
        for (int r = 0; r < w; ++r) {
          const double v = t[static_cast<std::size_t>(r)];
          if (!std::isfinite(v) || v < 0.0) throw TuningError("target returned an invalid timing");
          res.timings_us[static_cast<std::size_t>(r)].push_back(v);
        }
      } catch (const std::exception& e) {
        res.valid = false;
        res.error = e.what();
        world.discard_pending();
        world.clear_cancel();
      }
    }
    if (res.valid) {
      for (const auto& t : res.timings_us) res.median_us.push_back(median(t));
    }
    rep.results.push_back(std::move(res));
  }
  reset_signals(world);

  // Each rank sends its medians to rank 0, which decides and broadcasts.
  const std::size_t n = rep.results.size();
  World::AllocScope alloc(world);
  const SymHandle gathered = world.alloc_symmetric(static_cast<std::size_t>(w) * n * sizeof(double));
  const SymHandle choice = world.alloc_symmetric(sizeof(std::int64_t));
  const SignalSet arrived = world.alloc_signals(w);
  std::vector<std::vector<double>> mine(static_cast<std::size_t>(w), std::vector<double>(n));
  for (int r = 0; r < w; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& res = rep.results[i];
      mine[static_cast<std::size_t>(r)][i] =
          res.valid ? res.median_us[static_cast<std::size_t>(r)] : std::numeric_limits<double>::infinity();
    }
  }
  rep.per_rank_choice.assign(static_cast<std::size_t>(w), -1);
  Program program(w);
  for (int r = 0; r < w; ++r) {
    const int s = program.stream(r, "tuner", TaskRole::kHost);
    program.task(s, "agree", [&, r](const RankCtx& ctx) {
      const auto& m = mine[static_cast<std::size_t>(r)];
      putmem_signal(ctx, gathered, static_cast<std::size_t>(r) * n * sizeof(double), std::as_bytes(std::span(m)),
                    arrived.at(r), 1, SignalOp::kSet, 0);
      if (r == 0) {
        for (int src = 0; src < w; ++src) signal_wait_until(ctx, arrived.at(src), WaitCond::kEq, 1);
        auto all = typed<double>(ctx.world().remote_ptr(gathered, 0));
        for (std::size_t i = 0; i < n; ++i) {
          auto& res = rep.results[i];
          if (!res.valid) continue;
          res.score_us = 0.0;
          for (int src = 0; src < w; ++src) {
            res.score_us = std::max(res.score_us, all[static_cast<std::size_t>(src) * n + i]);
          }
        }
        const std::int64_t pick = select_config(rep.results);
        std::memcpy(ctx.world().remote_ptr(choice, 0).data(), &pick, sizeof(pick));
      }
      broadcast(ctx, 0, choice);
      std::int64_t got = -1;
      std::memcpy(&got, ctx.world().remote_ptr(choice, r).data(), sizeof(got));
      rep.per_rank_choice[static_cast<std::size_t>(r)] = static_cast<int>(got);
    });
  }
  LaunchReport launched;
  {
    World::CollectiveScope scope(world);
    LaunchOptions lo = options.launch;
    lo.timed = false;
    launched = launch(world, program, lo);
  }
  reset_signals(world);
  launched.rethrow_if_failed();
  rep.chosen = rep.per_rank_choice.front();
  if (rep.chosen < 0) throw TuningError("every configuration faulted during profiling");
  return rep;
}

}  // namespace onesided
