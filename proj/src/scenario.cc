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

#include "onesided/scenario.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "onesided/errors.h"
#include "onesided/overlap_pipelines.h"
#include "onesided/swizzle.h"

namespace onesided {
namespace {

constexpr int kMaxReportedMismatches = 16;

const std::set<std::string>& verify_kinds() {
  static const std::set<std::string> k{"allgather-push", "allgather-pull", "reducescatter-intra", "allgather-ll",
                                       "reducescatter-inter", "alltoall", "ag-gemm", "gemm-rs"};
  return k;
}

const std::set<std::string>& simulate_kinds() {
  static const std::set<std::string> k{"ag-ll", "ag-baseline", "rs-threshold", "partition", "ag-schedule", "ag-gemm"};
  return k;
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

void only_keys(const nlohmann::json& j, const std::set<std::string>& keys, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, v] : j.items()) {
    if (keys.count(key) == 0) throw ConfigError(std::string("unknown field '") + key + "' in " + where);
  }
}

Command parse_command(const std::string& s) {
  if (s == "verify") return Command::kVerify;
  if (s == "simulate") return Command::kSimulate;
  if (s == "tune") return Command::kTune;
  throw ConfigError("unknown command '" + s + "'");
}

// Little-endian integer element `i` of `b`, sign-extended for signed types.
std::int64_t element(DType dtype, const LocalBuffer& b, std::size_t i) {
  switch (dtype) {
    case DType::kI32: {
      std::int32_t v;
      std::memcpy(&v, b.data() + i * 4, 4);
      return v;
    }
    case DType::kU32: {
      std::uint32_t v;
      std::memcpy(&v, b.data() + i * 4, 4);
      return v;
    }
    default: {
      std::int64_t v;
      std::memcpy(&v, b.data() + i * 8, 8);
      return v;
    }
  }
}

void set_element(DType dtype, LocalBuffer& b, std::size_t i, std::uint64_t v) {
  const std::size_t w = dtype_size(dtype);
  if (w == 4) {
    const auto x = static_cast<std::uint32_t>(v);
    std::memcpy(b.data() + i * 4, &x, 4);
  } else {
    std::memcpy(b.data() + i * 8, &v, 8);
  }
}

LocalBuffer random_elems(DType dtype, std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> d(-1000, 1000);
  LocalBuffer b(n * dtype_size(dtype));
  for (std::size_t i = 0; i < n; ++i) set_element(dtype, b, i, static_cast<std::uint64_t>(d(rng)));
  return b;
}

std::size_t elems_of(DType dtype, const LocalBuffer& b) { return b.size() / dtype_size(dtype); }

// ---- brute-force references ----------------------------------------------

LocalBuffer ref_gather(const std::vector<LocalBuffer>& in) {
  LocalBuffer out;
  for (const auto& b : in) out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<LocalBuffer> ref_reduce_scatter(DType dtype, const std::vector<LocalBuffer>& in) {
  const std::size_t w = in.size();
  const std::size_t chunk = elems_of(dtype, in.front()) / w;
  std::vector<LocalBuffer> out(w, LocalBuffer(chunk * dtype_size(dtype)));
  for (std::size_t k = 0; k < w; ++k) {
    for (std::size_t i = 0; i < chunk; ++i) {
      std::uint64_t acc = 0;
      for (std::size_t j = 0; j < w; ++j) acc += static_cast<std::uint64_t>(element(dtype, in[j], k * chunk + i));
      set_element(dtype, out[k], i, acc);
    }
  }
  return out;
}

LocalBuffer ref_matmul(DType dtype, const LocalBuffer& a, const LocalBuffer& b, std::size_t m, std::size_t n,
                       std::size_t k) {
  LocalBuffer c(m * n * dtype_size(dtype));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::uint64_t acc = 0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += static_cast<std::uint64_t>(element(dtype, a, i * k + p)) *
               static_cast<std::uint64_t>(element(dtype, b, p * n + j));
      }
      set_element(dtype, c, i * n + j, acc);
    }
  }
  return c;
}

struct Comparison {
  bool ok = true;
  std::uint64_t mismatches = 0;
  nlohmann::ordered_json details = nlohmann::ordered_json::array();
};

void compare(DType dtype, int trial, int rank, const LocalBuffer& want, const LocalBuffer& got, Comparison& cmp) {
  if (want.size() != got.size()) {
    cmp.ok = false;
    ++cmp.mismatches;
    if (cmp.details.size() < kMaxReportedMismatches) {
      cmp.details.push_back({{"trial", trial}, {"rank", rank}, {"index", -1}, {"expected", want.size()},
                             {"actual", got.size()}});
    }
    return;
  }
  for (std::size_t i = 0; i < elems_of(dtype, want); ++i) {
    const std::int64_t e = element(dtype, want, i);
    const std::int64_t a = element(dtype, got, i);
    if (e == a) continue;
    cmp.ok = false;
    ++cmp.mismatches;
    if (cmp.details.size() < kMaxReportedMismatches) {
      cmp.details.push_back({{"trial", trial}, {"rank", rank}, {"index", i}, {"expected", e}, {"actual", a}});
    }
  }
}

WorldSpec geometry(const ScenarioConfig& c) {
  WorldSpec s;
  s.n_nodes = c.n_nodes;
  s.local_world_size = c.local_world_size;
  s.world_size = c.world_size();
  s.heap_bytes = std::size_t{4} << 20;
  return s;
}

std::vector<TileSchedule> make_schedules(const ScenarioConfig& c, const World& world, bool reduce_scatter) {
  const int w = world.world_size();
  std::vector<TileSchedule> out;
  for (int r = 0; r < w; ++r) {
    if (c.schedule == "switch") {
      out.push_back(ag_order_switch(r, w));
    } else if (c.schedule == "fullmesh") {
      out.push_back(ag_order_fullmesh(r, w, c.subchunks));
    } else if (c.schedule == "rs_inter") {
      out.push_back(rs_inter_order(r, world.n_nodes(), world.local_world_size()));
    } else {
      return reduce_scatter ? default_rs_schedules(world) : default_ag_schedules(world);
    }
  }
  return out;
}

std::vector<LocalBuffer> row_blocks(const LocalBuffer& a, int w) {
  std::vector<LocalBuffer> out;
  const std::size_t per = a.size() / static_cast<std::size_t>(w);
  for (int r = 0; r < w; ++r) {
    out.emplace_back(a.begin() + static_cast<long>(per * r), a.begin() + static_cast<long>(per * (r + 1)));
  }
  return out;
}

void corrupt(std::vector<LocalBuffer>& outputs) {
  for (auto it = outputs.rbegin(); it != outputs.rend(); ++it) {
    if (!it->empty()) {
      (*it)[0] ^= std::byte{0x01};
      return;
    }
  }
}

std::vector<double> end_per_rank(const Timeline& t, int world_size) {
  std::vector<double> out(static_cast<std::size_t>(world_size), 0.0);
  for (const auto& ev : t.events()) {
    if (ev.rank >= 0 && ev.rank < world_size) {
      out[static_cast<std::size_t>(ev.rank)] = std::max(out[static_cast<std::size_t>(ev.rank)], ev.end_us());
    }
  }
  return out;
}

nlohmann::ordered_json stage_json(const std::vector<StageReport>& stages) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& s : stages) {
    j.push_back({{"stage", s.stage}, {"busy_per_iter_us", s.busy_per_iter_us}, {"slack_us", s.slack_us},
                 {"tail_us", s.tail_us}});
  }
  return j;
}

// One verify trial. Returns the outputs and the references to compare.
void verify_trial(const ScenarioConfig& c, World& world, int trial, std::mt19937_64& rng, Comparison& cmp) {
  const int w = world.world_size();
  CollectiveOptions opts;
  opts.launch.sched.mode = c.scheduler;
  opts.launch.sched.seed = c.seed.value_or(0) + static_cast<std::uint64_t>(trial);
  std::vector<LocalBuffer> outputs;
  std::vector<LocalBuffer> want;
  LaunchReport report;

  if (c.kind == "allgather-push" || c.kind == "allgather-pull" || c.kind == "allgather-ll") {
    std::vector<LocalBuffer> in;
    for (int r = 0; r < w; ++r) in.push_back(random_elems(c.dtype, c.elems, rng));
    CollectiveRun run = c.kind == "allgather-ll" ? run_allgather_ll(world, in, opts)
                                                 : run_allgather_intra(world,
                                                                       c.kind == "allgather-push" ? AllGatherMode::kPush
                                                                                                  : AllGatherMode::kPull,
                                                                       in, opts);
    report = run.report;
    outputs = std::move(run.outputs);
    want.assign(static_cast<std::size_t>(w), ref_gather(in));
  } else if (c.kind == "reducescatter-intra" || c.kind == "reducescatter-inter") {
    const bool inter = c.kind == "reducescatter-inter";
    const std::size_t n = inter ? c.shape.m * c.shape.n : c.elems;
    std::vector<LocalBuffer> in;
    for (int r = 0; r < w; ++r) in.push_back(random_elems(c.dtype, n, rng));
    CollectiveRun run = inter ? run_reducescatter_inter(world, c.dtype, c.shape.m, c.shape.n, in, opts)
                              : run_reducescatter_intra(world, c.dtype, in, opts);
    report = run.report;
    outputs = std::move(run.outputs);
    want = ref_reduce_scatter(c.dtype, in);
  } else if (c.kind == "alltoall") {
    ExpertRouting routing;
    routing.experts_total = c.experts;
    routing.topk = c.topk;
    std::uniform_int_distribution<int> pick(0, c.experts - 1);
    std::vector<LocalBuffer> tokens;
    for (int r = 0; r < w; ++r) {
      std::vector<int> ids;
      for (int i = 0; i < c.tokens * c.topk; ++i) ids.push_back(pick(rng));
      routing.expert_ids.push_back(std::move(ids));
      tokens.push_back(random_elems(c.dtype, static_cast<std::size_t>(c.tokens) * c.elems, rng));
    }
    const DType dt = c.dtype;
    const ExpertFn scale = [dt](int expert, std::span<const std::byte> in, std::span<std::byte> out) {
      LocalBuffer src(in.begin(), in.end());
      LocalBuffer dst(out.size());
      for (std::size_t i = 0; i < elems_of(dt, src); ++i) {
        set_element(dt, dst, i, static_cast<std::uint64_t>(element(dt, src, i)) * static_cast<std::uint64_t>(expert + 1));
      }
      std::copy(dst.begin(), dst.end(), out.begin());
    };
    AllToAllRun run = run_alltoall(world, c.dtype, tokens, routing, c.tokens, scale, opts);
    report = run.report;
    outputs = std::move(run.combined);
    for (int r = 0; r < w; ++r) {
      LocalBuffer ref(tokens[static_cast<std::size_t>(r)].size());
      for (int t = 0; t < c.tokens; ++t) {
        for (std::size_t i = 0; i < c.elems; ++i) {
          std::uint64_t acc = 0;
          for (int k = 0; k < c.topk; ++k) {
            const int e = routing.expert_ids[static_cast<std::size_t>(r)][static_cast<std::size_t>(t * c.topk + k)];
            acc += static_cast<std::uint64_t>(element(c.dtype, tokens[static_cast<std::size_t>(r)],
                                                      static_cast<std::size_t>(t) * c.elems + i)) *
                   static_cast<std::uint64_t>(e + 1);
          }
          set_element(c.dtype, ref, static_cast<std::size_t>(t) * c.elems + i, acc);
        }
      }
      want.push_back(std::move(ref));
    }
  } else {
    const ProblemShape& s = c.shape;
    const bool ag = c.kind == "ag-gemm";
    PipelineOptions popts;
    popts.launch = opts.launch;
    popts.schedules = make_schedules(c, world, !ag);
    const LocalBuffer b = random_elems(s.dtype, s.k * s.n, rng);
    PipelineRun run;
    if (ag) {
      const LocalBuffer a = random_elems(s.dtype, s.m * s.k, rng);
      run = ag_gemm(world, row_blocks(a, w), b, s, popts);
      want.assign(static_cast<std::size_t>(w), ref_matmul(s.dtype, a, b, s.m, s.n, s.k));
    } else {
      std::vector<LocalBuffer> a;
      std::vector<LocalBuffer> products;
      for (int r = 0; r < w; ++r) {
        a.push_back(random_elems(s.dtype, s.m * s.k, rng));
        products.push_back(ref_matmul(s.dtype, a.back(), b, s.m, s.n, s.k));
      }
      run = gemm_rs(world, a, b, s, popts);
      want = ref_reduce_scatter(s.dtype, products);
    }
    report = run.report;
    outputs = std::move(run.outputs);
  }

  report.rethrow_if_failed();
  if (c.inject_corruption) corrupt(outputs);
  const DType dt = c.kind == "ag-gemm" || c.kind == "gemm-rs" ? c.shape.dtype : c.dtype;
  for (int r = 0; r < w; ++r) {
    compare(dt, trial, r, want[static_cast<std::size_t>(r)], outputs[static_cast<std::size_t>(r)], cmp);
  }
}

}  // namespace

std::string_view to_string(Command c) {
  switch (c) {
    case Command::kVerify: return "verify";
    case Command::kSimulate: return "simulate";
    case Command::kTune: return "tune";
  }
  return "?";
}

void ScenarioConfig::validate() const {
  if (n_nodes < 1 || local_world_size < 1) throw ConfigError("world geometry must be positive");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (timeout_ms < 1) throw ConfigError("timeout_ms must be positive");
  if (scheduler == SchedulerMode::kRandom && !seed.has_value()) {
    throw ConfigError("the random scheduler needs an explicit seed");
  }
  cost.topology.validate();
  cost.params.validate();
  switch (command) {
    case Command::kVerify:
      if (verify_kinds().count(kind) == 0) throw ConfigError("unknown verify kind '" + kind + "'");
      if (dtype == DType::kF32 || dtype == DType::kF64 || shape.dtype == DType::kF32 || shape.dtype == DType::kF64) {
        throw ConfigError("verify compares bit-exactly and needs an integer dtype");
      }
      break;
    case Command::kSimulate:
      if (simulate_kinds().count(kind) == 0) throw ConfigError("unknown simulate kind '" + kind + "'");
      break;
    case Command::kTune:
      if (kind != "ag-gemm") throw ConfigError("unknown tune kind '" + kind + "'");
      for (const auto& a : tune_space.axes()) {
        if (a.name != "tile" && a.name != "subchunks") throw ConfigError("unknown tune axis '" + a.name + "'");
      }
      if (tune_iterations < 1) throw ConfigError("tune iterations must be at least 1");
      break;
  }
  if (schedule != "default" && schedule != "switch" && schedule != "fullmesh" && schedule != "rs_inter") {
    throw ConfigError("unknown schedule '" + schedule + "'");
  }
  if (subchunks < 1) throw ConfigError("subchunks must be at least 1");
  if (tokens < 0 || topk < 1 || experts < 1) throw ConfigError("alltoall sizes must be positive");
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  only_keys(j, {"name", "command", "kind", "world", "topology", "problem", "partition", "gemm", "scheduler", "trials",
                "timeout_ms", "inject_corruption", "tune"},
            "scenario");
  ScenarioConfig c;
  read(j, "name", c.name);
  std::string command(to_string(c.command));
  read(j, "command", command);
  c.command = parse_command(command);
  read(j, "kind", c.kind);
  if (j.contains("world")) {
    const auto& w = j.at("world");
    only_keys(w, {"n_nodes", "local_world_size"}, "world");
    read(w, "n_nodes", c.n_nodes);
    read(w, "local_world_size", c.local_world_size);
  }
  if (j.contains("topology")) {
    const auto& t = j.at("topology");
    if (t.is_string()) {
      c.topology = t.get<std::string>();
      c.cost = builtin_cost_config(c.topology);
    } else {
      c.cost = CostConfig::from_json(t);
      c.topology = c.cost.topology.name;
    }
  }
  if (j.contains("problem")) {
    const auto& p = j.at("problem");
    only_keys(p, {"dtype", "elems", "m", "n", "k", "tile_m", "tile_n", "schedule", "subchunks", "tokens", "topk",
                  "experts", "bytes_per_rank", "chunk_gb"},
              "problem");
    std::string dtype(to_string(c.dtype));
    read(p, "dtype", dtype);
    c.dtype = parse_dtype(dtype);
    c.shape.dtype = c.dtype;
    read(p, "elems", c.elems);
    read(p, "m", c.shape.m);
    read(p, "n", c.shape.n);
    read(p, "k", c.shape.k);
    read(p, "tile_m", c.shape.tile_m);
    read(p, "tile_n", c.shape.tile_n);
    read(p, "schedule", c.schedule);
    read(p, "subchunks", c.subchunks);
    read(p, "tokens", c.tokens);
    read(p, "topk", c.topk);
    read(p, "experts", c.experts);
    read(p, "bytes_per_rank", c.bytes_per_rank);
    read(p, "chunk_gb", c.chunk_gb);
  }
  if (j.contains("partition")) {
    const auto& p = j.at("partition");
    only_keys(p, {"sm_total", "gemm_sms", "p2p_sms", "reduce_sms", "final_reduce_sms", "scatter_on_copy_engine"},
              "partition");
    read(p, "sm_total", c.partition.sm_total);
    read(p, "gemm_sms", c.partition.gemm_sms);
    read(p, "p2p_sms", c.partition.p2p_sms);
    read(p, "reduce_sms", c.partition.reduce_sms);
    read(p, "final_reduce_sms", c.partition.final_reduce_sms);
    read(p, "scatter_on_copy_engine", c.partition.scatter_on_copy_engine);
  }
  if (j.contains("gemm")) {
    const auto& g = j.at("gemm");
    only_keys(g, {"sms", "tflops", "wave_overhead_us"}, "gemm");
    read(g, "sms", c.gemm.sms);
    read(g, "tflops", c.gemm.tflops);
    read(g, "wave_overhead_us", c.gemm.wave_overhead_us);
  }
  if (j.contains("scheduler")) {
    const auto& s = j.at("scheduler");
    only_keys(s, {"mode", "seed"}, "scheduler");
    std::string mode(to_string(c.scheduler));
    read(s, "mode", mode);
    c.scheduler = parse_scheduler_mode(mode);
    if (s.contains("seed")) {
      std::uint64_t seed = 0;
      read(s, "seed", seed);
      c.seed = seed;
    }
  }
  read(j, "trials", c.trials);
  read(j, "timeout_ms", c.timeout_ms);
  read(j, "inject_corruption", c.inject_corruption);
  if (j.contains("tune")) {
    const auto& t = j.at("tune");
    only_keys(t, {"axes", "iterations"}, "tune");
    if (t.contains("axes")) c.tune_space = ConfigSpace::from_json(t.at("axes"));
    read(t, "iterations", c.tune_iterations);
  }
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json ScenarioConfig::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["command"] = std::string(to_string(command));
  j["kind"] = kind;
  j["world"] = {{"n_nodes", n_nodes}, {"local_world_size", local_world_size}};
  j["topology"] = cost.to_json();
  j["problem"] = {{"dtype", std::string(to_string(dtype))},
                  {"elems", elems},
                  {"m", shape.m},
                  {"n", shape.n},
                  {"k", shape.k},
                  {"tile_m", shape.tile_m},
                  {"tile_n", shape.tile_n},
                  {"schedule", schedule},
                  {"subchunks", subchunks},
                  {"tokens", tokens},
                  {"topk", topk},
                  {"experts", experts},
                  {"bytes_per_rank", bytes_per_rank},
                  {"chunk_gb", chunk_gb}};
  j["partition"] = {{"sm_total", partition.sm_total},
                    {"gemm_sms", partition.gemm_sms},
                    {"p2p_sms", partition.p2p_sms},
                    {"reduce_sms", partition.reduce_sms},
                    {"final_reduce_sms", partition.final_reduce_sms},
                    {"scatter_on_copy_engine", partition.scatter_on_copy_engine}};
  j["gemm"] = {{"sms", gemm.sms}, {"tflops", gemm.tflops}, {"wave_overhead_us", gemm.wave_overhead_us}};
  j["scheduler"] = {{"mode", std::string(to_string(scheduler))}};
  if (seed.has_value()) j["scheduler"]["seed"] = *seed;
  j["trials"] = trials;
  j["timeout_ms"] = timeout_ms;
  j["inject_corruption"] = inject_corruption;
  j["tune"] = {{"axes", tune_space.to_json()}, {"iterations", tune_iterations}};
  return j;
}

CostConfig builtin_cost_config(const std::string& name) {
  CostConfig c;
  if (name == "h800") return c;
  if (name == "mi308x") {
    c.topology.name = "mi308x";
    c.topology.intra_kind = IntraKind::kFullMesh;
    c.topology.intra_link_bw_gbps = 50.0;
    c.topology.aggregate_bw_gbps = 350.0;
    c.params.nvlink_bw_gbps = 50.0;
    return c;
  }
  throw ConfigError("unknown topology '" + name + "'");
}

std::vector<ScenarioConfig> builtin_scenarios() {
  std::vector<ScenarioConfig> out;
  const auto add = [&](std::string name, Command cmd, std::string kind, int nodes, int local) -> ScenarioConfig& {
    ScenarioConfig c;
    c.name = std::move(name);
    c.command = cmd;
    c.kind = std::move(kind);
    c.n_nodes = nodes;
    c.local_world_size = local;
    c.shape.m = c.shape.n = c.shape.k = 32;
    c.shape.tile_m = c.shape.tile_n = 4;
    out.push_back(c);
    return out.back();
  };
  add("allgather-push", Command::kVerify, "allgather-push", 1, 8);
  add("allgather-pull", Command::kVerify, "allgather-pull", 1, 8);
  add("reducescatter-intra", Command::kVerify, "reducescatter-intra", 1, 8);
  add("allgather-ll", Command::kVerify, "allgather-ll", 2, 4);
  add("reducescatter-inter", Command::kVerify, "reducescatter-inter", 2, 4);
  add("alltoall", Command::kVerify, "alltoall", 1, 4);
  add("ag-gemm", Command::kVerify, "ag-gemm", 1, 4);
  add("gemm-rs", Command::kVerify, "gemm-rs", 2, 2);
  add("ag-ll", Command::kSimulate, "ag-ll", 4, 8);
  add("ag-baseline", Command::kSimulate, "ag-baseline", 4, 8);
  add("rs-threshold", Command::kSimulate, "rs-threshold", 2, 8);
  add("partition", Command::kSimulate, "partition", 4, 8);
  {
    auto& c = add("ag-schedule-fullmesh", Command::kSimulate, "ag-schedule", 1, 8);
    c.topology = "mi308x";
    c.cost = builtin_cost_config("mi308x");
    c.schedule = "fullmesh";
    c.subchunks = 4;
    c.shape.m = 1024;
    c.shape.k = 4096;
  }
  {
    auto& c = add("ag-gemm-tile", Command::kTune, "ag-gemm", 1, 4);
    c.shape.m = c.shape.n = c.shape.k = 256;
    c.tune_space.axis("tile", {32, 64});
  }
  return out;
}

ScenarioConfig find_scenario(const std::string& name) {
  for (auto& s : builtin_scenarios()) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown scenario '" + name + "'");
}

VerifyOutcome run_verify(const ScenarioConfig& config) {
  config.validate();
  if (config.command != Command::kVerify) throw ConfigError("scenario '" + config.name + "' is not a verify scenario");
  World world(geometry(config));
  world.set_timeout(std::chrono::milliseconds(config.timeout_ms));
  std::mt19937_64 rng(config.seed.value_or(0));
  Comparison cmp;
  for (int t = 0; t < config.trials; ++t) verify_trial(config, world, t, rng, cmp);
  VerifyOutcome out;
  out.ok = cmp.ok;
  out.report["scenario"] = config.name;
  out.report["command"] = "verify";
  out.report["kind"] = config.kind;
  out.report["world"] = {{"n_nodes", config.n_nodes}, {"local_world_size", config.local_world_size}};
  out.report["scheduler"] = std::string(to_string(config.scheduler));
  out.report["seed"] = config.seed.value_or(0);
  out.report["trials"] = config.trials;
  out.report["ok"] = cmp.ok;
  out.report["mismatch_count"] = cmp.mismatches;
  out.report["mismatches"] = cmp.details;
  return out;
}

SimulateOutcome run_simulate(const ScenarioConfig& config) {
  config.validate();
  if (config.command != Command::kSimulate) {
    throw ConfigError("scenario '" + config.name + "' is not a simulate scenario");
  }
  const CostParams& p = config.cost.params;
  SimulateOutcome out;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
  if (config.kind == "ag-ll" || config.kind == "ag-baseline") {
    const bool ll = config.kind == "ag-ll";
    const Timeline other = ll ? simulate_ag_baseline(p, config.n_nodes, config.local_world_size, config.bytes_per_rank)
                              : simulate_ag_ll(p, config.n_nodes, config.local_world_size, config.bytes_per_rank);
    out.timeline = ll ? simulate_ag_ll(p, config.n_nodes, config.local_world_size, config.bytes_per_rank)
                      : simulate_ag_baseline(p, config.n_nodes, config.local_world_size, config.bytes_per_rank);
    extra[ll ? "baseline_makespan_us" : "ll_makespan_us"] = other.makespan();
  } else if (config.kind == "rs-threshold") {
    const RsOverlap r = rs_overlap(config.chunk_gb, p, config.local_world_size);
    PartitionWorkload w = balanced_workload(p, config.n_nodes, config.local_world_size, config.chunk_gb);
    w.reduce_bw_gbps = r.threshold_gbps;
    const PartitionReport rep = simulate_partition(config.partition, w, p);
    out.timeline = rep.timeline;
    extra["volume_gb"] = r.volume_gb;
    extra["scatter_us"] = r.scatter_us;
    extra["p2p_us"] = r.p2p_us;
    extra["reduce_window_us"] = r.reduce_window_us;
    extra["reduce_volume_gb"] = r.reduce_volume_gb;
    extra["threshold_gbps"] = r.threshold_gbps;
    extra["min_reduce_sms"] = min_reduce_sms(r.threshold_gbps, p);
    extra["reduce_tail_us"] = rep.stage("reduce").tail_us;
  } else if (config.kind == "partition") {
    const PartitionReport rep = simulate_partition(
        config.partition, balanced_workload(p, config.n_nodes, config.local_world_size, config.chunk_gb), p);
    out.timeline = rep.timeline;
    extra["stages"] = stage_json(rep.stages);
    extra["peak_sms"] = rep.peak_sms;
    extra["gemm_end_us"] = rep.gemm_end_us;
    extra["max_tail_us"] = rep.max_tail_us();
  } else {
    World world(geometry(config));
    const auto schedules = make_schedules(config, world, false);
    if (config.kind == "ag-schedule") {
      config.shape.validate(config.world_size());
      const std::size_t chunk = config.shape.rows_per_rank(config.world_size()) * config.shape.k * config.shape.elem_bytes();
      out.timeline = simulate_allgather_schedule(config.cost.topology, schedules, chunk);
      extra["chunk_bytes"] = chunk;
    } else {
      out.timeline = simulate_ag_gemm(p, config.shape, schedules, config.gemm);
      extra["per_rank_us"] = end_per_rank(out.timeline, config.world_size());
    }
  }
  auto& s = out.summary;
  s["scenario"] = config.name;
  s["command"] = "simulate";
  s["kind"] = config.kind;
  s["topology"] = config.topology;
  s["world"] = {{"n_nodes", config.n_nodes}, {"local_world_size", config.local_world_size}};
  s["makespan_us"] = out.timeline.makespan();
  s["events"] = out.timeline.size();
  nlohmann::ordered_json path = nlohmann::ordered_json::array();
  for (int i : out.timeline.critical_path()) path.push_back(out.timeline.at(i).name);
  s["critical_path"] = path;
  for (auto& [k, v] : extra.items()) s[k] = v;
  return out;
}

TuneReport run_tune(const ScenarioConfig& config) {
  config.validate();
  if (config.command != Command::kTune) throw ConfigError("scenario '" + config.name + "' is not a tune scenario");
  World world(geometry(config));
  world.set_timeout(std::chrono::milliseconds(config.timeout_ms));
  const int w = world.world_size();
  std::mt19937_64 rng(config.seed.value_or(0));
  const LocalBuffer a = random_elems(config.shape.dtype, config.shape.m * config.shape.k, rng);
  const LocalBuffer b = random_elems(config.shape.dtype, config.shape.k * config.shape.n, rng);
  const LocalBuffer want = ref_matmul(config.shape.dtype, a, b, config.shape.m, config.shape.n, config.shape.k);
  const std::vector<LocalBuffer> shards = row_blocks(a, w);
  SchedulerOptions sched;
  sched.mode = config.scheduler;
  sched.seed = config.seed.value_or(0);

  const TuneTarget target = [&](World& wd, const TuneConfig& tc) {
    ScenarioConfig c = config;
    for (const auto& [axis, value] : tc.values) {
      if (axis == "tile") {
        c.shape.tile_m = c.shape.tile_n = static_cast<std::size_t>(value);
      } else {
        c.schedule = "fullmesh";
        c.subchunks = static_cast<int>(value);
      }
    }
    PipelineOptions opts;
    opts.launch.sched = sched;
    opts.schedules = make_schedules(c, wd, false);
    PipelineRun run = ag_gemm(wd, shards, b, c.shape, opts);
    run.report.rethrow_if_failed();
    for (const auto& out : run.outputs) {
      if (out != want) throw SyncFault("ag_gemm output differs from the dense product");
    }
    return end_per_rank(simulate_ag_gemm(c.cost.params, c.shape, opts.schedules, c.gemm), wd.world_size());
  };
  TuneOptions opts;
  opts.iterations = config.tune_iterations;
  opts.launch.sched = sched;
  return tune(world, target, config.tune_space, opts);
}

}  // namespace onesided
