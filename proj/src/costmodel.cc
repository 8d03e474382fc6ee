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

#include "onesided/costmodel.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>
#include <utility>

#include "onesided/errors.h"

namespace onesided {
namespace {

constexpr double kBytesPerUsPerGbps = 1e3;
constexpr double kUsPerSecond = 1e6;

double bytes_at(double bytes, double gbps) { return bytes / (gbps * kBytesPerUsPerGbps); }
double gb_at(double gb, double gbps) { return gb / gbps * kUsPerSecond; }

void require_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(field) + " must be positive");
}

void require_non_negative(double v, const char* field) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(field) + " must be non-negative");
}

// Adds an event that starts when all of `deps` have finished, no earlier than `not_before`.
int add_after(Timeline& t, std::string name, int rank, std::string resource, double dur, std::vector<int> deps,
              double not_before = 0.0) {
  double start = not_before;
  for (int d : deps) start = std::max(start, t.at(d).end_us());
  return t.add(TimelineEvent{std::move(name), rank, std::move(resource), start, dur, std::move(deps)});
}

void check_nodes(int n_nodes, int local_world_size) {
  if (n_nodes < 1 || local_world_size < 1) throw ArgumentError("node geometry must be positive");
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) throw ConfigError(std::string("unknown field '") + key + "' in " + where);
  }
}

bool is_signal_update(Primitive op) {
  switch (op) {
    case Primitive::kPutmemSignal:
    case Primitive::kPutmemSignalNbi:
    case Primitive::kSignalOp:
    case Primitive::kAtomicCas:
    case Primitive::kAtomicAdd:
    case Primitive::kRedRelease:
      return true;
    default:
      return false;
  }
}

bool is_barrier(Primitive op) {
  return op == Primitive::kBarrierAll || op == Primitive::kSyncAll || op == Primitive::kBarrierAllIntraNode;
}

}  // namespace

std::string_view to_string(IntraKind kind) {
  switch (kind) {
    case IntraKind::kSwitch: return "switch";
    case IntraKind::kFullMesh: return "fullmesh";
    case IntraKind::kPcie: return "pcie";
  }
  return "?";
}

IntraKind parse_intra_kind(std::string_view name) {
  if (name == "switch") return IntraKind::kSwitch;
  if (name == "fullmesh") return IntraKind::kFullMesh;
  if (name == "pcie") return IntraKind::kPcie;
  throw ConfigError("unknown intra-node topology '" + std::string(name) + "'");
}

void Topology::validate() const {
  if (local_world_size < 1) throw ConfigError("local_world_size must be at least 1");
  require_positive(intra_link_bw_gbps, "intra_link_bw_gbps");
  require_positive(aggregate_bw_gbps, "aggregate_bw_gbps");
  require_positive(inter_nic_bw_gbps, "inter_nic_bw_gbps");
  require_non_negative(intra_base_latency_us, "intra_base_latency_us");
  require_non_negative(inter_base_latency_us, "inter_base_latency_us");
  if (copy_engines < 0) throw ConfigError("copy_engines must be non-negative");
  if (intra_kind == IntraKind::kFullMesh) {
    const double want = (local_world_size - 1) * intra_link_bw_gbps;
    if (std::abs(aggregate_bw_gbps - want) > 1e-9 * std::max(1.0, want)) {
      throw ConfigError("full-mesh aggregate_bw_gbps must equal (local_world_size - 1) * intra_link_bw_gbps");
    }
  }
}

void CostParams::validate() const {
  require_non_negative(nvlink_small_msg_us, "nvlink_small_msg_us");
  require_non_negative(skew_worst_us, "skew_worst_us");
  require_non_negative(multimem_cost_us, "multimem_cost_us");
  require_non_negative(signal_pair_cost_us, "signal_pair_cost_us");
  require_non_negative(inter_base_latency_us, "inter_base_latency_us");
  require_non_negative(ll_pack_us, "ll_pack_us");
  require_non_negative(ll_unpack_us, "ll_unpack_us");
  require_positive(nvlink_bw_gbps, "nvlink_bw_gbps");
  require_positive(nic_bw_gbps, "nic_bw_gbps");
  require_positive(reduce_bw_per_sm_gbps, "reduce_bw_per_sm_gbps");
}

CostConfig CostConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"name", "topology", "cost_params"}, "config");
  CostConfig c;
  read_field(j, "name", c.topology.name);
  if (j.contains("topology")) {
    const auto& t = j.at("topology");
    reject_unknown(t,
                   {"intra_kind", "local_world_size", "intra_link_bw_gbps", "intra_base_latency_us",
                    "aggregate_bw_gbps", "inter_nic_bw_gbps", "inter_base_latency_us", "copy_engines"},
                   "topology");
    std::string kind(to_string(c.topology.intra_kind));
    read_field(t, "intra_kind", kind);
    c.topology.intra_kind = parse_intra_kind(kind);
    read_field(t, "local_world_size", c.topology.local_world_size);
    read_field(t, "intra_link_bw_gbps", c.topology.intra_link_bw_gbps);
    read_field(t, "intra_base_latency_us", c.topology.intra_base_latency_us);
    read_field(t, "aggregate_bw_gbps", c.topology.aggregate_bw_gbps);
    read_field(t, "inter_nic_bw_gbps", c.topology.inter_nic_bw_gbps);
    read_field(t, "inter_base_latency_us", c.topology.inter_base_latency_us);
    read_field(t, "copy_engines", c.topology.copy_engines);
  }
  if (j.contains("cost_params")) {
    const auto& p = j.at("cost_params");
    reject_unknown(p,
                   {"nvlink_small_msg_us", "skew_worst_us", "multimem_cost_us", "nvlink_bw_gbps", "nic_bw_gbps",
                    "signal_pair_cost_us", "inter_base_latency_us", "ll_pack_us", "ll_unpack_us",
                    "reduce_bw_per_sm_gbps"},
                   "cost_params");
    read_field(p, "nvlink_small_msg_us", c.params.nvlink_small_msg_us);
    read_field(p, "skew_worst_us", c.params.skew_worst_us);
    read_field(p, "multimem_cost_us", c.params.multimem_cost_us);
    read_field(p, "nvlink_bw_gbps", c.params.nvlink_bw_gbps);
    read_field(p, "nic_bw_gbps", c.params.nic_bw_gbps);
    read_field(p, "signal_pair_cost_us", c.params.signal_pair_cost_us);
    read_field(p, "inter_base_latency_us", c.params.inter_base_latency_us);
    read_field(p, "ll_pack_us", c.params.ll_pack_us);
    read_field(p, "ll_unpack_us", c.params.ll_unpack_us);
    read_field(p, "reduce_bw_per_sm_gbps", c.params.reduce_bw_per_sm_gbps);
  }
  c.topology.validate();
  c.params.validate();
  return c;
}

CostConfig CostConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json CostConfig::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = topology.name;
  j["topology"] = {
      {"intra_kind", std::string(to_string(topology.intra_kind))},
      {"local_world_size", topology.local_world_size},
      {"intra_link_bw_gbps", topology.intra_link_bw_gbps},
      {"intra_base_latency_us", topology.intra_base_latency_us},
      {"aggregate_bw_gbps", topology.aggregate_bw_gbps},
      {"inter_nic_bw_gbps", topology.inter_nic_bw_gbps},
      {"inter_base_latency_us", topology.inter_base_latency_us},
      {"copy_engines", topology.copy_engines},
  };
  j["cost_params"] = {
      {"nvlink_small_msg_us", params.nvlink_small_msg_us},
      {"skew_worst_us", params.skew_worst_us},
      {"multimem_cost_us", params.multimem_cost_us},
      {"nvlink_bw_gbps", params.nvlink_bw_gbps},
      {"nic_bw_gbps", params.nic_bw_gbps},
      {"signal_pair_cost_us", params.signal_pair_cost_us},
      {"inter_base_latency_us", params.inter_base_latency_us},
      {"ll_pack_us", params.ll_pack_us},
      {"ll_unpack_us", params.ll_unpack_us},
      {"reduce_bw_per_sm_gbps", params.reduce_bw_per_sm_gbps},
  };
  return j;
}

Link parse_link(std::string_view name) {
  if (name == "nvlink") return Link::kNvlink;
  if (name == "nic") return Link::kNic;
  throw ArgumentError("unknown link '" + std::string(name) + "'");
}

double transfer_time(std::size_t bytes, Link link, const CostParams& params) {
  const auto b = static_cast<double>(bytes);
  if (link == Link::kNvlink) return params.nvlink_small_msg_us + bytes_at(b, params.nvlink_bw_gbps);
  return params.inter_base_latency_us + bytes_at(b, params.nic_bw_gbps);
}

double transfer_time(std::size_t bytes, std::string_view link, const CostParams& params) {
  return transfer_time(bytes, parse_link(link), params);
}

Timeline simulate_ag_baseline(const CostParams& params, int n_nodes, int local_world_size, std::size_t bytes_per_rank) {
  check_nodes(n_nodes, local_world_size);
  const double c = params.signal_pair_cost_us;
  Timeline t;
  if (local_world_size > 1) {
    const int put = t.add({"own_put", 0, "nvlink", 0.0, transfer_time(bytes_per_rank, Link::kNvlink, params), {}});
    add_after(t, "own_signal", 0, "intra_signal", c, {put});
  }
  std::vector<int> arrivals;
  int prev = -1;
  for (int i = 1; i < n_nodes; ++i) {
    std::vector<int> deps;
    if (prev >= 0) deps.push_back(prev);
    prev = add_after(t, "inter_send" + std::to_string(i), 0, "sender", c, deps);
    arrivals.push_back(add_after(t, "inter_flight" + std::to_string(i), 0, "qp" + std::to_string(i),
                                 transfer_time(bytes_per_rank, Link::kNic, params), {prev}));
  }
  if (local_world_size > 1 && n_nodes > 1) {
    std::vector<int> deps = arrivals;
    deps.push_back(0);
    const double fwd = params.skew_worst_us +
                       (n_nodes - 1) * bytes_at(static_cast<double>(bytes_per_rank), params.nvlink_bw_gbps);
    int last = add_after(t, "intra_forward", 0, "nvlink", fwd, deps);
    for (int i = 1; i < n_nodes; ++i) {
      std::vector<int> d{last};
      if (i == 1) d.push_back(1);
      last = add_after(t, "intra_signal" + std::to_string(i), 0, "intra_signal", c, d);
    }
  }
  return t;
}

Timeline simulate_ag_ll(const CostParams& params, int n_nodes, int local_world_size, std::size_t bytes_per_rank) {
  check_nodes(n_nodes, local_world_size);
  const double ll_bytes = 2.0 * static_cast<double>(bytes_per_rank);
  const double bcast = params.multimem_cost_us + bytes_at(ll_bytes, params.nvlink_bw_gbps);
  Timeline t;
  const int pack = t.add({"ll_pack", 0, "block0", 0.0, params.ll_pack_us, {}});
  const int own = add_after(t, "multimem_st0", 0, "block0", bcast, {pack});
  add_after(t, "ll_unpack0", 0, "unpack0", params.ll_unpack_us, {own});
  for (int i = 1; i < n_nodes; ++i) {
    const std::string id = std::to_string(i);
    const int put = add_after(t, "ll_put" + id, 0, "qp" + id,
                              params.inter_base_latency_us + bytes_at(ll_bytes, params.nic_bw_gbps), {pack});
    const int mm = add_after(t, "multimem_st" + id, 0, "block" + id, bcast, {put});
    add_after(t, "ll_unpack" + id, 0, "unpack" + id, params.ll_unpack_us, {mm});
  }
  return t;
}

RsOverlap rs_overlap(double volume_gb, const CostParams& params, int local_world_size) {
  if (local_world_size < 2) throw ArgumentError("overlap threshold needs local_world_size >= 2");
  if (!(volume_gb > 0.0)) throw ArgumentError("communication volume must be positive");
  params.validate();
  const int lw = local_world_size;
  if ((lw - 1) * params.nic_bw_gbps <= params.nvlink_bw_gbps) {
    throw OverlapImpossible("scatter time does not exceed P2P time; the reduction cannot be hidden");
  }
  RsOverlap r;
  r.volume_gb = volume_gb;
  r.scatter_us = gb_at((lw - 1) * volume_gb, params.nvlink_bw_gbps);
  r.p2p_us = gb_at(volume_gb, params.nic_bw_gbps);
  r.reduce_window_us = r.scatter_us - r.p2p_us;
  r.reduce_volume_gb = (lw + 1) * volume_gb;
  r.threshold_gbps = r.reduce_volume_gb / (r.reduce_window_us / kUsPerSecond);
  return r;
}

double rs_overlap_threshold(double volume_gb, const CostParams& params, int local_world_size) {
  return rs_overlap(volume_gb, params, local_world_size).threshold_gbps;
}

double rs_overlap_threshold(const ProblemShape& shape, int world_size, const CostParams& params,
                            int local_world_size) {
  shape.validate(world_size);
  const double gb = static_cast<double>(shape.rows_per_rank(world_size) * shape.n * shape.elem_bytes()) / 1e9;
  return rs_overlap_threshold(gb, params, local_world_size);
}

int min_reduce_sms(double threshold_gbps, const CostParams& params) {
  params.validate();
  return static_cast<int>(std::ceil(threshold_gbps / params.reduce_bw_per_sm_gbps - 1e-12));
}

void ResourcePartition::validate() const {
  if (sm_total < 1) throw ConfigError("sm_total must be at least 1");
  for (auto [v, name] : {std::pair{gemm_sms, "gemm_sms"}, std::pair{p2p_sms, "p2p_sms"},
                         std::pair{reduce_sms, "reduce_sms"}, std::pair{final_reduce_sms, "final_reduce_sms"}}) {
    if (v < 1 || v > sm_total) throw ConfigError(std::string(name) + " must lie in [1, sm_total]");
  }
}

PartitionWorkload balanced_workload(const CostParams& params, int n_nodes, int local_world_size, double chunk_gb) {
  PartitionWorkload w;
  w.n_nodes = n_nodes;
  w.local_world_size = local_world_size;
  w.chunk_gb = chunk_gb;
  w.gemm_us_per_iter = gb_at((local_world_size - 1) * chunk_gb, params.nvlink_bw_gbps);
  return w;
}

const StageReport& PartitionReport::stage(std::string_view name) const {
  for (const auto& s : stages) {
    if (s.stage == name) return s;
  }
  throw ArgumentError("no stage named '" + std::string(name) + "'");
}

double PartitionReport::max_tail_us(bool include_gemm) const {
  double m = 0.0;
  for (const auto& s : stages) {
    if (include_gemm || s.stage != "gemm") m = std::max(m, s.tail_us);
  }
  return m;
}

PartitionReport simulate_partition(const ResourcePartition& partition, const PartitionWorkload& workload,
                                   const CostParams& params) {
  partition.validate();
  params.validate();
  check_nodes(workload.n_nodes, workload.local_world_size);
  if (!(workload.chunk_gb > 0.0)) throw ArgumentError("chunk size must be positive");
  if (!partition.scatter_on_copy_engine && (workload.scatter_sms < 1 || workload.scatter_sms > partition.sm_total)) {
    throw ConfigError("scatter_sms must lie in [1, sm_total]");
  }
  const int lw = workload.local_world_size;
  const double b = workload.chunk_gb;
  const double reduce_bw =
      workload.reduce_bw_gbps > 0.0 ? workload.reduce_bw_gbps : partition.reduce_sms * params.reduce_bw_per_sm_gbps;
  const double scatter = gb_at((lw - 1) * b, params.nvlink_bw_gbps);
  const double gemm = workload.gemm_us_per_iter > 0.0 ? workload.gemm_us_per_iter : scatter;
  const double reduce = gb_at((lw + 1) * b, reduce_bw);
  const double p2p = gb_at(b, params.nic_bw_gbps);
  const double final_reduce =
      gb_at((workload.n_nodes + 1) * b, partition.final_reduce_sms * params.reduce_bw_per_sm_gbps);

  PartitionReport rep;
  Timeline& t = rep.timeline;
  std::vector<int> sms;
  std::map<std::string, double> tails{{"gemm", 0.0}, {"scatter", 0.0}, {"reduce", 0.0}, {"p2p", 0.0}, {"final", 0.0}};
  const auto stage = [&](const std::string& kind, int it, const std::string& resource, double dur, int sm,
                         std::vector<int> data_deps, int stream_prev) {
    double ready = 0.0;
    for (int d : data_deps) ready = std::max(ready, t.at(d).end_us());
    if (data_deps.empty() && stream_prev >= 0) ready = t.at(stream_prev).end_us();
    std::vector<int> deps = data_deps;
    double start = ready;
    if (stream_prev >= 0) {
      deps.push_back(stream_prev);
      start = std::max(start, t.at(stream_prev).end_us());
    }
    tails[kind] = std::max(tails[kind], start - ready);
    const std::string name = it < 0 ? kind : kind + std::to_string(it);
    const int id = t.add(TimelineEvent{name, 0, resource, start, dur, std::move(deps)});
    sms.push_back(sm);
    return id;
  };

  int prev_gemm = -1;
  int prev_scatter = -1;
  int prev_s1 = -1;
  std::vector<int> all_s1;
  for (int it = 0; it < workload.n_nodes; ++it) {
    prev_gemm = stage("gemm", it, "gemm", gemm, partition.gemm_sms, {}, prev_gemm);
    const bool ce = partition.scatter_on_copy_engine;
    prev_scatter = stage("scatter", it, ce ? "copy_engine" : "scatter", scatter, ce ? 0 : workload.scatter_sms,
                         {prev_gemm}, prev_scatter);
    prev_s1 = stage("reduce", it, "stream1", reduce, partition.reduce_sms, {prev_scatter}, prev_s1);
    if (it + 1 < workload.n_nodes) prev_s1 = stage("p2p", it, "stream1", p2p, partition.p2p_sms, {prev_s1}, -1);
  }
  stage("final", -1, "final", final_reduce, partition.final_reduce_sms, {prev_gemm, prev_s1}, -1);

  std::vector<std::pair<double, int>> edges;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& e = t.at(static_cast<int>(i));
    if (e.dur_us <= 0.0 || sms[i] == 0) continue;
    edges.emplace_back(e.start_us, sms[i]);
    edges.emplace_back(e.end_us(), -sms[i]);
  }
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    return a.first < b.first - 1e-9 || (std::abs(a.first - b.first) <= 1e-9 && a.second < b.second);
  });
  int live = 0;
  for (const auto& [time, delta] : edges) {
    live += delta;
    rep.peak_sms = std::max(rep.peak_sms, live);
  }
  if (rep.peak_sms > partition.sm_total) {
    throw ConfigError("partition oversubscribes SMs: " + std::to_string(rep.peak_sms) + " > " +
                      std::to_string(partition.sm_total));
  }

  rep.gemm_end_us = t.end_of("gemm");
  rep.makespan_us = t.makespan();
  const double stream1 = reduce + (workload.n_nodes > 1 ? p2p : 0.0);
  rep.stages = {
      {"gemm", gemm, 0.0, tails["gemm"]},
      {"scatter", scatter, gemm - scatter, tails["scatter"]},
      {"reduce", reduce, gemm - stream1, tails["reduce"]},
      {"p2p", p2p, gemm - stream1, tails["p2p"]},
      {"final", final_reduce, 0.0, tails["final"]},
  };
  return rep;
}

PartitionReport simulate_partition(const ResourcePartition& partition, std::span<const StageSpec> stages) {
  if (stages.empty()) throw ArgumentError("no stages to simulate");
  if (partition.sm_total < 1) throw ConfigError("sm_total must be at least 1");
  PartitionReport rep;
  int total = 0;
  double dominant = 0.0;
  bool has_gemm = false;
  for (const auto& s : stages) {
    if (s.sms < 0 || s.duration_us < 0.0) throw ConfigError("stage '" + s.name + "' has a negative size");
    total += s.sms;
    rep.timeline.add(TimelineEvent{s.name, 0, s.name, 0.0, s.duration_us, {}});
    if (s.name == "gemm") {
      has_gemm = true;
      dominant = s.duration_us;
    }
  }
  if (!has_gemm) {
    for (const auto& s : stages) dominant = std::max(dominant, s.duration_us);
  }
  if (total > partition.sm_total) {
    throw ConfigError("partition oversubscribes SMs: " + std::to_string(total) + " > " +
                      std::to_string(partition.sm_total));
  }
  rep.peak_sms = total;
  rep.gemm_end_us = dominant;
  rep.makespan_us = rep.timeline.makespan();
  for (const auto& s : stages) {
    rep.stages.push_back({s.name, s.duration_us, dominant - s.duration_us, std::max(0.0, s.duration_us - dominant)});
  }
  return rep;
}

Timeline simulate_allgather_schedule(const Topology& topology, std::span<const TileSchedule> schedules,
                                     std::size_t chunk_bytes) {
  topology.validate();
  const int w = static_cast<int>(schedules.size());
  if (w < 1) throw ArgumentError("no schedules to simulate");
  std::size_t steps = 0;
  for (const auto& s : schedules) steps = std::max(steps, s.steps.size());
  Timeline t;
  std::vector<double> clock(static_cast<std::size_t>(w), 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    // (puller, source, bytes) for every remote transfer of this step.
    std::vector<std::tuple<int, int, std::size_t, std::string>> xfers;
    std::vector<int> in(static_cast<std::size_t>(w), 0);
    std::vector<int> out(static_cast<std::size_t>(w), 0);
    for (int r = 0; r < w; ++r) {
      const TileSchedule& s = schedules[static_cast<std::size_t>(r)];
      if (k >= s.steps.size()) continue;
      for (const auto& [chunk, sub] : s.visits(k)) {
        if (chunk == r) continue;
        if (chunk < 0 || chunk >= w) throw ArgumentError("schedule names a chunk outside the world");
        const std::size_t bytes = s.steps[k].subchunk.has_value() ? chunk_bytes / static_cast<std::size_t>(s.subchunks)
                                                                  : chunk_bytes;
        xfers.emplace_back(r, chunk, bytes, "step" + std::to_string(k) + ":c" + std::to_string(chunk) +
                                                (s.steps[k].subchunk ? "." + std::to_string(sub) : std::string()));
        ++in[static_cast<std::size_t>(r)];
        ++out[static_cast<std::size_t>(chunk)];
      }
    }
    std::vector<double> next = clock;
    for (const auto& [r, src, bytes, name] : xfers) {
      const double bw = std::min({topology.intra_link_bw_gbps, topology.aggregate_bw_gbps / in[static_cast<std::size_t>(r)],
                                  topology.aggregate_bw_gbps / out[static_cast<std::size_t>(src)]});
      const double start = clock[static_cast<std::size_t>(r)];
      const double dur = topology.intra_base_latency_us + bytes_at(static_cast<double>(bytes), bw);
      t.add(TimelineEvent{name, r, "from" + std::to_string(src), start, dur, {}});
      next[static_cast<std::size_t>(r)] = std::max(next[static_cast<std::size_t>(r)], start + dur);
    }
    clock = std::move(next);
  }
  return t;
}

double gemm_wave_us(const ProblemShape& shape, const GemmCost& gemm) {
  if (gemm.sms < 1 || !(gemm.tflops > 0.0)) throw ConfigError("GEMM cost needs positive SMs and throughput");
  const double flops = 2.0 * static_cast<double>(shape.tile_m * shape.tile_n * shape.k);
  return gemm.wave_overhead_us + flops / (gemm.tflops / gemm.sms * 1e6);
}

Timeline simulate_ag_gemm(const CostParams& params, const ProblemShape& shape, std::span<const TileSchedule> schedules,
                          const GemmCost& gemm) {
  const int w = static_cast<int>(schedules.size());
  validate_schedules(schedules, w);
  params.validate();
  const std::size_t mpr = shape.rows_per_rank(w);
  const std::size_t chunk_bytes = mpr * shape.k * shape.elem_bytes();
  const double wave = gemm_wave_us(shape, gemm);
  Timeline t;
  for (int r = 0; r < w; ++r) {
    const TileSchedule& s = schedules[static_cast<std::size_t>(r)];
    std::map<std::pair<int, int>, int> arrival;
    int prev_comm = -1;
    for (std::size_t k = 0; k < s.steps.size(); ++k) {
      for (const auto& v : s.visits(k)) {
        if (v.first == r) continue;
        const std::size_t bytes = s.steps[k].subchunk ? chunk_bytes / static_cast<std::size_t>(s.subchunks) : chunk_bytes;
        std::vector<int> deps;
        if (prev_comm >= 0) deps.push_back(prev_comm);
        prev_comm = add_after(t, "pull c" + std::to_string(v.first) + "." + std::to_string(v.second), r, "comm",
                              transfer_time(bytes, Link::kNvlink, params), deps);
        arrival[v] = prev_comm;
      }
    }
    int prev_gemm = -1;
    for (std::size_t k = 0; k < s.steps.size(); ++k) {
      for (const auto& v : s.visits(k)) {
        const std::size_t rows = s.steps[k].subchunk ? mpr / static_cast<std::size_t>(s.subchunks) : mpr;
        const std::size_t tiles = std::max<std::size_t>(1, rows / shape.tile_m) * (shape.n / shape.tile_n);
        const auto waves = (tiles + static_cast<std::size_t>(gemm.sms) - 1) / static_cast<std::size_t>(gemm.sms);
        std::vector<int> deps;
        if (prev_gemm >= 0) deps.push_back(prev_gemm);
        if (auto a = arrival.find(v); a != arrival.end()) deps.push_back(a->second);
        prev_gemm = add_after(t, "gemm c" + std::to_string(v.first) + "." + std::to_string(v.second), r, "gemm",
                              static_cast<double>(waves) * wave, deps);
      }
    }
  }
  return t;
}

ReplayResult replay_trace(std::span<const TraceRecord> records, int local_world_size, const CostParams& params) {
  if (local_world_size < 1) throw ArgumentError("local_world_size must be at least 1");
  std::vector<const TraceRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->seq < b->seq; });

  ReplayResult out;
  const double half = params.signal_pair_cost_us / 2.0;
  std::vector<std::uint64_t> seq_of;
  std::map<std::pair<int, std::string>, int> last_in_task;
  // (target rank, signal) -> [(value after update, event)]
  std::map<std::pair<int, int>, std::vector<std::pair<std::uint64_t, int>>> updates;
  // (op, node or -1, generation, reset epoch) -> barrier events of that generation
  std::map<std::tuple<int, int, std::uint64_t, int>, std::vector<int>> barriers;
  std::vector<int> program_prev;
  int epoch = 0;

  std::vector<TimelineEvent> events;
  for (const TraceRecord* rec : order) {
    if (rec->op == Primitive::kSignalReset) {
      updates.clear();
      ++epoch;
      continue;
    }
    if (rec->rank < 0) continue;
    const bool remote = rec->peer >= 0 && rec->peer / local_world_size != rec->rank / local_world_size;
    const Link link = remote ? Link::kNic : Link::kNvlink;
    double dur = 0.0;
    switch (rec->op) {
      case Primitive::kPutmem:
      case Primitive::kPutmemNbi:
      case Primitive::kGetmem:
      case Primitive::kGetmemNbi:
      case Primitive::kIntP:
      case Primitive::kCopyAsync:
        dur = transfer_time(rec->bytes, link, params);
        break;
      case Primitive::kPutmemSignal:
      case Primitive::kPutmemSignalNbi:
        dur = transfer_time(rec->bytes, link, params) + half;
        break;
      case Primitive::kSignalOp:
      case Primitive::kAtomicCas:
      case Primitive::kAtomicAdd:
      case Primitive::kRedRelease:
      case Primitive::kSignalWaitUntil:
        dur = half;
        break;
      case Primitive::kMultimemSt:
      case Primitive::kMultimemLdReduce:
        dur = params.multimem_cost_us;
        break;
      default:
        break;
    }
    TimelineEvent ev{std::string(to_string(rec->op)), rec->rank, rec->task, 0.0, dur, {}};
    const int id = static_cast<int>(events.size());
    const auto key = std::make_pair(rec->rank, rec->task);
    const auto it = last_in_task.find(key);
    const int prev = it == last_in_task.end() ? -1 : it->second;
    if (prev >= 0) ev.deps.push_back(prev);
    program_prev.push_back(prev);
    last_in_task[key] = id;

    if (rec->op == Primitive::kSignalWaitUntil) {
      const auto& hist = updates[{rec->rank, rec->signal}];
      auto match = std::find_if(hist.rbegin(), hist.rend(), [&](const auto& u) { return u.first == rec->value; });
      if (match != hist.rend()) {
        ev.deps.push_back(match->second);
        ++out.matched_waits;
      } else if (rec->value == 0) {
        ++out.matched_waits;
      } else {
        ++out.unmatched_waits;
      }
    }
    if (is_signal_update(rec->op) && rec->signal >= 0) updates[{rec->peer, rec->signal}].emplace_back(rec->value, id);
    if (is_barrier(rec->op)) {
      const int node = rec->op == Primitive::kBarrierAllIntraNode ? rec->rank / local_world_size : -1;
      barriers[{static_cast<int>(rec->op), node, rec->value, epoch}].push_back(id);
    }
    events.push_back(std::move(ev));
    seq_of.push_back(rec->seq);
  }
  for (const auto& [key, members] : barriers) {
    for (int m : members) {
      for (int other : members) {
        const int p = program_prev[static_cast<std::size_t>(other)];
        if (other != m && p >= 0) events[static_cast<std::size_t>(m)].deps.push_back(p);
      }
    }
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto& ev = events[i];
    std::sort(ev.deps.begin(), ev.deps.end());
    ev.deps.erase(std::unique(ev.deps.begin(), ev.deps.end()), ev.deps.end());
    for (int d : ev.deps) {
      if (seq_of[static_cast<std::size_t>(d)] >= seq_of[i]) {
        out.causal = false;
      } else {
        ev.start_us = std::max(ev.start_us, events[static_cast<std::size_t>(d)].end_us());
      }
    }
  }
  for (auto& ev : events) out.timeline.add(std::move(ev));
  return out;
}

}  // namespace onesided
