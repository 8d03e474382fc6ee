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

// Discrete-event cost model for communication and overlap schedules.
//
// Units: microseconds for time, GB/s (10^9 bytes per second) for bandwidth.
// One GB/s moves 1000 bytes per microsecond.

#ifndef ONESIDED_COSTMODEL_H_
#define ONESIDED_COSTMODEL_H_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "onesided/overlap_pipelines.h"
#include "onesided/swizzle.h"
#include "onesided/timeline.h"
#include "onesided/world.h"

namespace onesided {

enum class IntraKind { kSwitch, kFullMesh, kPcie };

std::string_view to_string(IntraKind kind);
IntraKind parse_intra_kind(std::string_view name);

struct Topology {
  std::string name = "h800";
  IntraKind intra_kind = IntraKind::kSwitch;
  int local_world_size = 8;
  double intra_link_bw_gbps = 200.0;
  double intra_base_latency_us = 0.5;
  // Per-rank cap on the sum of concurrent intra-node transfers.
  double aggregate_bw_gbps = 200.0;
  double inter_nic_bw_gbps = 45.0;
  double inter_base_latency_us = 11.0;
  int copy_engines = 1;

  // Throws ConfigError on non-positive bandwidths or a full mesh whose
  // aggregate is not (local_world_size - 1) links.
  void validate() const;
};

struct CostParams {
  double nvlink_small_msg_us = 0.5;
  double skew_worst_us = 1.5;
  double multimem_cost_us = 1.5;
  double nvlink_bw_gbps = 170.0;
  double nic_bw_gbps = 45.0;
  // One set-signal plus the matching wait.
  double signal_pair_cost_us = 2.0;
  double inter_base_latency_us = 11.0;
  double ll_pack_us = 0.5;
  double ll_unpack_us = 0.5;
  // Local reduction throughput of one SM.
  double reduce_bw_per_sm_gbps = 32.0;

  // Throws ConfigError on negative values or non-positive bandwidths.
  void validate() const;
};

struct CostConfig {
  Topology topology;
  CostParams params;

  static CostConfig from_json(const nlohmann::json& j);
  // Throws ConfigError when the file is missing or malformed.
  static CostConfig load(const std::string& path);
  nlohmann::ordered_json to_json() const;
};

enum class Link { kNvlink, kNic };

Link parse_link(std::string_view name);

// base latency + bytes / bandwidth.
double transfer_time(std::size_t bytes, Link link, const CostParams& params);
// Throws ArgumentError for a link name other than "nvlink" or "nic".
double transfer_time(std::size_t bytes, std::string_view link, const CostParams& params);

// Two-phase AllGather of `bytes_per_rank` seen from one rank: sequential
// inter-node put + signal pairs, then a skewed intra-node forward with a
// signal pair per forwarded chunk.
Timeline simulate_ag_baseline(const CostParams& params, int n_nodes, int local_world_size,
                              std::size_t bytes_per_rank = 0);

// Low-latency AllGather: LL pack, concurrent LL puts to every peer node,
// multimem broadcast inside the node and LL unpack.
Timeline simulate_ag_ll(const CostParams& params, int n_nodes, int local_world_size, std::size_t bytes_per_rank = 0);

struct RsOverlap {
  double volume_gb = 0.0;
  double scatter_us = 0.0;
  double p2p_us = 0.0;
  double reduce_window_us = 0.0;
  double reduce_volume_gb = 0.0;
  double threshold_gbps = 0.0;
};

// Reduction bandwidth needed to hide the local reduction of the cross-node
// ReduceScatter inside the intra-node scatter. Throws ArgumentError when
// local_world_size < 2 and OverlapImpossible when the scatter is no longer
// than the P2P send.
RsOverlap rs_overlap(double volume_gb, const CostParams& params, int local_world_size);
double rs_overlap_threshold(double volume_gb, const CostParams& params, int local_world_size);
double rs_overlap_threshold(const ProblemShape& shape, int world_size, const CostParams& params,
                            int local_world_size);

// Smallest SM count whose reduction bandwidth reaches `threshold_gbps`.
int min_reduce_sms(double threshold_gbps, const CostParams& params);

struct ResourcePartition {
  int sm_total = 132;
  int gemm_sms = 116;
  int p2p_sms = 1;
  int reduce_sms = 16;
  int final_reduce_sms = 132;
  bool scatter_on_copy_engine = true;

  // Throws ConfigError for allocations outside [1, sm_total].
  void validate() const;
};

// Stage sizes of one cross-node GEMM + ReduceScatter.
struct PartitionWorkload {
  int n_nodes = 2;
  int local_world_size = 8;
  // Bytes of one rank's output chunk.
  double chunk_gb = 1.0;
  double gemm_us_per_iter = 0.0;
  // Overrides reduce_sms * reduce_bw_per_sm when positive.
  double reduce_bw_gbps = 0.0;
  // SM cost of an SM-driven scatter when the copy engine is off.
  int scatter_sms = 16;
};

// GEMM time per iteration equal to the scatter time.
PartitionWorkload balanced_workload(const CostParams& params, int n_nodes, int local_world_size, double chunk_gb);

struct StageReport {
  std::string stage;
  double busy_per_iter_us = 0.0;
  // GEMM period minus this stage's per-iteration busy time.
  double slack_us = 0.0;
  // Largest delay between a stage's input becoming ready and the stage
  // starting, over all iterations.
  double tail_us = 0.0;
};

struct PartitionReport {
  Timeline timeline;
  std::vector<StageReport> stages;
  double gemm_end_us = 0.0;
  double makespan_us = 0.0;
  int peak_sms = 0;

  const StageReport& stage(std::string_view name) const;
  double max_tail_us(bool include_gemm = false) const;
};

// Throws ConfigError when concurrent SM allocations exceed sm_total.
PartitionReport simulate_partition(const ResourcePartition& partition, const PartitionWorkload& workload,
                                   const CostParams& params);

struct StageSpec {
  std::string name;
  double duration_us = 0.0;
  int sms = 0;
};

// Independent stages that all start at time zero. The stage named "gemm"
// (or the longest one) dominates; slack is its end minus a stage's end and
// tail is the positive part of the reverse.
PartitionReport simulate_partition(const ResourcePartition& partition, std::span<const StageSpec> stages);

// AllGather transfer steps of `schedules` on an intra-node topology. Every
// transfer in a step shares its puller's aggregate cap and its source's
// egress with the other transfers of that step.
Timeline simulate_allgather_schedule(const Topology& topology, std::span<const TileSchedule> schedules,
                                     std::size_t chunk_bytes);

struct GemmCost {
  int sms = 132;
  // Dense throughput of one device, TFLOP/s.
  double tflops = 400.0;
  // Fixed cost of one tile wave.
  double wave_overhead_us = 1.0;
};

// Time of one tile wave of `tile_m` x `tile_n` outputs over K.
double gemm_wave_us(const ProblemShape& shape, const GemmCost& gemm);

// AllGather + GEMM per rank: the "comm" resource pulls the remote chunks
// step by step over NVLink while the "gemm" resource computes each visited
// (chunk, subchunk) in waves of `sms` tiles once its data has arrived.
Timeline simulate_ag_gemm(const CostParams& params, const ProblemShape& shape, std::span<const TileSchedule> schedules,
                          const GemmCost& gemm = {});

struct ReplayResult {
  Timeline timeline;
  int matched_waits = 0;
  int unmatched_waits = 0;
  // Every dependency edge points from an earlier record to a later one.
  bool causal = true;
};

// Rebuilds the happens-before graph of a functional run from its primitive
// trace: program order inside each (rank, task), signal update to the wait
// that observed it, and barrier generations.
ReplayResult replay_trace(std::span<const TraceRecord> records, int local_world_size, const CostParams& params);

}  // namespace onesided

#endif  // ONESIDED_COSTMODEL_H_
