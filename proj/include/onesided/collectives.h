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

// Signal-synchronized collectives.
//
// Each collective comes in two layers. The per-rank bodies (allgather_*,
// reducescatter_*, alltoall_*) run inside tasks of a Program and can be
// composed with compute. The run_* helpers build and launch a complete
// program, return every rank's output and reset all signals afterwards.

#ifndef ONESIDED_COLLECTIVES_H_
#define ONESIDED_COLLECTIVES_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "onesided/ll_protocol.h"
#include "onesided/primitives.h"
#include "onesided/task_runtime.h"
#include "onesided/world.h"

namespace onesided {

enum class DType { kI32, kI64, kU32, kU64, kF32, kF64 };

std::size_t dtype_size(DType dtype);
std::string_view to_string(DType dtype);
DType parse_dtype(std::string_view name);

template <class T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, std::int32_t>) return DType::kI32;
  else if constexpr (std::is_same_v<T, std::int64_t>) return DType::kI64;
  else if constexpr (std::is_same_v<T, std::uint32_t>) return DType::kU32;
  else if constexpr (std::is_same_v<T, std::uint64_t>) return DType::kU64;
  else if constexpr (std::is_same_v<T, float>) return DType::kF32;
  else {
    static_assert(std::is_same_v<T, double>, "unsupported element type");
    return DType::kF64;
  }
}

// acc[i] += src[i]. Integers wrap. Throws ArgumentError on size mismatch.
void accumulate(DType dtype, std::span<std::byte> acc, std::span<const std::byte> src);

// How consumers wait on a signal: a plain EQ wait, or wait() followed by
// consume_token(). Both must give identical results.
enum class SyncStyle { kWaitUntil, kToken };

void await_signal(const RankCtx& ctx, int sig, std::uint64_t value, SyncStyle style);

// `chunks` equal, disjoint, covering slices of one buffer.
struct ChunkLayout {
  int chunks = 1;
  std::size_t chunk_bytes = 0;
  std::size_t elem_bytes = 1;

  // Throws ArgumentError unless total splits into whole-element chunks.
  static ChunkLayout split(std::size_t total_bytes, int chunks, std::size_t elem_bytes);

  std::size_t offset(int chunk) const;
  std::size_t total_bytes() const { return chunk_bytes * static_cast<std::size_t>(chunks); }
  std::size_t chunk_elems() const { return chunk_bytes / elem_bytes; }
};

// ---------------------------------------------------------------------------
// Intra-node AllGather, push and pull.

struct AllGatherBuffers {
  SymHandle T;
  SignalSet S;
  std::size_t chunk_bytes = 0;

  static AllGatherBuffers allocate(World& world, std::size_t chunk_bytes);
};

// Writes `local` into slot RANK of every rank's T, then sets S+RANK there.
void allgather_push_intra(const RankCtx& ctx, const AllGatherBuffers& buf, std::span<const std::byte> local,
                          std::uint64_t value = 1);

// Local copy, S+RANK, barrier_all, then reads every other slot in `order`
// (ring order when empty) and sets the matching local signal.
void allgather_pull_intra(const RankCtx& ctx, const AllGatherBuffers& buf, std::span<const std::byte> local,
                          std::span<const int> order = {}, std::uint64_t value = 1);

// Waits on each slot's signal and copies T into `out`.
void allgather_collect(const RankCtx& ctx, const AllGatherBuffers& buf, std::span<std::byte> out,
                       SyncStyle style = SyncStyle::kWaitUntil, std::uint64_t value = 1);

// ---------------------------------------------------------------------------
// Intra-node push ReduceScatter: a scatter part and a reduction part that
// talk through S, fed by a producer through P.

struct ReduceScatterBuffers {
  SymHandle T;
  SignalSet P;
  SignalSet S;
  ChunkLayout layout;
  DType dtype = DType::kI32;

  static ReduceScatterBuffers allocate(World& world, DType dtype, std::size_t chunk_bytes);
};

// Marks chunk `chunk` of the caller's L as produced.
void produce_chunk(const RankCtx& ctx, const SignalSet& P, int chunk);

// For each r in `order` (ring order after RANK when empty): waits P+r, puts
// chunk r of L into slot RANK of rank r's T and sets S+RANK there.
void reducescatter_push_scatter(const RankCtx& ctx, const ReduceScatterBuffers& buf, std::span<const std::byte> L,
                                SyncStyle style = SyncStyle::kWaitUntil, std::span<const int> order = {});

// For r ascending: waits S+r and adds slot r of T into R.
void reducescatter_push_reduce(const RankCtx& ctx, const ReduceScatterBuffers& buf, std::span<std::byte> R,
                               SyncStyle style = SyncStyle::kWaitUntil);

// ---------------------------------------------------------------------------
// Low-latency cross-node AllGather. WORLD_SIZE blocks per rank, no barriers.

struct LLAllGatherState {
  SymHandle T;
  LLBuffer ll;
  std::size_t bytes_per_rank = 0;
  std::uint64_t iteration = 0;

  // Throws ConfigError for a single-node world and ArgumentError unless
  // bytes_per_rank is a multiple of 4.
  static LLAllGatherState allocate(World& world, std::size_t bytes_per_rank);
};

// The role block `block` plays on this rank.
TaskRole ll_block_role(const RankCtx& ctx, int block);
BlockAssignment ll_block_assignment(const RankCtx& ctx);

// Body of one block. The block with id RANK packs slot RANK of T (first
// filled from `local` when given), sends it to the same local rank of every
// other node and broadcasts it inside the node; blocks for the same local
// rank on other nodes receive, forward with multimem_st and unpack; all
// other blocks unpack what a node peer forwarded.
void allgather_ll_block(const RankCtx& ctx, const LLAllGatherState& state, int block, std::uint32_t flag,
                        std::span<const std::byte> local = {});

// ---------------------------------------------------------------------------
// Cross-node push ReduceScatter over an [M, N] row-major L.

struct InterReduceScatterBuffers {
  SymHandle partial;  // [N_NODES, M_PER_RANK, N]
  SymHandle scatter;  // [2, LOCAL_WORLD_SIZE, M_PER_RANK, N]
  SignalSet P;        // WORLD_SIZE producer signals
  SignalSet credit;   // LOCAL_WORLD_SIZE reuse credits for scatter slots
  ChunkLayout layout;
  DType dtype = DType::kI32;
  std::size_t m = 0;
  std::size_t n = 0;
  int n_nodes = 1;
  int local_world_size = 1;

  // Throws ArgumentError unless M is divisible by WORLD_SIZE.
  static InterReduceScatterBuffers allocate(World& world, DType dtype, std::size_t m, std::size_t n);

  // Node whose chunks this rank scatters in iteration `it`: peer nodes in
  // order after the own node, the own node last.
  int target_node(const RankCtx& ctx, int it) const;
};

// Stream 0, iteration `it`: scatter row-blocks of target_node to the node
// peers' scatter slots, then barrier_all_intra_node.
void reducescatter_inter_scatter(const RankCtx& ctx, const InterReduceScatterBuffers& buf,
                                 std::span<const std::byte> L, int it, SyncStyle style = SyncStyle::kWaitUntil);

// Stream 1, iteration `it`: reduce the scatter slots, return credits and
// send the node partial to LOCAL_RANK on target_node. `staging` must stay
// alive until the issuing task ends.
void reducescatter_inter_reduce(const RankCtx& ctx, const InterReduceScatterBuffers& buf, int it,
                                std::span<std::byte> staging);

// barrier_all, then R = sum over nodes of partial.
void reducescatter_inter_finish(const RankCtx& ctx, const InterReduceScatterBuffers& buf, std::span<std::byte> R);

// ---------------------------------------------------------------------------
// Low-latency AllToAll dispatch / combine for expert routing.

struct ExpertRouting {
  int experts_total = 1;
  int topk = 1;
  // expert_ids[rank][token * topk + k]
  std::vector<std::vector<int>> expert_ids;

  int experts_per_rank(int world_size) const;
  int owner(int expert, int world_size) const;
  int tokens(int rank) const;
  // Throws ArgumentError for bad ids, topk < 1 or uneven expert split.
  void validate(int world_size) const;
};

struct DispatchedToken {
  int src_rank = 0;
  int token = 0;
  int k = 0;
  int expert = 0;
  LocalBuffer data;
};

struct AllToAllBuffers {
  SymHandle recv;     // [WORLD_SIZE sources, max_tokens * topk entries]
  SymHandle combine;  // [max_tokens * topk, token_bytes]
  SignalSet counts;   // per source: entries + 1
  SignalSet done;     // one word: entries combined back
  std::size_t token_bytes = 0;
  std::size_t entry_bytes = 0;
  int max_tokens = 0;
  int topk = 1;
  int experts_per_rank = 1;

  static AllToAllBuffers allocate(World& world, std::size_t token_bytes, int max_tokens, int topk,
                                  int experts_per_rank);
  std::size_t capacity_per_source() const { return static_cast<std::size_t>(max_tokens) * static_cast<std::size_t>(topk); }
};

// Sends every (token, k) copy to the owner of its expert and returns the
// entries this rank received, ordered by source then arrival slot. Throws
// CapacityError when the rank holds more than max_tokens tokens.
std::vector<DispatchedToken> alltoall_dispatch(const RankCtx& ctx, const AllToAllBuffers& buf,
                                               std::span<const std::byte> tokens, std::span<const int> expert_ids);

// Returns each entry's data to its source and sums the topk results of every
// local token, k ascending, into `out`.
void alltoall_combine(const RankCtx& ctx, const AllToAllBuffers& buf, DType dtype,
                      const std::vector<DispatchedToken>& outputs, int n_tokens, std::span<std::byte> out);

using ExpertFn = std::function<void(int expert, std::span<const std::byte> in, std::span<std::byte> out)>;

// ---------------------------------------------------------------------------
// Whole-collective helpers.

struct CollectiveOptions {
  LaunchOptions launch;
  SyncStyle sync = SyncStyle::kWaitUntil;
  // Optional per-rank chunk orders for pull AllGather and the intra scatter.
  std::vector<std::vector<int>> orders;
};

struct CollectiveRun {
  LaunchReport report;
  std::vector<LocalBuffer> outputs;
};

enum class AllGatherMode { kPush, kPull };

CollectiveRun run_allgather_intra(World& world, AllGatherMode mode, const std::vector<LocalBuffer>& inputs,
                                  const CollectiveOptions& options = {});

CollectiveRun run_reducescatter_intra(World& world, DType dtype, const std::vector<LocalBuffer>& inputs,
                                      const CollectiveOptions& options = {});

// Advances state.iteration by one per call.
CollectiveRun run_allgather_ll(World& world, LLAllGatherState& state, const std::vector<LocalBuffer>& inputs,
                               const CollectiveOptions& options = {});
CollectiveRun run_allgather_ll(World& world, const std::vector<LocalBuffer>& inputs,
                               const CollectiveOptions& options = {});

CollectiveRun run_reducescatter_inter(World& world, DType dtype, std::size_t m, std::size_t n,
                                      const std::vector<LocalBuffer>& inputs, const CollectiveOptions& options = {});

struct AllToAllRun {
  LaunchReport report;
  std::vector<std::vector<DispatchedToken>> received;
  std::vector<LocalBuffer> combined;
};

// Identity experts when `expert` is empty.
AllToAllRun run_alltoall(World& world, DType dtype, const std::vector<LocalBuffer>& tokens,
                         const ExpertRouting& routing, int max_tokens, const ExpertFn& expert = {},
                         const CollectiveOptions& options = {});

}  // namespace onesided

#endif  // ONESIDED_COLLECTIVES_H_
