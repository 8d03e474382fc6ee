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

// AllGather + GEMM and GEMM + ReduceScatter built from per-chunk signals.
//
// Matrices are row-major. Row-block c of M belongs to rank c. The compute
// side walks tiles in the order a TileSchedule gives and waits only on the
// signal of the chunk a tile needs.

#ifndef ONESIDED_OVERLAP_PIPELINES_H_
#define ONESIDED_OVERLAP_PIPELINES_H_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "onesided/collectives.h"
#include "onesided/swizzle.h"
#include "onesided/task_runtime.h"
#include "onesided/world.h"

namespace onesided {

struct ProblemShape {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  DType dtype = DType::kI32;
  std::size_t tile_m = 1;
  std::size_t tile_n = 1;

  std::size_t elem_bytes() const { return dtype_size(dtype); }
  std::size_t rows_per_rank(int world_size) const { return m / static_cast<std::size_t>(world_size); }
  // Throws ArgumentError unless M splits evenly over the world and the tiles
  // cover one rank's [M / W, N] block exactly.
  void validate(int world_size) const;
};

// C[rows, N] = A[rows, K] * B[K, N] for the rows [row_begin, row_end) and
// columns [col_begin, col_end). Integers wrap.
void matmul_tile(DType dtype, std::span<const std::byte> a, std::span<const std::byte> b, std::span<std::byte> c,
                 std::size_t n, std::size_t k, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
                 std::size_t col_end);

// Whole-matrix product.
LocalBuffer matmul(DType dtype, std::span<const std::byte> a, std::span<const std::byte> b, std::size_t m,
                   std::size_t n, std::size_t k);

// One default schedule per rank: switch order for AllGather GEMM, after-self
// order (or the inter-node order for multi-node worlds) for GEMM ReduceScatter.
std::vector<TileSchedule> default_ag_schedules(const World& world);
std::vector<TileSchedule> default_rs_schedules(const World& world);

// Throws ArgumentError unless every schedule belongs to its rank and visits
// each (chunk, subchunk) of the world exactly once.
void validate_schedules(std::span<const TileSchedule> schedules, int world_size);

struct PipelineOptions {
  LaunchOptions launch;
  AllGatherMode mode = AllGatherMode::kPush;
  // Empty means the default schedule.
  std::vector<TileSchedule> schedules;
};

struct PipelineRun {
  LaunchReport report;
  std::vector<LocalBuffer> outputs;
  // (chunk, subchunk) pairs in the order each rank's compute task used them.
  std::vector<std::vector<std::pair<int, int>>> visits;
};

// C = concat(A shards) * B on every rank.
PipelineRun ag_gemm(World& world, const std::vector<LocalBuffer>& a_shards, const LocalBuffer& b,
                    const ProblemShape& shape, const PipelineOptions& options = {});

// Rank k receives row-block k of sum over ranks of A_r * B.
PipelineRun gemm_rs(World& world, const std::vector<LocalBuffer>& a, const LocalBuffer& b, const ProblemShape& shape,
                    const PipelineOptions& options = {});

}  // namespace onesided

#endif  // ONESIDED_OVERLAP_PIPELINES_H_
