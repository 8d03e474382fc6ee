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

#include "onesided/overlap_pipelines.h"

#include <cstring>
#include <string>
#include <type_traits>

#include "onesided/errors.h"
#include "onesided/primitives.h"

namespace onesided {
namespace {

template <class T>
void matmul_tile_typed(std::span<const std::byte> a, std::span<const std::byte> b, std::span<std::byte> c,
                       std::size_t n, std::size_t k, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  using Acc = std::conditional_t<std::is_integral_v<T>, std::uint64_t, T>;
  const auto at = [](std::span<const std::byte> s, std::size_t i) {
    T v;
    std::memcpy(&v, s.data() + i * sizeof(T), sizeof(T));
    return static_cast<Acc>(v);
  };
  for (std::size_t i = r0; i < r1; ++i) {
    for (std::size_t j = c0; j < c1; ++j) {
      Acc acc{};
      for (std::size_t p = 0; p < k; ++p) acc += at(a, i * k + p) * at(b, p * n + j);
      const T v = static_cast<T>(acc);
      std::memcpy(c.data() + (i * n + j) * sizeof(T), &v, sizeof(T));
    }
  }
}

void check_buffers(const World& world, const std::vector<LocalBuffer>& a, const LocalBuffer& b,
                   const ProblemShape& shape, std::size_t a_rows, const char* what) {
  shape.validate(world.world_size());
  const std::size_t eb = shape.elem_bytes();
  if (static_cast<int>(a.size()) != world.world_size()) {
    throw ArgumentError(std::string(what) + ": need one A buffer per rank");
  }
  for (const auto& x : a) {
    if (x.size() != a_rows * shape.k * eb) throw ArgumentError(std::string(what) + ": A has the wrong size");
  }
  if (b.size() != shape.k * shape.n * eb) throw ArgumentError(std::string(what) + ": B is not [K, N]");
}

std::vector<TileSchedule> schedules_or(const World& world, const PipelineOptions& options,
                                       std::vector<TileSchedule> fallback) {
  std::vector<TileSchedule> s = options.schedules.empty() ? std::move(fallback) : options.schedules;
  validate_schedules(s, world.world_size());
  return s;
}

// Rows [first, last) of one rank block covered by sub-chunk `sub`, aligned to tile_m.
std::pair<std::size_t, std::size_t> subchunk_rows(const ProblemShape& shape, std::size_t rows, int sub, int subchunks) {
  const std::size_t tiles = rows / shape.tile_m;
  const auto s = static_cast<std::size_t>(sub);
  const auto n = static_cast<std::size_t>(subchunks);
  return {tiles * s / n * shape.tile_m, tiles * (s + 1) / n * shape.tile_m};
}

void compute_rows(const ProblemShape& shape, std::span<const std::byte> a, std::span<const std::byte> b,
                  std::span<std::byte> c, std::size_t r0, std::size_t r1) {
  for (std::size_t i = r0; i < r1; i += shape.tile_m) {
    for (std::size_t j = 0; j < shape.n; j += shape.tile_n) {
      matmul_tile(shape.dtype, a, b, c, shape.n, shape.k, i, i + shape.tile_m, j, j + shape.tile_n);
    }
  }
}

std::vector<int> first_visit_order(const TileSchedule& s) {
  std::vector<int> order;
  std::vector<bool> seen(static_cast<std::size_t>(s.chunks), false);
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    for (const auto& [c, sub] : s.visits(i)) {
      if (!seen[static_cast<std::size_t>(c)]) {
        seen[static_cast<std::size_t>(c)] = true;
        order.push_back(c);
      }
    }
  }
  return order;
}

LaunchReport launch_pipeline(World& world, const Program& program, const LaunchOptions& options) {
  LaunchReport report;
  {
    World::CollectiveScope scope(world);
    report = launch(world, program, options);
  }
  world.reset_signals();
  return report;
}

}  // namespace

void ProblemShape::validate(int world_size) const {
  if (world_size < 1) throw ArgumentError("world size must be at least 1");
  if (m == 0 || n == 0 || k == 0) throw ArgumentError("matrix dimensions must be positive");
  if (m % static_cast<std::size_t>(world_size) != 0) {
    throw ArgumentError("M=" + std::to_string(m) + " is not divisible by world size " + std::to_string(world_size));
  }
  if (tile_m == 0 || tile_n == 0) throw ArgumentError("tile sizes must be positive");
  if (rows_per_rank(world_size) % tile_m != 0 || n % tile_n != 0) {
    throw ArgumentError("tiles do not cover the output exactly");
  }
}

void matmul_tile(DType dtype, std::span<const std::byte> a, std::span<const std::byte> b, std::span<std::byte> c,
                 std::size_t n, std::size_t k, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
                 std::size_t col_end) {
  const std::size_t eb = dtype_size(dtype);
  if (row_end < row_begin || col_end < col_begin || col_end > n || a.size() < row_end * k * eb ||
      b.size() < k * n * eb || c.size() < row_end * n * eb) {
    throw ArgumentError("matmul tile out of range");
  }
  switch (dtype) {
    case DType::kI32: return matmul_tile_typed<std::int32_t>(a, b, c, n, k, row_begin, row_end, col_begin, col_end);
    case DType::kI64: return matmul_tile_typed<std::int64_t>(a, b, c, n, k, row_begin, row_end, col_begin, col_end);
    case DType::kU32: return matmul_tile_typed<std::uint32_t>(a, b, c, n, k, row_begin, row_end, col_begin, col_end);
    case DType::kU64: return matmul_tile_typed<std::uint64_t>(a, b, c, n, k, row_begin, row_end, col_begin, col_end);
    case DType::kF32: return matmul_tile_typed<float>(a, b, c, n, k, row_begin, row_end, col_begin, col_end);
    case DType::kF64: return matmul_tile_typed<double>(a, b, c, n, k, row_begin, row_end, col_begin, col_end);
  }
}

LocalBuffer matmul(DType dtype, std::span<const std::byte> a, std::span<const std::byte> b, std::size_t m,
                   std::size_t n, std::size_t k) {
  LocalBuffer c(m * n * dtype_size(dtype));
  matmul_tile(dtype, a, b, c, n, k, 0, m, 0, n);
  return c;
}

std::vector<TileSchedule> default_ag_schedules(const World& world) {
  std::vector<TileSchedule> out;
  for (int r = 0; r < world.world_size(); ++r) out.push_back(ag_order_switch(r, world.world_size()));
  return out;
}

std::vector<TileSchedule> default_rs_schedules(const World& world) {
  std::vector<TileSchedule> out;
  for (int r = 0; r < world.world_size(); ++r) out.push_back(rs_inter_order(r, world.n_nodes(), world.local_world_size()));
  return out;
}

void validate_schedules(std::span<const TileSchedule> schedules, int world_size) {
  if (static_cast<int>(schedules.size()) != world_size) {
    throw ArgumentError("need one schedule per rank, got " + std::to_string(schedules.size()));
  }
  for (int r = 0; r < world_size; ++r) {
    const TileSchedule& s = schedules[static_cast<std::size_t>(r)];
    if (s.rank != r) throw ArgumentError("schedule " + std::to_string(r) + " belongs to rank " + std::to_string(s.rank));
    if (s.chunks != world_size || !s.is_permutation()) {
      throw ArgumentError("schedule of rank " + std::to_string(r) + " does not visit every chunk exactly once");
    }
  }
}

PipelineRun ag_gemm(World& world, const std::vector<LocalBuffer>& a_shards, const LocalBuffer& b,
                    const ProblemShape& shape, const PipelineOptions& options) {
  const int w = world.world_size();
  check_buffers(world, a_shards, b, shape, shape.rows_per_rank(w), "ag_gemm");
  const std::vector<TileSchedule> schedules = schedules_or(world, options, default_ag_schedules(world));
  const std::size_t mpr = shape.rows_per_rank(w);
  const std::size_t eb = shape.elem_bytes();
  const std::size_t a_chunk = mpr * shape.k * eb;
  const std::size_t c_chunk = mpr * shape.n * eb;

  World::AllocScope alloc(world);
  const AllGatherBuffers buf = AllGatherBuffers::allocate(world, a_chunk);
  PipelineRun run;
  run.outputs.assign(static_cast<std::size_t>(w), LocalBuffer(shape.m * shape.n * eb));
  run.visits.resize(static_cast<std::size_t>(w));
  Program program(w);
  for (int r = 0; r < w; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const int comm = program.stream(r, "comm", TaskRole::kCopyEngine);
    const int gemm = program.stream(r, "gemm", TaskRole::kCompute);
    if (options.mode == AllGatherMode::kPush) {
      program.task(comm, "allgather_push", [&, ri](const RankCtx& ctx) { allgather_push_intra(ctx, buf, a_shards[ri]); });
    } else {
      const std::vector<int> order = first_visit_order(schedules[ri]);
      program.task(comm, "allgather_pull",
                   [&, ri, order](const RankCtx& ctx) { allgather_pull_intra(ctx, buf, a_shards[ri], order); });
    }
    program.task(gemm, "gemm", [&, r, ri](const RankCtx& ctx) {
      const TileSchedule& sched = schedules[ri];
      std::vector<bool> arrived(static_cast<std::size_t>(w), false);
      arrived[ri] = true;
      auto T = ctx.world().remote_ptr(buf.T, r);
      for (std::size_t step = 0; step < sched.steps.size(); ++step) {
        for (const auto& [c, sub] : sched.visits(step)) {
          const auto ci = static_cast<std::size_t>(c);
          if (!arrived[ci]) {
            Token token = wait(ctx, buf.S.at(c), 1);
            consume_token(ctx, token, 0);
            arrived[ci] = true;
          }
          std::span<const std::byte> a = c == r ? std::span<const std::byte>(a_shards[ri])
                                                : std::span<const std::byte>(T.subspan(ci * a_chunk, a_chunk));
          auto out = std::span<std::byte>(run.outputs[ri]).subspan(ci * c_chunk, c_chunk);
          const auto [r0, r1] = subchunk_rows(shape, mpr, sub, sched.subchunks);
          compute_rows(shape, a, b, out, r0, r1);
          run.visits[ri].emplace_back(c, sub);
        }
      }
    });
  }
  run.report = launch_pipeline(world, program, options.launch);
  if (!run.report.ok) run.outputs.clear();
  return run;
}

PipelineRun gemm_rs(World& world, const std::vector<LocalBuffer>& a, const LocalBuffer& b, const ProblemShape& shape,
                    const PipelineOptions& options) {
  const int w = world.world_size();
  check_buffers(world, a, b, shape, shape.m, "gemm_rs");
  const std::vector<TileSchedule> schedules = schedules_or(world, options, default_rs_schedules(world));
  const std::size_t mpr = shape.rows_per_rank(w);
  const std::size_t eb = shape.elem_bytes();
  const std::size_t c_chunk = mpr * shape.n * eb;
  const bool inter = world.n_nodes() > 1;

  World::AllocScope alloc(world);
  ReduceScatterBuffers intra_buf;
  InterReduceScatterBuffers inter_buf;
  if (inter) {
    inter_buf = InterReduceScatterBuffers::allocate(world, shape.dtype, shape.m, shape.n);
  } else {
    intra_buf = ReduceScatterBuffers::allocate(world, shape.dtype, c_chunk);
  }
  const SignalSet P = inter ? inter_buf.P : intra_buf.P;

  PipelineRun run;
  run.outputs.assign(static_cast<std::size_t>(w), LocalBuffer(c_chunk));
  run.visits.resize(static_cast<std::size_t>(w));
  std::vector<LocalBuffer> L(static_cast<std::size_t>(w), LocalBuffer(shape.m * shape.n * eb));
  std::vector<LocalBuffer> staging(static_cast<std::size_t>(w), LocalBuffer(c_chunk));
  Program program(w);
  for (int r = 0; r < w; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const int producer = program.stream(r, "gemm", TaskRole::kCompute);
    program.task(producer, "gemm", [&, ri](const RankCtx& ctx) {
      const TileSchedule& sched = schedules[ri];
      std::vector<int> remaining(static_cast<std::size_t>(w), sched.subchunks);
      const std::size_t a_chunk = mpr * shape.k * eb;
      for (std::size_t step = 0; step < sched.steps.size(); ++step) {
        for (const auto& [c, sub] : sched.visits(step)) {
          const auto ci = static_cast<std::size_t>(c);
          auto in = std::span<const std::byte>(a[ri]).subspan(ci * a_chunk, a_chunk);
          auto out = std::span<std::byte>(L[ri]).subspan(ci * c_chunk, c_chunk);
          const auto [r0, r1] = subchunk_rows(shape, mpr, sub, sched.subchunks);
          compute_rows(shape, in, b, out, r0, r1);
          run.visits[ri].emplace_back(c, sub);
          if (--remaining[ci] == 0) produce_chunk(ctx, P, c);
        }
      }
    });
    if (!inter) {
      const int scatter = program.stream(r, "scatter", TaskRole::kCopyEngine);
      const int reduce = program.stream(r, "reduce", TaskRole::kCompute);
      const std::vector<int> order = first_visit_order(schedules[ri]);
      program.task(scatter, "scatter", [&, ri, order](const RankCtx& ctx) {
        reducescatter_push_scatter(ctx, intra_buf, L[ri], SyncStyle::kToken, order);
      });
      program.task(reduce, "reduce", [&, ri](const RankCtx& ctx) {
        reducescatter_push_reduce(ctx, intra_buf, run.outputs[ri], SyncStyle::kToken);
      });
      continue;
    }
    const int s0 = program.stream(r, "stream0", TaskRole::kCopyEngine);
    const int s1 = program.stream(r, "stream1", TaskRole::kCommBlock);
    for (int it = 0; it < inter_buf.n_nodes; ++it) {
      program.task(s0, "scatter" + std::to_string(it), [&, ri, it](const RankCtx& ctx) {
        reducescatter_inter_scatter(ctx, inter_buf, L[ri], it, SyncStyle::kToken);
      });
      program.stream_wait(s1, s0);
      program.task(s1, "reduce" + std::to_string(it),
                   [&, ri, it](const RankCtx& ctx) { reducescatter_inter_reduce(ctx, inter_buf, it, staging[ri]); });
    }
    program.task(s1, "finish",
                 [&, ri](const RankCtx& ctx) { reducescatter_inter_finish(ctx, inter_buf, run.outputs[ri]); });
  }
  run.report = launch_pipeline(world, program, options.launch);
  if (!run.report.ok) run.outputs.clear();
  return run;
}

}  // namespace onesided
