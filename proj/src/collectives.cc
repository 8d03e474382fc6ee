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

#include "onesided/collectives.h"

#include <algorithm>
#include <cstring>
#include <string>

#include "onesided/errors.h"
#include "onesided/swizzle.h"

namespace onesided {
namespace {

template <class T>
void add_into(std::span<std::byte> acc, std::span<const std::byte> src) {
  const std::size_t n = acc.size() / sizeof(T);
  for (std::size_t i = 0; i < n; ++i) {
    T a;
    T b;
    std::memcpy(&a, acc.data() + i * sizeof(T), sizeof(T));
    std::memcpy(&b, src.data() + i * sizeof(T), sizeof(T));
    if constexpr (std::is_signed_v<T> && std::is_integral_v<T>) {
      using U = std::make_unsigned_t<T>;
      a = static_cast<T>(static_cast<U>(a) + static_cast<U>(b));
    } else {
      a = static_cast<T>(a + b);
    }
    std::memcpy(acc.data() + i * sizeof(T), &a, sizeof(T));
  }
}

std::span<std::byte> own(const RankCtx& ctx, const SymHandle& h) { return ctx.world().remote_ptr(h, ctx.rank()); }

void zero(std::span<std::byte> s) { std::fill(s.begin(), s.end(), std::byte{0}); }

std::vector<int> order_or_default(std::span<const int> order, std::vector<int> fallback, int n) {
  if (order.empty()) return fallback;
  validate_order(order, n);
  return {order.begin(), order.end()};
}

// Ring order that starts after `rank` and ends with it.
std::vector<int> after_self(int rank, int n) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) out.push_back((rank + j) % n);
  return out;
}

void check_inputs(const World& world, const std::vector<LocalBuffer>& inputs, const char* what) {
  if (static_cast<int>(inputs.size()) != world.world_size()) {
    throw ArgumentError(std::string(what) + ": need one input per rank, got " + std::to_string(inputs.size()));
  }
  for (const auto& in : inputs) {
    if (in.size() != inputs.front().size()) throw ArgumentError(std::string(what) + ": input sizes differ across ranks");
  }
}

std::span<const int> rank_order(const CollectiveOptions& options, int rank) {
  if (options.orders.empty()) return {};
  if (static_cast<int>(options.orders.size()) <= rank) throw ArgumentError("orders must list every rank");
  return options.orders[static_cast<std::size_t>(rank)];
}

LaunchReport launch_collective(World& world, const Program& program, const LaunchOptions& options) {
  LaunchReport report;
  {
    World::CollectiveScope scope(world);
    report = launch(world, program, options);
  }
  world.reset_signals();
  return report;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kI32:
    case DType::kU32:
    case DType::kF32:
      return 4;
    case DType::kI64:
    case DType::kU64:
    case DType::kF64:
      return 8;
  }
  return 0;
}

std::string_view to_string(DType dtype) {
  switch (dtype) {
    case DType::kI32:
      return "i32";
    case DType::kI64:
      return "i64";
    case DType::kU32:
      return "u32";
    case DType::kU64:
      return "u64";
    case DType::kF32:
      return "f32";
    case DType::kF64:
      return "f64";
  }
  return "?";
}

DType parse_dtype(std::string_view name) {
  for (DType d : {DType::kI32, DType::kI64, DType::kU32, DType::kU64, DType::kF32, DType::kF64}) {
    if (to_string(d) == name) return d;
  }
  throw ConfigError("unknown dtype '" + std::string(name) + "'");
}

void accumulate(DType dtype, std::span<std::byte> acc, std::span<const std::byte> src) {
  if (acc.size() != src.size()) throw ArgumentError("accumulate: operand sizes differ");
  if (acc.size() % dtype_size(dtype) != 0) throw ArgumentError("accumulate: size is not a whole number of elements");
  switch (dtype) {
    case DType::kI32:
      return add_into<std::int32_t>(acc, src);
    case DType::kI64:
      return add_into<std::int64_t>(acc, src);
    case DType::kU32:
      return add_into<std::uint32_t>(acc, src);
    case DType::kU64:
      return add_into<std::uint64_t>(acc, src);
    case DType::kF32:
      return add_into<float>(acc, src);
    case DType::kF64:
      return add_into<double>(acc, src);
  }
}

void await_signal(const RankCtx& ctx, int sig, std::uint64_t value, SyncStyle style) {
  if (style == SyncStyle::kWaitUntil) {
    signal_wait_until(ctx, sig, WaitCond::kEq, value);
    return;
  }
  Token token = wait(ctx, sig, value);
  consume_token(ctx, token, 0);
}

ChunkLayout ChunkLayout::split(std::size_t total_bytes, int chunks, std::size_t elem_bytes) {
  if (chunks < 1) throw ArgumentError("chunk count must be positive");
  if (elem_bytes == 0) throw ArgumentError("element width must be positive");
  if (total_bytes % static_cast<std::size_t>(chunks) != 0) {
    throw ArgumentError(std::to_string(total_bytes) + " bytes do not split into " + std::to_string(chunks) + " chunks");
  }
  const std::size_t cb = total_bytes / static_cast<std::size_t>(chunks);
  if (cb % elem_bytes != 0) {
    throw ArgumentError("chunk of " + std::to_string(cb) + " bytes is not a whole number of " +
                        std::to_string(elem_bytes) + "-byte elements");
  }
  return ChunkLayout{chunks, cb, elem_bytes};
}

std::size_t ChunkLayout::offset(int chunk) const {
  if (chunk < 0 || chunk >= chunks) throw ArgumentError("chunk " + std::to_string(chunk) + " out of range");
  return static_cast<std::size_t>(chunk) * chunk_bytes;
}

// ---------------------------------------------------------------------------

AllGatherBuffers AllGatherBuffers::allocate(World& world, std::size_t chunk_bytes) {
  AllGatherBuffers b;
  b.chunk_bytes = chunk_bytes;
  b.T = world.alloc_symmetric(chunk_bytes * static_cast<std::size_t>(world.world_size()), 8);
  b.S = world.alloc_signals(world.world_size());
  return b;
}

void allgather_push_intra(const RankCtx& ctx, const AllGatherBuffers& buf, std::span<const std::byte> local,
                          std::uint64_t value) {
  if (local.size() != buf.chunk_bytes) throw ArgumentError("allgather: local buffer size does not match the slot");
  const int me = ctx.rank();
  for (int r = 0; r < ctx.world_size(); ++r) {
    putmem(ctx, buf.T, static_cast<std::size_t>(me) * buf.chunk_bytes, local, r);
    signal_op(ctx, r, buf.S.at(me), SignalOp::kSet, value);
  }
}

void allgather_pull_intra(const RankCtx& ctx, const AllGatherBuffers& buf, std::span<const std::byte> local,
                          std::span<const int> order, std::uint64_t value) {
  if (local.size() != buf.chunk_bytes) throw ArgumentError("allgather: local buffer size does not match the slot");
  const int me = ctx.rank();
  const int w = ctx.world_size();
  const auto visit = order_or_default(order, ring_order(me, w), w);
  auto mine = own(ctx, buf.T);
  putmem(ctx, buf.T, static_cast<std::size_t>(me) * buf.chunk_bytes, local, me);
  notify(ctx, me, buf.S.at(me), value);
  barrier_all(ctx);
  for (int r : visit) {
    if (r == me) continue;
    getmem(ctx, mine.subspan(static_cast<std::size_t>(r) * buf.chunk_bytes, buf.chunk_bytes), buf.T,
           static_cast<std::size_t>(r) * buf.chunk_bytes, r);
    notify(ctx, me, buf.S.at(r), value);
  }
}

void allgather_collect(const RankCtx& ctx, const AllGatherBuffers& buf, std::span<std::byte> out, SyncStyle style,
                       std::uint64_t value) {
  const int w = ctx.world_size();
  if (out.size() != buf.chunk_bytes * static_cast<std::size_t>(w)) throw ArgumentError("allgather: output size mismatch");
  auto mine = own(ctx, buf.T);
  for (int r : ring_order(ctx.rank(), w)) {
    await_signal(ctx, buf.S.at(r), value, style);
    const std::size_t off = static_cast<std::size_t>(r) * buf.chunk_bytes;
    copy_bytes(out.subspan(off, buf.chunk_bytes), mine.subspan(off, buf.chunk_bytes));
  }
}

// ---------------------------------------------------------------------------

ReduceScatterBuffers ReduceScatterBuffers::allocate(World& world, DType dtype, std::size_t chunk_bytes) {
  ReduceScatterBuffers b;
  b.dtype = dtype;
  b.layout = ChunkLayout::split(chunk_bytes * static_cast<std::size_t>(world.world_size()), world.world_size(),
                                dtype_size(dtype));
  b.T = world.alloc_symmetric(b.layout.total_bytes(), 8);
  b.P = world.alloc_signals(world.world_size());
  b.S = world.alloc_signals(world.world_size());
  return b;
}

void produce_chunk(const RankCtx& ctx, const SignalSet& P, int chunk) { notify(ctx, ctx.rank(), P.at(chunk), 1); }

void reducescatter_push_scatter(const RankCtx& ctx, const ReduceScatterBuffers& buf, std::span<const std::byte> L,
                                SyncStyle style, std::span<const int> order) {
  const int me = ctx.rank();
  const int w = ctx.world_size();
  if (L.size() != buf.layout.total_bytes()) throw ArgumentError("reducescatter: L must hold WORLD_SIZE chunks");
  const std::size_t cb = buf.layout.chunk_bytes;
  for (int r : order_or_default(order, after_self(me, w), w)) {
    await_signal(ctx, buf.P.at(r), 1, style);
    putmem_signal(ctx, buf.T, buf.layout.offset(me), L.subspan(buf.layout.offset(r), cb), buf.S.at(me), 1,
                  SignalOp::kSet, r);
  }
}

void reducescatter_push_reduce(const RankCtx& ctx, const ReduceScatterBuffers& buf, std::span<std::byte> R,
                               SyncStyle style) {
  if (R.size() != buf.layout.chunk_bytes) throw ArgumentError("reducescatter: R must hold one chunk");
  auto mine = own(ctx, buf.T);
  zero(R);
  for (int r = 0; r < ctx.world_size(); ++r) {
    await_signal(ctx, buf.S.at(r), 1, style);
    accumulate(buf.dtype, R, mine.subspan(buf.layout.offset(r), buf.layout.chunk_bytes));
  }
}

// ---------------------------------------------------------------------------

LLAllGatherState LLAllGatherState::allocate(World& world, std::size_t bytes_per_rank) {
  if (world.n_nodes() < 2) throw ConfigError("low-latency AllGather needs at least two nodes");
  if (bytes_per_rank % kLLWordBytes != 0) throw ArgumentError("bytes per rank must be a multiple of 4");
  LLAllGatherState s;
  s.bytes_per_rank = bytes_per_rank;
  const std::size_t total = bytes_per_rank * static_cast<std::size_t>(world.world_size());
  s.T = world.alloc_symmetric(total, kLLSlotBytes);
  s.ll = LLBuffer::allocate(world, total);
  return s;
}

TaskRole ll_block_role(const RankCtx& ctx, int block) {
  if (block < 0 || block >= ctx.world_size()) throw ArgumentError("block " + std::to_string(block) + " out of range");
  const int peer_local = block % ctx.local_world_size();
  return peer_local == ctx.local_rank() ? TaskRole::kCommBlock : TaskRole::kCompute;
}

BlockAssignment ll_block_assignment(const RankCtx& ctx) {
  BlockAssignment a(ctx.world_size());
  for (int b = 0; b < ctx.world_size(); ++b) a.assign(b, ll_block_role(ctx, b));
  return a;
}

void allgather_ll_block(const RankCtx& ctx, const LLAllGatherState& state, int block, std::uint32_t flag,
                        std::span<const std::byte> local) {
  if (ctx.n_nodes() < 2) throw ConfigError("low-latency AllGather needs at least two nodes");
  if (block < 0 || block >= ctx.world_size()) throw ArgumentError("block " + std::to_string(block) + " out of range");
  World& w = ctx.world();
  const int me = ctx.rank();
  const int lws = ctx.local_world_size();
  const std::size_t bytes = state.bytes_per_rank;
  const int peer_node = block / lws;
  const int peer_local = block % lws;
  auto t_seg = [&](int seg) { return w.remote_ptr(state.T, me).subspan(static_cast<std::size_t>(seg) * bytes, bytes); };
  auto ll_handle = [&](int seg) { return state.ll.region.slice(static_cast<std::size_t>(seg) * bytes * 2, bytes * 2); };

  if (peer_local == ctx.local_rank()) {
    if (ctx.node_id() != peer_node) {
      const int seg = peer_node * lws + ctx.local_rank();
      const SymHandle h = ll_handle(seg);
      auto slots = w.remote_ptr(h, me);
      recv_ll_pack(ctx, slots, slots, flag);
      multimem_st(ctx, h);
      recv_ll_unpack(ctx, t_seg(seg), slots, flag);
    } else {
      if (!local.empty()) {
        if (local.size() != bytes) throw ArgumentError("allgather_ll: local chunk size mismatch");
        copy_bytes(t_seg(me), local);
      }
      const SymHandle h = ll_handle(me);
      auto slots = w.remote_ptr(h, me);
      sched::step();
      w.counters(me).bump(Primitive::kLLPack);
      ll_pack(slots, t_seg(me), flag);
      for (int node = 0; node < ctx.n_nodes(); ++node) {
        if (node == ctx.node_id()) continue;
        putmem_nbi(ctx, state.ll.region, h.offset - state.ll.region.offset, slots, node * lws + ctx.local_rank());
      }
      multimem_st(ctx, h);
    }
  } else {
    const int seg = peer_node * lws + peer_local;
    recv_ll_unpack(ctx, t_seg(seg), w.remote_ptr(ll_handle(seg), me), flag);
  }
}

// ---------------------------------------------------------------------------

InterReduceScatterBuffers InterReduceScatterBuffers::allocate(World& world, DType dtype, std::size_t m,
                                                              std::size_t n) {
  const int ws = world.world_size();
  if (m == 0 || n == 0) throw ArgumentError("reducescatter_inter: empty matrix");
  if (m % static_cast<std::size_t>(ws) != 0) {
    throw ArgumentError("reducescatter_inter: M=" + std::to_string(m) + " is not divisible by WORLD_SIZE=" +
                        std::to_string(ws));
  }
  InterReduceScatterBuffers b;
  b.dtype = dtype;
  b.m = m;
  b.n = n;
  b.n_nodes = world.n_nodes();
  b.local_world_size = world.local_world_size();
  b.layout = ChunkLayout::split(m * n * dtype_size(dtype), ws, dtype_size(dtype));
  b.partial = world.alloc_symmetric(b.layout.chunk_bytes * static_cast<std::size_t>(b.n_nodes), 8);
  b.scatter = world.alloc_symmetric(b.layout.chunk_bytes * 2 * static_cast<std::size_t>(b.local_world_size), 8);
  b.P = world.alloc_signals(ws);
  b.credit = world.alloc_signals(b.local_world_size);
  return b;
}

int InterReduceScatterBuffers::target_node(const RankCtx& ctx, int it) const {
  if (it < 0 || it >= n_nodes) throw ArgumentError("iteration " + std::to_string(it) + " out of range");
  return (ctx.node_id() + 1 + it) % n_nodes;
}

void reducescatter_inter_scatter(const RankCtx& ctx, const InterReduceScatterBuffers& buf,
                                 std::span<const std::byte> L, int it, SyncStyle style) {
  if (L.size() != buf.layout.total_bytes()) throw ArgumentError("reducescatter_inter: L must be [M, N]");
  const int lws = buf.local_world_size;
  const int lr = ctx.local_rank();
  const int tn = buf.target_node(ctx, it);
  const std::size_t cb = buf.layout.chunk_bytes;
  const std::size_t slot = (static_cast<std::size_t>(it % 2) * static_cast<std::size_t>(lws) + static_cast<std::size_t>(lr)) * cb;
  for (int r : after_self(lr, lws)) {
    const int gr = tn * lws + r;
    await_signal(ctx, buf.P.at(gr), 1, style);
    if (it >= 2) signal_wait_until(ctx, buf.credit.at(r), WaitCond::kGe, static_cast<std::uint64_t>(it - 1));
    putmem(ctx, buf.scatter, slot, L.subspan(buf.layout.offset(gr), cb), ctx.node_id() * lws + r);
  }
  barrier_all_intra_node(ctx);
}

void reducescatter_inter_reduce(const RankCtx& ctx, const InterReduceScatterBuffers& buf, int it,
                                std::span<std::byte> staging) {
  const int lws = buf.local_world_size;
  const std::size_t cb = buf.layout.chunk_bytes;
  if (staging.size() != cb) throw ArgumentError("reducescatter_inter: staging must hold one chunk");
  auto scatter = own(ctx, buf.scatter);
  const std::size_t base = static_cast<std::size_t>(it % 2) * static_cast<std::size_t>(lws) * cb;
  zero(staging);
  for (int w = 0; w < lws; ++w) {
    accumulate(buf.dtype, staging, scatter.subspan(base + static_cast<std::size_t>(w) * cb, cb));
  }
  for (int w = 0; w < lws; ++w) {
    signal_op(ctx, ctx.node_id() * lws + w, buf.credit.at(ctx.local_rank()), SignalOp::kAdd, 1);
  }
  const int target = buf.target_node(ctx, it) * lws + ctx.local_rank();
  putmem_nbi(ctx, buf.partial, static_cast<std::size_t>(ctx.node_id()) * cb, staging, target);
}

void reducescatter_inter_finish(const RankCtx& ctx, const InterReduceScatterBuffers& buf, std::span<std::byte> R) {
  const std::size_t cb = buf.layout.chunk_bytes;
  if (R.size() != cb) throw ArgumentError("reducescatter_inter: R must hold M/WORLD_SIZE rows");
  barrier_all(ctx);
  auto partial = own(ctx, buf.partial);
  zero(R);
  for (int node = 0; node < buf.n_nodes; ++node) {
    accumulate(buf.dtype, R, partial.subspan(static_cast<std::size_t>(node) * cb, cb));
  }
}

// ---------------------------------------------------------------------------

int ExpertRouting::experts_per_rank(int world_size) const { return experts_total / world_size; }

int ExpertRouting::owner(int expert, int world_size) const { return expert / experts_per_rank(world_size); }

int ExpertRouting::tokens(int rank) const {
  return static_cast<int>(expert_ids.at(static_cast<std::size_t>(rank)).size()) / topk;
}

void ExpertRouting::validate(int world_size) const {
  if (topk < 1) throw ArgumentError("topk must be at least 1");
  if (experts_total < world_size || experts_total % world_size != 0) {
    throw ArgumentError(std::to_string(experts_total) + " experts do not split evenly over " +
                        std::to_string(world_size) + " ranks");
  }
  if (static_cast<int>(expert_ids.size()) != world_size) throw ArgumentError("routing must list every rank");
  for (const auto& ids : expert_ids) {
    if (ids.size() % static_cast<std::size_t>(topk) != 0) throw ArgumentError("routing row is not a multiple of topk");
    for (int e : ids) {
      if (e < 0 || e >= experts_total) throw ArgumentError("expert id " + std::to_string(e) + " out of range");
    }
  }
}

AllToAllBuffers AllToAllBuffers::allocate(World& world, std::size_t token_bytes, int max_tokens, int topk,
                                          int experts_per_rank) {
  if (max_tokens < 0 || topk < 1 || experts_per_rank < 1) throw ArgumentError("alltoall: bad capacity");
  AllToAllBuffers b;
  b.token_bytes = token_bytes;
  b.entry_bytes = 16 + (token_bytes + 7) / 8 * 8;
  b.max_tokens = max_tokens;
  b.topk = topk;
  b.experts_per_rank = experts_per_rank;
  const std::size_t per_source = b.capacity_per_source();
  b.recv = world.alloc_symmetric(b.entry_bytes * per_source * static_cast<std::size_t>(world.world_size()), 8);
  b.combine = world.alloc_symmetric(token_bytes * per_source, 8);
  b.counts = world.alloc_signals(world.world_size());
  b.done = world.alloc_signals(1);
  return b;
}

std::vector<DispatchedToken> alltoall_dispatch(const RankCtx& ctx, const AllToAllBuffers& buf,
                                               std::span<const std::byte> tokens, std::span<const int> expert_ids) {
  const int w = ctx.world_size();
  const int me = ctx.rank();
  const std::size_t tb = buf.token_bytes;
  if (expert_ids.size() % static_cast<std::size_t>(buf.topk) != 0) {
    throw ArgumentError("routing row is not a multiple of topk");
  }
  const int n_tokens = static_cast<int>(expert_ids.size()) / buf.topk;
  if (tokens.size() != static_cast<std::size_t>(n_tokens) * tb) throw ArgumentError("alltoall: token buffer size mismatch");
  if (n_tokens > buf.max_tokens) {
    throw CapacityError("alltoall: rank " + std::to_string(me) + " holds " + std::to_string(n_tokens) +
                        " tokens, buffers are sized for " + std::to_string(buf.max_tokens));
  }

  const std::size_t region = buf.entry_bytes * buf.capacity_per_source();
  std::vector<std::byte> staging(buf.entry_bytes * expert_ids.size());
  std::vector<std::uint64_t> sent(static_cast<std::size_t>(w), 0);
  for (std::size_t i = 0; i < expert_ids.size(); ++i) {
    const int token = static_cast<int>(i) / buf.topk;
    const int k = static_cast<int>(i) % buf.topk;
    const int expert = expert_ids[i];
    const int dest = expert / buf.experts_per_rank;
    if (expert < 0 || dest >= w) throw ArgumentError("expert id " + std::to_string(expert) + " out of range");
    std::span<std::byte> entry(staging.data() + i * buf.entry_bytes, buf.entry_bytes);
    const std::int32_t header[4] = {me, token, k, expert};
    std::memcpy(entry.data(), header, sizeof(header));
    std::memcpy(entry.data() + 16, tokens.data() + static_cast<std::size_t>(token) * tb, tb);
    const std::uint64_t slot = sent[static_cast<std::size_t>(dest)]++;
    putmem_nbi(ctx, buf.recv, static_cast<std::size_t>(me) * region + slot * buf.entry_bytes, entry, dest);
  }
  quiet(ctx);
  for (int dest = 0; dest < w; ++dest) {
    signal_op(ctx, dest, buf.counts.at(me), SignalOp::kSet, sent[static_cast<std::size_t>(dest)] + 1);
  }

  std::vector<DispatchedToken> received;
  auto recv = own(ctx, buf.recv);
  for (int src = 0; src < w; ++src) {
    const std::uint64_t count = signal_wait_until(ctx, buf.counts.at(src), WaitCond::kGe, 1) - 1;
    if (count > buf.capacity_per_source()) {
      throw CapacityError("alltoall: " + std::to_string(count) + " entries from rank " + std::to_string(src) +
                          " exceed the per-source capacity " + std::to_string(buf.capacity_per_source()));
    }
    for (std::uint64_t slot = 0; slot < count; ++slot) {
      const std::byte* entry = recv.data() + static_cast<std::size_t>(src) * region + slot * buf.entry_bytes;
      std::int32_t header[4];
      std::memcpy(header, entry, sizeof(header));
      DispatchedToken t;
      t.src_rank = header[0];
      t.token = header[1];
      t.k = header[2];
      t.expert = header[3];
      t.data.assign(entry + 16, entry + 16 + tb);
      received.push_back(std::move(t));
    }
  }
  return received;
}

void alltoall_combine(const RankCtx& ctx, const AllToAllBuffers& buf, DType dtype,
                      const std::vector<DispatchedToken>& outputs, int n_tokens, std::span<std::byte> out) {
  const std::size_t tb = buf.token_bytes;
  if (n_tokens < 0 || n_tokens > buf.max_tokens) throw CapacityError("alltoall: token count exceeds capacity");
  if (out.size() != static_cast<std::size_t>(n_tokens) * tb) throw ArgumentError("alltoall: output size mismatch");
  const int w = ctx.world_size();
  std::vector<std::uint64_t> returned(static_cast<std::size_t>(w), 0);
  for (const auto& t : outputs) {
    if (t.data.size() != tb) throw ArgumentError("alltoall: expert output has the wrong size");
    if (t.token < 0 || t.token >= buf.max_tokens || t.k < 0 || t.k >= buf.topk) {
      throw CapacityError("alltoall: combine slot out of range");
    }
    const std::size_t slot = static_cast<std::size_t>(t.token) * static_cast<std::size_t>(buf.topk) +
                             static_cast<std::size_t>(t.k);
    putmem_nbi(ctx, buf.combine, slot * tb, t.data, t.src_rank);
    ++returned[static_cast<std::size_t>(t.src_rank)];
  }
  quiet(ctx);
  for (int src = 0; src < w; ++src) {
    if (returned[static_cast<std::size_t>(src)] > 0) {
      signal_op(ctx, src, buf.done.at(0), SignalOp::kAdd, returned[static_cast<std::size_t>(src)]);
    }
  }
  const auto expected = static_cast<std::uint64_t>(n_tokens) * static_cast<std::uint64_t>(buf.topk);
  if (expected > 0) signal_wait_until(ctx, buf.done.at(0), WaitCond::kGe, expected);
  auto combine = own(ctx, buf.combine);
  zero(out);
  for (int t = 0; t < n_tokens; ++t) {
    auto dst = out.subspan(static_cast<std::size_t>(t) * tb, tb);
    for (int k = 0; k < buf.topk; ++k) {
      const std::size_t slot = static_cast<std::size_t>(t) * static_cast<std::size_t>(buf.topk) + static_cast<std::size_t>(k);
      accumulate(dtype, dst, combine.subspan(slot * tb, tb));
    }
  }
}

// ---------------------------------------------------------------------------

CollectiveRun run_allgather_intra(World& world, AllGatherMode mode, const std::vector<LocalBuffer>& inputs,
                                  const CollectiveOptions& options) {
  check_inputs(world, inputs, "allgather");
  const int w = world.world_size();
  const std::size_t cb = inputs.front().size();
  World::AllocScope alloc(world);
  const AllGatherBuffers buf = AllGatherBuffers::allocate(world, cb);
  CollectiveRun run;
  run.outputs.assign(static_cast<std::size_t>(w), LocalBuffer(cb * static_cast<std::size_t>(w)));
  Program program(w);
  for (int r = 0; r < w; ++r) {
    const int comm = program.stream(r, "comm", TaskRole::kCopyEngine);
    const int consumer = program.stream(r, "consumer", TaskRole::kCompute);
    const std::span<const int> order = rank_order(options, r);
    if (mode == AllGatherMode::kPush) {
      program.task(comm, "allgather_push", [&, r](const RankCtx& ctx) {
        allgather_push_intra(ctx, buf, inputs[static_cast<std::size_t>(r)]);
      });
    } else {
      program.task(comm, "allgather_pull", [&, r, order](const RankCtx& ctx) {
        allgather_pull_intra(ctx, buf, inputs[static_cast<std::size_t>(r)], order);
      });
    }
    program.task(consumer, "collect", [&, r](const RankCtx& ctx) {
      allgather_collect(ctx, buf, run.outputs[static_cast<std::size_t>(r)], options.sync);
    });
  }
  run.report = launch_collective(world, program, options.launch);
  if (!run.report.ok) run.outputs.clear();
  return run;
}

CollectiveRun run_reducescatter_intra(World& world, DType dtype, const std::vector<LocalBuffer>& inputs,
                                      const CollectiveOptions& options) {
  check_inputs(world, inputs, "reducescatter");
  const int w = world.world_size();
  const ChunkLayout layout = ChunkLayout::split(inputs.front().size(), w, dtype_size(dtype));
  World::AllocScope alloc(world);
  const ReduceScatterBuffers buf = ReduceScatterBuffers::allocate(world, dtype, layout.chunk_bytes);
  CollectiveRun run;
  run.outputs.assign(static_cast<std::size_t>(w), LocalBuffer(layout.chunk_bytes));
  std::vector<LocalBuffer> L(static_cast<std::size_t>(w), LocalBuffer(layout.total_bytes()));
  Program program(w);
  for (int r = 0; r < w; ++r) {
    const int producer = program.stream(r, "producer", TaskRole::kCompute);
    const int scatter = program.stream(r, "scatter", TaskRole::kCopyEngine);
    const int reduce = program.stream(r, "reduce", TaskRole::kCompute);
    const std::span<const int> order = rank_order(options, r);
    std::vector<int> produce_order = order.empty() ? after_self(r, w) : std::vector<int>(order.begin(), order.end());
    program.task(producer, "produce", [&, r, produce_order](const RankCtx& ctx) {
      auto& l = L[static_cast<std::size_t>(r)];
      const auto& in = inputs[static_cast<std::size_t>(r)];
      for (int c : produce_order) {
        const std::size_t off = layout.offset(c);
        std::memcpy(l.data() + off, in.data() + off, layout.chunk_bytes);
        produce_chunk(ctx, buf.P, c);
      }
    });
    program.task(scatter, "scatter", [&, r, order](const RankCtx& ctx) {
      reducescatter_push_scatter(ctx, buf, L[static_cast<std::size_t>(r)], options.sync, order);
    });
    program.task(reduce, "reduce", [&, r](const RankCtx& ctx) {
      reducescatter_push_reduce(ctx, buf, run.outputs[static_cast<std::size_t>(r)], options.sync);
    });
  }
  run.report = launch_collective(world, program, options.launch);
  if (!run.report.ok) run.outputs.clear();
  return run;
}

CollectiveRun run_allgather_ll(World& world, LLAllGatherState& state, const std::vector<LocalBuffer>& inputs,
                               const CollectiveOptions& options) {
  check_inputs(world, inputs, "allgather_ll");
  if (inputs.front().size() != state.bytes_per_rank) throw ArgumentError("allgather_ll: input size mismatch");
  const int w = world.world_size();
  const std::uint32_t flag = round_flag(state.iteration++);
  CollectiveRun run;
  run.outputs.assign(static_cast<std::size_t>(w), LocalBuffer(state.bytes_per_rank * static_cast<std::size_t>(w)));
  Program program(w);
  for (int r = 0; r < w; ++r) {
    RankCtx ctx = world.ctx(r);
    const BlockAssignment blocks = ll_block_assignment(ctx);
    for (int b = 0; b < w; ++b) {
      const int s = program.stream(r, "block" + std::to_string(b), blocks.role(b));
      program.task(s, "allgather_ll", [&, r, b, flag](const RankCtx& c) {
        allgather_ll_block(c, state, b, flag,
                           b == r ? std::span<const std::byte>(inputs[static_cast<std::size_t>(r)]) : std::span<const std::byte>{});
      });
    }
  }
  run.report = launch_collective(world, program, options.launch);
  if (!run.report.ok) {
    run.outputs.clear();
    return run;
  }
  for (int r = 0; r < w; ++r) {
    auto t = world.remote_ptr(state.T, r);
    std::memcpy(run.outputs[static_cast<std::size_t>(r)].data(), t.data(), t.size());
  }
  return run;
}

CollectiveRun run_allgather_ll(World& world, const std::vector<LocalBuffer>& inputs, const CollectiveOptions& options) {
  check_inputs(world, inputs, "allgather_ll");
  World::AllocScope alloc(world);
  LLAllGatherState state = LLAllGatherState::allocate(world, inputs.front().size());
  return run_allgather_ll(world, state, inputs, options);
}

CollectiveRun run_reducescatter_inter(World& world, DType dtype, std::size_t m, std::size_t n,
                                      const std::vector<LocalBuffer>& inputs, const CollectiveOptions& options) {
  check_inputs(world, inputs, "reducescatter_inter");
  const int w = world.world_size();
  World::AllocScope alloc(world);
  const InterReduceScatterBuffers buf = InterReduceScatterBuffers::allocate(world, dtype, m, n);
  if (inputs.front().size() != buf.layout.total_bytes()) throw ArgumentError("reducescatter_inter: input is not [M, N]");
  const std::size_t cb = buf.layout.chunk_bytes;
  CollectiveRun run;
  run.outputs.assign(static_cast<std::size_t>(w), LocalBuffer(cb));
  std::vector<LocalBuffer> L(static_cast<std::size_t>(w), LocalBuffer(buf.layout.total_bytes()));
  std::vector<LocalBuffer> staging(static_cast<std::size_t>(w), LocalBuffer(cb));
  Program program(w);
  for (int r = 0; r < w; ++r) {
    const int producer = program.stream(r, "producer", TaskRole::kCompute);
    const int s0 = program.stream(r, "stream0", TaskRole::kCopyEngine);
    const int s1 = program.stream(r, "stream1", TaskRole::kCommBlock);
    const std::vector<int> order = rs_inter_order(r, world.n_nodes(), world.local_world_size()).chunk_order();
    program.task(producer, "produce", [&, r, order](const RankCtx& ctx) {
      auto& l = L[static_cast<std::size_t>(r)];
      const auto& in = inputs[static_cast<std::size_t>(r)];
      for (int c : order) {
        const std::size_t off = buf.layout.offset(c);
        std::memcpy(l.data() + off, in.data() + off, cb);
        produce_chunk(ctx, buf.P, c);
      }
    });
    for (int it = 0; it < buf.n_nodes; ++it) {
      program.task(s0, "scatter" + std::to_string(it), [&, r, it](const RankCtx& ctx) {
        reducescatter_inter_scatter(ctx, buf, L[static_cast<std::size_t>(r)], it, options.sync);
      });
      program.stream_wait(s1, s0);
      program.task(s1, "reduce" + std::to_string(it), [&, r, it](const RankCtx& ctx) {
        reducescatter_inter_reduce(ctx, buf, it, staging[static_cast<std::size_t>(r)]);
      });
    }
    program.task(s1, "finish", [&, r](const RankCtx& ctx) {
      reducescatter_inter_finish(ctx, buf, run.outputs[static_cast<std::size_t>(r)]);
    });
  }
  run.report = launch_collective(world, program, options.launch);
  if (!run.report.ok) run.outputs.clear();
  return run;
}

AllToAllRun run_alltoall(World& world, DType dtype, const std::vector<LocalBuffer>& tokens,
                         const ExpertRouting& routing, int max_tokens, const ExpertFn& expert,
                         const CollectiveOptions& options) {
  const int w = world.world_size();
  routing.validate(w);
  if (static_cast<int>(tokens.size()) != w) throw ArgumentError("alltoall: need one token buffer per rank");
  std::size_t token_bytes = 0;
  for (int r = 0; r < w; ++r) {
    const int n = routing.tokens(r);
    if (n > 0) {
      token_bytes = tokens[static_cast<std::size_t>(r)].size() / static_cast<std::size_t>(n);
      break;
    }
  }
  for (int r = 0; r < w; ++r) {
    if (tokens[static_cast<std::size_t>(r)].size() != token_bytes * static_cast<std::size_t>(routing.tokens(r))) {
      throw ArgumentError("alltoall: token buffer of rank " + std::to_string(r) + " does not match its routing");
    }
  }
  if (token_bytes % dtype_size(dtype) != 0) throw ArgumentError("alltoall: token is not a whole number of elements");

  World::AllocScope alloc(world);
  const AllToAllBuffers buf =
      AllToAllBuffers::allocate(world, token_bytes, max_tokens, routing.topk, routing.experts_per_rank(w));
  AllToAllRun run;
  run.received.resize(static_cast<std::size_t>(w));
  run.combined.resize(static_cast<std::size_t>(w));
  std::vector<std::vector<DispatchedToken>> outputs(static_cast<std::size_t>(w));
  Program program(w);
  for (int r = 0; r < w; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    run.combined[ri].resize(tokens[ri].size());
    const int s = program.stream(r, "moe", TaskRole::kCommBlock);
    program.task(s, "dispatch", [&, ri](const RankCtx& ctx) {
      run.received[ri] = alltoall_dispatch(ctx, buf, tokens[ri], routing.expert_ids[ri]);
    });
    program.task(s, "experts", TaskRole::kCompute, [&, ri](const RankCtx&) {
      const auto& in = run.received[ri];
      outputs[ri] = in;
      if (!expert) return;
      for (std::size_t i = 0; i < in.size(); ++i) expert(in[i].expert, in[i].data, outputs[ri][i].data);
    });
    program.task(s, "combine", [&, r, ri](const RankCtx& ctx) {
      alltoall_combine(ctx, buf, dtype, outputs[ri], routing.tokens(r), run.combined[ri]);
    });
  }
  run.report = launch_collective(world, program, options.launch);
  if (!run.report.ok) {
    run.received.clear();
    run.combined.clear();
  }
  return run;
}

}  // namespace onesided
