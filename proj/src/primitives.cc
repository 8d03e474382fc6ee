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

#include "onesided/primitives.h"

#include <string>

namespace onesided {
namespace {

// Bookkeeping shared by every primitive: the counter, opportunistic progress
// of the caller's own non-blocking queue, then a scheduling point.
void enter(const RankCtx& ctx, Primitive p) {
  World& w = ctx.world();
  w.counters(ctx.rank()).bump(p);
  w.progress(ctx.rank());
  sched::step();
}

void trace(const RankCtx& ctx, Primitive p, int peer, std::size_t bytes, int sig, std::uint64_t value,
           std::string task) {
  World& w = ctx.world();
  if (!w.tracing()) return;
  w.record(TraceRecord{0, ctx.rank(), std::move(task), p, peer, bytes, sig, value});
}

std::string task_name() { return std::string(sched::current_task()); }

std::span<std::byte> remote_range(const RankCtx& ctx, const SymHandle& h, std::size_t offset, std::size_t bytes,
                                  int peer) {
  World& w = ctx.world();
  w.check_rank(peer);
  return w.remote_ptr(h.slice(offset, bytes), peer);
}

std::uint64_t apply_signal(World& w, int peer, int sig, SignalOp op, std::uint64_t value) {
  auto word = w.signal(peer, sig);
  if (op == SignalOp::kSet) {
    word.store(value, std::memory_order_release);
    return value;
  }
  return word.fetch_add(value, std::memory_order_acq_rel) + value;
}

std::string signal_desc(const RankCtx& ctx, int sig, WaitCond cond, std::uint64_t value) {
  return "signal " + std::to_string(sig) + " on rank " + std::to_string(ctx.rank()) + " " +
         std::string(to_string(cond)) + " " + std::to_string(value);
}

}  // namespace

std::string_view to_string(SignalOp op) { return op == SignalOp::kSet ? "SET" : "ADD"; }

std::string_view to_string(WaitCond cond) {
  switch (cond) {
    case WaitCond::kEq: return "EQ";
    case WaitCond::kNe: return "NE";
    case WaitCond::kGe: return "GE";
    case WaitCond::kGt: return "GT";
    case WaitCond::kLe: return "LE";
    case WaitCond::kLt: return "LT";
  }
  return "?";
}

bool satisfies(std::uint64_t observed, WaitCond cond, std::uint64_t value) {
  switch (cond) {
    case WaitCond::kEq: return observed == value;
    case WaitCond::kNe: return observed != value;
    case WaitCond::kGe: return observed >= value;
    case WaitCond::kGt: return observed > value;
    case WaitCond::kLe: return observed <= value;
    case WaitCond::kLt: return observed < value;
  }
  return false;
}

void copy_bytes(std::span<std::byte> dst, std::span<const std::byte> src) {
  const std::size_t n = src.size();
  if (dst.size() < n) throw RangeError("copy destination smaller than source");
  if (n == 0 || dst.data() == src.data()) return;
  const auto d = reinterpret_cast<std::uintptr_t>(dst.data());
  const auto s = reinterpret_cast<std::uintptr_t>(src.data());
  if (d % 8 == 0 && s % 8 == 0 && n % 8 == 0) {
    auto* dw = reinterpret_cast<std::uint64_t*>(dst.data());
    auto* sw = reinterpret_cast<std::uint64_t*>(const_cast<std::byte*>(src.data()));
    for (std::size_t i = 0; i < n / 8; ++i) {
      std::atomic_ref<std::uint64_t>(dw[i]).store(std::atomic_ref<std::uint64_t>(sw[i]).load(std::memory_order_relaxed),
                                                  std::memory_order_relaxed);
    }
    return;
  }
  std::memmove(dst.data(), src.data(), n);
}

int my_pe(const RankCtx& ctx) { return ctx.rank(); }
int n_pes(const RankCtx& ctx) { return ctx.world_size(); }

void putmem(const RankCtx& ctx, const SymHandle& dst, std::size_t dst_offset, std::span<const std::byte> src,
            int peer) {
  auto target = remote_range(ctx, dst, dst_offset, src.size(), peer);
  enter(ctx, Primitive::kPutmem);
  copy_bytes(target, src);
  trace(ctx, Primitive::kPutmem, peer, src.size(), -1, 0, task_name());
}

void putmem_nbi(const RankCtx& ctx, const SymHandle& dst, std::size_t dst_offset, std::span<const std::byte> src,
                int peer) {
  auto target = remote_range(ctx, dst, dst_offset, src.size(), peer);
  enter(ctx, Primitive::kPutmemNbi);
  ctx.world().submit(ctx.rank(), peer, [ctx, target, src, peer, task = task_name()]() mutable {
    copy_bytes(target, src);
    trace(ctx, Primitive::kPutmemNbi, peer, src.size(), -1, 0, std::move(task));
  });
}

void getmem(const RankCtx& ctx, std::span<std::byte> dst, const SymHandle& src, std::size_t src_offset, int peer) {
  auto source = remote_range(ctx, src, src_offset, dst.size(), peer);
  enter(ctx, Primitive::kGetmem);
  copy_bytes(dst, source);
  trace(ctx, Primitive::kGetmem, peer, dst.size(), -1, 0, task_name());
}

void getmem_nbi(const RankCtx& ctx, std::span<std::byte> dst, const SymHandle& src, std::size_t src_offset,
                int peer) {
  auto source = remote_range(ctx, src, src_offset, dst.size(), peer);
  enter(ctx, Primitive::kGetmemNbi);
  ctx.world().submit(ctx.rank(), peer, [ctx, dst, source, peer, task = task_name()]() mutable {
    copy_bytes(dst, source);
    trace(ctx, Primitive::kGetmemNbi, peer, dst.size(), -1, 0, std::move(task));
  });
}

void putmem_signal(const RankCtx& ctx, const SymHandle& dst, std::size_t dst_offset, std::span<const std::byte> src,
                   int sig, std::uint64_t sig_value, SignalOp op, int peer) {
  World& w = ctx.world();
  w.check_signal(sig);
  auto target = remote_range(ctx, dst, dst_offset, src.size(), peer);
  enter(ctx, Primitive::kPutmemSignal);
  copy_bytes(target, src);
  const std::uint64_t after = apply_signal(w, peer, sig, op, sig_value);
  trace(ctx, Primitive::kPutmemSignal, peer, src.size(), sig, after, task_name());
}

void putmem_signal_nbi(const RankCtx& ctx, const SymHandle& dst, std::size_t dst_offset,
                       std::span<const std::byte> src, int sig, std::uint64_t sig_value, SignalOp op, int peer) {
  World& w = ctx.world();
  w.check_signal(sig);
  auto target = remote_range(ctx, dst, dst_offset, src.size(), peer);
  enter(ctx, Primitive::kPutmemSignalNbi);
  w.submit(ctx.rank(), peer, [ctx, target, src, sig, sig_value, op, peer, task = task_name()]() mutable {
    copy_bytes(target, src);
    const std::uint64_t after = apply_signal(ctx.world(), peer, sig, op, sig_value);
    trace(ctx, Primitive::kPutmemSignalNbi, peer, src.size(), sig, after, std::move(task));
  });
}

void signal_op(const RankCtx& ctx, int peer, int sig, SignalOp op, std::uint64_t value) {
  World& w = ctx.world();
  w.check_rank(peer);
  w.check_signal(sig);
  enter(ctx, Primitive::kSignalOp);
  const std::uint64_t after = apply_signal(w, peer, sig, op, value);
  trace(ctx, Primitive::kSignalOp, peer, 0, sig, after, task_name());
}

void notify(const RankCtx& ctx, int peer, int sig, std::uint64_t value) {
  ctx.world().counters(ctx.rank()).bump(Primitive::kNotify);
  signal_op(ctx, peer, sig, SignalOp::kSet, value);
}

std::uint64_t signal_wait_until(const RankCtx& ctx, int sig, WaitCond cond, std::uint64_t value) {
  World& w = ctx.world();
  w.check_signal(sig);
  enter(ctx, Primitive::kSignalWaitUntil);
  auto word = w.signal(ctx.rank(), sig);
  std::uint64_t observed = 0;
  const int me = ctx.rank();
  const std::string what = signal_desc(ctx, sig, cond, value);
  spin_until(
      w.wait_policy(), what,
      [&] {
        observed = word.load(std::memory_order_acquire);
        return satisfies(observed, cond, value);
      },
      [&] { return w.progress(me); });
  trace(ctx, Primitive::kSignalWaitUntil, ctx.rank(), 0, sig, observed, task_name());
  return observed;
}

Token wait(const RankCtx& ctx, int sig, std::uint64_t value) {
  ctx.world().counters(ctx.rank()).bump(Primitive::kWait);
  const std::uint64_t observed = signal_wait_until(ctx, sig, WaitCond::kEq, value);
  return Token(sig, observed);
}

void consume_token_checked(Token& token) {
  if (token.consumed_) throw UsageError("token for signal " + std::to_string(token.signal_) + " consumed twice");
  token.consumed_ = true;
}

std::uint64_t atomic_cas(const RankCtx& ctx, int peer, int sig, std::uint64_t expected, std::uint64_t desired) {
  World& w = ctx.world();
  w.check_rank(peer);
  w.check_signal(sig);
  enter(ctx, Primitive::kAtomicCas);
  std::uint64_t old = expected;
  w.signal(peer, sig).compare_exchange_strong(old, desired, std::memory_order_acq_rel, std::memory_order_acquire);
  trace(ctx, Primitive::kAtomicCas, peer, 0, sig, old == expected ? desired : old, task_name());
  return old;
}

std::uint64_t atomic_add(const RankCtx& ctx, int peer, int sig, std::uint64_t delta) {
  World& w = ctx.world();
  w.check_rank(peer);
  w.check_signal(sig);
  enter(ctx, Primitive::kAtomicAdd);
  const std::uint64_t old = w.signal(peer, sig).fetch_add(delta, std::memory_order_acq_rel);
  trace(ctx, Primitive::kAtomicAdd, peer, 0, sig, old + delta, task_name());
  return old;
}

std::uint64_t ld_acquire(const RankCtx& ctx, int peer, int sig) {
  World& w = ctx.world();
  w.check_rank(peer);
  w.check_signal(sig);
  enter(ctx, Primitive::kLdAcquire);
  return w.signal(peer, sig).load(std::memory_order_acquire);
}

void red_release(const RankCtx& ctx, int peer, int sig, std::uint64_t delta) {
  World& w = ctx.world();
  w.check_rank(peer);
  w.check_signal(sig);
  enter(ctx, Primitive::kRedRelease);
  const std::uint64_t after = w.signal(peer, sig).fetch_add(delta, std::memory_order_release) + delta;
  trace(ctx, Primitive::kRedRelease, peer, 0, sig, after, task_name());
}

void multimem_st(const RankCtx& ctx, const SymHandle& h) {
  World& w = ctx.world();
  auto src = w.remote_ptr(h, ctx.rank());
  enter(ctx, Primitive::kMultimemSt);
  const int first = ctx.node_id() * ctx.local_world_size();
  for (int r = first; r < first + ctx.local_world_size(); ++r) {
    if (r == ctx.rank()) continue;
    copy_bytes(w.remote_ptr(h, r), src);
  }
  trace(ctx, Primitive::kMultimemSt, -1, h.length, -1, 0, task_name());
}

namespace detail {

void check_multimem_width(const SymHandle& h, std::size_t width) {
  if (width == 0 || h.length % width != 0) {
    throw ArgumentError("multimem length " + std::to_string(h.length) + " is not a multiple of element width " +
                        std::to_string(width));
  }
}

void count_multimem_ld(const RankCtx& ctx, const SymHandle& h) {
  enter(ctx, Primitive::kMultimemLdReduce);
  trace(ctx, Primitive::kMultimemLdReduce, -1, h.length, -1, 0, task_name());
}

}  // namespace detail

void broadcast(const RankCtx& ctx, int root, const SymHandle& h) {
  World& w = ctx.world();
  w.check_rank(root);
  enter(ctx, Primitive::kBroadcast);
  if (ctx.world_size() == 1) return;
  w.scratch(ctx.rank()).store(root, std::memory_order_release);
  barrier_all(ctx);
  for (int r = 0; r < ctx.world_size(); ++r) {
    const std::int64_t other = w.scratch(r).load(std::memory_order_acquire);
    if (other != root) {
      throw ConfigError("broadcast root mismatch: rank " + std::to_string(ctx.rank()) + " uses " +
                        std::to_string(root) + ", rank " + std::to_string(r) + " uses " + std::to_string(other));
    }
  }
  if (ctx.rank() == root) {
    auto src = w.remote_ptr(h, root);
    for (int r = 0; r < ctx.world_size(); ++r) {
      if (r != root) putmem(ctx, h, 0, src, r);
    }
  }
  barrier_all(ctx);
}

void int_p(const RankCtx& ctx, int peer, const SymHandle& h, std::size_t offset, std::int64_t value) {
  auto target = remote_range(ctx, h, offset, sizeof(std::int64_t), peer);
  if (reinterpret_cast<std::uintptr_t>(target.data()) % alignof(std::int64_t) != 0) {
    throw RangeError("int_p target is not word aligned");
  }
  enter(ctx, Primitive::kIntP);
  std::atomic_ref<std::int64_t>(*reinterpret_cast<std::int64_t*>(target.data())).store(value, std::memory_order_release);
  trace(ctx, Primitive::kIntP, peer, sizeof(std::int64_t), -1, 0, task_name());
}

std::int64_t int_g(const RankCtx& ctx, int peer, const SymHandle& h, std::size_t offset) {
  auto source = remote_range(ctx, h, offset, sizeof(std::int64_t), peer);
  if (reinterpret_cast<std::uintptr_t>(source.data()) % alignof(std::int64_t) != 0) {
    throw RangeError("int_g source is not word aligned");
  }
  sched::step();
  return std::atomic_ref<std::int64_t>(*reinterpret_cast<std::int64_t*>(source.data())).load(std::memory_order_acquire);
}

void barrier_all(const RankCtx& ctx) {
  enter(ctx, Primitive::kBarrierAll);
  World& w = ctx.world();
  w.drain(ctx.rank());
  const std::uint64_t gen = w.rendezvous(ctx.rank(), true);
  trace(ctx, Primitive::kBarrierAll, -1, 0, -1, gen, task_name());
}

void sync_all(const RankCtx& ctx) {
  enter(ctx, Primitive::kSyncAll);
  const std::uint64_t gen = ctx.world().rendezvous(ctx.rank(), true);
  trace(ctx, Primitive::kSyncAll, -1, 0, -1, gen, task_name());
}

void barrier_all_intra_node(const RankCtx& ctx) {
  enter(ctx, Primitive::kBarrierAllIntraNode);
  World& w = ctx.world();
  w.drain(ctx.rank());
  const std::uint64_t gen = w.rendezvous(ctx.rank(), false);
  trace(ctx, Primitive::kBarrierAllIntraNode, ctx.node_id(), 0, -1, gen, task_name());
}

void quiet(const RankCtx& ctx) {
  enter(ctx, Primitive::kQuiet);
  ctx.world().drain(ctx.rank());
}

void fence(const RankCtx& ctx) {
  enter(ctx, Primitive::kFence);
  ctx.world().fence(ctx.rank());
}

}  // namespace onesided
