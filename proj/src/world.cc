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

#include "onesided/world.h"

#include <algorithm>
#include <cstring>

#include "onesided/errors.h"

namespace onesided {
namespace {

constexpr std::size_t kSlabAlign = 64;

std::size_t round_up(std::size_t v, std::size_t align) { return (v + align - 1) / align * align; }

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

void WorldSpec::validate() const {
  if (world_size < 1) throw ConfigError("world_size must be >= 1");
  if (n_nodes < 1 || local_world_size < 1) throw ConfigError("n_nodes and local_world_size must be >= 1");
  if (world_size != n_nodes * local_world_size) {
    throw ConfigError("world_size " + std::to_string(world_size) + " != n_nodes " + std::to_string(n_nodes) +
                      " x local_world_size " + std::to_string(local_world_size));
  }
  if (heap_bytes == 0) throw ConfigError("heap_bytes must be > 0");
  if (signal_count < world_size) throw ConfigError("signal_count must be >= world_size");
}

SymHandle SymHandle::slice(std::size_t at, std::size_t bytes) const {
  if (at > length || bytes > length - at) {
    throw RangeError("slice [" + std::to_string(at) + ", +" + std::to_string(bytes) + ") exceeds handle of " +
                     std::to_string(length) + " bytes");
  }
  return SymHandle{offset + at, bytes};
}

int SignalSet::at(int i) const {
  if (i < 0 || i >= count) {
    throw ArgumentError("signal " + std::to_string(i) + " outside set of " + std::to_string(count));
  }
  return base + i;
}

RankCtx::RankCtx(World& world, int rank) : world_(&world), rank_(rank) {
  world.check_rank(rank);
  node_id_ = rank / world.local_world_size();
  local_rank_ = rank % world.local_world_size();
}

int RankCtx::world_size() const { return world_->world_size(); }
int RankCtx::n_nodes() const { return world_->n_nodes(); }
int RankCtx::local_world_size() const { return world_->local_world_size(); }

std::string_view to_string(Primitive p) {
  switch (p) {
    case Primitive::kPutmem: return "putmem";
    case Primitive::kPutmemNbi: return "putmem_nbi";
    case Primitive::kGetmem: return "getmem";
    case Primitive::kGetmemNbi: return "getmem_nbi";
    case Primitive::kPutmemSignal: return "putmem_signal";
    case Primitive::kPutmemSignalNbi: return "putmem_signal_nbi";
    case Primitive::kSignalOp: return "signal_op";
    case Primitive::kNotify: return "notify";
    case Primitive::kSignalWaitUntil: return "signal_wait_until";
    case Primitive::kWait: return "wait";
    case Primitive::kConsumeToken: return "consume_token";
    case Primitive::kAtomicCas: return "atomic_cas";
    case Primitive::kAtomicAdd: return "atomic_add";
    case Primitive::kLdAcquire: return "ld_acquire";
    case Primitive::kRedRelease: return "red_release";
    case Primitive::kMultimemSt: return "multimem_st";
    case Primitive::kMultimemLdReduce: return "multimem_ld_reduce";
    case Primitive::kBroadcast: return "broadcast";
    case Primitive::kIntP: return "int_p";
    case Primitive::kBarrierAll: return "barrier_all";
    case Primitive::kSyncAll: return "sync_all";
    case Primitive::kBarrierAllIntraNode: return "barrier_all_intra_node";
    case Primitive::kQuiet: return "quiet";
    case Primitive::kFence: return "fence";
    case Primitive::kLLPack: return "ll_pack";
    case Primitive::kRecvLLPack: return "recv_ll_pack";
    case Primitive::kRecvLLUnpack: return "recv_ll_unpack";
    case Primitive::kCopyAsync: return "copy_async";
    case Primitive::kSignalReset: return "signal_reset";
    case Primitive::kCount: break;
  }
  return "?";
}

void PrimitiveCounters::reset() {
  for (auto& c : counts_) c.store(0, std::memory_order_relaxed);
}

World::World(const WorldSpec& spec, WorldOptions options) : spec_(spec), options_(options) {
  spec_.validate();
  data_bytes_ = round_up(spec_.heap_bytes, kSlabAlign);
  stride_ = data_bytes_ + round_up(static_cast<std::size_t>(spec_.signal_count) * sizeof(std::uint64_t), kSlabAlign);
  const std::size_t total = stride_ * static_cast<std::size_t>(spec_.world_size);
  arena_ = std::make_unique<std::byte[]>(total);  // value-initialized: all zero
  policy_.cancelled = &cancelled_;
  policy_.timeout = options_.timeout;

  scratch_ = std::make_unique<std::atomic<std::int64_t>[]>(static_cast<std::size_t>(spec_.world_size));
  global_barrier_.size = spec_.world_size;
  for (int n = 0; n < spec_.n_nodes; ++n) {
    auto b = std::make_unique<BarrierState>();
    b->size = spec_.local_world_size;
    node_barriers_.push_back(std::move(b));
  }
  for (int r = 0; r < spec_.world_size; ++r) {
    auto q = std::make_unique<RankQueue>();
    q->rng.seed(options_.delivery_seed * 1000003u + static_cast<std::uint64_t>(r));
    queues_.push_back(std::move(q));
    counters_.push_back(std::make_unique<PrimitiveCounters>());
  }
}

World::~World() = default;

RankCtx World::ctx(int rank) { return RankCtx(*this, rank); }

void World::check_rank(int rank) const {
  if (rank < 0 || rank >= spec_.world_size) {
    throw ArgumentError("rank " + std::to_string(rank) + " outside world of " + std::to_string(spec_.world_size));
  }
}

void World::check_signal(int sig) const {
  if (sig < 0 || sig >= spec_.signal_count) {
    throw ArgumentError("signal index " + std::to_string(sig) + " outside pad of " +
                        std::to_string(spec_.signal_count));
  }
}

SymHandle World::alloc_symmetric(std::size_t bytes, std::size_t align) {
  if (!is_pow2(align)) throw ArgumentError("alignment must be a power of two");
  const std::size_t offset = round_up(heap_cursor_, align);
  if (offset > spec_.heap_bytes || bytes > spec_.heap_bytes - offset) {
    throw AllocError("symmetric heap exhausted: requested " + std::to_string(bytes) + " bytes at offset " +
                     std::to_string(offset) + " of " + std::to_string(spec_.heap_bytes));
  }
  heap_cursor_ = offset + bytes;
  return SymHandle{offset, bytes};
}

void World::release_to(const AllocMark& mark) {
  if (mark.heap > heap_cursor_ || mark.signals > signal_cursor_) throw UsageError("release_to a mark ahead of the cursor");
  for (int r = 0; r < spec_.world_size; ++r) {
    std::memset(slab_base(r) + mark.heap, 0, heap_cursor_ - mark.heap);
    for (int s = mark.signals; s < signal_cursor_; ++s) signal(r, s).store(0, std::memory_order_release);
  }
  heap_cursor_ = mark.heap;
  signal_cursor_ = mark.signals;
}

SignalSet World::alloc_signals(int count) {
  if (count < 0 || signal_cursor_ + count > spec_.signal_count) {
    throw AllocError("signal pad exhausted: requested " + std::to_string(count) + " of " +
                     std::to_string(spec_.signal_count - signal_cursor_) + " remaining");
  }
  SignalSet s{signal_cursor_, count};
  signal_cursor_ += count;
  return s;
}

std::span<std::byte> World::remote_ptr(const SymHandle& h, int peer) {
  check_rank(peer);
  if (h.offset > spec_.heap_bytes || h.length > spec_.heap_bytes - h.offset) {
    throw RangeError("handle exceeds symmetric heap");
  }
  return {slab_base(peer) + h.offset, h.length};
}

std::span<const std::byte> World::remote_ptr(const SymHandle& h, int peer) const {
  return const_cast<World*>(this)->remote_ptr(h, peer);
}

std::span<const std::byte> World::slab(int rank) const {
  check_rank(rank);
  return {slab_base(rank), spec_.heap_bytes};
}

std::atomic_ref<std::uint64_t> World::signal(int rank, int sig) {
  check_rank(rank);
  check_signal(sig);
  auto* words = reinterpret_cast<std::uint64_t*>(slab_base(rank) + data_bytes_);
  return std::atomic_ref<std::uint64_t>(words[sig]);
}

std::uint64_t World::peek_signal(int rank, int sig) const {
  return const_cast<World*>(this)->signal(rank, sig).load(std::memory_order_acquire);
}

void World::reset_signals() {
  if (collective_in_flight()) throw UsageError("reset_signals while a collective is in flight");
  if (pending_total() != 0) throw UsageError("reset_signals with non-blocking operations pending");
  for (int r = 0; r < spec_.world_size; ++r) {
    for (int s = 0; s < spec_.signal_count; ++s) signal(r, s).store(0, std::memory_order_release);
  }
  if (tracing()) record(TraceRecord{0, -1, {}, Primitive::kSignalReset, -1, 0, -1, 0});
}

bool World::signals_all_zero() const {
  for (int r = 0; r < spec_.world_size; ++r) {
    for (int s = 0; s < spec_.signal_count; ++s) {
      if (peek_signal(r, s) != 0) return false;
    }
  }
  return true;
}

std::uint64_t World::rendezvous(int rank, bool global) {
  BarrierState& b = global ? global_barrier_ : *node_barriers_[node_of(rank)];
  const std::uint64_t gen = b.generation.load(std::memory_order_acquire);
  if (b.arrived.fetch_add(1, std::memory_order_acq_rel) + 1 == b.size) {
    b.arrived.store(0, std::memory_order_relaxed);
    b.generation.store(gen + 1, std::memory_order_release);
    sched::step();
    return gen + 1;
  }
  sched::step();
  spin_until(policy_, global ? "barrier_all" : "barrier_all_intra_node",
             [&] { return b.generation.load(std::memory_order_acquire) != gen; });
  return gen + 1;
}

void World::reset_sync_state() {
  global_barrier_.arrived.store(0);
  for (auto& b : node_barriers_) b->arrived.store(0);
}

void World::discard_pending() {
  for (auto& q : queues_) {
    std::lock_guard lock(q->mu);
    q->ops.clear();
  }
}

void World::submit(int issuer, int dest, std::function<void()> apply) {
  if (options_.delivery == DeliveryMode::kEager) {
    apply();
    return;
  }
  RankQueue& q = *queues_[issuer];
  std::lock_guard lock(q.mu);
  q.ops.push_back(PendingOp{dest, q.epoch, std::move(apply)});
}

bool World::deliver_one_locked(RankQueue& q) {
  if (q.ops.empty()) return false;
  // An op is eligible when no earlier-epoch op to the same destination is
  // still queued; fences therefore order delivery per destination.
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < q.ops.size(); ++i) {
    bool blocked = false;
    for (std::size_t j = 0; j < q.ops.size(); ++j) {
      if (q.ops[j].dest == q.ops[i].dest && q.ops[j].epoch < q.ops[i].epoch) {
        blocked = true;
        break;
      }
    }
    if (!blocked) eligible.push_back(i);
  }
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  const std::size_t idx = eligible[pick(q.rng)];
  PendingOp op = std::move(q.ops[idx]);
  q.ops.erase(q.ops.begin() + static_cast<std::ptrdiff_t>(idx));
  op.apply();
  return true;
}

bool World::progress(int issuer) {
  if (options_.delivery == DeliveryMode::kEager) return false;
  RankQueue& q = *queues_[issuer];
  std::lock_guard lock(q.mu);
  if (q.ops.empty()) return false;
  if (std::bernoulli_distribution(0.5)(q.rng)) return true;
  return deliver_one_locked(q);
}

void World::drain(int issuer) {
  if (options_.delivery == DeliveryMode::kEager) return;
  RankQueue& q = *queues_[issuer];
  std::lock_guard lock(q.mu);
  while (deliver_one_locked(q)) {
  }
}

void World::fence(int issuer) {
  RankQueue& q = *queues_[issuer];
  std::lock_guard lock(q.mu);
  ++q.epoch;
}

std::size_t World::pending(int issuer) const {
  const RankQueue& q = *queues_[issuer];
  std::lock_guard lock(q.mu);
  return q.ops.size();
}

std::size_t World::pending_total() const {
  std::size_t n = 0;
  for (int r = 0; r < spec_.world_size; ++r) n += pending(r);
  return n;
}

void World::reset_counters() {
  for (auto& c : counters_) c->reset();
}

void World::record(TraceRecord rec) {
  if (!tracing()) return;
  std::lock_guard lock(trace_mu_);
  rec.seq = trace_seq_.fetch_add(1, std::memory_order_relaxed);
  trace_.push_back(std::move(rec));
}

std::vector<TraceRecord> World::trace() const {
  std::lock_guard lock(trace_mu_);
  return trace_;
}

void World::clear_trace() {
  std::lock_guard lock(trace_mu_);
  trace_.clear();
  trace_seq_.store(0);
}

}  // namespace onesided
