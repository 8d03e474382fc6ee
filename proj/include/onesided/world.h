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

// In-process world: rank geometry, the symmetric heap, signal pads,
// barriers, the non-blocking completion queues and instrumentation.
//
// The heap is one arena split into world_size equal slabs. Each slab is
// [heap_bytes of data | signal pad]. A SymHandle is an (offset, length)
// pair into the data part and means the same bytes on every rank; resolving
// it against a peer is offset arithmetic into that peer's slab.

#ifndef ONESIDED_WORLD_H_
#define ONESIDED_WORLD_H_

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onesided/scheduler.h"

namespace onesided {

struct WorldSpec {
  int world_size = 1;
  int n_nodes = 1;
  int local_world_size = 1;
  std::size_t heap_bytes = std::size_t{1} << 20;
  int signal_count = 64;

  // Throws ConfigError unless world_size = n_nodes * local_world_size,
  // heap_bytes > 0 and signal_count >= world_size.
  void validate() const;
};

// How non-blocking operations complete.
enum class DeliveryMode {
  kEager,     // applied at issue
  kDeferred,  // queued, applied in a random legal order by progress/quiet
};

struct WorldOptions {
  std::chrono::milliseconds timeout{5000};
  DeliveryMode delivery = DeliveryMode::kEager;
  std::uint64_t delivery_seed = 0;
};

struct SymHandle {
  std::size_t offset = 0;
  std::size_t length = 0;

  // Sub-range [offset + at, offset + at + bytes). Throws RangeError.
  SymHandle slice(std::size_t at, std::size_t bytes) const;

  friend bool operator==(const SymHandle&, const SymHandle&) = default;
};

// A contiguous block of signal words, identical on every rank.
struct SignalSet {
  int base = 0;
  int count = 0;

  // Absolute signal index of element i. Throws ArgumentError.
  int at(int i) const;
};

// A plain, rank-private byte region.
using LocalBuffer = std::vector<std::byte>;

class World;

// Execution identity of one rank.
class RankCtx {
 public:
  RankCtx(World& world, int rank);

  World& world() const { return *world_; }
  int rank() const { return rank_; }
  int node_id() const { return node_id_; }
  int local_rank() const { return local_rank_; }
  int world_size() const;
  int n_nodes() const;
  int local_world_size() const;

 private:
  World* world_;
  int rank_;
  int node_id_;
  int local_rank_;
};

enum class Primitive : int {
  kPutmem,
  kPutmemNbi,
  kGetmem,
  kGetmemNbi,
  kPutmemSignal,
  kPutmemSignalNbi,
  kSignalOp,
  kNotify,
  kSignalWaitUntil,
  kWait,
  kConsumeToken,
  kAtomicCas,
  kAtomicAdd,
  kLdAcquire,
  kRedRelease,
  kMultimemSt,
  kMultimemLdReduce,
  kBroadcast,
  kIntP,
  kBarrierAll,
  kSyncAll,
  kBarrierAllIntraNode,
  kQuiet,
  kFence,
  kLLPack,
  kRecvLLPack,
  kRecvLLUnpack,
  kCopyAsync,
  kSignalReset,
  kCount,
};

std::string_view to_string(Primitive p);

class PrimitiveCounters {
 public:
  void bump(Primitive p) { counts_[static_cast<int>(p)].fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t get(Primitive p) const { return counts_[static_cast<int>(p)].load(std::memory_order_relaxed); }
  void reset();

 private:
  std::array<std::atomic<std::uint64_t>, static_cast<int>(Primitive::kCount)> counts_{};
};

// One primitive taking effect. Signal updates carry the value after the
// update; waits carry the value they observed; barriers carry the barrier
// generation they completed.
struct TraceRecord {
  std::uint64_t seq = 0;
  int rank = 0;
  std::string task;
  Primitive op = Primitive::kCount;
  int peer = -1;
  std::size_t bytes = 0;
  int signal = -1;
  std::uint64_t value = 0;
};

class World {
 public:
  explicit World(const WorldSpec& spec, WorldOptions options = {});
  ~World();

  World(const World&) = delete;
  World& operator=(const World&) = delete;

  const WorldSpec& spec() const { return spec_; }
  const WorldOptions& options() const { return options_; }
  int world_size() const { return spec_.world_size; }
  int n_nodes() const { return spec_.n_nodes; }
  int local_world_size() const { return spec_.local_world_size; }
  int node_of(int rank) const { return rank / spec_.local_world_size; }
  bool same_node(int a, int b) const { return node_of(a) == node_of(b); }

  RankCtx ctx(int rank);

  // Collective allocation. The cursor is shared, so every rank sees the
  // same handle. Throws AllocError when the slab is exhausted.
  SymHandle alloc_symmetric(std::size_t bytes, std::size_t align = 16);
  SignalSet alloc_signals(int count);
  std::size_t heap_cursor() const { return heap_cursor_; }
  int signal_cursor() const { return signal_cursor_; }

  struct AllocMark {
    std::size_t heap = 0;
    int signals = 0;
  };
  AllocMark alloc_mark() const { return AllocMark{heap_cursor_, signal_cursor_}; }
  // Rewinds both allocators to `mark` and zeroes the released heap bytes and
  // signal words on every rank.
  void release_to(const AllocMark& mark);

  // Releases everything allocated during its lifetime.
  class AllocScope {
   public:
    explicit AllocScope(World& w) : w_(w), mark_(w.alloc_mark()) {}
    ~AllocScope() { w_.release_to(mark_); }
    AllocScope(const AllocScope&) = delete;
    AllocScope& operator=(const AllocScope&) = delete;

   private:
    World& w_;
    AllocMark mark_;
  };

  // View of `peer`'s replica of `h`. Throws ArgumentError / RangeError.
  std::span<std::byte> remote_ptr(const SymHandle& h, int peer);
  std::span<const std::byte> remote_ptr(const SymHandle& h, int peer) const;

  // The whole data part of a rank's slab, for leak checks.
  std::span<const std::byte> slab(int rank) const;

  // Signal words. Throws ArgumentError for a bad rank or index.
  std::atomic_ref<std::uint64_t> signal(int rank, int sig);
  std::uint64_t peek_signal(int rank, int sig) const;
  void check_signal(int sig) const;
  void check_rank(int rank) const;

  // Zeroes every signal word on every rank. Throws UsageError while a
  // collective is running or non-blocking operations are pending.
  void reset_signals();
  bool signals_all_zero() const;

  // Barrier rendezvous for the group containing `rank`. `global` selects
  // all ranks, otherwise the rank's node. Returns the completed generation.
  std::uint64_t rendezvous(int rank, bool global);
  void reset_sync_state();

  // Non-blocking completion queues.
  void submit(int issuer, int dest, std::function<void()> apply);
  // May deliver one queued op. True while the queue was non-empty.
  bool progress(int issuer);
  void drain(int issuer);
  void fence(int issuer);
  std::size_t pending(int issuer) const;
  std::size_t pending_total() const;
  // Drops every queued operation without applying it. Used after a fault.
  void discard_pending();

  const WaitPolicy& wait_policy() const { return policy_; }
  void set_timeout(std::chrono::milliseconds timeout) { policy_.timeout = timeout; }
  void cancel() { cancelled_.store(true, std::memory_order_release); }
  void clear_cancel() { cancelled_.store(false, std::memory_order_release); }
  bool cancelled() const { return cancelled_.load(std::memory_order_acquire); }

  PrimitiveCounters& counters(int rank) { return *counters_[rank]; }
  const PrimitiveCounters& counters(int rank) const { return *counters_[rank]; }
  std::uint64_t count(int rank, Primitive p) const { return counters_[rank]->get(p); }
  void reset_counters();

  void enable_trace(bool on) { tracing_.store(on, std::memory_order_release); }
  bool tracing() const { return tracing_.load(std::memory_order_acquire); }
  void record(TraceRecord rec);
  std::vector<TraceRecord> trace() const;
  void clear_trace();

  // Marks a rank-collective as running; reset_signals refuses meanwhile.
  class CollectiveScope {
   public:
    explicit CollectiveScope(World& w) : w_(w) { w_.in_flight_.fetch_add(1); }
    ~CollectiveScope() { w_.in_flight_.fetch_sub(1); }
    CollectiveScope(const CollectiveScope&) = delete;
    CollectiveScope& operator=(const CollectiveScope&) = delete;

   private:
    World& w_;
  };
  bool collective_in_flight() const { return in_flight_.load() > 0; }

  // One word per rank outside the symmetric heap, used by broadcast to
  // cross-check the root argument.
  std::atomic<std::int64_t>& scratch(int rank) { return scratch_[rank]; }

 private:
  struct BarrierState {
    std::atomic<int> arrived{0};
    std::atomic<std::uint64_t> generation{0};
    int size = 0;
  };

  struct PendingOp {
    int dest;
    std::uint64_t epoch;
    std::function<void()> apply;
  };

  struct RankQueue {
    mutable std::mutex mu;
    std::deque<PendingOp> ops;
    std::uint64_t epoch = 0;
    std::mt19937_64 rng;
  };

  std::byte* slab_base(int rank) const { return arena_.get() + static_cast<std::size_t>(rank) * stride_; }
  bool deliver_one_locked(RankQueue& q);

  WorldSpec spec_;
  WorldOptions options_;
  std::size_t data_bytes_ = 0;
  std::size_t stride_ = 0;
  std::unique_ptr<std::byte[]> arena_;
  std::size_t heap_cursor_ = 0;
  int signal_cursor_ = 0;

  std::atomic<bool> cancelled_{false};
  WaitPolicy policy_;

  BarrierState global_barrier_;
  std::vector<std::unique_ptr<BarrierState>> node_barriers_;

  std::vector<std::unique_ptr<RankQueue>> queues_;
  std::vector<std::unique_ptr<PrimitiveCounters>> counters_;

  std::atomic<bool> tracing_{false};
  std::atomic<std::uint64_t> trace_seq_{0};
  mutable std::mutex trace_mu_;
  std::vector<TraceRecord> trace_;

  std::atomic<int> in_flight_{0};
  std::unique_ptr<std::atomic<std::int64_t>[]> scratch_;
};

}  // namespace onesided

#endif  // ONESIDED_WORLD_H_
