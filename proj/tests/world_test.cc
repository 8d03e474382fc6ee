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

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "harness.h"
#include "onesided/errors.h"
#include "onesided/primitives.h"
#include "onesided/world.h"

namespace onesided {
namespace {

using harness::geometry;
using harness::spmd;

TEST(World, SingleNodeIdentity) {
  World world(geometry(1, 4));
  for (int r = 0; r < 4; ++r) {
    RankCtx ctx = world.ctx(r);
    EXPECT_EQ(ctx.rank(), r);
    EXPECT_EQ(ctx.node_id(), 0);
    EXPECT_EQ(ctx.local_rank(), r);
  }
}

TEST(World, RankArithmetic) {
  World world(geometry(2, 4));
  RankCtx ctx = world.ctx(5);
  EXPECT_EQ(ctx.node_id(), 1);
  EXPECT_EQ(ctx.local_rank(), 1);
  for (int r = 0; r < 8; ++r) {
    RankCtx c = world.ctx(r);
    EXPECT_EQ(c.node_id() * c.local_world_size() + c.local_rank(), r);
  }
}

TEST(World, InvalidGeometry) {
  WorldSpec s = geometry(2, 4);
  s.world_size = 4;
  EXPECT_THROW(World{s}, ConfigError);
  WorldSpec few_signals = geometry(1, 4);
  few_signals.signal_count = 3;
  EXPECT_THROW(World{few_signals}, ConfigError);
  WorldSpec no_heap = geometry(1, 1);
  no_heap.heap_bytes = 0;
  EXPECT_THROW(World{no_heap}, ConfigError);
}

TEST(World, StartsWithZeroSignals) {
  World world(geometry(2, 2));
  EXPECT_TRUE(world.signals_all_zero());
  for (int r = 0; r < 4; ++r) EXPECT_EQ(world.peek_signal(r, 0), 0u);
}

TEST(World, MyPeAndNPes) {
  World four(geometry(1, 4));
  EXPECT_EQ(my_pe(four.ctx(2)), 2);
  EXPECT_EQ(n_pes(four.ctx(2)), 4);
  World one(geometry(1, 1));
  EXPECT_EQ(my_pe(one.ctx(0)), 0);
  EXPECT_EQ(n_pes(one.ctx(0)), 1);
  World eight(geometry(2, 4));
  EXPECT_EQ(my_pe(eight.ctx(7)), 7);
}

TEST(Alloc, BumpAllocator) {
  World world(geometry(1, 2));
  const SymHandle a = world.alloc_symmetric(64, 16);
  const SymHandle b = world.alloc_symmetric(64, 16);
  EXPECT_EQ(a.offset, 0u);
  EXPECT_EQ(b.offset, 64u);
  const SymHandle z = world.alloc_symmetric(0, 16);
  EXPECT_EQ(z.offset, 128u);
  EXPECT_EQ(z.length, 0u);
  const SymHandle odd = world.alloc_symmetric(3, 1);
  const SymHandle aligned = world.alloc_symmetric(8, 64);
  EXPECT_EQ(odd.offset, 128u);
  EXPECT_EQ(aligned.offset % 64, 0u);
  EXPECT_GE(aligned.offset, odd.offset + odd.length);
}

TEST(Alloc, Errors) {
  WorldSpec s = geometry(1, 2);
  s.heap_bytes = 256;
  World world(s);
  EXPECT_THROW(world.alloc_symmetric(257), AllocError);
  world.alloc_symmetric(200);
  EXPECT_THROW(world.alloc_symmetric(64), AllocError);
  EXPECT_THROW(world.alloc_symmetric(8, 3), ArgumentError);
  EXPECT_THROW(world.alloc_signals(s.signal_count + 1), AllocError);
}

TEST(Alloc, DeterministicAcrossWorlds) {
  const auto sequence = [](World& w) {
    std::vector<SymHandle> out;
    for (std::size_t n : {5u, 64u, 17u, 0u, 128u}) out.push_back(w.alloc_symmetric(n, 32));
    return out;
  };
  World a(geometry(1, 4));
  World b(geometry(2, 2));
  EXPECT_EQ(sequence(a), sequence(b));
}

TEST(Alloc, ScopeRewindsAndZeroes) {
  World world(geometry(1, 2));
  const std::size_t before = world.heap_cursor();
  {
    World::AllocScope scope(world);
    const SymHandle h = world.alloc_symmetric(32);
    std::memset(world.remote_ptr(h, 1).data(), 0xab, 32);
  }
  EXPECT_EQ(world.heap_cursor(), before);
  const SymHandle again = world.alloc_symmetric(32);
  for (std::byte b : world.remote_ptr(again, 1)) EXPECT_EQ(b, std::byte{0});
}

TEST(RemotePtr, ResolvesIntoPeerSlab) {
  World world(geometry(1, 4));
  world.alloc_symmetric(64);
  const SymHandle h = world.alloc_symmetric(16);
  ASSERT_EQ(h.offset, 64u);
  EXPECT_EQ(world.remote_ptr(h, 2).data(), world.slab(2).data() + 64);
  EXPECT_EQ(world.remote_ptr(h, 2).size(), 16u);
  EXPECT_THROW(world.remote_ptr(h, 4), ArgumentError);
  EXPECT_THROW(world.remote_ptr(h, -1), ArgumentError);
  EXPECT_THROW(world.remote_ptr(SymHandle{world.spec().heap_bytes - 8, 16}, 0), RangeError);
}

TEST(RemotePtr, SelfIsLocalResolution) {
  World world(geometry(1, 2));
  const SymHandle h = world.alloc_symmetric(8);
  RankCtx ctx = world.ctx(1);
  EXPECT_EQ(world.remote_ptr(h, ctx.rank()).data(), world.slab(1).data() + h.offset);
}

TEST(RemotePtr, NoCrossSlabLeakage) {
  World world(geometry(1, 3));
  const SymHandle before = world.alloc_symmetric(16);
  const SymHandle h = world.alloc_symmetric(16);
  const SymHandle after = world.alloc_symmetric(16);
  for (int r = 0; r < 3; ++r) {
    std::memset(world.remote_ptr(before, r).data(), 0xc1, 16);
    std::memset(world.remote_ptr(after, r).data(), 0xc2, 16);
  }
  std::vector<std::vector<std::byte>> slabs;
  for (int r = 0; r < 3; ++r) slabs.emplace_back(world.slab(r).begin(), world.slab(r).end());
  const std::vector<std::byte> payload(16, std::byte{0x5a});
  putmem(world.ctx(0), h, 0, payload, 1);
  for (int r = 0; r < 3; ++r) {
    const auto now = world.slab(r);
    for (std::size_t i = 0; i < now.size(); ++i) {
      const bool inside = r == 1 && i >= h.offset && i < h.offset + h.length;
      if (inside) {
        EXPECT_EQ(now[i], std::byte{0x5a});
      } else {
        ASSERT_EQ(now[i], slabs[r][i]) << "rank " << r << " byte " << i;
      }
    }
  }
}

TEST(Barrier, PutThenBarrierIsVisibleEverywhere) {
  World world(geometry(1, 4));
  const SymHandle h = world.alloc_symmetric(8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto report = spmd(
        world,
        [&](const RankCtx& ctx) {
          if (ctx.rank() == 0) {
            for (int p = 0; p < 4; ++p) int_p(ctx, p, h, 0, 42 + static_cast<std::int64_t>(seed));
          }
          barrier_all(ctx);
          EXPECT_EQ(int_g(ctx, ctx.rank(), h, 0), 42 + static_cast<std::int64_t>(seed));
        },
        harness::serial(seed));
    report.rethrow_if_failed();
  }
}

TEST(Barrier, NonBlockingPutsCompleteAtBarrier) {
  WorldOptions opts;
  opts.delivery = DeliveryMode::kDeferred;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    opts.delivery_seed = seed;
    World world(geometry(2, 2), opts);
    const SymHandle h = world.alloc_symmetric(4 * 8);
    auto report = spmd(
        world,
        [&](const RankCtx& ctx) {
          const std::int64_t v = 100 + ctx.rank();
          for (int p = 0; p < 4; ++p) {
            putmem_nbi(ctx, h, static_cast<std::size_t>(ctx.rank()) * 8,
                       std::as_bytes(std::span<const std::int64_t>(&v, 1)), p);
          }
          barrier_all(ctx);
          for (int s = 0; s < 4; ++s) EXPECT_EQ(int_g(ctx, ctx.rank(), h, static_cast<std::size_t>(s) * 8), 100 + s);
        },
        harness::serial(seed));
    report.rethrow_if_failed();
    EXPECT_EQ(world.pending_total(), 0u);
  }
}

TEST(Barrier, RandomizedLinearization) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    WorldOptions opts;
    opts.delivery = DeliveryMode::kDeferred;
    opts.delivery_seed = rng();
    World world(geometry(1, 4), opts);
    const SymHandle h = world.alloc_symmetric(4 * 4 * 8);
    // writes[r] = peers rank r writes to before the barrier.
    std::vector<std::vector<int>> writes(4);
    for (auto& w : writes) {
      for (int p = 0; p < 4; ++p) {
        if (rng() % 2) w.push_back(p);
      }
    }
    auto report = spmd(
        world,
        [&](const RankCtx& ctx) {
          std::vector<std::int64_t> values(4);
          for (int p : writes[static_cast<std::size_t>(ctx.rank())]) {
            values[static_cast<std::size_t>(p)] = 1000 * ctx.rank() + p + 1;
            putmem_nbi(ctx, h, static_cast<std::size_t>(ctx.rank()) * 8,
                       std::as_bytes(std::span<const std::int64_t>(&values[static_cast<std::size_t>(p)], 1)), p);
          }
          barrier_all(ctx);
          for (int src = 0; src < 4; ++src) {
            const auto& w = writes[static_cast<std::size_t>(src)];
            const bool wrote = std::find(w.begin(), w.end(), ctx.rank()) != w.end();
            EXPECT_EQ(int_g(ctx, ctx.rank(), h, static_cast<std::size_t>(src) * 8),
                      wrote ? 1000 * src + ctx.rank() + 1 : 0);
          }
        },
        harness::serial(static_cast<std::uint64_t>(trial)));
    report.rethrow_if_failed();
  }
}

TEST(Barrier, SingleRankReturnsImmediately) {
  World world(geometry(1, 1));
  auto report = spmd(world, [](const RankCtx& ctx) {
    barrier_all(ctx);
    sync_all(ctx);
    barrier_all_intra_node(ctx);
  });
  report.rethrow_if_failed();
  EXPECT_EQ(world.count(0, Primitive::kBarrierAll), 1u);
}

TEST(Barrier, IntraNodeScopesToNode) {
  World world(geometry(2, 2));
  const SymHandle h = world.alloc_symmetric(8);
  auto report = spmd(
      world,
      [&](const RankCtx& ctx) {
        // Only node 0 synchronizes; node 1 never joins and must not be needed.
        if (ctx.node_id() == 0) {
          if (ctx.local_rank() == 0) int_p(ctx, 1, h, 0, 9);
          barrier_all_intra_node(ctx);
          if (ctx.local_rank() == 1) EXPECT_EQ(int_g(ctx, 1, h, 0), 9);
        }
      },
      harness::serial(1));
  report.rethrow_if_failed();
}

TEST(Barrier, MissingRankIsASyncFault) {
  World world(geometry(1, 4));
  world.set_timeout(std::chrono::milliseconds(200));
  for (auto options : {harness::serial(2), LaunchOptions{}}) {
    auto report = spmd(
        world,
        [](const RankCtx& ctx) {
          if (ctx.rank() != 3) barrier_all(ctx);
        },
        options);
    EXPECT_FALSE(report.ok);
    ASSERT_TRUE(report.first_error);
    EXPECT_THROW(std::rethrow_exception(report.first_error), SyncFault);
    int failed = 0;
    for (const auto& t : report.tasks) failed += t.ok ? 0 : 1;
    EXPECT_EQ(failed, 3);
    world.discard_pending();
  }
}

TEST(Quiet, NoPendingIsNoOp) {
  World world(geometry(1, 2));
  auto report = spmd(world, [](const RankCtx& ctx) {
    quiet(ctx);
    fence(ctx);
  });
  report.rethrow_if_failed();
  EXPECT_EQ(world.pending_total(), 0u);
}

TEST(Quiet, DataBeforeSignalAfterQuiet) {
  WorldOptions opts;
  opts.delivery = DeliveryMode::kDeferred;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    opts.delivery_seed = seed;
    World world(geometry(1, 2), opts);
    const SymHandle h = world.alloc_symmetric(64);
    const int sig = world.alloc_signals(1).at(0);
    auto report = spmd(
        world,
        [&](const RankCtx& ctx) {
          if (ctx.rank() == 0) {
            std::vector<std::int64_t> data(8);
            for (int i = 0; i < 8; ++i) data[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(seed) * 10 + i;
            putmem_nbi(ctx, h, 0, std::as_bytes(std::span<const std::int64_t>(data)), 1);
            quiet(ctx);
            signal_op(ctx, 1, sig, SignalOp::kSet, 1);
          } else {
            signal_wait_until(ctx, sig, WaitCond::kEq, 1);
            for (int i = 0; i < 8; ++i) {
              EXPECT_EQ(int_g(ctx, 1, h, static_cast<std::size_t>(i) * 8), static_cast<std::int64_t>(seed) * 10 + i);
            }
          }
        },
        harness::serial(seed));
    report.rethrow_if_failed();
  }
}

TEST(Fence, OrdersPutsPerDestination) {
  WorldOptions opts;
  opts.delivery = DeliveryMode::kDeferred;
  int saw_second = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    opts.delivery_seed = seed;
    World world(geometry(1, 2), opts);
    const SymHandle h = world.alloc_symmetric(16);
    const int done = world.alloc_signals(1).at(0);
    auto report = spmd(
        world,
        [&](const RankCtx& ctx) {
          if (ctx.rank() == 0) {
            const std::int64_t one = 1;
            const auto bytes = std::as_bytes(std::span<const std::int64_t>(&one, 1));
            putmem_nbi(ctx, h, 0, bytes, 1);
            fence(ctx);
            putmem_nbi(ctx, h, 8, bytes, 1);
            quiet(ctx);
            notify(ctx, 1, done, 1);
          } else {
            while (true) {
              const std::int64_t second = int_g(ctx, 1, h, 8);
              const std::int64_t first = int_g(ctx, 1, h, 0);
              if (second == 1) {
                ++saw_second;
                EXPECT_EQ(first, 1);
              }
              if (ld_acquire(ctx, 1, done) == 1) break;
            }
          }
        },
        harness::serial(seed));
    report.rethrow_if_failed();
  }
  EXPECT_GT(saw_second, 0);
}

TEST(Signals, ResetRefusedWhileCollectiveRuns) {
  World world(geometry(1, 2));
  world.signal(1, 0).store(5);
  {
    World::CollectiveScope scope(world);
    EXPECT_THROW(world.reset_signals(), UsageError);
  }
  world.reset_signals();
  EXPECT_TRUE(world.signals_all_zero());
}

}  // namespace
}  // namespace onesided
