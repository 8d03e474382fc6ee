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
#include <random>

#include "onesided/collectives.h"
#include "onesided/errors.h"
#include "oracles.h"

namespace onesided {
namespace {

WorldSpec geometry(int nodes, int local) {
  WorldSpec s;
  s.n_nodes = nodes;
  s.local_world_size = local;
  s.world_size = nodes * local;
  return s;
}

CollectiveOptions serial(std::uint64_t seed) {
  CollectiveOptions o;
  o.launch.sched.mode = SchedulerMode::kRandom;
  o.launch.sched.seed = seed;
  return o;
}

std::vector<LocalBuffer> int_inputs(int w, std::size_t n, std::mt19937_64& rng) {
  std::vector<LocalBuffer> in;
  for (int r = 0; r < w; ++r) in.push_back(oracle::to_bytes(oracle::random_ints<std::int32_t>(rng, n)));
  return in;
}

TEST(AllGatherPush, ConcatenatesByRank) {
  World world(geometry(1, 4));
  std::vector<LocalBuffer> in;
  for (int r = 0; r < 4; ++r) in.push_back(oracle::to_bytes(std::vector<std::int32_t>{10 * r, 10 * r + 1}));
  auto run = run_allgather_intra(world, AllGatherMode::kPush, in);
  run.report.rethrow_if_failed();
  const std::vector<std::int32_t> want{0, 1, 10, 11, 20, 21, 30, 31};
  for (const auto& out : run.outputs) EXPECT_EQ(oracle::from_bytes<std::int32_t>(out), want);
  EXPECT_TRUE(world.signals_all_zero());
}

TEST(AllGatherPush, SingleRankIsIdentity) {
  World world(geometry(1, 1));
  std::vector<LocalBuffer> in{oracle::to_bytes(std::vector<std::int32_t>{7, 8, 9})};
  auto run = run_allgather_intra(world, AllGatherMode::kPush, in);
  run.report.rethrow_if_failed();
  EXPECT_EQ(run.outputs[0], in[0]);
}

TEST(AllGather, PushAndPullMatchOracleUnderRandomSchedules) {
  std::mt19937_64 rng(7);
  for (int w : {2, 4, 8}) {
    World world(geometry(1, w));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::vector<LocalBuffer> in;
      for (int r = 0; r < w; ++r) in.push_back(oracle::random_bytes(rng, 24));
      const auto want = oracle::gather(in);
      for (auto mode : {AllGatherMode::kPush, AllGatherMode::kPull}) {
        auto run = run_allgather_intra(world, mode, in, serial(seed));
        run.report.rethrow_if_failed();
        for (const auto& out : run.outputs) EXPECT_EQ(out, want);
      }
    }
  }
}

TEST(AllGather, BarrierCounts) {
  World world(geometry(1, 4));
  std::mt19937_64 rng(1);
  auto in = int_inputs(4, 4, rng);
  world.reset_counters();
  run_allgather_intra(world, AllGatherMode::kPush, in).report.rethrow_if_failed();
  for (int r = 0; r < 4; ++r) EXPECT_EQ(world.count(r, Primitive::kBarrierAll), 0u);
  world.reset_counters();
  run_allgather_intra(world, AllGatherMode::kPull, in).report.rethrow_if_failed();
  for (int r = 0; r < 4; ++r) EXPECT_EQ(world.count(r, Primitive::kBarrierAll), 1u);
}

TEST(AllGather, SizeMismatchIsArgumentError) {
  World world(geometry(1, 2));
  RankCtx ctx = world.ctx(0);
  auto buf = AllGatherBuffers::allocate(world, 8);
  LocalBuffer bad(4);
  EXPECT_THROW(allgather_push_intra(ctx, buf, bad), ArgumentError);
}

TEST(ReduceScatterIntra, AllOnes) {
  World world(geometry(1, 4));
  std::vector<LocalBuffer> in(4, oracle::to_bytes(std::vector<std::int32_t>(8, 1)));
  auto run = run_reducescatter_intra(world, DType::kI32, in);
  run.report.rethrow_if_failed();
  for (const auto& out : run.outputs) EXPECT_EQ(oracle::from_bytes<std::int32_t>(out), (std::vector<std::int32_t>{4, 4}));
}

TEST(ReduceScatterIntra, MatchesOracle) {
  std::mt19937_64 rng(3);
  for (int w : {1, 2, 8}) {
    World world(geometry(1, w));
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      std::vector<std::vector<std::int32_t>> raw;
      std::vector<LocalBuffer> in;
      for (int r = 0; r < w; ++r) {
        raw.push_back(oracle::random_ints<std::int32_t>(rng, static_cast<std::size_t>(w) * 3));
        in.push_back(oracle::to_bytes(raw.back()));
      }
      const auto want = oracle::reduce_scatter(raw);
      for (auto style : {SyncStyle::kWaitUntil, SyncStyle::kToken}) {
        auto opts = serial(seed);
        opts.sync = style;
        auto run = run_reducescatter_intra(world, DType::kI32, in, opts);
        run.report.rethrow_if_failed();
        for (int r = 0; r < w; ++r) EXPECT_EQ(oracle::from_bytes<std::int32_t>(run.outputs[r]), want[r]);
      }
    }
  }
}

TEST(AllGatherLL, MatchesOracle) {
  std::mt19937_64 rng(5);
  for (auto [nodes, local] : {std::pair{2, 2}, std::pair{4, 2}, std::pair{2, 4}}) {
    World world(geometry(nodes, local));
    auto state = LLAllGatherState::allocate(world, 8);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      std::vector<LocalBuffer> in;
      for (int r = 0; r < nodes * local; ++r) in.push_back(oracle::random_bytes(rng, 8));
      world.reset_counters();
      auto run = run_allgather_ll(world, state, in, serial(seed));
      run.report.rethrow_if_failed();
      const auto want = oracle::gather(in);
      for (const auto& out : run.outputs) EXPECT_EQ(out, want);
      for (int r = 0; r < nodes * local; ++r) {
        EXPECT_EQ(world.count(r, Primitive::kBarrierAll), 0u);
        EXPECT_EQ(world.count(r, Primitive::kMultimemSt), static_cast<std::uint64_t>(nodes));
      }
    }
  }
}

TEST(AllGatherLL, SingleNodeIsConfigError) {
  World world(geometry(1, 4));
  EXPECT_THROW(LLAllGatherState::allocate(world, 8), ConfigError);
}

TEST(ReduceScatterInter, AllOnes2x4) {
  World world(geometry(2, 4));
  std::vector<LocalBuffer> in(8, oracle::to_bytes(std::vector<std::int32_t>(16 * 2, 1)));
  world.reset_counters();
  auto run = run_reducescatter_inter(world, DType::kI32, 16, 2, in);
  run.report.rethrow_if_failed();
  for (const auto& out : run.outputs) EXPECT_EQ(oracle::from_bytes<std::int32_t>(out), std::vector<std::int32_t>(4, 8));
  for (int r = 0; r < 8; ++r) {
    EXPECT_EQ(world.count(r, Primitive::kBarrierAllIntraNode), 2u);
    EXPECT_EQ(world.count(r, Primitive::kBarrierAll), 1u);
  }
}

TEST(ReduceScatterInter, MatchesOracle) {
  std::mt19937_64 rng(11);
  for (auto [nodes, local] : {std::pair{2, 2}, std::pair{2, 4}, std::pair{4, 2}}) {
    const int w = nodes * local;
    World world(geometry(nodes, local));
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      std::vector<std::vector<std::int32_t>> raw;
      std::vector<LocalBuffer> in;
      const std::size_t m = static_cast<std::size_t>(w) * 2;
      const std::size_t n = 3;
      for (int r = 0; r < w; ++r) {
        raw.push_back(oracle::random_ints<std::int32_t>(rng, m * n));
        in.push_back(oracle::to_bytes(raw.back()));
      }
      const auto want = oracle::reduce_scatter(raw);
      auto run = run_reducescatter_inter(world, DType::kI32, m, n, in, serial(seed));
      run.report.rethrow_if_failed();
      for (int r = 0; r < w; ++r) EXPECT_EQ(oracle::from_bytes<std::int32_t>(run.outputs[r]), want[r]);
    }
  }
}

TEST(ReduceScatterInter, IndivisibleRowsIsArgumentError) {
  World world(geometry(2, 2));
  EXPECT_THROW(InterReduceScatterBuffers::allocate(world, DType::kI32, 6, 2), ArgumentError);
}

TEST(AllToAll, SwapBetweenTwoRanks) {
  World world(geometry(1, 2));
  ExpertRouting routing;
  routing.experts_total = 2;
  routing.topk = 1;
  routing.expert_ids = {{1, 1}, {0, 0}};
  std::vector<LocalBuffer> tokens{oracle::to_bytes(std::vector<std::int32_t>{1, 2}),
                                  oracle::to_bytes(std::vector<std::int32_t>{3, 4})};
  auto run = run_alltoall(world, DType::kI32, tokens, routing, 4);
  run.report.rethrow_if_failed();
  ASSERT_EQ(run.received[0].size(), 2u);
  EXPECT_EQ(run.received[0][0].src_rank, 1);
  EXPECT_EQ(oracle::from_bytes<std::int32_t>(run.received[0][0].data), std::vector<std::int32_t>{3});
  EXPECT_EQ(oracle::from_bytes<std::int32_t>(run.received[1][1].data), std::vector<std::int32_t>{2});
  EXPECT_EQ(run.combined[0], tokens[0]);
}

TEST(AllToAll, IdentityExpertsGiveTopkTimesInput) {
  World world(geometry(1, 4));
  std::mt19937_64 rng(2);
  ExpertRouting routing;
  routing.experts_total = 8;
  routing.topk = 2;
  std::vector<LocalBuffer> tokens;
  std::vector<std::vector<std::int32_t>> raw;
  for (int r = 0; r < 4; ++r) {
    std::vector<int> ids;
    for (int t = 0; t < 3; ++t) {
      ids.push_back(static_cast<int>(rng() % 8));
      ids.push_back(static_cast<int>(rng() % 8));
    }
    routing.expert_ids.push_back(ids);
    raw.push_back(oracle::random_ints<std::int32_t>(rng, 3 * 4));
    tokens.push_back(oracle::to_bytes(raw.back()));
  }
  auto run = run_alltoall(world, DType::kI32, tokens, routing, 3, {}, serial(9));
  run.report.rethrow_if_failed();
  for (int r = 0; r < 4; ++r) {
    auto got = oracle::from_bytes<std::int32_t>(run.combined[r]);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], 2 * raw[r][i]);
  }
}

TEST(AllToAll, TooManyTokensIsCapacityError) {
  World world(geometry(1, 2));
  ExpertRouting routing;
  routing.experts_total = 2;
  routing.expert_ids = {{0, 1, 0}, {1}};
  std::vector<LocalBuffer> tokens{LocalBuffer(12), LocalBuffer(4)};
  auto run = run_alltoall(world, DType::kI32, tokens, routing, 2);
  EXPECT_FALSE(run.report.ok);
  EXPECT_THROW(run.report.rethrow_if_failed(), CapacityError);
  EXPECT_TRUE(world.signals_all_zero());
}

}  // namespace
}  // namespace onesided
