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
#include <set>

#include "onesided/errors.h"
#include "onesided/swizzle.h"

namespace onesided {
namespace {

TEST(SwitchOrder, RingFromOwnChunk) {
  EXPECT_EQ(ag_order_switch(1, 4).chunk_order(), (std::vector<int>{1, 2, 3, 0}));
  EXPECT_EQ(ag_order_switch(0, 1).chunk_order(), (std::vector<int>{0}));
  const TileSchedule s = ag_order_switch(2, 4);
  EXPECT_TRUE(s.steps[0].peers.empty());
  for (std::size_t k = 1; k < s.steps.size(); ++k) {
    ASSERT_EQ(s.steps[k].peers.size(), 1u);
    EXPECT_EQ(s.steps[k].peers[0], s.steps[k].chunk);
  }
}

TEST(SwitchOrder, EveryStepIsAPermutationAcrossRanks) {
  for (int w : {1, 2, 3, 4, 8, 16}) {
    std::vector<TileSchedule> all;
    for (int r = 0; r < w; ++r) all.push_back(ag_order_switch(r, w));
    for (int k = 0; k < w; ++k) {
      std::set<int> seen;
      for (const auto& s : all) seen.insert(s.chunk_order()[static_cast<std::size_t>(k)]);
      EXPECT_EQ(static_cast<int>(seen.size()), w);
    }
    for (const auto& s : all) EXPECT_TRUE(s.is_permutation());
    EXPECT_TRUE(contention_free(all));
  }
}

TEST(FullMeshOrder, FirstStepGathersSubchunkZeroFromAllPeers) {
  const TileSchedule s = ag_order_fullmesh(0, 4, 2);
  ASSERT_EQ(s.steps.size(), 2u);
  EXPECT_EQ(s.steps[0].subchunk, 0);
  EXPECT_EQ(std::set<int>(s.steps[0].peers.begin(), s.steps[0].peers.end()), (std::set<int>{1, 2, 3}));
  EXPECT_EQ(s.steps[1].subchunk, 1);
}

TEST(FullMeshOrder, SingleSubchunkIsOneStep) {
  const TileSchedule s = ag_order_fullmesh(2, 4, 1);
  ASSERT_EQ(s.steps.size(), 1u);
  EXPECT_EQ(s.steps[0].peers.size(), 3u);
  EXPECT_EQ(s.visits(0).size(), 4u);
}

TEST(FullMeshOrder, CoversEveryPairAndSaturatesLinks) {
  for (int w : {1, 2, 4, 8}) {
    for (int sub : {1, 2, 3, 4}) {
      std::vector<TileSchedule> all;
      for (int r = 0; r < w; ++r) all.push_back(ag_order_fullmesh(r, w, sub));
      for (const auto& s : all) {
        std::set<std::pair<int, int>> pairs;
        for (std::size_t k = 0; k < s.steps.size(); ++k) {
          for (const auto& v : s.visits(k)) pairs.insert(v);
        }
        EXPECT_EQ(static_cast<int>(pairs.size()), w * sub);
        EXPECT_TRUE(s.is_permutation());
      }
      EXPECT_TRUE(full_peer_coverage(all, w));
    }
  }
  EXPECT_THROW(ag_order_fullmesh(0, 4, 0), ArgumentError);
}

TEST(InterOrder, TwoByFourAnchors) {
  EXPECT_EQ(rs_inter_order(0, 2, 4).chunk_order().front(), 5);
  EXPECT_EQ(rs_inter_order(1, 2, 4).chunk_order().front(), 6);
  EXPECT_EQ(rs_inter_order(0, 2, 4).chunk_order(), (std::vector<int>{5, 6, 7, 4, 1, 2, 3, 0}));
}

TEST(InterOrder, OwnChunkEndsOwnNodeBlock) {
  for (int nodes : {1, 2, 3, 4}) {
    for (int local : {1, 2, 4, 8}) {
      for (int r = 0; r < nodes * local; ++r) {
        const auto order = rs_inter_order(r, nodes, local).chunk_order();
        ASSERT_EQ(static_cast<int>(order.size()), nodes * local);
        validate_order(order, nodes * local);
        EXPECT_EQ(order.back(), r);
        const int node = r / local;
        for (int i = 0; i < (nodes - 1) * local; ++i) EXPECT_NE(order[static_cast<std::size_t>(i)] / local, node);
      }
    }
  }
}

TEST(RingOrder, Rotation) {
  EXPECT_EQ(ring_order(2, 5), (std::vector<int>{2, 3, 4, 0, 1}));
}

TEST(ValidateOrder, RejectsNonPermutations) {
  validate_order(std::vector<int>{2, 0, 1}, 3);
  EXPECT_THROW(validate_order(std::vector<int>{0, 0, 1}, 3), ArgumentError);
  EXPECT_THROW(validate_order(std::vector<int>{0, 1}, 3), ArgumentError);
  EXPECT_THROW(validate_order(std::vector<int>{0, 1, 3}, 3), ArgumentError);
}

TEST(Contention, DetectsSharedPeer) {
  std::vector<TileSchedule> same{ag_order_switch(0, 4), ag_order_switch(0, 4)};
  same[1].rank = 1;
  EXPECT_FALSE(contention_free(same));
}

TEST(TileScheduleJson, RoundTripAndShape) {
  const TileSchedule s = ag_order_fullmesh(1, 4, 2);
  const auto j = s.to_json();
  EXPECT_EQ(j["rank"], 1);
  ASSERT_TRUE(j["steps"].is_array());
  EXPECT_TRUE(j["steps"][0].contains("chunk"));
  EXPECT_TRUE(j["steps"][0].contains("subchunk"));
  EXPECT_TRUE(j["steps"][0].contains("peers"));
  EXPECT_EQ(TileSchedule::from_json(nlohmann::json::parse(j.dump())), s);
  const auto sw = ag_order_switch(3, 4).to_json();
  EXPECT_FALSE(sw["steps"][0].contains("subchunk"));
  EXPECT_EQ(TileSchedule::from_json(nlohmann::json::parse(sw.dump())), ag_order_switch(3, 4));
}

}  // namespace
}  // namespace onesided
