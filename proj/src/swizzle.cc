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

#include "onesided/swizzle.h"

#include <algorithm>
#include <set>
#include <string>

#include "onesided/errors.h"

namespace onesided {
namespace {

void check_geometry(int rank, int world_size) {
  if (world_size < 1) throw ArgumentError("world size must be at least 1");
  if (rank < 0 || rank >= world_size) {
    throw ArgumentError("rank " + std::to_string(rank) + " outside world of " + std::to_string(world_size));
  }
}

}  // namespace

std::vector<int> TileSchedule::chunk_order() const {
  std::vector<int> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.chunk);
  return out;
}

std::vector<std::pair<int, int>> TileSchedule::visits(std::size_t step) const {
  const ScheduleStep& s = steps.at(step);
  std::vector<int> chunks_here{s.chunk};
  for (int p : s.peers) {
    if (std::find(chunks_here.begin(), chunks_here.end(), p) == chunks_here.end()) chunks_here.push_back(p);
  }
  std::vector<std::pair<int, int>> out;
  for (int c : chunks_here) {
    if (s.subchunk.has_value()) {
      out.emplace_back(c, *s.subchunk);
    } else {
      for (int sub = 0; sub < subchunks; ++sub) out.emplace_back(c, sub);
    }
  }
  return out;
}

bool TileSchedule::is_permutation() const {
  std::set<std::pair<int, int>> seen;
  std::size_t total = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (const auto& v : visits(i)) {
      if (v.first < 0 || v.first >= chunks || v.second < 0 || v.second >= subchunks) return false;
      seen.insert(v);
      ++total;
    }
  }
  return total == seen.size() && seen.size() == static_cast<std::size_t>(chunks) * static_cast<std::size_t>(subchunks);
}

nlohmann::ordered_json TileSchedule::to_json() const {
  nlohmann::ordered_json j;
  j["rank"] = rank;
  j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : steps) {
    nlohmann::ordered_json step;
    step["chunk"] = s.chunk;
    if (s.subchunk.has_value()) step["subchunk"] = *s.subchunk;
    step["peers"] = s.peers;
    j["steps"].push_back(std::move(step));
  }
  return j;
}

TileSchedule TileSchedule::from_json(const nlohmann::json& j) {
  TileSchedule t;
  try {
    t.rank = j.at("rank").get<int>();
    int max_chunk = -1;
    int max_sub = -1;
    for (const auto& s : j.at("steps")) {
      ScheduleStep step;
      step.chunk = s.at("chunk").get<int>();
      if (s.contains("subchunk")) step.subchunk = s.at("subchunk").get<int>();
      step.peers = s.at("peers").get<std::vector<int>>();
      max_chunk = std::max(max_chunk, step.chunk);
      for (int p : step.peers) max_chunk = std::max(max_chunk, p);
      if (step.subchunk.has_value()) max_sub = std::max(max_sub, *step.subchunk);
      t.steps.push_back(std::move(step));
    }
    t.chunks = max_chunk + 1;
    t.subchunks = std::max(1, max_sub + 1);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed schedule: ") + e.what());
  }
  return t;
}

std::vector<int> ring_order(int rank, int world_size) {
  check_geometry(rank, world_size);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(world_size));
  for (int k = 0; k < world_size; ++k) out.push_back((rank + k) % world_size);
  return out;
}

TileSchedule ag_order_switch(int rank, int world_size) {
  TileSchedule t;
  t.rank = rank;
  t.chunks = world_size;
  for (int c : ring_order(rank, world_size)) {
    ScheduleStep s;
    s.chunk = c;
    if (c != rank) s.peers = {c};
    t.steps.push_back(std::move(s));
  }
  return t;
}

TileSchedule ag_order_fullmesh(int rank, int world_size, int subchunks) {
  check_geometry(rank, world_size);
  if (subchunks < 1) throw ArgumentError("subchunks must be at least 1");
  TileSchedule t;
  t.rank = rank;
  t.chunks = world_size;
  t.subchunks = subchunks;
  for (int sub = 0; sub < subchunks; ++sub) {
    ScheduleStep s;
    s.chunk = rank;
    s.subchunk = sub;
    for (int k = 1; k < world_size; ++k) s.peers.push_back((rank + k) % world_size);
    t.steps.push_back(std::move(s));
  }
  return t;
}

TileSchedule rs_inter_order(int rank, int n_nodes, int local_world_size) {
  if (n_nodes < 1 || local_world_size < 1) throw ArgumentError("node geometry must be positive");
  const int world = n_nodes * local_world_size;
  check_geometry(rank, world);
  const int node = rank / local_world_size;
  const int local = rank % local_world_size;
  TileSchedule t;
  t.rank = rank;
  t.chunks = world;
  for (int i = 1; i <= n_nodes; ++i) {
    const int target_node = (node + i) % n_nodes;
    for (int j = 1; j <= local_world_size; ++j) {
      ScheduleStep s;
      s.chunk = target_node * local_world_size + (local + j) % local_world_size;
      if (s.chunk != rank) s.peers = {s.chunk};
      t.steps.push_back(std::move(s));
    }
  }
  return t;
}

void validate_order(std::span<const int> order, int n) {
  if (static_cast<int>(order.size()) != n) {
    throw ArgumentError("order has " + std::to_string(order.size()) + " entries, expected " + std::to_string(n));
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int c : order) {
    if (c < 0 || c >= n || seen[static_cast<std::size_t>(c)]) {
      throw ArgumentError("order is not a permutation of 0.." + std::to_string(n - 1));
    }
    seen[static_cast<std::size_t>(c)] = true;
  }
}

bool contention_free(std::span<const TileSchedule> schedules) {
  std::size_t steps = 0;
  for (const auto& s : schedules) steps = std::max(steps, s.steps.size());
  for (std::size_t k = 0; k < steps; ++k) {
    std::set<int> targets;
    for (const auto& s : schedules) {
      if (k >= s.steps.size()) continue;
      for (int p : s.steps[k].peers) {
        if (!targets.insert(p).second) return false;
      }
    }
  }
  return true;
}

bool full_peer_coverage(std::span<const TileSchedule> schedules, int world_size) {
  for (const auto& s : schedules) {
    for (const auto& step : s.steps) {
      std::set<int> peers(step.peers.begin(), step.peers.end());
      if (static_cast<int>(peers.size()) != world_size - 1 || peers.count(s.rank) != 0) return false;
    }
  }
  return true;
}

}  // namespace onesided
