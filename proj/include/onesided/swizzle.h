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

// Chunk visit orders that line computation up with communication arrival.

#ifndef ONESIDED_SWIZZLE_H_
#define ONESIDED_SWIZZLE_H_

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

namespace onesided {

// One step of a schedule. The step covers `chunk` and every chunk in
// `peers` (at `subchunk` when set); `peers` are the ranks exchanged with
// during the step and never include the caller.
struct ScheduleStep {
  int chunk = 0;
  std::optional<int> subchunk;
  std::vector<int> peers;

  friend bool operator==(const ScheduleStep&, const ScheduleStep&) = default;
};

struct TileSchedule {
  int rank = 0;
  int chunks = 0;
  int subchunks = 1;
  std::vector<ScheduleStep> steps;

  // The step anchors in order.
  std::vector<int> chunk_order() const;
  // Every (chunk, subchunk) pair the step covers.
  std::vector<std::pair<int, int>> visits(std::size_t step) const;
  // True when the visits over all steps hit each pair exactly once.
  bool is_permutation() const;

  nlohmann::ordered_json to_json() const;
  static TileSchedule from_json(const nlohmann::json& j);

  friend bool operator==(const TileSchedule&, const TileSchedule&) = default;
};

// Switch topology: chunk_k = (rank + k) mod world, pulled from that rank.
TileSchedule ag_order_switch(int rank, int world_size);

// Full mesh: step s covers sub-chunk s of the caller's chunk and of every
// other rank's chunk, pulling from all other ranks at once.
TileSchedule ag_order_fullmesh(int rank, int world_size, int subchunks);

// Inter-node GEMM + ReduceScatter: peer-node blocks first, own node last;
// inside each block, start from local_rank + 1 so the own chunk ends it.
TileSchedule rs_inter_order(int rank, int n_nodes, int local_world_size);

// Plain chunk orders used by the collectives.
std::vector<int> ring_order(int rank, int world_size);

// Throws ArgumentError unless `order` is a permutation of 0..n-1.
void validate_order(std::span<const int> order, int n);

// No two ranks exchange with the same peer in the same step.
bool contention_free(std::span<const TileSchedule> schedules);
// Every step exchanges with all other ranks.
bool full_peer_coverage(std::span<const TileSchedule> schedules, int world_size);

}  // namespace onesided

#endif  // ONESIDED_SWIZZLE_H_
