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

// Low-latency (LL) codec.
//
// Every 4-byte payload word travels next to a 4-byte flag inside one 8-byte
// slot that is stored and loaded as a single atomic unit. Slot layout, as
// a little-endian uint64: bits 0..31 payload, bits 32..63 flag. A receiver
// that sees the expected flag in a slot therefore also sees that slot's
// payload, with no signal or barrier on the receive path.

#ifndef ONESIDED_LL_PROTOCOL_H_
#define ONESIDED_LL_PROTOCOL_H_

#include <cstddef>
#include <cstdint>
#include <span>

#include "onesided/world.h"

namespace onesided {

inline constexpr std::size_t kLLWordBytes = 4;
inline constexpr std::size_t kLLSlotBytes = 8;

struct LLSlot {
  std::uint32_t payload = 0;
  std::uint32_t flag = 0;

  std::uint64_t encode() const { return static_cast<std::uint64_t>(payload) | (static_cast<std::uint64_t>(flag) << 32); }
  static LLSlot decode(std::uint64_t raw) {
    return LLSlot{static_cast<std::uint32_t>(raw & 0xffffffffu), static_cast<std::uint32_t>(raw >> 32)};
  }
};

// A symmetric region carrying `payload_bytes` of data in LL form.
struct LLBuffer {
  SymHandle region;
  std::size_t payload_bytes = 0;

  // Allocates 2 * payload_bytes on the symmetric heap, 8-byte aligned.
  static LLBuffer allocate(World& world, std::size_t payload_bytes);

  // Checks length = 2 * payload_bytes and payload_bytes % 4 == 0.
  void validate() const;
};

constexpr std::size_t ll_encoded_bytes(std::size_t payload_bytes) { return 2 * payload_bytes; }

// Flag for the given round: iteration + 1, never zero, distinct for 2^32 - 1
// consecutive rounds.
std::uint32_t round_flag(std::uint64_t iteration);

// Writes one slot per payload word into `dst`. Throws ArgumentError when the
// payload is not a multiple of 4 bytes or `dst` is too small / misaligned.
void ll_pack(std::span<std::byte> dst, std::span<const std::byte> src, std::uint32_t flag);

// Spins on each slot of `src` until its flag equals `flag`, then stores the
// payload word into `dst`. Throws SyncFault on timeout.
void recv_ll_unpack(const RankCtx& ctx, std::span<std::byte> dst, std::span<const std::byte> src, std::uint32_t flag);

// Same spin, but copies whole slots so they can be forwarded. `dst` may
// alias `src`.
void recv_ll_pack(const RankCtx& ctx, std::span<std::byte> dst, std::span<const std::byte> src, std::uint32_t flag);

// Non-spinning decode for a buffer already known to be complete. Throws
// ArgumentError if any slot carries a different flag.
void ll_unpack_ready(std::span<std::byte> dst, std::span<const std::byte> src, std::uint32_t flag);

}  // namespace onesided

#endif  // ONESIDED_LL_PROTOCOL_H_
