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

#include "onesided/ll_protocol.h"

#include <atomic>
#include <bit>
#include <cstring>
#include <string>

#include "onesided/errors.h"

namespace onesided {
namespace {

static_assert(std::endian::native == std::endian::little, "LL slot layout assumes a little-endian host");

std::atomic_ref<std::uint64_t> slot_at(std::span<const std::byte> buf, std::size_t i) {
  auto* words = reinterpret_cast<std::uint64_t*>(const_cast<std::byte*>(buf.data()));
  return std::atomic_ref<std::uint64_t>(words[i]);
}

void check_slots(std::span<const std::byte> slots, std::size_t n_slots, const char* what) {
  if (reinterpret_cast<std::uintptr_t>(slots.data()) % kLLSlotBytes != 0) {
    throw ArgumentError(std::string(what) + ": LL buffer is not 8-byte aligned");
  }
  if (slots.size() < n_slots * kLLSlotBytes) {
    throw ArgumentError(std::string(what) + ": LL buffer holds " + std::to_string(slots.size() / kLLSlotBytes) +
                        " slots, need " + std::to_string(n_slots));
  }
}

void check_payload(std::size_t bytes, const char* what) {
  if (bytes % kLLWordBytes != 0) {
    throw ArgumentError(std::string(what) + ": payload of " + std::to_string(bytes) +
                        " bytes is not a multiple of 4");
  }
}

void wait_slot(const RankCtx& ctx, std::atomic_ref<std::uint64_t> slot, std::uint32_t flag, std::uint64_t& raw) {
  World& w = ctx.world();
  const int me = ctx.rank();
  spin_until(
      w.wait_policy(), "LL flag",
      [&] {
        raw = slot.load(std::memory_order_acquire);
        return LLSlot::decode(raw).flag == flag;
      },
      [&] { return w.progress(me); });
}

}  // namespace

LLBuffer LLBuffer::allocate(World& world, std::size_t payload_bytes) {
  check_payload(payload_bytes, "LLBuffer");
  return LLBuffer{world.alloc_symmetric(ll_encoded_bytes(payload_bytes), kLLSlotBytes), payload_bytes};
}

void LLBuffer::validate() const {
  check_payload(payload_bytes, "LLBuffer");
  if (region.length != ll_encoded_bytes(payload_bytes)) {
    throw ArgumentError("LLBuffer region must be twice the payload size");
  }
}

std::uint32_t round_flag(std::uint64_t iteration) {
  return static_cast<std::uint32_t>(iteration % 0xffffffffull) + 1u;
}

void ll_pack(std::span<std::byte> dst, std::span<const std::byte> src, std::uint32_t flag) {
  check_payload(src.size(), "ll_pack");
  const std::size_t n = src.size() / kLLWordBytes;
  check_slots(dst, n, "ll_pack");
  for (std::size_t i = 0; i < n; ++i) {
    LLSlot s;
    std::memcpy(&s.payload, src.data() + i * kLLWordBytes, kLLWordBytes);
    s.flag = flag;
    slot_at(dst, i).store(s.encode(), std::memory_order_release);
  }
}

void recv_ll_unpack(const RankCtx& ctx, std::span<std::byte> dst, std::span<const std::byte> src,
                    std::uint32_t flag) {
  check_payload(dst.size(), "recv_ll_unpack");
  const std::size_t n = dst.size() / kLLWordBytes;
  check_slots(src, n, "recv_ll_unpack");
  sched::step();
  ctx.world().counters(ctx.rank()).bump(Primitive::kRecvLLUnpack);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t raw = 0;
    wait_slot(ctx, slot_at(src, i), flag, raw);
    const std::uint32_t payload = LLSlot::decode(raw).payload;
    std::memcpy(dst.data() + i * kLLWordBytes, &payload, kLLWordBytes);
  }
}

void recv_ll_pack(const RankCtx& ctx, std::span<std::byte> dst, std::span<const std::byte> src, std::uint32_t flag) {
  if (src.size() % kLLSlotBytes != 0) throw ArgumentError("recv_ll_pack: source is not a whole number of slots");
  const std::size_t n = src.size() / kLLSlotBytes;
  check_slots(src, n, "recv_ll_pack");
  check_slots(dst, n, "recv_ll_pack");
  sched::step();
  ctx.world().counters(ctx.rank()).bump(Primitive::kRecvLLPack);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t raw = 0;
    wait_slot(ctx, slot_at(src, i), flag, raw);
    if (dst.data() != src.data()) slot_at(dst, i).store(raw, std::memory_order_release);
  }
}

void ll_unpack_ready(std::span<std::byte> dst, std::span<const std::byte> src, std::uint32_t flag) {
  check_payload(dst.size(), "ll_unpack_ready");
  const std::size_t n = dst.size() / kLLWordBytes;
  check_slots(src, n, "ll_unpack_ready");
  for (std::size_t i = 0; i < n; ++i) {
    const LLSlot s = LLSlot::decode(slot_at(src, i).load(std::memory_order_acquire));
    if (s.flag != flag) throw ArgumentError("slot " + std::to_string(i) + " carries a stale flag");
    std::memcpy(dst.data() + i * kLLWordBytes, &s.payload, kLLWordBytes);
  }
}

}  // namespace onesided
