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

// OpenSHMEM-style primitives plus the signal/token/multimem extensions.
//
// All functions take the calling rank's context. Signals are 64-bit words in
// the signal pad, addressed by absolute index. Blocking puts and gets are
// complete on return; the _nbi variants complete at quiet(), barrier_all()
// or the end of the issuing task.

#ifndef ONESIDED_PRIMITIVES_H_
#define ONESIDED_PRIMITIVES_H_

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

#include "onesided/errors.h"
#include "onesided/world.h"

namespace onesided {

enum class SignalOp { kSet, kAdd };
enum class WaitCond { kEq, kNe, kGe, kGt, kLe, kLt };

std::string_view to_string(SignalOp op);
std::string_view to_string(WaitCond cond);
bool satisfies(std::uint64_t observed, WaitCond cond, std::uint64_t value);

// Witness that a wait() completed. Single use.
class Token {
 public:
  int signal() const { return signal_; }
  std::uint64_t observed() const { return observed_; }
  bool consumed() const { return consumed_; }

 private:
  friend Token wait(const RankCtx& ctx, int sig, std::uint64_t value);
  friend void consume_token_checked(Token& token);
  Token(int sig, std::uint64_t observed) : signal_(sig), observed_(observed) {}

  int signal_;
  std::uint64_t observed_;
  bool consumed_ = false;
};

// Copies bytes; uses 8-byte atomic stores/loads where both sides allow it so
// concurrent readers never see torn words.
void copy_bytes(std::span<std::byte> dst, std::span<const std::byte> src);

int my_pe(const RankCtx& ctx);
int n_pes(const RankCtx& ctx);

// Data movement. `dst`/`src` handles address the symmetric heap; offsets are
// relative to the handle. Throw RangeError when out of bounds.
void putmem(const RankCtx& ctx, const SymHandle& dst, std::size_t dst_offset, std::span<const std::byte> src,
            int peer);
void putmem_nbi(const RankCtx& ctx, const SymHandle& dst, std::size_t dst_offset,
                std::span<const std::byte> src, int peer);
void getmem(const RankCtx& ctx, std::span<std::byte> dst, const SymHandle& src, std::size_t src_offset, int peer);
void getmem_nbi(const RankCtx& ctx, std::span<std::byte> dst, const SymHandle& src, std::size_t src_offset,
                int peer);

// The signal update is never visible before the payload.
void putmem_signal(const RankCtx& ctx, const SymHandle& dst, std::size_t dst_offset,
                   std::span<const std::byte> src, int sig, std::uint64_t sig_value, SignalOp op, int peer);
void putmem_signal_nbi(const RankCtx& ctx, const SymHandle& dst, std::size_t dst_offset,
                       std::span<const std::byte> src, int sig, std::uint64_t sig_value, SignalOp op, int peer);

void signal_op(const RankCtx& ctx, int peer, int sig, SignalOp op, std::uint64_t value);
void notify(const RankCtx& ctx, int peer, int sig, std::uint64_t value);

// Spins on the caller's own signal. Acquire ordering on success.
std::uint64_t signal_wait_until(const RankCtx& ctx, int sig, WaitCond cond, std::uint64_t value);
Token wait(const RankCtx& ctx, int sig, std::uint64_t value);

// Marks the token consumed; a second call throws UsageError.
void consume_token_checked(Token& token);

// Returns `payload` with every later read ordered after the token's wait.
template <class T>
T consume_token(const RankCtx& ctx, Token& token, T payload) {
  consume_token_checked(token);
  std::atomic_thread_fence(std::memory_order_acquire);
  ctx.world().counters(ctx.rank()).bump(Primitive::kConsumeToken);
  return payload;
}

std::uint64_t atomic_cas(const RankCtx& ctx, int peer, int sig, std::uint64_t expected, std::uint64_t desired);
std::uint64_t atomic_add(const RankCtx& ctx, int peer, int sig, std::uint64_t delta);
std::uint64_t ld_acquire(const RankCtx& ctx, int peer, int sig);
void red_release(const RankCtx& ctx, int peer, int sig, std::uint64_t delta);

// Replicates the caller's bytes of `h` into every same-node replica.
void multimem_st(const RankCtx& ctx, const SymHandle& h);

namespace detail {
void check_multimem_width(const SymHandle& h, std::size_t width);
void count_multimem_ld(const RankCtx& ctx, const SymHandle& h);
}  // namespace detail

// Element-wise sum of `h` (viewed as T[]) over every same-node replica.
template <class T>
std::vector<T> multimem_ld_reduce(const RankCtx& ctx, const SymHandle& h) {
  static_assert(std::is_arithmetic_v<T>);
  detail::check_multimem_width(h, sizeof(T));
  const std::size_t n = h.length / sizeof(T);
  std::vector<T> out(n, T{});
  World& w = ctx.world();
  const int first = ctx.node_id() * ctx.local_world_size();
  for (int r = first; r < first + ctx.local_world_size(); ++r) {
    auto bytes = w.remote_ptr(h, r);
    for (std::size_t i = 0; i < n; ++i) {
      T v;
      std::memcpy(&v, bytes.data() + i * sizeof(T), sizeof(T));
      out[i] += v;
    }
  }
  detail::count_multimem_ld(ctx, h);
  return out;
}

// Collective: every rank's replica of `h` becomes a copy of root's.
// Throws ConfigError when ranks disagree on the root.
void broadcast(const RankCtx& ctx, int root, const SymHandle& h);

// Atomic single-word remote store.
void int_p(const RankCtx& ctx, int peer, const SymHandle& h, std::size_t offset, std::int64_t value);
std::int64_t int_g(const RankCtx& ctx, int peer, const SymHandle& h, std::size_t offset);

void barrier_all(const RankCtx& ctx);
void sync_all(const RankCtx& ctx);
void barrier_all_intra_node(const RankCtx& ctx);
void quiet(const RankCtx& ctx);
void fence(const RankCtx& ctx);

// Typed helpers over the byte interface.
template <class T>
std::span<const std::byte> as_bytes_of(std::span<const T> v) {
  return std::as_bytes(v);
}

template <class T>
std::span<T> typed(std::span<std::byte> bytes) {
  return {reinterpret_cast<T*>(bytes.data()), bytes.size() / sizeof(T)};
}

template <class T>
std::span<const T> typed(std::span<const std::byte> bytes) {
  return {reinterpret_cast<const T*>(bytes.data()), bytes.size() / sizeof(T)};
}

}  // namespace onesided

#endif  // ONESIDED_PRIMITIVES_H_
