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

#include "onesided/task_runtime.h"

#include <algorithm>
#include <utility>

#include "onesided/errors.h"
#include "onesided/primitives.h"

namespace onesided {

std::string_view to_string(TaskRole role) {
  switch (role) {
    case TaskRole::kCompute:
      return "compute";
    case TaskRole::kCommBlock:
      return "comm_block";
    case TaskRole::kCopyEngine:
      return "copy_engine";
    case TaskRole::kHost:
      return "host";
  }
  return "?";
}

bool CopyHandle::ready() const { return state_ == nullptr || state_->load(std::memory_order_acquire); }

void CopyHandle::wait(const RankCtx& ctx) const {
  if (state_ == nullptr) return;
  spin_until(ctx.world().wait_policy(), "copy_async completion", [&] { return ready(); });
}

BlockAssignment::BlockAssignment(int n_blocks) {
  if (n_blocks < 0) throw ArgumentError("negative block count");
  roles_.resize(static_cast<std::size_t>(n_blocks));
}

void BlockAssignment::assign(int block, TaskRole role) {
  if (block < 0 || block >= size()) throw ArgumentError("block " + std::to_string(block) + " out of range");
  auto& slot = roles_[static_cast<std::size_t>(block)];
  if (slot.has_value()) throw ArgumentError("block " + std::to_string(block) + " assigned twice");
  slot = role;
}

TaskRole BlockAssignment::role(int block) const {
  if (block < 0 || block >= size()) throw ArgumentError("block " + std::to_string(block) + " out of range");
  const auto& slot = roles_[static_cast<std::size_t>(block)];
  if (!slot.has_value()) throw ArgumentError("block " + std::to_string(block) + " unassigned");
  return *slot;
}

void BlockAssignment::validate() const {
  for (int b = 0; b < size(); ++b) role(b);
}

Program::Program(int world_size) : world_size_(world_size) {
  if (world_size < 1) throw ArgumentError("program needs at least one rank");
}

int Program::stream(int rank, std::string name, TaskRole role) {
  if (rank < 0 || rank >= world_size_) throw ArgumentError("stream rank " + std::to_string(rank) + " out of range");
  Stream s;
  s.rank = rank;
  s.name = std::move(name);
  s.role = role;
  streams_.push_back(std::move(s));
  return static_cast<int>(streams_.size()) - 1;
}

const Program::Stream& Program::stream_at(int id) const {
  if (id < 0 || id >= static_cast<int>(streams_.size())) throw ArgumentError("unknown stream " + std::to_string(id));
  return streams_[static_cast<std::size_t>(id)];
}

Program::Stream& Program::mutable_stream(int id) { return const_cast<Stream&>(stream_at(id)); }

std::size_t Program::task_count() const {
  std::size_t n = 0;
  for (const auto& s : streams_) n += static_cast<std::size_t>(s.task_count);
  return n;
}

void Program::task(int stream, std::string name, TaskFn fn, double cost_us) {
  task(stream, std::move(name), stream_at(stream).role, std::move(fn), cost_us);
}

void Program::task(int stream, std::string name, TaskRole role, TaskFn fn, double cost_us) {
  Stream& s = mutable_stream(stream);
  if (s.role == TaskRole::kCopyEngine && role == TaskRole::kCompute) {
    throw UsageError("copy-engine stream '" + s.name + "' cannot run compute task '" + name + "'");
  }
  if (cost_us < 0.0) throw ArgumentError("negative task cost");
  Item it;
  it.kind = Item::Kind::kTask;
  it.name = std::move(name);
  it.role = role;
  it.fn = std::move(fn);
  it.cost_us = cost_us;
  s.items.push_back(std::move(it));
  ++s.task_count;
}

void Program::stream_wait(int waiter, int waitee) {
  Stream& a = mutable_stream(waiter);
  const Stream& b = stream_at(waitee);
  if (a.rank != b.rank) {
    throw UsageError("stream '" + a.name + "' on rank " + std::to_string(a.rank) + " cannot wait on stream '" +
                     b.name + "' of rank " + std::to_string(b.rank));
  }
  if (waiter == waitee || b.task_count == 0) return;
  Item it;
  it.kind = Item::Kind::kWait;
  it.name = "wait(" + b.name + ")";
  it.waitee = waitee;
  it.wait_count = b.task_count;
  a.items.push_back(std::move(it));
}

CopyHandle Program::push_copy(int stream, std::string name, std::size_t bytes, TaskFn fn) {
  Stream& s = mutable_stream(stream);
  if (s.role != TaskRole::kCopyEngine) {
    throw UsageError("copy_async needs a copy-engine stream, '" + s.name + "' is " + std::string(to_string(s.role)));
  }
  CopyHandle h;
  h.state_ = std::make_shared<std::atomic<bool>>(false);
  Item it;
  it.kind = Item::Kind::kTask;
  it.name = std::move(name);
  it.role = TaskRole::kCopyEngine;
  it.fn = std::move(fn);
  it.copy_bytes = bytes;
  it.is_copy = true;
  it.done = h.state_;
  s.items.push_back(std::move(it));
  ++s.task_count;
  return h;
}

CopyHandle Program::copy_async(int stream, std::span<std::byte> dst, std::span<const std::byte> src,
                               std::string name) {
  if (dst.size() < src.size()) throw RangeError("copy_async destination is smaller than the source");
  return push_copy(stream, std::move(name), src.size(), [dst, src](const RankCtx& ctx) {
    sched::step();
    ctx.world().counters(ctx.rank()).bump(Primitive::kCopyAsync);
    copy_bytes(dst.first(src.size()), src);
  });
}

CopyHandle Program::copy_async(int stream, const SymHandle& dst, std::size_t offset, std::span<const std::byte> src,
                               int peer, std::string name) {
  if (peer < 0 || peer >= world_size_) throw ArgumentError("copy_async peer " + std::to_string(peer) + " out of range");
  if (offset + src.size() > dst.length) throw RangeError("copy_async writes past the end of the symmetric region");
  return push_copy(stream, std::move(name), src.size(), [dst, offset, src, peer](const RankCtx& ctx) {
    sched::step();
    World& w = ctx.world();
    w.counters(ctx.rank()).bump(Primitive::kCopyAsync);
    copy_bytes(w.remote_ptr(dst, peer).subspan(offset, src.size()), src);
    w.record(TraceRecord{0, ctx.rank(), std::string(sched::current_task()), Primitive::kCopyAsync, peer, src.size(),
                         -1, 0});
  });
}

void LaunchReport::rethrow_if_failed() const {
  if (ok) return;
  if (first_error) std::rethrow_exception(first_error);
  throw SyncFault(fault);
}

const TaskRecord* LaunchReport::find(std::string_view stream, std::string_view name, int rank) const {
  for (const auto& t : tasks) {
    if (t.stream_name == stream && t.name == name && (rank < 0 || t.rank == rank)) return &t;
  }
  return nullptr;
}

namespace {

double item_cost(const Program::Item& it, double copy_bw_gbps) {
  double cost = it.cost_us;
  if (it.is_copy && it.copy_bytes > 0) cost += static_cast<double>(it.copy_bytes) / (copy_bw_gbps * 1e3);
  return cost;
}

std::vector<TaskRecord> make_records(const Program& program) {
  std::vector<TaskRecord> records;
  const auto& streams = program.streams();
  for (std::size_t s = 0; s < streams.size(); ++s) {
    for (const auto& it : streams[s].items) {
      if (it.kind != Program::Item::Kind::kTask) continue;
      TaskRecord r;
      r.rank = streams[s].rank;
      r.stream = static_cast<int>(s);
      r.stream_name = streams[s].name;
      r.name = it.name;
      r.role = it.role;
      records.push_back(std::move(r));
    }
  }
  return records;
}

}  // namespace

Timeline simulate_program(const Program& program, double copy_bw_gbps, std::vector<TaskRecord>* records) {
  if (copy_bw_gbps <= 0.0) throw ArgumentError("copy bandwidth must be positive");
  const auto& streams = program.streams();
  const std::size_t n = streams.size();
  std::vector<std::size_t> pos(n, 0);
  std::vector<double> free_at(n, 0.0);
  std::vector<int> last_event(n, -1);
  std::vector<std::vector<int>> finished(n);
  std::vector<std::vector<int>> pending_deps(n);
  std::vector<std::size_t> first_record(n, 0);
  for (std::size_t s = 1; s < n; ++s) first_record[s] = first_record[s - 1] + static_cast<std::size_t>(streams[s - 1].task_count);

  Timeline tl;
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t s = 0; s < n; ++s) {
      while (pos[s] < streams[s].items.size()) {
        const auto& it = streams[s].items[pos[s]];
        if (it.kind == Program::Item::Kind::kWait) {
          const auto& done = finished[static_cast<std::size_t>(it.waitee)];
          if (static_cast<int>(done.size()) < it.wait_count) break;
          const int ev = done[static_cast<std::size_t>(it.wait_count - 1)];
          free_at[s] = std::max(free_at[s], tl.at(ev).end_us());
          pending_deps[s].push_back(ev);
        } else {
          TimelineEvent e;
          e.name = it.name;
          e.rank = streams[s].rank;
          e.resource = streams[s].name;
          e.start_us = free_at[s];
          e.dur_us = item_cost(it, copy_bw_gbps);
          if (last_event[s] >= 0) e.deps.push_back(last_event[s]);
          for (int d : pending_deps[s]) e.deps.push_back(d);
          pending_deps[s].clear();
          const int id = tl.add(std::move(e));
          free_at[s] = tl.at(id).end_us();
          last_event[s] = id;
          if (records != nullptr) {
            TaskRecord& r = (*records)[first_record[s] + finished[s].size()];
            r.start_us = tl.at(id).start_us;
            r.end_us = tl.at(id).end_us();
          }
          finished[s].push_back(id);
        }
        ++pos[s];
        moved = true;
      }
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (pos[s] < streams[s].items.size()) {
      throw UsageError("stream waits form a cycle through stream '" + streams[s].name + "' of rank " +
                       std::to_string(streams[s].rank));
    }
  }
  return tl;
}

LaunchReport launch(World& world, const Program& program, const LaunchOptions& options) {
  if (program.world_size() != world.world_size()) {
    throw ArgumentError("program built for " + std::to_string(program.world_size()) + " ranks, world has " +
                        std::to_string(world.world_size()));
  }
  world.clear_cancel();
  world.reset_sync_state();

  const auto& streams = program.streams();
  const std::size_t n = streams.size();
  LaunchReport report;
  report.tasks = make_records(program);

  auto completed = std::make_unique<std::atomic<int>[]>(n);
  for (std::size_t s = 0; s < n; ++s) completed[s].store(0);
  std::atomic<std::uint64_t> seq{0};
  std::atomic<int> first_fault{-1};
  std::vector<std::size_t> first_record(n, 0);
  for (std::size_t s = 1; s < n; ++s) first_record[s] = first_record[s - 1] + static_cast<std::size_t>(streams[s - 1].task_count);

  std::vector<std::string> names;
  std::vector<std::function<void()>> bodies;
  names.reserve(n);
  bodies.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& st = streams[s];
    names.push_back("r" + std::to_string(st.rank) + "/" + st.name);
    bodies.push_back([&, s] {
      const auto& stream = streams[s];
      RankCtx ctx = world.ctx(stream.rank);
      std::size_t rec = first_record[s];
      TaskRecord* current = nullptr;
      try {
        for (const auto& it : stream.items) {
          if (it.kind == Program::Item::Kind::kWait) {
            const auto& waitee = streams[static_cast<std::size_t>(it.waitee)];
            const std::string what = "stream r" + std::to_string(waitee.rank) + "/" + waitee.name + " reaching " +
                                     std::to_string(it.wait_count) + " tasks";
            const auto* counter = &completed[static_cast<std::size_t>(it.waitee)];
            spin_until(world.wait_policy(), what,
                       [&] { return counter->load(std::memory_order_acquire) >= it.wait_count; },
                       [&] { return world.progress(stream.rank); });
            continue;
          }
          current = &report.tasks[rec++];
          sched::step();
          current->ran = true;
          current->start_seq = seq.fetch_add(1);
          if (it.fn) it.fn(ctx);
          world.drain(stream.rank);
          current->end_seq = seq.fetch_add(1);
          current->ok = true;
          if (it.done) it.done->store(true, std::memory_order_release);
          completed[s].fetch_add(1, std::memory_order_acq_rel);
          current = nullptr;
        }
      } catch (const std::exception& e) {
        if (current != nullptr) current->error = e.what();
        int expected = -1;
        first_fault.compare_exchange_strong(expected, static_cast<int>(s));
        world.cancel();
        throw;
      } catch (...) {
        int expected = -1;
        first_fault.compare_exchange_strong(expected, static_cast<int>(s));
        world.cancel();
        throw;
      }
    });
  }

  TaskScheduler scheduler(options.sched, world.wait_policy());
  scheduler.set_on_fault([&world] { world.cancel(); });
  const auto errors = scheduler.run(names, bodies);

  const int first = first_fault.load();
  if (first >= 0 || std::any_of(errors.begin(), errors.end(), [](const auto& e) { return e != nullptr; })) {
    report.ok = false;
    std::size_t idx = first >= 0 ? static_cast<std::size_t>(first) : 0;
    if (first < 0) {
      while (errors[idx] == nullptr) ++idx;
    }
    report.first_error = errors[idx];
    std::string message = "unknown error";
    try {
      if (report.first_error) std::rethrow_exception(report.first_error);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    std::string task = "(wait)";
    for (const auto& t : report.tasks) {
      if (t.stream == static_cast<int>(idx) && t.ran && !t.ok) task = t.name;
    }
    report.fault = names[idx] + "/" + task + ": " + message;
    std::string blocked;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == idx || errors[i] == nullptr) continue;
      try {
        std::rethrow_exception(errors[i]);
      } catch (const SyncFault&) {
        blocked += (blocked.empty() ? "" : ", ") + names[i];
      } catch (...) {
      }
    }
    if (!blocked.empty()) report.fault += "; also blocked: " + blocked;
    world.discard_pending();
  }

  if (options.timed && report.ok) report.timeline = simulate_program(program, options.copy_bw_gbps, &report.tasks);
  return report;
}

}  // namespace onesided
