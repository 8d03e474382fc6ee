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

// Async tasks grouped into per-rank streams.
//
// A Program is plain data: streams, the tasks queued on them and the
// cross-stream waits between them. launch() gives every stream its own
// execution context, runs tasks of one stream in FIFO order and reports
// per-task start/end sequence numbers. With `timed` set it also replays the
// program against each task's declared cost and returns a Timeline.

#ifndef ONESIDED_TASK_RUNTIME_H_
#define ONESIDED_TASK_RUNTIME_H_

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onesided/scheduler.h"
#include "onesided/timeline.h"
#include "onesided/world.h"

namespace onesided {

enum class TaskRole { kCompute, kCommBlock, kCopyEngine, kHost };

std::string_view to_string(TaskRole role);

using TaskFn = std::function<void(const RankCtx&)>;

// Completion of one copy_async. Shared between the program and its caller.
class CopyHandle {
 public:
  CopyHandle() = default;

  bool valid() const { return state_ != nullptr; }
  bool ready() const;
  // Spins until the copy has completed. Throws SyncFault on timeout.
  void wait(const RankCtx& ctx) const;

 private:
  friend class Program;
  std::shared_ptr<std::atomic<bool>> state_;
};

// Block id to role mapping for one communication kernel.
class BlockAssignment {
 public:
  explicit BlockAssignment(int n_blocks);

  void assign(int block, TaskRole role);
  TaskRole role(int block) const;
  int size() const { return static_cast<int>(roles_.size()); }
  // Throws ArgumentError unless every block has been assigned exactly once.
  void validate() const;

 private:
  std::vector<std::optional<TaskRole>> roles_;
};

class Program {
 public:
  explicit Program(int world_size);

  int world_size() const { return world_size_; }

  // Adds a stream on `rank` and returns its id.
  int stream(int rank, std::string name, TaskRole role);

  // Queues a callback. `role` defaults to the stream's role. A COPY_ENGINE
  // stream refuses COMPUTE tasks with UsageError.
  void task(int stream, std::string name, TaskFn fn, double cost_us = 0.0);
  void task(int stream, std::string name, TaskRole role, TaskFn fn, double cost_us = 0.0);

  // Later tasks on `waiter` start only after every task queued so far on
  // `waitee` has finished. Throws UsageError across ranks.
  void stream_wait(int waiter, int waitee);

  // Copies `src` into `dst` on a COPY_ENGINE stream. In timed mode the copy
  // costs bytes / copy_bw and occupies no compute resource.
  CopyHandle copy_async(int stream, std::span<std::byte> dst, std::span<const std::byte> src,
                        std::string name = "copy");
  // Same, into `peer`'s replica of `dst` at `offset`.
  CopyHandle copy_async(int stream, const SymHandle& dst, std::size_t offset, std::span<const std::byte> src,
                        int peer, std::string name = "copy");

  struct Item {
    enum class Kind { kTask, kWait } kind = Kind::kTask;
    std::string name;
    TaskRole role = TaskRole::kCompute;
    TaskFn fn;
    double cost_us = 0.0;
    std::size_t copy_bytes = 0;
    bool is_copy = false;
    std::shared_ptr<std::atomic<bool>> done;
    int waitee = -1;
    int wait_count = 0;
  };

  struct Stream {
    int rank = 0;
    std::string name;
    TaskRole role = TaskRole::kCompute;
    std::vector<Item> items;
    int task_count = 0;
  };

  const std::vector<Stream>& streams() const { return streams_; }
  const Stream& stream_at(int id) const;
  std::size_t task_count() const;

 private:
  Stream& mutable_stream(int id);
  CopyHandle push_copy(int stream, std::string name, std::size_t bytes, TaskFn fn);

  int world_size_;
  std::vector<Stream> streams_;
};

struct LaunchOptions {
  SchedulerOptions sched;
  bool timed = false;
  // Copy-engine bandwidth for timed mode, GB/s.
  double copy_bw_gbps = 170.0;
};

struct TaskRecord {
  int rank = 0;
  int stream = 0;
  std::string stream_name;
  std::string name;
  TaskRole role = TaskRole::kCompute;
  bool ran = false;
  bool ok = false;
  std::uint64_t start_seq = 0;
  std::uint64_t end_seq = 0;
  // Timed mode only.
  double start_us = 0.0;
  double end_us = 0.0;
  std::string error;
};

struct LaunchReport {
  bool ok = true;
  std::vector<TaskRecord> tasks;
  // "r<rank>/<stream>/<task>: <message>" for the first fault, followed by
  // "; also blocked: r<rank>/<stream>, ..." when other streams faulted
  // waiting.
  std::string fault;
  std::exception_ptr first_error;
  std::optional<Timeline> timeline;

  void rethrow_if_failed() const;
  const TaskRecord* find(std::string_view stream, std::string_view name, int rank = -1) const;
};

// Runs every stream of `program` to completion or first fault. The first
// fault cancels the world; waits elsewhere then fail with SyncFault.
LaunchReport launch(World& world, const Program& program, const LaunchOptions& options = {});

// Timeline of `program` from task costs alone. Throws UsageError when the
// stream waits form a cycle.
Timeline simulate_program(const Program& program, double copy_bw_gbps, std::vector<TaskRecord>* records = nullptr);

}  // namespace onesided

#endif  // ONESIDED_TASK_RUNTIME_H_
