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

// Execution contexts for rank tasks.
//
// Every task runs on its own thread. In free-running mode the threads are
// truly concurrent and spin loops back off. In the two serialized modes a
// baton is passed between threads at every primitive call and every failed
// poll, so exactly one task runs at a time and the interleaving is a pure
// function of the seed. Serialized modes also detect deadlock exactly: when
// every unfinished task has polled without any state change since, nobody
// can make progress.

#ifndef ONESIDED_SCHEDULER_H_
#define ONESIDED_SCHEDULER_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace onesided {

enum class SchedulerMode {
  kFree,        // OS-scheduled threads
  kRoundRobin,  // serialized, deterministic cyclic hand-off
  kRandom,      // serialized, seeded random hand-off
};

std::string_view to_string(SchedulerMode mode);
SchedulerMode parse_scheduler_mode(std::string_view name);

struct SchedulerOptions {
  SchedulerMode mode = SchedulerMode::kFree;
  std::uint64_t seed = 0;
  // Serialized modes only: the named task runs only when no other task can.
  std::string starve;
};

// Timeout and cancellation source consulted by every blocking wait.
struct WaitPolicy {
  const std::atomic<bool>* cancelled = nullptr;
  std::chrono::milliseconds timeout{5000};
};

class SerialScheduler;

namespace sched {

// A state-changing step. In serialized modes this hands the baton on.
void step();

// True when the calling thread runs under a serialized scheduler.
bool serialized();

// Name of the task bound to the calling thread, or "" outside a launch.
std::string_view current_task();

}  // namespace sched

// Tracks one blocking wait: timeout, cancellation and back-off.
class Spinner {
 public:
  Spinner(const WaitPolicy& policy, std::string_view what);

  // The awaited condition is still false. Throws SyncFault on timeout or
  // cancellation; otherwise yields the processor or the baton.
  void failed(bool made_progress = false);

 private:
  const WaitPolicy& policy_;
  std::string_view what_;
  std::chrono::steady_clock::time_point deadline_;
  std::uint32_t attempts_ = 0;
};

template <class Ready, class Progress>
void spin_until(const WaitPolicy& policy, std::string_view what, Ready&& ready,
                Progress&& progress) {
  if (ready()) return;
  Spinner spinner(policy, what);
  while (true) {
    const bool moved = progress();
    if (ready()) return;
    spinner.failed(moved);
  }
}

template <class Ready>
void spin_until(const WaitPolicy& policy, std::string_view what, Ready&& ready) {
  spin_until(policy, what, std::forward<Ready>(ready), [] { return false; });
}

// Runs a set of named bodies, one thread each, under the given mode.
class TaskScheduler {
 public:
  TaskScheduler(SchedulerOptions options, WaitPolicy policy);
  ~TaskScheduler();

  TaskScheduler(const TaskScheduler&) = delete;
  TaskScheduler& operator=(const TaskScheduler&) = delete;

  // Invoked once, from the faulting thread, when the first body throws or a
  // deadlock is detected. Used to cancel the world.
  void set_on_fault(std::function<void()> on_fault) { on_fault_ = std::move(on_fault); }

  // Runs all bodies to completion. Element i holds the exception thrown by
  // body i, or null.
  std::vector<std::exception_ptr> run(const std::vector<std::string>& names,
                                      const std::vector<std::function<void()>>& bodies);

 private:
  SchedulerOptions options_;
  WaitPolicy policy_;
  std::function<void()> on_fault_;
  std::once_flag fault_once_;
};

}  // namespace onesided

#endif  // ONESIDED_SCHEDULER_H_
