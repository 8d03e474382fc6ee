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

#include "onesided/scheduler.h"

#include <algorithm>
#include <limits>
#include <sstream>
#include <thread>

#include "onesided/errors.h"

namespace onesided {

std::string_view to_string(SchedulerMode mode) {
  switch (mode) {
    case SchedulerMode::kFree:
      return "free";
    case SchedulerMode::kRoundRobin:
      return "det";
    case SchedulerMode::kRandom:
      return "random";
  }
  return "?";
}

SchedulerMode parse_scheduler_mode(std::string_view name) {
  if (name == "free") return SchedulerMode::kFree;
  if (name == "det" || name == "rr" || name == "deterministic") return SchedulerMode::kRoundRobin;
  if (name == "random") return SchedulerMode::kRandom;
  throw ConfigError("unknown scheduler mode '" + std::string(name) + "'");
}

class SerialScheduler {
 public:
  SerialScheduler(const SchedulerOptions& options, std::vector<std::string> names)
      : mode_(options.mode), rng_(options.seed) {
    slots_.reserve(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto slot = std::make_unique<Slot>();
      slot->name = std::move(names[i]);
      if (!options.starve.empty() && slot->name == options.starve) starve_ = static_cast<int>(i);
      slots_.push_back(std::move(slot));
    }
  }

  void set_on_deadlock(std::function<void()> fn) { on_deadlock_ = std::move(fn); }

  void start() {
    std::unique_lock lock(mu_);
    const int first = pick_locked();
    if (first < 0) return;
    current_ = first;
    slots_[first]->sem.release();
  }

  // Blocks the calling thread until it holds the baton.
  void enter(int me) {
    slots_[me]->sem.acquire();
    check_aborted();
  }

  void yield(int me, bool progress, std::string_view waiting_on) {
    std::unique_lock lock(mu_);
    Slot& self = *slots_[me];
    if (progress) {
      ++epoch_;
      self.stuck_epoch = kNotStuck;
    } else {
      self.stuck_epoch = epoch_;
      self.waiting_on.assign(waiting_on);
    }
    const int next = pick_locked();
    if (next < 0) {
      abort_locked();
      lock.unlock();
      if (on_deadlock_) on_deadlock_();
      throw SyncFault(report_);
    }
    if (next == me) return;
    current_ = next;
    slots_[next]->sem.release();
    lock.unlock();
    self.sem.acquire();
    check_aborted();
  }

  void finish(int me) {
    std::unique_lock lock(mu_);
    slots_[me]->finished = true;
    ++epoch_;
    if (aborted_) return;
    const int next = pick_locked();
    if (next < 0) {
      if (std::all_of(slots_.begin(), slots_.end(), [](const auto& s) { return s->finished; })) return;
      abort_locked();
      lock.unlock();
      if (on_deadlock_) on_deadlock_();
      return;
    }
    current_ = next;
    slots_[next]->sem.release();
  }

  // Called when a body faults so that every waiter wakes up and observes the
  // cancellation flag.
  void note_progress() {
    std::unique_lock lock(mu_);
    ++epoch_;
  }

 private:
  static constexpr std::uint64_t kNotStuck = std::numeric_limits<std::uint64_t>::max();

  struct Slot {
    std::string name;
    std::binary_semaphore sem{0};
    bool finished = false;
    std::uint64_t stuck_epoch = kNotStuck;
    std::string waiting_on;
  };

  bool runnable(int i) const {
    const Slot& s = *slots_[i];
    return !s.finished && s.stuck_epoch != epoch_;
  }

  int pick_locked() {
    const int n = static_cast<int>(slots_.size());
    std::vector<int> candidates;
    for (int i = 0; i < n; ++i) {
      if (i != starve_ && runnable(i)) candidates.push_back(i);
    }
    if (candidates.empty()) {
      if (starve_ >= 0 && runnable(starve_)) return starve_;
      return -1;
    }
    if (mode_ == SchedulerMode::kRandom) {
      std::uniform_int_distribution<std::size_t> dist(0, candidates.size() - 1);
      return candidates[dist(rng_)];
    }
    // Round robin: first candidate strictly after the current holder.
    for (int k = 1; k <= n; ++k) {
      const int i = (current_ + k + n) % n;
      if (std::find(candidates.begin(), candidates.end(), i) != candidates.end()) return i;
    }
    return candidates.front();
  }

  void abort_locked() {
    aborted_ = true;
    std::ostringstream os;
    os << "deadlock: no task can make progress;";
    for (const auto& s : slots_) {
      if (s->finished) continue;
      os << " [" << s->name << " waiting on " << (s->waiting_on.empty() ? "?" : s->waiting_on) << "]";
    }
    report_ = os.str();
    for (const auto& s : slots_) {
      if (!s->finished) s->sem.release();
    }
  }

  void check_aborted() {
    std::unique_lock lock(mu_);
    if (aborted_) throw SyncFault(report_);
  }

  SchedulerMode mode_;
  std::mt19937_64 rng_;
  std::mutex mu_;
  std::vector<std::unique_ptr<Slot>> slots_;
  int current_ = -1;
  int starve_ = -1;
  std::uint64_t epoch_ = 0;
  bool aborted_ = false;
  std::string report_;
  std::function<void()> on_deadlock_;
};

namespace {

struct Binding {
  SerialScheduler* serial = nullptr;
  int id = -1;
  std::string_view name;
};

thread_local Binding tls_binding;

}  // namespace

namespace sched {

void step() {
  if (tls_binding.serial != nullptr) tls_binding.serial->yield(tls_binding.id, true, {});
}

bool serialized() { return tls_binding.serial != nullptr; }

std::string_view current_task() { return tls_binding.name; }

}  // namespace sched

Spinner::Spinner(const WaitPolicy& policy, std::string_view what)
    : policy_(policy), what_(what), deadline_(std::chrono::steady_clock::now() + policy.timeout) {}

void Spinner::failed(bool made_progress) {
  if (policy_.cancelled != nullptr && policy_.cancelled->load(std::memory_order_acquire)) {
    throw SyncFault("cancelled while waiting on " + std::string(what_));
  }
  if (std::chrono::steady_clock::now() > deadline_) {
    throw SyncFault("timeout after " + std::to_string(policy_.timeout.count()) + " ms waiting on " +
                    std::string(what_));
  }
  ++attempts_;
  if (tls_binding.serial != nullptr) {
    tls_binding.serial->yield(tls_binding.id, made_progress, what_);
    return;
  }
  if (attempts_ < 16) {
    std::this_thread::yield();
  } else {
    const auto us = std::min<std::uint32_t>(5u << std::min<std::uint32_t>((attempts_ - 16) / 8, 5u), 100u);
    std::this_thread::sleep_for(std::chrono::microseconds(us));
  }
}

TaskScheduler::TaskScheduler(SchedulerOptions options, WaitPolicy policy)
    : options_(std::move(options)), policy_(policy) {}

TaskScheduler::~TaskScheduler() = default;

std::vector<std::exception_ptr> TaskScheduler::run(const std::vector<std::string>& names,
                                                   const std::vector<std::function<void()>>& bodies) {
  const std::size_t n = bodies.size();
  std::vector<std::exception_ptr> errors(n);
  if (n == 0) return errors;

  auto fault = [this] {
    std::call_once(fault_once_, [this] {
      if (on_fault_) on_fault_();
    });
  };

  if (options_.mode == SchedulerMode::kFree) {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      threads.emplace_back([&, i] {
        tls_binding = Binding{nullptr, static_cast<int>(i), names[i]};
        try {
          bodies[i]();
        } catch (...) {
          errors[i] = std::current_exception();
          fault();
        }
        tls_binding = Binding{};
      });
    }
    for (auto& t : threads) t.join();
    return errors;
  }

  SerialScheduler serial(options_, names);
  serial.set_on_deadlock(fault);
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      const int id = static_cast<int>(i);
      tls_binding = Binding{&serial, id, names[i]};
      try {
        serial.enter(id);
        bodies[i]();
      } catch (...) {
        errors[i] = std::current_exception();
        fault();
        serial.note_progress();
      }
      serial.finish(id);
      tls_binding = Binding{};
    });
  }
  serial.start();
  for (auto& t : threads) t.join();
  return errors;
}

}  // namespace onesided
