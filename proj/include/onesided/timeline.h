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

#ifndef ONESIDED_TIMELINE_H_
#define ONESIDED_TIMELINE_H_

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace onesided {

struct TimelineEvent {
  std::string name;
  int rank = 0;
  std::string resource;
  double start_us = 0.0;
  double dur_us = 0.0;
  // Indices of events that must finish before this one starts.
  std::vector<int> deps;

  double end_us() const { return start_us + dur_us; }
};

// A set of timed events. Events sharing (rank, resource) are expected not
// to overlap; check with exclusive().
class Timeline {
 public:
  int add(TimelineEvent ev);

  const std::vector<TimelineEvent>& events() const { return events_; }
  const TimelineEvent& at(int i) const { return events_.at(static_cast<std::size_t>(i)); }
  bool empty() const { return events_.empty(); }
  std::size_t size() const { return events_.size(); }

  double makespan() const;
  double end_of(std::string_view name_prefix) const;

  // Events for one rank (or all ranks when rank < 0) on one resource, sorted
  // by start time.
  std::vector<TimelineEvent> on(int rank, std::string_view resource) const;
  double busy_us(int rank, std::string_view resource) const;

  // True when no two events on the same (rank, resource) overlap.
  bool exclusive(std::string_view resource, double eps = 1e-9) const;

  // True when every event starts no earlier than all of its dependencies end.
  bool respects_deps(double eps = 1e-9) const;

  // Longest dependency chain ending at the last-finishing event.
  std::vector<int> critical_path() const;

  // Chrome trace-event array: {name, ph:"X", ts, dur, pid, tid}.
  nlohmann::ordered_json to_chrome_trace() const;

 private:
  std::vector<TimelineEvent> events_;
};

}  // namespace onesided

#endif  // ONESIDED_TIMELINE_H_
