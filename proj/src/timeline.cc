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

#include "onesided/timeline.h"

#include <algorithm>
#include <map>
#include <utility>

namespace onesided {

int Timeline::add(TimelineEvent ev) {
  events_.push_back(std::move(ev));
  return static_cast<int>(events_.size()) - 1;
}

double Timeline::makespan() const {
  double end = 0.0;
  for (const auto& e : events_) end = std::max(end, e.end_us());
  return end;
}

double Timeline::end_of(std::string_view name_prefix) const {
  double end = 0.0;
  for (const auto& e : events_) {
    if (std::string_view(e.name).substr(0, name_prefix.size()) == name_prefix) end = std::max(end, e.end_us());
  }
  return end;
}

std::vector<TimelineEvent> Timeline::on(int rank, std::string_view resource) const {
  std::vector<TimelineEvent> out;
  for (const auto& e : events_) {
    if ((rank < 0 || e.rank == rank) && e.resource == resource) out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TimelineEvent& a, const TimelineEvent& b) { return a.start_us < b.start_us; });
  return out;
}

double Timeline::busy_us(int rank, std::string_view resource) const {
  double total = 0.0;
  for (const auto& e : on(rank, resource)) total += e.dur_us;
  return total;
}

bool Timeline::exclusive(std::string_view resource, double eps) const {
  std::map<int, std::vector<std::pair<double, double>>> by_rank;
  for (const auto& e : events_) {
    if (e.resource == resource) by_rank[e.rank].emplace_back(e.start_us, e.end_us());
  }
  for (auto& [rank, spans] : by_rank) {
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].first + eps < spans[i - 1].second) return false;
    }
  }
  return true;
}

bool Timeline::respects_deps(double eps) const {
  for (const auto& e : events_) {
    for (int d : e.deps) {
      if (e.start_us + eps < events_.at(static_cast<std::size_t>(d)).end_us()) return false;
    }
  }
  return true;
}

std::vector<int> Timeline::critical_path() const {
  std::vector<int> path;
  if (events_.empty()) return path;
  int cur = 0;
  for (int i = 1; i < static_cast<int>(events_.size()); ++i) {
    if (events_[i].end_us() > events_[cur].end_us()) cur = i;
  }
  while (cur >= 0) {
    path.push_back(cur);
    int next = -1;
    for (int d : events_[cur].deps) {
      if (next < 0 || events_[d].end_us() > events_[next].end_us()) next = d;
    }
    cur = next;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

nlohmann::ordered_json Timeline::to_chrome_trace() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& e : events_) {
    nlohmann::ordered_json ev;
    ev["name"] = e.name;
    ev["ph"] = "X";
    ev["ts"] = e.start_us;
    ev["dur"] = e.dur_us;
    ev["pid"] = e.rank;
    ev["tid"] = e.resource;
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace onesided
