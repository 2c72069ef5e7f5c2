#pragma once

#include <string>
#include <vector>

namespace loadshift {

using TaskId = std::string;

/// Planned (or committed) execution of one task over the prediction horizon.
struct TaskPlan {
  TaskId id;
  double start = 0.0;               // absolute h
  bool start_fixed = false;         // committed before this plan was made
  std::vector<double> node_times;   // absolute local-grid times
  std::vector<double> samples;      // kW at node_times
};

struct SchedulePlan {
  std::vector<TaskPlan> tasks;
  std::vector<double> battery_nodes;  // global grid, size = battery_power.size() + 1
  std::vector<double> battery_power;  // kW per global interval, positive = discharge

  const TaskPlan* find(const TaskId& id) const {
    for (const auto& t : tasks)
      if (t.id == id) return &t;
    return nullptr;
  }
};

}  // namespace loadshift
