#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loadshift/battery.hpp"
#include "loadshift/profiles.hpp"

namespace loadshift {

/// Piecewise-constant power floor P_min over absolute time. The first level
/// also applies before the first segment start; the last one extends forever.
class PowerLimit {
 public:
  PowerLimit() = default;
  static PowerLimit make(std::vector<double> starts, std::vector<double> levels);
  static PowerLimit constant(double level) { return make({0.0}, {level}); }

  double at(double t) const;
  std::span<const double> starts() const { return starts_; }
  std::span<const double> levels() const { return levels_; }

 private:
  std::vector<double> starts_{0.0};
  std::vector<double> levels_{0.0};
};

/// A requested task together with what the closed loop already fixed.
struct TaskStatus {
  Task task;
  std::optional<double> fixed_start;   // committed start (Remark-3 constant)
  std::vector<double> frozen_samples;  // applied inputs of the leading local nodes

  bool committed() const { return fixed_start.has_value(); }
};

struct RequestEvent {
  std::string appliance;
  double time = 0.0;
};

struct ScenarioState {
  double t0 = 0.0;
  std::vector<TaskStatus> tasks;  // requested and unfinished, I_r(t0)
  BatteryParams battery;
  double energy = 0.0;
  PowerLimit p_min;
  double global_resolution = 0.1;
  std::vector<RequestEvent> queue;  // requests that have not arrived yet

  std::vector<Task> task_list() const;
  /// I(t0): committed tasks whose start has passed.
  std::vector<TaskId> active_ids() const;
  std::optional<std::size_t> index_of(const TaskId& id) const;
  void validate() const;
};

}  // namespace loadshift
