#include "loadshift/state.hpp"

#include <algorithm>
#include <cmath>

#include "loadshift/errors.hpp"

namespace loadshift {

PowerLimit PowerLimit::make(std::vector<double> starts, std::vector<double> levels) {
  if (starts.empty() || starts.size() != levels.size())
    throw Error(ErrorCode::validation, "power limit needs one level per segment start");
  for (std::size_t i = 1; i < starts.size(); ++i)
    if (!(starts[i] > starts[i - 1]))
      throw Error(ErrorCode::validation, "power limit segment starts must be strictly increasing");
  for (double v : levels)
    if (!std::isfinite(v)) throw Error(ErrorCode::validation, "power limit levels must be finite");
  PowerLimit p;
  p.starts_ = std::move(starts);
  p.levels_ = std::move(levels);
  return p;
}

double PowerLimit::at(double t) const {
  auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
  if (it == starts_.begin()) return levels_.front();
  return levels_[static_cast<std::size_t>(it - starts_.begin()) - 1];
}

std::vector<Task> ScenarioState::task_list() const {
  std::vector<Task> out;
  out.reserve(tasks.size());
  for (const auto& s : tasks) out.push_back(s.task);
  return out;
}

std::vector<TaskId> ScenarioState::active_ids() const {
  std::vector<TaskId> out;
  for (const auto& s : tasks)
    if (s.fixed_start && *s.fixed_start <= t0) out.push_back(s.task.id);
  return out;
}

std::optional<std::size_t> ScenarioState::index_of(const TaskId& id) const {
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (tasks[i].task.id == id) return i;
  return std::nullopt;
}

void ScenarioState::validate() const {
  battery.validate();
  if (!(global_resolution > 0.0))
    throw Error(ErrorCode::validation, "global resolution must be positive");
  for (const auto& s : tasks) {
    s.task.validate();
    if (s.frozen_samples.size() > s.task.local_grid.size())
      throw Error(ErrorCode::validation, "task '" + s.task.id + "' has more frozen samples than nodes");
    if (!s.frozen_samples.empty() && !s.fixed_start)
      throw Error(ErrorCode::validation, "task '" + s.task.id + "' has frozen samples but no fixed start");
  }
  const auto list = task_list();
  validate_chains(list);
}

}  // namespace loadshift
