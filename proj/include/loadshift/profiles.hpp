#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loadshift/plan.hpp"
#include "loadshift/timegrid.hpp"

namespace loadshift {

/// Piecewise-constant function of relative time on [0, T_e].
///
/// Intervals are right-open except the last, which is closed at T_e, so every
/// breakpoint belongs to exactly one interval. Outside [0, T_e] the value is 0.
class StepFunction {
 public:
  StepFunction() = default;
  static StepFunction make(std::vector<double> breakpoints,
                           std::vector<double> levels);
  static StepFunction constant(double duration, double level);

  double operator()(double tau) const;
  double duration() const { return breakpoints_.back(); }
  double integral() const;
  double max_level() const;

  std::span<const double> breakpoints() const { return breakpoints_; }
  std::span<const double> levels() const { return levels_; }

  bool operator==(const StepFunction&) const = default;

 private:
  std::vector<double> breakpoints_{0.0, 0.0};
  std::vector<double> levels_{0.0};
};

using NominalProfile = StepFunction;

inline double nominal_power(const NominalProfile& profile, double tau) {
  return profile(tau);
}

enum class LossKind { quadratic_deadband, quadratic, weighted_abs };

struct LossSpec {
  LossKind kind = LossKind::quadratic;
  double weight = 0.0;
  double deadband = 0.0;  // only used by quadratic_deadband

  static LossSpec quadratic_deadband(double w, double d0) { return {LossKind::quadratic_deadband, w, d0}; }
  static LossSpec quadratic(double w) { return {LossKind::quadratic, w, 0.0}; }
  static LossSpec weighted_abs(double w) { return {LossKind::weighted_abs, w, 0.0}; }

  void validate(const std::string& where) const;
  bool operator==(const LossSpec&) const = default;
};

struct LossValue {
  double value;
  double derivative;
};

// weighted_abs accepts arguments down to -kWeightedAbsTolerance; anything
// below is a sign-constraint violation upstream.
inline constexpr double kWeightedAbsTolerance = 1e-5;

LossValue evaluate_loss(const LossSpec& spec, double x);

/// One uninterruptible load or subtask of an interruptible load.
struct Task {
  TaskId id;
  std::string appliance;
  NominalProfile profile;
  LocalGridTemplate local_grid;
  std::optional<double> request_time;  // absent for non-first subtasks until resolved
  double delay_bound = 0.0;
  StepFunction curtailment_bound;
  LossSpec delay_loss;
  LossSpec curtailment_loss;
  std::optional<TaskId> predecessor;

  double duration() const { return profile.duration(); }
  void validate() const;
};

const Task* find_task(std::span<const Task> tasks, const TaskId& id);

/// Throws Error(validation) if predecessor links are unresolved or cyclic.
void validate_chains(std::span<const Task> tasks);

/// Request time of a task: its own t_r when predecessor-free, otherwise the
/// finish time of its predecessor according to the plan.
double chain_request_time(const Task& task, std::span<const Task> tasks,
                          const SchedulePlan& plan);

}  // namespace loadshift
