#include "loadshift/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "loadshift/errors.hpp"

namespace loadshift {

StepFunction StepFunction::make(std::vector<double> breakpoints,
                                std::vector<double> levels) {
  if (breakpoints.size() < 2 || levels.size() + 1 != breakpoints.size())
    throw Error(ErrorCode::validation,
                "step function needs n+1 breakpoints for n levels (got " +
                    std::to_string(breakpoints.size()) + " and " +
                    std::to_string(levels.size()) + ")");
  if (breakpoints.front() != 0.0)
    throw Error(ErrorCode::validation, "step function must start at relative time 0");
  for (std::size_t i = 1; i < breakpoints.size(); ++i)
    if (!(breakpoints[i] > breakpoints[i - 1]))
      throw Error(ErrorCode::validation, "step function breakpoints must be strictly increasing");
  for (double v : levels)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(ErrorCode::validation, "step function levels must be finite and non-negative");
  StepFunction f;
  f.breakpoints_ = std::move(breakpoints);
  f.levels_ = std::move(levels);
  return f;
}

StepFunction StepFunction::constant(double duration, double level) {
  return make({0.0, duration}, {level});
}

double StepFunction::operator()(double tau) const {
  if (tau < 0.0 || tau > breakpoints_.back()) return 0.0;
  if (tau == breakpoints_.back()) return levels_.back();
  // First breakpoint strictly greater than tau closes the interval.
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), tau);
  return levels_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
}

double StepFunction::integral() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < levels_.size(); ++i)
    sum += levels_[i] * (breakpoints_[i + 1] - breakpoints_[i]);
  return sum;
}

double StepFunction::max_level() const {
  return *std::max_element(levels_.begin(), levels_.end());
}

void LossSpec::validate(const std::string& where) const {
  if (!(weight >= 0.0) || !std::isfinite(weight))
    throw Error(ErrorCode::validation, where + ": loss weight must be >= 0");
  if (!(deadband >= 0.0) || !std::isfinite(deadband))
    throw Error(ErrorCode::validation, where + ": loss deadband must be >= 0");
}

LossValue evaluate_loss(const LossSpec& spec, double x) {
  if (!std::isfinite(x))
    throw Error(ErrorCode::numerical_domain, "loss argument is not finite");
  const double w = spec.weight;
  switch (spec.kind) {
    case LossKind::quadratic_deadband: {
      const double e = x - spec.deadband;
      if (e <= 0.0) return {0.0, 0.0};
      return {w * e * e, 2.0 * w * e};
    }
    case LossKind::quadratic:
      return {w * x * x, 2.0 * w * x};
    case LossKind::weighted_abs:
      if (x < -kWeightedAbsTolerance) {
        std::ostringstream os;
        os << "weighted_abs loss evaluated at negative argument " << x;
        throw Error(ErrorCode::numerical_domain, os.str());
      }
      if (x < 0.0) return {-w * x, -w};
      return {w * x, w};
  }
  return {0.0, 0.0};
}

void Task::validate() const {
  const std::string where = "task '" + id + "'";
  if (id.empty()) throw Error(ErrorCode::validation, "task id must not be empty");
  if (!(delay_bound >= 0.0))
    throw Error(ErrorCode::validation, where + ": delay bound must be >= 0");
  if (local_grid.size() < 2)
    throw Error(ErrorCode::validation, where + ": local grid needs at least two nodes");
  if (std::abs(local_grid.duration() - profile.duration()) > 1e-9)
    throw Error(ErrorCode::validation,
                where + ": local grid must end at the profile duration");
  if (std::abs(curtailment_bound.duration() - profile.duration()) > 1e-9)
    throw Error(ErrorCode::validation,
                where + ": curtailment bound must cover the profile duration");
  // c(tau) <= u-bar(tau) on every interval of the common refinement.
  std::set<double> cuts(profile.breakpoints().begin(), profile.breakpoints().end());
  cuts.insert(curtailment_bound.breakpoints().begin(), curtailment_bound.breakpoints().end());
  std::vector<double> pts(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double probe = pts[i];
    if (curtailment_bound(probe) > profile(probe) + 1e-12) {
      std::ostringstream os;
      os << where << ": curtailment bound " << curtailment_bound(probe)
         << " kW exceeds nominal power " << profile(probe) << " kW on interval ["
         << pts[i] << ", " << pts[i + 1] << "]";
      throw Error(ErrorCode::validation, os.str());
    }
  }
  if (!predecessor && !request_time)
    throw Error(ErrorCode::validation, where + ": predecessor-free task needs a request time");
  delay_loss.validate(where + " delay loss");
  curtailment_loss.validate(where + " curtailment loss");
}

const Task* find_task(std::span<const Task> tasks, const TaskId& id) {
  for (const auto& t : tasks)
    if (t.id == id) return &t;
  return nullptr;
}

void validate_chains(std::span<const Task> tasks) {
  for (const auto& t : tasks) {
    std::set<TaskId> seen{t.id};
    const Task* cur = &t;
    while (cur->predecessor) {
      const Task* pred = find_task(tasks, *cur->predecessor);
      if (!pred) {
        // A predecessor outside the set is fine once the request time is resolved.
        if (cur->request_time) break;
        throw Error(ErrorCode::validation, "task '" + cur->id +
                                               "' references unresolved predecessor '" +
                                               *cur->predecessor + "'");
      }
      if (!seen.insert(pred->id).second)
        throw Error(ErrorCode::validation, "predecessor cycle through task '" + t.id + "'");
      cur = pred;
    }
  }
}

double chain_request_time(const Task& task, std::span<const Task> tasks,
                          const SchedulePlan& plan) {
  if (!task.predecessor) return task.request_time.value();
  const Task* pred = find_task(tasks, *task.predecessor);
  const TaskPlan* pred_plan = plan.find(*task.predecessor);
  if (!pred || !pred_plan)
    throw Error(ErrorCode::validation, "task '" + task.id + "': predecessor '" +
                                           *task.predecessor + "' is not resolved in the plan");
  return pred_plan->start + pred->duration();
}

}  // namespace loadshift
