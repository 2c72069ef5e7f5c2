#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "loadshift/miqp.hpp"
#include "loadshift/plan.hpp"
#include "loadshift/scenario.hpp"
#include "loadshift/solver_nlp.hpp"
#include "loadshift/state.hpp"

namespace loadshift {

/// One applied input sample: value u at absolute time `time`, evaluated at
/// relative time tau, weighted for the curtailment quadrature.
struct AppliedSample {
  double time = 0.0;
  double tau = 0.0;
  double u = 0.0;
  double weight = 0.0;
};

struct TaskRecord {
  TaskId id;
  std::string appliance;
  std::optional<TaskId> predecessor;
  double request_time = 0.0;  // resolved (predecessor finish for chained subtasks)
  std::optional<double> start;
  double duration = 0.0;
  double delay_bound = 0.0;
  NominalProfile profile;
  StepFunction curtailment_bound;
  LossSpec delay_loss, curtailment_loss;
  std::vector<AppliedSample> samples;
  bool finished = false;
};

struct TraceRow {
  double time = 0.0;
  std::vector<double> appliance_power;  // kW, one per scenario appliance
  double p_batt = 0.0;                  // applied from this row to the next
  double energy = 0.0;                  // at this row
  double p_min = 0.0;
  double headroom() const;              // p_min + p_batt - total load
  double load() const;
};

struct ClosedLoopTrace {
  ControllerKind controller = ControllerKind::continuous;
  double ts = 0.0;
  std::vector<std::string> appliances;
  std::vector<TraceRow> rows;
  std::vector<TaskRecord> tasks;
  BatteryParams battery;
  double end_time = 0.0;
  double final_energy = 0.0;
  std::vector<double> solve_times;  // s, one per controller call
  bool complete = false;
  std::optional<std::string> failure;
  std::vector<std::string> warnings;  // distinct controller warnings
};

struct ReplanEvent {
  double t0 = 0.0;
  std::size_t index = 0;
  bool arrivals = false;                 // a request arrived at this instant
  const ScenarioState* state = nullptr;  // as handed to the controller
  const SchedulePlan* plan = nullptr;
  double planned_objective = 0.0;
  std::optional<double> warm_objective;  // previous plan evaluated in this problem, if feasible
};

struct LoopOptions {
  ControllerKind controller = ControllerKind::continuous;
  double ts = 0.1;
  InterpOptions interp;
  SolverOptions solver;
  BnbOptions bnb;
  Execution execution = Execution::serial;
  double max_time = 1000.0;  // h, safety stop
  std::function<void(const ReplanEvent&)> on_replan;
};

/// Loop options taken from the scenario's controller block.
LoopOptions loop_options(const Scenario& scenario);

ClosedLoopTrace run(const Scenario& scenario, const LoopOptions& options);

struct LossTotals {
  double delay = 0.0;
  double curtailment = 0.0;
  double total = 0.0;
  bool partial = false;
};

LossTotals accumulate_losses(const ClosedLoopTrace& trace);

enum class ViolationKind { bus, energy, battery_power, energy_balance, delay, precedence, curtailment, unfinished };
const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string where;
  double amount;
};

struct VerifyReport {
  std::vector<Violation> violations;
  double dense_bus_excess = 0.0;  // informational: worst excess on a one-minute sampling
  bool ok() const { return violations.empty(); }
};

inline constexpr double kVerifyTolerance = 1e-6;

/// Independent re-check of a trace against the scenario data.
VerifyReport verify_trace(const ClosedLoopTrace& trace, const Scenario& scenario, double tol = kVerifyTolerance,
                          const InterpOptions& interp = {});

}  // namespace loadshift
