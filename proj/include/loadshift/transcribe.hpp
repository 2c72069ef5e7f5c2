#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "loadshift/interp.hpp"
#include "loadshift/nlp.hpp"
#include "loadshift/parallel.hpp"
#include "loadshift/plan.hpp"
#include "loadshift/state.hpp"
#include "loadshift/timegrid.hpp"

namespace loadshift {

struct NlpOptions {
  InterpOptions interp;
  std::optional<double> horizon_end;  // override the worst-case horizon
  Execution execution = Execution::serial;
};

/// Flat positions of the free variables. Segment order: start times of
/// uncommitted tasks, battery powers per global interval, input samples of
/// non-frozen local nodes.
struct DecisionLayout {
  std::size_t dimension = 0;
  std::vector<std::optional<std::size_t>> start_slot;                // per state task
  std::size_t battery_offset = 0;
  std::size_t battery_count = 0;
  std::vector<std::vector<std::optional<std::size_t>>> sample_slot;  // per task, per node

  std::size_t start_count() const;
  std::size_t sample_count() const;
};

enum class RowKind { bus, energy_low, energy_high, chain_lower, chain_upper };

struct RowInfo {
  RowKind kind;
  std::size_t index;  // global node for bus/energy rows, chain link otherwise
};

std::string describe(const RowInfo& row);

/// The transcribed finite-dimensional scheduling problem at one replan instant.
class NlpProblem final : public NlpFunctions {
 public:
  struct TaskData {
    Task task;
    std::shared_ptr<const InterpBasis> basis;
    std::optional<double> fixed_start;
    std::vector<double> frozen;   // leading samples folded in as constants
    std::vector<double> nominal;  // u-bar at each local node
    std::vector<double> bound;    // c at each local node
    std::vector<double> weights;  // trapezoid quadrature on the local grid
    std::optional<std::size_t> free_predecessor;  // index into tasks() when chained to a free task
    std::optional<double> request_time;           // resolved t_r otherwise
  };

  std::size_t dimension() const override { return layout_.dimension; }
  std::size_t constraint_count() const override { return rows_.size(); }
  const Eigen::VectorXd& lower() const override { return lower_; }
  const Eigen::VectorXd& upper() const override { return upper_; }

  double objective(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const override;
  void constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd* jac) const override;
  void constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd* jac,
                   Execution exec) const;

  const DecisionLayout& layout() const { return layout_; }
  const GlobalGrid& grid() const { return grid_; }
  const std::vector<RowInfo>& rows() const { return rows_; }
  const std::vector<TaskData>& tasks() const { return tasks_; }
  double t0() const { return grid_.start(); }
  double initial_energy() const { return energy0_; }
  const BatteryParams& battery() const { return battery_; }
  double p_min_at(std::size_t node) const { return p_min_nodes_[node]; }

  double start_of(std::size_t task, const Eigen::VectorXd& z) const;
  std::vector<double> samples_of(std::size_t task, const Eigen::VectorXd& z) const;
  std::vector<double> energies(const Eigen::VectorXd& z) const;

  /// Delay of a task relative to its (possibly chained) request time.
  double delay_of(std::size_t task, const Eigen::VectorXd& z) const;

  /// Whether a central difference with half-width h around z may cross a
  /// non-differentiable point of the objective or constraints.
  bool near_kink(const Eigen::VectorXd& z, double h) const;

  double max_violation(const Eigen::VectorXd& z) const;

 private:
  friend std::pair<DecisionLayout, NlpProblem> build_nlp(const ScenarioState&, const NlpOptions&);
  NlpProblem() = default;

  DecisionLayout layout_;
  GlobalGrid grid_ = GlobalGrid::from_nodes({0.0, 1.0});
  std::vector<TaskData> tasks_;
  std::vector<RowInfo> rows_;
  std::vector<std::pair<std::size_t, std::size_t>> chains_;  // (pred, succ), both free
  std::vector<double> p_min_nodes_;
  Eigen::VectorXd lower_, upper_;
  BatteryParams battery_;
  double energy0_ = 0.0;
  Execution execution_ = Execution::serial;
};

std::pair<DecisionLayout, NlpProblem> build_nlp(const ScenarioState& state, const NlpOptions& options);

/// Horizon used by build_nlp: worst-case finish plus the exit ramp.
double nlp_horizon_end(const ScenarioState& state, const NlpOptions& options);

SchedulePlan extract_plan(const NlpProblem& nlp, const Eigen::VectorXd& z);

/// Inverse of extract_plan on the free slots. Tasks missing from the plan keep
/// the values already in `base`.
Eigen::VectorXd pack_plan(const NlpProblem& nlp, const SchedulePlan& plan, Eigen::VectorXd base);

}  // namespace loadshift
