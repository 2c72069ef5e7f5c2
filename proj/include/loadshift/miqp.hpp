#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loadshift/parallel.hpp"
#include "loadshift/plan.hpp"
#include "loadshift/qp.hpp"
#include "loadshift/state.hpp"

namespace loadshift {

// Cost per kW of bus-row slack. Slacks keep every node relaxation feasible;
// an integer point with positive slack is not a solution.
inline constexpr double kBusSlackPenalty = 1e4;
inline constexpr double kSlackTolerance = 1e-6;

/// One task of the discrete-time model. Steps are counted from t0 in units of T_s.
struct MiqpTask {
  TaskId id;
  std::size_t state_index = 0;
  bool committed = false;
  int fixed_step = 0;               // committed: start step (may be negative)
  int k_min = 0, k_max = 0;         // free: start-step window W_i
  std::vector<int> b_index;         // free: variable of start step k_min + j
  int length = 0;                   // active steps L = round(T_e / T_s)
  std::vector<double> nominal;      // u-bar at the midpoint of local step j
  std::vector<double> bound;        // c at the midpoint of local step j
  int v_first = 0;                  // first step carrying a curtailment variable
  std::vector<int> v_index;         // curtailment variable of step v_first + j
  std::optional<std::size_t> free_predecessor;
  std::optional<double> request_time;

  std::size_t window_size() const { return committed ? 1 : static_cast<std::size_t>(k_max - k_min + 1); }
};

struct MiqpInstance {
  double t0 = 0.0;
  double ts = 0.1;
  int steps = 0;  // N_m
  std::vector<MiqpTask> tasks;
  std::vector<std::pair<std::size_t, std::size_t>> chains;  // (pred, succ), both free
  std::vector<std::pair<int, int>> chain_gaps;               // admissible succ - pred steps
  std::vector<int> energy_index;                            // stored energy after step m
  std::vector<int> slack_index;                             // per step
  std::vector<double> p_min;                                // per step
  double energy0 = 0.0;
  QpProblem qp;
  std::vector<std::string> warnings;

  std::vector<int> binaries() const;
  /// Windows and precedence gaps hold for this start assignment.
  bool admissible(const std::vector<int>& steps) const;
  /// Applied task power at step m for a relaxation or solution vector x.
  double task_power(std::size_t task, const Eigen::VectorXd& x, int m) const;
  /// Battery discharge power over step m, (E_m - E_{m+1}) / T_s.
  double battery_power(const Eigen::VectorXd& x, int m) const;
  double time_of(int step) const { return t0 + step * ts; }
};

MiqpInstance build_miqp(const ScenarioState& state, double ts);

struct BnbOptions {
  std::size_t node_limit = 1000000;
  double gap_tol = 1e-7;
  QpOptions qp;

  void validate() const;
};

enum class MiqpStatus { optimal, node_limit, infeasible };
const char* to_string(MiqpStatus status);

struct MiqpSolution {
  MiqpStatus status = MiqpStatus::infeasible;
  std::vector<int> steps;  // start step per instance task (committed ones included)
  double objective = 0.0;
  double bound = 0.0;
  double root_bound = 0.0;
  double gap = 0.0;
  std::size_t nodes = 0;
  Eigen::VectorXd x;
  double wall_time = 0.0;  // s
};

/// Convex QP with every start fixed; status infeasible if the assignment
/// violates a window or precedence row or needs bus slack.
MiqpSolution solve_fixed(const MiqpInstance& instance, const std::vector<int>& steps,
                         const QpOptions& options = {});

MiqpSolution solve_bnb(const MiqpInstance& instance, const BnbOptions& options = {});

inline constexpr std::size_t kEnumerationLimit = 10000;

/// Exhaustive search over precedence-respecting start combinations.
MiqpSolution enumerate_oracle(const MiqpInstance& instance, Execution exec = Execution::serial,
                              std::size_t limit = kEnumerationLimit, const QpOptions& options = {});

SchedulePlan miqp_plan(const MiqpInstance& instance, const MiqpSolution& solution);

}  // namespace loadshift
