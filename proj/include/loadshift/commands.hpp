#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "loadshift/mpc_loop.hpp"
#include "loadshift/scenario.hpp"

namespace loadshift {

inline constexpr int kSummarySchemaVersion = 1;

struct SimulateResult {
  ClosedLoopTrace trace;
  LossTotals losses;
  VerifyReport verify;
  double solve_time_mean = 0.0;  // s
  bool ok() const { return trace.complete && verify.ok(); }
};

SimulateResult simulate(const Scenario& scenario, const LoopOptions& options);

/// Columns: time_h, one per appliance, p_batt_kw, e_batt_kwh, p_min_kw, bus_headroom_kw.
void write_trace_csv(const ClosedLoopTrace& trace, std::ostream& out);
std::string summary_json(const Scenario& scenario, const LoopOptions& options, const SimulateResult& result);

struct CompareRow {
  std::string method;
  double ts = 0.0;  // 0 for the continuous controller
  std::size_t runs = 0;
  std::size_t failures = 0;
  double delay_loss = 0.0;
  double curtailment_loss = 0.0;
  double total_loss = 0.0;
  double solve_time_mean = 0.0;  // s per controller call, averaged over runs
};

/// One row for the continuous controller and one per sampling time. Run r of
/// every method uses seed + r.
std::vector<CompareRow> compare(const Scenario& scenario, const std::vector<double>& ts_list, std::size_t runs,
                                std::uint64_t seed, Execution exec = Execution::serial);
void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out);
void write_compare_table(const std::vector<CompareRow>& rows, std::ostream& out);

/// State with every scripted request already admitted, at the first request time.
ScenarioState initial_state(const Scenario& scenario);

struct GradientCheckReport {
  std::size_t points = 0;
  std::size_t entries = 0;       // derivative entries compared
  std::size_t kinks_skipped = 0; // points skipped because a difference straddles a kink
  std::size_t failures = 0;
  double worst_error = 0.0;
  std::vector<std::string> messages;  // first few failures
  bool ok() const { return failures == 0; }
};

/// Central finite differences of the interpolants and of the transcribed
/// objective and constraints at random feasible points.
GradientCheckReport check_gradients(const Scenario& scenario, std::size_t points = 100, std::uint64_t seed = 0,
                                    double h = 1e-6, double tol = 1e-5);

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

}  // namespace loadshift
