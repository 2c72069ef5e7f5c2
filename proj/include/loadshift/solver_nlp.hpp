#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "loadshift/nlp.hpp"
#include "loadshift/parallel.hpp"
#include "loadshift/transcribe.hpp"

namespace loadshift {

struct SolverOptions {
  int max_outer = 50;
  int max_inner = 300;
  double mu0 = 10.0;
  double mu_growth = 10.0;
  double shrink = 0.25;  // required violation reduction per outer iteration
  double kkt_tol = 1e-6;
  double step_tol = 1e-10;
  int lbfgs_memory = 10;
  std::size_t multistart = 5;
  std::uint64_t seed = 0;
  Execution execution = Execution::serial;
  // Called after each outer iteration with the violation reached and the
  // penalty the next iteration will use.
  std::function<void(int outer, double violation, double next_mu)> on_outer;

  void validate() const;
};

enum class SolveStatus { converged, max_iter, infeasible_estimate };
const char* to_string(SolveStatus status);

struct SolveReport {
  SolveStatus status = SolveStatus::max_iter;
  double objective = 0.0;
  double violation = 0.0;
  double kkt_residual = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double wall_time = 0.0;  // s
  std::vector<double> multipliers;
};

struct SolveResult {
  Eigen::VectorXd z;
  SolveReport report;
};

/// Augmented Lagrangian over g(z) <= 0 with a projected L-BFGS inner loop.
SolveResult solve(const NlpFunctions& nlp, Eigen::VectorXd z0, const SolverOptions& options = {});

Eigen::VectorXd project(const NlpFunctions& nlp, Eigen::VectorXd z);

enum class GuessStrategy { eager, random };

Eigen::VectorXd initial_guess(const NlpProblem& nlp, GuessStrategy strategy, std::uint64_t seed = 0);

/// One eager guess followed by count-1 random ones; guess k uses seed (seed, k).
std::vector<Eigen::VectorXd> multistart_guesses(const NlpProblem& nlp, std::size_t count,
                                                std::uint64_t seed);

struct MultistartResult {
  Eigen::VectorXd z;
  SolveReport report;
  std::size_t chosen = 0;       // index into starts (solutions) or starts.size()+k (initial point k)
  bool from_solution = true;
  std::vector<Eigen::VectorXd> starts;
  std::vector<SolveReport> runs;
  double best_initial_objective = 0.0;  // over feasible initial points; +inf if none
};

/// Solves from every start and keeps the best feasible point among the
/// solutions and the starts themselves, ties broken by start order.
MultistartResult solve_multistart(const NlpProblem& nlp, const std::vector<Eigen::VectorXd>& starts,
                                  const SolverOptions& options = {});

struct KktReport {
  double stationarity = 0.0;     // projected Lagrangian gradient, inf-norm
  double complementarity = 0.0;  // max |lambda_i * g_i|
  double primal_violation = 0.0;
  double dual_violation = 0.0;   // max(-lambda_i)
};

KktReport check_kkt(const NlpFunctions& nlp, const Eigen::VectorXd& z, std::span<const double> multipliers);

/// Projected gradient: components at an active bound keep only their inward part.
double projected_gradient_norm(const NlpFunctions& nlp, const Eigen::VectorXd& z,
                               const Eigen::VectorXd& grad);

}  // namespace loadshift
