#include "loadshift/solver_nlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

#include "loadshift/errors.hpp"

namespace loadshift {

void SolverOptions::validate() const {
  if (max_outer < 1 || max_inner < 1) throw Error(ErrorCode::validation, "solver iteration limits must be positive");
  if (!(mu0 > 0.0) || !(mu_growth > 1.0))
    throw Error(ErrorCode::validation, "penalty must start positive and grow by a factor > 1");
  if (!(shrink > 0.0 && shrink < 1.0)) throw Error(ErrorCode::validation, "violation shrink factor must be in (0, 1)");
  if (!(kkt_tol > 0.0) || !(step_tol > 0.0)) throw Error(ErrorCode::validation, "solver tolerances must be positive");
  if (lbfgs_memory < 1) throw Error(ErrorCode::validation, "L-BFGS memory must be positive");
  if (multistart < 1) throw Error(ErrorCode::validation, "multistart count must be at least 1");
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible_estimate: return "infeasible_estimate";
  }
  return "unknown";
}

Eigen::VectorXd project(const NlpFunctions& nlp, Eigen::VectorXd z) {
  return z.cwiseMax(nlp.lower()).cwiseMin(nlp.upper());
}

double projected_gradient_norm(const NlpFunctions& nlp, const Eigen::VectorXd& z, const Eigen::VectorXd& grad) {
  double r = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    double gi = grad[i];
    if (z[i] <= nlp.lower()[i]) gi = std::min(gi, 0.0);
    if (z[i] >= nlp.upper()[i]) gi = std::max(gi, 0.0);
    r = std::max(r, std::abs(gi));
  }
  return r;
}

namespace {

struct AugLag {
  const NlpFunctions& nlp;
  const Eigen::VectorXd& lambda;
  double mu;
  Eigen::VectorXd g;
  Eigen::MatrixXd jac;
  Eigen::VectorXd fgrad;
  int evaluations = 0;

  double operator()(const Eigen::VectorXd& z, Eigen::VectorXd& grad) {
    ++evaluations;
    double f = nlp.objective(z, &fgrad);
    grad = fgrad;
    if (nlp.constraint_count() == 0) return f;
    nlp.constraints(z, g, &jac);
    Eigen::VectorXd w(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double s = std::max(0.0, lambda[i] + mu * g[i]);
      f += (s * s - lambda[i] * lambda[i]) / (2.0 * mu);
      w[i] = s;
    }
    grad.noalias() += jac.transpose() * w;
    return f;
  }
};

double violation_of(const Eigen::VectorXd& g) {
  return g.size() == 0 ? 0.0 : std::max(0.0, g.maxCoeff());
}

struct InnerResult {
  int iterations = 0;
  double pg = 0.0;
};

// Projected L-BFGS with a weak-Wolfe search along the projection arc.
InnerResult minimize_box(const NlpFunctions& nlp, AugLag& phi, Eigen::VectorXd& z, const SolverOptions& opt,
                         double tol) {
  const Eigen::Index n = z.size();
  Eigen::VectorXd grad(n), grad_new(n), z_new(n), d(n);
  double f = phi(z, grad);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mem;
  InnerResult res;
  int stalls = 0;

  for (res.iterations = 0; res.iterations < opt.max_inner; ++res.iterations) {
    res.pg = projected_gradient_norm(nlp, z, grad);
    if (res.pg <= tol) break;

    std::vector<bool> active(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      active[static_cast<std::size_t>(i)] =
          (z[i] <= nlp.lower()[i] && grad[i] > 0.0) || (z[i] >= nlp.upper()[i] && grad[i] < 0.0);
    auto mask = [&](Eigen::VectorXd& v) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (active[static_cast<std::size_t>(i)]) v[i] = 0.0;
    };

    // Two-loop recursion on the free components.
    d = -grad;
    mask(d);
    std::vector<double> alpha(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
      const auto& [s, y] = mem[k];
      alpha[k] = s.dot(d) / s.dot(y);
      d -= alpha[k] * y;
      mask(d);
    }
    if (!mem.empty()) {
      const auto& [s, y] = mem.back();
      d *= s.dot(y) / y.squaredNorm();
    } else {
      d /= std::max(1.0, d.lpNorm<Eigen::Infinity>());
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const auto& [s, y] = mem[k];
      const double beta = y.dot(d) / s.dot(y);
      d += (alpha[k] - beta) * s;
      mask(d);
    }
    if (grad.dot(d) >= 0.0) {
      mem.clear();
      d = -grad;
      mask(d);
      d /= std::max(1.0, d.lpNorm<Eigen::Infinity>());
    }

    constexpr double c1 = 1e-4, c2 = 0.9;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), a = 1.0;
    bool accepted = false;
    double f_new = f;
    Eigen::VectorXd best_z, best_grad;
    double best_f = f;
    for (int trial = 0; trial < 40; ++trial) {
      z_new = project(nlp, z + a * d);
      const Eigen::VectorXd step = z_new - z;
      const double slope = grad.dot(step);
      if (step.lpNorm<Eigen::Infinity>() <= opt.step_tol) break;
      f_new = phi(z_new, grad_new);
      if (!(f_new <= f + c1 * std::min(slope, 0.0)) || slope >= 0.0) {
        hi = a;
      } else {
        if (f_new < best_f) {
          best_f = f_new;
          best_z = z_new;
          best_grad = grad_new;
        }
        if (grad_new.dot(step) >= c2 * slope) {
          accepted = true;
          break;
        }
        lo = a;
      }
      a = std::isinf(hi) ? 2.0 * a : 0.5 * (lo + hi);
    }
    if (!accepted) {
      if (best_z.size() == 0) break;  // no descent along the arc
      z_new = best_z;
      grad_new = best_grad;
      f_new = best_f;
    }

    const Eigen::VectorXd s = z_new - z;
    const Eigen::VectorXd y = grad_new - grad;
    const double small_step = s.lpNorm<Eigen::Infinity>();
    const double df = f - f_new;
    z = z_new;
    grad = grad_new;
    f = f_new;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      mem.emplace_back(s, y);
      if (static_cast<int>(mem.size()) > opt.lbfgs_memory) mem.pop_front();
    }
    if (small_step <= opt.step_tol) break;
    stalls = df <= 1e-15 * std::max(1.0, std::abs(f)) ? stalls + 1 : 0;
    if (stalls >= 3) break;
  }
  res.pg = projected_gradient_norm(nlp, z, grad);
  return res;
}

}  // namespace

SolveResult solve(const NlpFunctions& nlp, Eigen::VectorXd z0, const SolverOptions& options) {
  options.validate();
  const auto t_begin = std::chrono::steady_clock::now();
  if (z0.size() != static_cast<Eigen::Index>(nlp.dimension()))
    throw Error(ErrorCode::validation, "initial point has wrong dimension");
  SolveResult out;
  out.z = project(nlp, std::move(z0));
  const auto m = static_cast<Eigen::Index>(nlp.constraint_count());
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  double mu = options.mu0;
  auto& rep = out.report;

  Eigen::VectorXd g;
  nlp.constraints(out.z, g, nullptr);
  double prev_violation = violation_of(g);
  bool converged = false;

  for (rep.outer_iterations = 1; rep.outer_iterations <= options.max_outer; ++rep.outer_iterations) {
    AugLag phi{nlp, lambda, mu, {}, {}, {}};
    InnerResult inner;
    try {
      inner = minimize_box(nlp, phi, out.z, options, options.kkt_tol);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numerical_domain) throw;
      throw Error(e.code(), std::string(e.what()) + " (outer iteration " + std::to_string(rep.outer_iterations) +
                                ", penalty " + std::to_string(mu) + ")");
    }
    rep.inner_iterations += inner.iterations;

    nlp.constraints(out.z, g, nullptr);
    for (Eigen::Index i = 0; i < m; ++i) lambda[i] = std::max(0.0, lambda[i] + mu * g[i]);
    const double violation = violation_of(g);
    const auto kkt = check_kkt(nlp, out.z, std::span<const double>(lambda.data(), static_cast<std::size_t>(m)));
    rep.kkt_residual = std::max(kkt.stationarity, kkt.complementarity);
    if (violation <= options.kkt_tol && rep.kkt_residual <= options.kkt_tol) {
      converged = true;
      break;
    }
    // A stalled inner loop at a feasible point cannot improve further with a
    // larger penalty; stop here rather than burn outer iterations.
    if (violation <= options.kkt_tol && inner.iterations == 0) break;
    if (violation > options.shrink * prev_violation && violation > options.kkt_tol) mu *= options.mu_growth;
    prev_violation = violation;
    if (options.on_outer) options.on_outer(rep.outer_iterations, violation, mu);
    if (mu > 1e12) break;
  }
  rep.outer_iterations = std::min(rep.outer_iterations, options.max_outer);
  rep.objective = nlp.objective(out.z, nullptr);
  rep.violation = violation_of(g);
  rep.multipliers.assign(lambda.data(), lambda.data() + m);
  if (converged)
    rep.status = SolveStatus::converged;
  else if (rep.violation > options.kkt_tol)
    rep.status = SolveStatus::infeasible_estimate;
  else
    rep.status = SolveStatus::max_iter;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  return out;
}

KktReport check_kkt(const NlpFunctions& nlp, const Eigen::VectorXd& z, std::span<const double> multipliers) {
  KktReport r;
  const auto m = static_cast<Eigen::Index>(nlp.constraint_count());
  if (multipliers.size() != static_cast<std::size_t>(m))
    throw Error(ErrorCode::validation, "one multiplier per constraint row expected");
  Eigen::VectorXd grad;
  nlp.objective(z, &grad);
  Eigen::VectorXd g;
  Eigen::MatrixXd jac;
  if (m > 0) {
    nlp.constraints(z, g, &jac);
    const Eigen::Map<const Eigen::VectorXd> lam(multipliers.data(), m);
    grad.noalias() += jac.transpose() * lam;
    for (Eigen::Index i = 0; i < m; ++i) {
      r.complementarity = std::max(r.complementarity, std::abs(lam[i] * g[i]));
      r.primal_violation = std::max(r.primal_violation, g[i]);
      r.dual_violation = std::max(r.dual_violation, -lam[i]);
    }
  }
  for (Eigen::Index i = 0; i < z.size(); ++i)
    r.primal_violation = std::max({r.primal_violation, nlp.lower()[i] - z[i], z[i] - nlp.upper()[i]});
  r.stationarity = projected_gradient_norm(nlp, z, grad);
  return r;
}

Eigen::VectorXd initial_guess(const NlpProblem& nlp, GuessStrategy strategy, std::uint64_t seed) {
  const auto& L = nlp.layout();
  const auto& tasks = nlp.tasks();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.dimension));
  // Samples at nominal (upper box), battery idle.
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (const auto& slot : L.sample_slot[i])
      if (slot) z[static_cast<Eigen::Index>(*slot)] = nlp.upper()[static_cast<Eigen::Index>(*slot)];
  for (std::size_t k = 0; k < L.battery_count; ++k) {
    const auto idx = static_cast<Eigen::Index>(L.battery_offset + k);
    z[idx] = std::clamp(0.0, nlp.lower()[idx], nlp.upper()[idx]);
  }

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<bool> done(tasks.size(), false);
  // Predecessors are placed before successors so chain rows hold by construction.
  auto place = [&](auto&& self, std::size_t i) -> void {
    if (done[i]) return;
    done[i] = true;
    if (!L.start_slot[i]) return;
    const auto idx = static_cast<Eigen::Index>(*L.start_slot[i]);
    double lo = nlp.lower()[idx], hi = nlp.upper()[idx];
    if (const auto p = tasks[i].free_predecessor) {
      self(self, *p);
      const double finish = nlp.start_of(*p, z) + tasks[*p].task.duration();
      lo = std::clamp(finish, lo, hi);
      hi = std::clamp(finish + tasks[i].task.delay_bound, lo, hi);
    }
    z[idx] = strategy == GuessStrategy::eager ? lo : lo + unit(rng) * (hi - lo);
  };
  for (std::size_t i = 0; i < tasks.size(); ++i) place(place, i);
  return z;
}

std::vector<Eigen::VectorXd> multistart_guesses(const NlpProblem& nlp, std::size_t count, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> out;
  if (count == 0) return out;
  out.push_back(initial_guess(nlp, GuessStrategy::eager));
  for (std::size_t k = 1; k < count; ++k)
    out.push_back(initial_guess(nlp, GuessStrategy::random, seed * 1000003ULL + k));
  return out;
}

MultistartResult solve_multistart(const NlpProblem& nlp, const std::vector<Eigen::VectorXd>& starts,
                                  const SolverOptions& options) {
  options.validate();
  if (starts.empty()) throw Error(ErrorCode::validation, "multistart needs at least one start");
  MultistartResult out;
  out.starts = starts;
  std::vector<SolveResult> results(starts.size());
  SolverOptions single = options;
  single.execution = Execution::serial;
  for_each_index(options.execution, starts.size(), [&](std::size_t k) { results[k] = solve(nlp, starts[k], single); });

  const double feas = options.kkt_tol;
  struct Candidate {
    double objective, violation;
    bool solution;
    std::size_t index;
  };
  std::vector<Candidate> cands;
  for (std::size_t k = 0; k < results.size(); ++k) {
    out.runs.push_back(results[k].report);
    cands.push_back({results[k].report.objective, results[k].report.violation, true, k});
  }
  out.best_initial_objective = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const Eigen::VectorXd z = project(nlp, starts[k]);
    const double v = nlp.max_violation(z);
    const double f = nlp.objective(z, nullptr);
    if (v <= feas) out.best_initial_objective = std::min(out.best_initial_objective, f);
    cands.push_back({f, v, false, k});
  }
  // Feasible beats infeasible; then objective; then solutions before raw starts, lower index first.
  const Candidate* best = nullptr;
  for (const auto& c : cands) {
    if (!best) { best = &c; continue; }
    const bool cf = c.violation <= feas, bf = best->violation <= feas;
    if (cf != bf) {
      if (cf) best = &c;
      continue;
    }
    if (!cf) {
      if (c.violation < best->violation) best = &c;
      continue;
    }
    if (c.objective < best->objective - 1e-12) best = &c;
  }
  out.from_solution = best->solution;
  out.chosen = best->solution ? best->index : starts.size() + best->index;
  if (best->solution) {
    out.z = results[best->index].z;
    out.report = results[best->index].report;
  } else {
    out.z = project(nlp, starts[best->index]);
    out.report.status = SolveStatus::max_iter;
    out.report.objective = best->objective;
    out.report.violation = best->violation;
  }
  double total_time = 0.0;
  for (const auto& r : out.runs) total_time += r.wall_time;
  out.report.wall_time = total_time;
  return out;
}

}  // namespace loadshift
