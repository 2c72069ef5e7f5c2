#include "loadshift/miqp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "loadshift/errors.hpp"

namespace loadshift {

const char* to_string(MiqpStatus status) {
  switch (status) {
    case MiqpStatus::optimal: return "optimal";
    case MiqpStatus::node_limit: return "node_limit";
    case MiqpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

void BnbOptions::validate() const {
  if (!(gap_tol > 0.0)) throw Error(ErrorCode::validation, "branch-and-bound gap tolerance must be positive");
  if (node_limit == 0) throw Error(ErrorCode::validation, "branch-and-bound node limit must be positive");
}

std::vector<int> MiqpInstance::binaries() const {
  std::vector<int> out;
  for (const auto& t : tasks) out.insert(out.end(), t.b_index.begin(), t.b_index.end());
  return out;
}

double MiqpInstance::task_power(std::size_t i, const Eigen::VectorXd& x, int m) const {
  const auto& t = tasks[i];
  double p = 0.0;
  if (t.committed) {
    const int j = m - t.fixed_step;
    if (j >= 0 && j < t.length) p = t.nominal[static_cast<std::size_t>(j)];
  } else {
    for (std::size_t q = 0; q < t.b_index.size(); ++q) {
      const int j = m - (t.k_min + static_cast<int>(q));
      if (j >= 0 && j < t.length) p += x[t.b_index[q]] * t.nominal[static_cast<std::size_t>(j)];
    }
  }
  const int jv = m - t.v_first;
  if (jv >= 0 && jv < static_cast<int>(t.v_index.size())) p -= x[t.v_index[static_cast<std::size_t>(jv)]];
  return p;
}

double MiqpInstance::battery_power(const Eigen::VectorXd& x, int m) const {
  const double before = m == 0 ? energy0 : x[energy_index[static_cast<std::size_t>(m - 1)]];
  return (before - x[energy_index[static_cast<std::size_t>(m)]]) / ts;
}

bool MiqpInstance::admissible(const std::vector<int>& steps) const {
  if (steps.size() != tasks.size()) return false;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    if (t.committed ? steps[i] != t.fixed_step : (steps[i] < t.k_min || steps[i] > t.k_max)) return false;
  }
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const int d = steps[chains[c].second] - steps[chains[c].first];
    if (d < chain_gaps[c].first || d > chain_gaps[c].second) return false;
  }
  return true;
}

namespace {

int steps_floor(double x) { return static_cast<int>(std::floor(x + 1e-9)); }
int steps_ceil(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }

bool on_grid(double x, double ts) { return std::abs(x / ts - std::round(x / ts)) <= 1e-9 * std::max(1.0, x / ts); }

struct RowBuilder {
  std::vector<Eigen::Triplet<double>> entries;
  std::vector<double> rhs;
  int add(const std::vector<std::pair<int, double>>& row, double b) {
    const int r = static_cast<int>(rhs.size());
    for (const auto& [j, a] : row) entries.emplace_back(r, j, a);
    rhs.push_back(b);
    return r;
  }
  void finish(int n, SparseRows& A, Eigen::VectorXd& b) const {
    A.resize(static_cast<Eigen::Index>(rhs.size()), n);
    A.setFromTriplets(entries.begin(), entries.end());
    b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  }
};

}  // namespace

MiqpInstance build_miqp(const ScenarioState& state, double ts) {
  if (!(ts > 0.0)) throw Error(ErrorCode::validation, "sampling time must be positive");
  if (state.tasks.empty()) throw Error(ErrorCode::validation, "cannot build a discrete model without requested tasks");
  state.validate();
  MiqpInstance inst;
  inst.t0 = state.t0;
  inst.ts = ts;
  inst.energy0 = state.energy;
  const std::size_t ntask = state.tasks.size();
  inst.tasks.resize(ntask);
  double constant = 0.0;

  for (std::size_t i = 0; i < ntask; ++i) {
    const auto& s = state.tasks[i];
    auto& t = inst.tasks[i];
    t.id = s.task.id;
    t.state_index = i;
    t.committed = s.committed();
    const double te = s.task.duration();
    t.length = std::max(1, static_cast<int>(std::lround(te / ts)));
    for (double bp : s.task.profile.breakpoints())
      if (!on_grid(bp, ts)) {
        std::ostringstream os;
        os << "profile of task '" << t.id << "' has a breakpoint at " << bp << " h off the " << ts
           << " h step grid; snapped to the nearest step";
        inst.warnings.push_back(os.str());
        break;
      }
    for (int j = 0; j < t.length; ++j) {
      const double tau = std::min((j + 0.5) * ts, te);
      t.nominal.push_back(s.task.profile(tau));
      t.bound.push_back(s.task.curtailment_bound(tau));
    }
    t.request_time = s.task.request_time;
    if (!t.request_time && s.task.predecessor) {
      const auto p = state.index_of(*s.task.predecessor);
      if (!p) throw Error(ErrorCode::validation, "task '" + t.id + "' has an unresolved predecessor");
      const auto& pred = state.tasks[*p];
      if (pred.fixed_start) t.request_time = *pred.fixed_start + pred.task.duration();
      else t.free_predecessor = *p;
    }
  }

  // Start windows in steps, predecessors first.
  std::vector<bool> placed(ntask, false);
  std::function<void(std::size_t, std::size_t)> window = [&](std::size_t i, std::size_t depth) {
    if (placed[i]) return;
    if (depth > ntask) throw Error(ErrorCode::validation, "predecessor cycle in discrete model");
    auto& t = inst.tasks[i];
    const auto& s = state.tasks[i];
    if (t.committed) {
      t.fixed_step = static_cast<int>(std::lround((*s.fixed_start - state.t0) / ts));
    } else if (t.free_predecessor) {
      window(*t.free_predecessor, depth + 1);
      const auto& p = inst.tasks[*t.free_predecessor];
      const double tp = state.tasks[*t.free_predecessor].task.duration();
      t.k_min = p.k_min + steps_ceil(tp / ts);
      t.k_max = p.k_max + steps_floor((tp + s.task.delay_bound) / ts);
    } else {
      const double tr = *t.request_time;
      t.k_min = std::max(0, steps_ceil((std::max(tr, state.t0) - state.t0) / ts));
      t.k_max = steps_floor((tr + s.task.delay_bound - state.t0) / ts);
    }
    if (!t.committed && t.k_max < t.k_min) {
      std::ostringstream os;
      os << "task '" << t.id << "' has no admissible start step on the " << ts << " h grid";
      throw Error(ErrorCode::infeasible, os.str());
    }
    placed[i] = true;
  };
  for (std::size_t i = 0; i < ntask; ++i) window(i, 0);

  int steps = 1;
  for (const auto& t : inst.tasks)
    steps = std::max(steps, (t.committed ? t.fixed_step : t.k_max) + t.length);
  inst.steps = steps;

  // Variable allocation.
  int n = 0;
  for (auto& t : inst.tasks)
    if (!t.committed)
      for (int k = t.k_min; k <= t.k_max; ++k) t.b_index.push_back(n++);
  std::vector<int> curt_aux;  // deadband auxiliaries, parallel to v
  for (std::size_t i = 0; i < ntask; ++i) {
    auto& t = inst.tasks[i];
    const int first = t.committed ? t.fixed_step : t.k_min;
    const int last = (t.committed ? t.fixed_step : t.k_max) + t.length;  // exclusive
    t.v_first = std::max(0, first);
    for (int m = t.v_first; m < std::min(last, steps); ++m) t.v_index.push_back(n++);
  }
  std::vector<std::vector<int>> v_aux(ntask);
  for (std::size_t i = 0; i < ntask; ++i)
    if (state.tasks[i].task.curtailment_loss.kind == LossKind::quadratic_deadband)
      for (std::size_t q = 0; q < inst.tasks[i].v_index.size(); ++q) v_aux[i].push_back(n++);
  for (std::size_t i = 0; i < ntask; ++i)
    if (inst.tasks[i].free_predecessor) inst.chains.push_back({*inst.tasks[i].free_predecessor, i});
  std::vector<int> delay_aux(inst.chains.size(), -1);
  for (std::size_t c = 0; c < inst.chains.size(); ++c)
    if (state.tasks[inst.chains[c].second].task.delay_loss.kind == LossKind::quadratic_deadband) delay_aux[c] = n++;
  for (int m = 0; m < steps; ++m) inst.energy_index.push_back(n++);
  for (int m = 0; m < steps; ++m) inst.slack_index.push_back(n++);

  auto& qp = inst.qp;
  qp.H = Eigen::MatrixXd::Zero(n, n);
  qp.c = Eigen::VectorXd::Zero(n);
  qp.lower = Eigen::VectorXd::Zero(n);
  qp.upper = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  RowBuilder in, eq;

  for (std::size_t i = 0; i < ntask; ++i) {
    auto& t = inst.tasks[i];
    const Task& task = state.tasks[i].task;
    // Delay loss.
    if (t.committed) {
      const double tr = t.request_time.value();
      constant += evaluate_loss(task.delay_loss, *state.tasks[i].fixed_start - tr).value;
    } else if (!t.free_predecessor) {
      std::vector<std::pair<int, double>> onehot;
      for (std::size_t q = 0; q < t.b_index.size(); ++q) {
        const int k = t.k_min + static_cast<int>(q);
        qp.c[t.b_index[q]] += evaluate_loss(task.delay_loss, state.t0 + k * ts - *t.request_time).value;
        qp.upper[t.b_index[q]] = 1.0;
        onehot.emplace_back(t.b_index[q], 1.0);
      }
      eq.add(onehot, 1.0);
    } else {
      std::vector<std::pair<int, double>> onehot;
      for (int b : t.b_index) {
        qp.upper[b] = 1.0;
        onehot.emplace_back(b, 1.0);
      }
      eq.add(onehot, 1.0);
    }
    // Curtailment: v <= sum_k b_k c(m - k), loss with Euler weight T_s.
    for (std::size_t q = 0; q < t.v_index.size(); ++q) {
      const int m = t.v_first + static_cast<int>(q);
      const int v = t.v_index[q];
      if (t.committed) {
        const int j = m - t.fixed_step;
        qp.upper[v] = (j >= 0 && j < t.length) ? t.bound[static_cast<std::size_t>(j)] : 0.0;
      } else {
        std::vector<std::pair<int, double>> row{{v, 1.0}};
        for (std::size_t r = 0; r < t.b_index.size(); ++r) {
          const int j = m - (t.k_min + static_cast<int>(r));
          if (j >= 0 && j < t.length && t.bound[static_cast<std::size_t>(j)] != 0.0)
            row.emplace_back(t.b_index[r], -t.bound[static_cast<std::size_t>(j)]);
        }
        if (row.size() == 1) qp.upper[v] = 0.0;
        else in.add(row, 0.0);
      }
      const auto& L = task.curtailment_loss;
      switch (L.kind) {
        case LossKind::quadratic: qp.H(v, v) += 2.0 * ts * L.weight; break;
        case LossKind::weighted_abs: qp.c[v] += ts * L.weight; break;
        case LossKind::quadratic_deadband: {
          const int a = v_aux[i][q];
          in.add({{v, 1.0}, {a, -1.0}}, L.deadband);
          qp.H(a, a) += 2.0 * ts * L.weight;
          break;
        }
      }
    }
  }

  // Chained successors of free predecessors: delay is affine in the binaries.
  for (std::size_t c = 0; c < inst.chains.size(); ++c) {
    const auto [p, s] = inst.chains[c];
    const auto& tp = inst.tasks[p];
    const auto& tsk = inst.tasks[s];
    const double dur = state.tasks[p].task.duration();
    const double delta = state.tasks[s].task.delay_bound;
    std::vector<std::pair<int, double>> diff;  // sum k b_s - sum k b_p (in steps)
    for (std::size_t q = 0; q < tsk.b_index.size(); ++q) diff.emplace_back(tsk.b_index[q], tsk.k_min + static_cast<int>(q));
    for (std::size_t q = 0; q < tp.b_index.size(); ++q) diff.emplace_back(tp.b_index[q], -(tp.k_min + static_cast<int>(q)));
    auto negated = diff;
    for (auto& e : negated) e.second = -e.second;
    const int gap_lo = steps_ceil(dur / ts), gap_hi = steps_floor((dur + delta) / ts);
    inst.chain_gaps.emplace_back(gap_lo, gap_hi);
    in.add(negated, -gap_lo);
    in.add(diff, gap_hi);

    // delay = ts * diff - dur
    const auto& L = state.tasks[s].task.delay_loss;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (const auto& [j, w] : diff) a[j] += ts * w;
    switch (L.kind) {
      case LossKind::quadratic:
        qp.H.noalias() += 2.0 * L.weight * a * a.transpose();
        qp.c -= 2.0 * L.weight * dur * a;
        constant += L.weight * dur * dur;
        break;
      case LossKind::weighted_abs:
        qp.c += L.weight * a;
        constant -= L.weight * dur;
        break;
      case LossKind::quadratic_deadband: {
        const int aux = delay_aux[c];
        std::vector<std::pair<int, double>> row;
        for (const auto& [j, w] : diff) row.emplace_back(j, ts * w);
        row.emplace_back(aux, -1.0);
        in.add(row, dur + L.deadband);
        qp.H(aux, aux) += 2.0 * L.weight;
        break;
      }
    }
  }

  // Bus rows with elastic slack; battery through stored energy per step.
  for (int m = 0; m < steps; ++m) {
    const double pmin = state.p_min.at(inst.time_of(m));
    inst.p_min.push_back(pmin);
    double fixed_load = 0.0;
    std::vector<std::pair<int, double>> row;
    for (const auto& t : inst.tasks) {
      if (t.committed) {
        const int j = m - t.fixed_step;
        if (j >= 0 && j < t.length) fixed_load += t.nominal[static_cast<std::size_t>(j)];
      } else {
        for (std::size_t q = 0; q < t.b_index.size(); ++q) {
          const int j = m - (t.k_min + static_cast<int>(q));
          if (j >= 0 && j < t.length && t.nominal[static_cast<std::size_t>(j)] != 0.0)
            row.emplace_back(t.b_index[q], t.nominal[static_cast<std::size_t>(j)]);
        }
      }
      const int jv = m - t.v_first;
      if (jv >= 0 && jv < static_cast<int>(t.v_index.size())) row.emplace_back(t.v_index[static_cast<std::size_t>(jv)], -1.0);
    }
    // Discharge (E_m - E_{m+1}) / T_s adds to the limit; E_0 is a constant.
    const double inv = 1.0 / ts;
    const int e_next = inst.energy_index[static_cast<std::size_t>(m)];
    row.emplace_back(e_next, inv);
    double rhs = pmin - fixed_load;
    if (m == 0) rhs += state.energy * inv;
    else row.emplace_back(inst.energy_index[static_cast<std::size_t>(m - 1)], -inv);
    row.emplace_back(inst.slack_index[static_cast<std::size_t>(m)], -1.0);
    in.add(row, rhs);
    qp.c[inst.slack_index[static_cast<std::size_t>(m)]] = kBusSlackPenalty;
    qp.lower[e_next] = 0.0;
    qp.upper[e_next] = state.battery.e_max;
    // p_lo <= (E_m - E_{m+1}) / T_s <= p_hi
    if (m == 0) {
      in.add({{e_next, -inv}}, state.battery.p_hi - state.energy * inv);
      in.add({{e_next, inv}}, state.energy * inv - state.battery.p_lo);
    } else {
      const int e_prev = inst.energy_index[static_cast<std::size_t>(m - 1)];
      in.add({{e_prev, inv}, {e_next, -inv}}, state.battery.p_hi);
      in.add({{e_prev, -inv}, {e_next, inv}}, -state.battery.p_lo);
    }
  }

  in.finish(n, qp.A_in, qp.b_in);
  eq.finish(n, qp.A_eq, qp.b_eq);
  qp.constant = constant;
  return inst;
}

namespace {

double slack_total(const MiqpInstance& inst, const Eigen::VectorXd& x) {
  double s = 0.0;
  for (int j : inst.slack_index) s += x[j];
  return s;
}

}  // namespace

MiqpSolution solve_fixed(const MiqpInstance& inst, const std::vector<int>& steps, const QpOptions& options) {
  if (steps.size() != inst.tasks.size()) throw Error(ErrorCode::validation, "one start step per task expected");
  MiqpSolution sol;
  sol.steps = steps;
  sol.nodes = 1;
  if (!inst.admissible(steps)) return sol;
  Eigen::VectorXd lo = inst.qp.lower, up = inst.qp.upper;
  for (std::size_t i = 0; i < inst.tasks.size(); ++i) {
    const auto& t = inst.tasks[i];
    for (std::size_t q = 0; q < t.b_index.size(); ++q) {
      const double v = (t.k_min + static_cast<int>(q) == steps[i]) ? 1.0 : 0.0;
      lo[t.b_index[q]] = up[t.b_index[q]] = v;
    }
  }
  QpOptions o = options;
  o.detect_infeasibility = false;
  const auto r = solve_qp(inst.qp, lo, up, o);
  if (r.status != QpStatus::optimal || slack_total(inst, r.x) > kSlackTolerance) {
    sol.x = r.x;
    sol.objective = r.objective;
    return sol;
  }
  sol.status = MiqpStatus::optimal;
  sol.x = r.x;
  sol.objective = r.objective;
  sol.bound = r.objective;
  sol.root_bound = r.objective;
  return sol;
}

namespace {

std::vector<int> committed_steps(const MiqpInstance& inst) {
  std::vector<int> s(inst.tasks.size(), 0);
  for (std::size_t i = 0; i < inst.tasks.size(); ++i)
    if (inst.tasks[i].committed) s[i] = inst.tasks[i].fixed_step;
  return s;
}

// Strictly better objective, or tied and lexicographically earlier starts.
bool better(double obj, const std::vector<int>& steps, double best_obj, const std::vector<int>& best_steps,
            double tie_tol) {
  if (best_steps.empty()) return true;
  if (obj < best_obj - tie_tol) return true;
  if (obj > best_obj + tie_tol) return false;
  return steps < best_steps;
}

}  // namespace

MiqpSolution solve_bnb(const MiqpInstance& inst, const BnbOptions& options) {
  options.validate();
  const auto t_begin = std::chrono::steady_clock::now();
  const auto bins = inst.binaries();
  MiqpSolution best;
  best.status = MiqpStatus::infeasible;
  best.objective = std::numeric_limits<double>::infinity();

  struct Node {
    Eigen::VectorXd lo, up;
    double parent_bound;
    std::size_t seq;
  };
  std::vector<Node> open;
  std::size_t seq = 0;
  open.push_back({inst.qp.lower, inst.qp.upper, -std::numeric_limits<double>::infinity(), seq++});
  bool have_incumbent = false;
  std::size_t nodes = 0;
  bool root = true;
  double global_bound = std::numeric_limits<double>::infinity();

  auto steps_of = [&](const Eigen::VectorXd& x) {
    std::vector<int> s = committed_steps(inst);
    for (std::size_t i = 0; i < inst.tasks.size(); ++i) {
      const auto& t = inst.tasks[i];
      if (t.committed) continue;
      std::size_t arg = 0;
      for (std::size_t q = 1; q < t.b_index.size(); ++q)
        if (x[t.b_index[q]] > x[t.b_index[arg]] + 1e-12) arg = q;
      s[i] = t.k_min + static_cast<int>(arg);
    }
    return s;
  };
  auto try_incumbent = [&](const std::vector<int>& steps) {
    auto cand = solve_fixed(inst, steps, options.qp);
    if (cand.status != MiqpStatus::optimal) return;
    if (better(cand.objective, cand.steps, best.objective, have_incumbent ? best.steps : std::vector<int>{},
               options.gap_tol)) {
      best.steps = cand.steps;
      best.objective = cand.objective;
      best.x = cand.x;
      have_incumbent = true;
    }
  };

  // Earliest start per task still allowed by the node's bounds.
  auto earliest = [&](const Eigen::VectorXd& lo, const Eigen::VectorXd& up) {
    std::vector<int> s = committed_steps(inst);
    for (std::size_t i = 0; i < inst.tasks.size(); ++i) {
      const auto& t = inst.tasks[i];
      if (t.committed) continue;
      std::size_t q = 0;
      while (q + 1 < t.b_index.size() && up[t.b_index[q]] < 0.5) ++q;
      for (std::size_t r = q; r < t.b_index.size(); ++r)
        if (lo[t.b_index[r]] > 0.5) q = r;
      s[i] = t.k_min + static_cast<int>(q);
    }
    return s;
  };
  // Prunable unless it may still hold a better or tied-but-earlier assignment.
  auto prunable = [&](double bound, const Eigen::VectorXd& lo, const Eigen::VectorXd& up) {
    if (!have_incumbent) return false;
    if (bound > best.objective + options.gap_tol) return true;
    if (bound < best.objective - options.gap_tol) return false;
    return !(earliest(lo, up) < best.steps);
  };

  while (!open.empty()) {
    if (nodes >= options.node_limit) break;
    std::size_t pick = open.size() - 1;  // depth-first until an incumbent exists
    if (have_incumbent) {
      pick = 0;
      for (std::size_t k = 1; k < open.size(); ++k)
        if (open[k].parent_bound < open[pick].parent_bound ||
            (open[k].parent_bound == open[pick].parent_bound && open[k].seq < open[pick].seq))
          pick = k;
    }
    Node node = std::move(open[pick]);
    open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
    if (prunable(node.parent_bound, node.lo, node.up)) continue;

    ++nodes;
    const auto r = solve_qp(inst.qp, node.lo, node.up, options.qp);
    if (root) {
      root = false;
      if (r.status == QpStatus::infeasible) break;
      best.root_bound = r.objective;
      try_incumbent(steps_of(r.x));  // rounding heuristic
    }
    if (r.status == QpStatus::infeasible) continue;
    const double bound = r.status == QpStatus::optimal ? r.objective : node.parent_bound;
    if (prunable(bound, node.lo, node.up)) continue;

    // Most fractional binary, ties by lowest index.
    int branch = -1;
    double frac = 1e-6;
    for (int b : bins) {
      const double f = std::min(r.x[b] - std::floor(r.x[b]), std::ceil(r.x[b]) - r.x[b]);
      if (f > frac + 1e-12) {
        frac = f;
        branch = b;
      }
    }
    if (branch < 0) {
      try_incumbent(steps_of(r.x));
      continue;
    }
    Node zero{node.lo, node.up, bound, seq++};
    zero.up[branch] = 0.0;
    Node one{std::move(node.lo), std::move(node.up), bound, seq++};
    one.lo[branch] = 1.0;
    open.push_back(std::move(zero));
    open.push_back(std::move(one));  // popped first while diving
  }

  for (const auto& n : open) global_bound = std::min(global_bound, n.parent_bound);
  best.nodes = nodes;
  if (have_incumbent) {
    const bool exhausted = open.empty() || global_bound >= best.objective - options.gap_tol;
    best.status = exhausted ? MiqpStatus::optimal : MiqpStatus::node_limit;
    best.bound = exhausted ? best.objective : std::min(global_bound, best.objective);
    best.gap = best.objective - best.bound;
  } else {
    best.status = open.empty() ? MiqpStatus::infeasible : MiqpStatus::node_limit;
    best.bound = global_bound;
  }
  best.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  if (best.status == MiqpStatus::infeasible)
    throw Error(ErrorCode::infeasible, "discrete model has no start assignment within the bus limit");
  return best;
}

MiqpSolution enumerate_oracle(const MiqpInstance& inst, Execution exec, std::size_t limit, const QpOptions& options) {
  const auto t_begin = std::chrono::steady_clock::now();
  std::size_t count = 1;
  for (const auto& t : inst.tasks) {
    count *= t.window_size();
    if (count > limit)
      throw Error(ErrorCode::limit, "enumeration needs more than " + std::to_string(limit) + " start combinations");
  }
  const std::size_t total = count;
  // Mixed-radix decoding, first task most significant: index order is lexicographic in steps.
  auto decode = [&](std::size_t idx) {
    std::vector<int> s = committed_steps(inst);
    for (std::size_t i = inst.tasks.size(); i-- > 0;) {
      const auto& t = inst.tasks[i];
      if (t.committed) continue;
      const std::size_t w = t.window_size();
      s[i] = t.k_min + static_cast<int>(idx % w);
      idx /= w;
    }
    return s;
  };
  std::vector<MiqpSolution> results(total);
  for_each_index(exec, total, [&](std::size_t k) {
    const auto s = decode(k);
    if (!inst.admissible(s)) {
      results[k].steps = s;
      return;
    }
    results[k] = solve_fixed(inst, s, options);
  });
  MiqpSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t k = 0; k < total; ++k) {
    const auto& r = results[k];
    if (r.status != MiqpStatus::optimal) continue;
    if (!found || r.objective < best.objective - 1e-9) {
      best = r;
      found = true;
    }
  }
  best.nodes = total;
  best.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  if (!found) throw Error(ErrorCode::infeasible, "no start combination satisfies the discrete model");
  best.bound = best.objective;
  best.root_bound = best.objective;
  return best;
}

SchedulePlan miqp_plan(const MiqpInstance& inst, const MiqpSolution& sol) {
  SchedulePlan plan;
  for (std::size_t i = 0; i < inst.tasks.size(); ++i) {
    const auto& t = inst.tasks[i];
    TaskPlan tp;
    tp.id = t.id;
    tp.start_fixed = t.committed;
    const int k = sol.steps[i];
    tp.start = inst.time_of(k);
    for (int j = 0; j < t.length; ++j) {
      const int m = k + j;
      if (m < 0 || m >= inst.steps) continue;
      tp.node_times.push_back(inst.time_of(m));
      tp.samples.push_back(inst.task_power(i, sol.x, m));
    }
    plan.tasks.push_back(std::move(tp));
  }
  for (int m = 0; m <= inst.steps; ++m) plan.battery_nodes.push_back(inst.time_of(m));
  for (int m = 0; m < inst.steps; ++m) plan.battery_power.push_back(inst.battery_power(sol.x, m));
  return plan;
}

}  // namespace loadshift
