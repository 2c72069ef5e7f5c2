#include "loadshift/transcribe.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "loadshift/battery.hpp"
#include "loadshift/errors.hpp"

namespace loadshift {

std::size_t DecisionLayout::start_count() const {
  return static_cast<std::size_t>(
      std::count_if(start_slot.begin(), start_slot.end(), [](const auto& s) { return s.has_value(); }));
}

std::size_t DecisionLayout::sample_count() const {
  std::size_t n = 0;
  for (const auto& task : sample_slot)
    for (const auto& s : task) n += s.has_value();
  return n;
}

std::string describe(const RowInfo& row) {
  switch (row.kind) {
    case RowKind::bus: return "bus[" + std::to_string(row.index) + "]";
    case RowKind::energy_low: return "energy_low[" + std::to_string(row.index) + "]";
    case RowKind::energy_high: return "energy_high[" + std::to_string(row.index) + "]";
    case RowKind::chain_lower: return "chain_lower[" + std::to_string(row.index) + "]";
    case RowKind::chain_upper: return "chain_upper[" + std::to_string(row.index) + "]";
  }
  return "row";
}

namespace {

std::vector<double> trapezoid_weights(std::span<const double> o) {
  const std::size_t n = o.size();
  std::vector<double> w(n, 0.0);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double h = o[j + 1] - o[j];
    w[j] += 0.5 * h;
    w[j + 1] += 0.5 * h;
  }
  return w;
}

void check_finite(double v, const std::string& term) {
  if (!std::isfinite(v))
    throw Error(ErrorCode::numerical_domain, "non-finite value in " + term);
}

}  // namespace

double nlp_horizon_end(const ScenarioState& state, const NlpOptions& options) {
  if (options.horizon_end) return std::max(*options.horizon_end, state.t0 + state.global_resolution);
  std::map<TaskId, double> fixed;
  for (const auto& s : state.tasks)
    if (s.fixed_start) fixed[s.task.id] = *s.fixed_start;
  const auto list = state.task_list();
  return horizon_end(list, state.t0, state.global_resolution, fixed) + options.interp.ramp_width;
}

std::pair<DecisionLayout, NlpProblem> build_nlp(const ScenarioState& state, const NlpOptions& options) {
  if (state.tasks.empty())
    throw Error(ErrorCode::validation, "cannot transcribe a state without requested tasks");
  state.validate();

  NlpProblem nlp;
  nlp.execution_ = options.execution;
  nlp.battery_ = state.battery;
  nlp.energy0_ = state.energy;
  nlp.grid_ = GlobalGrid::uniform(state.t0, nlp_horizon_end(state, options), state.global_resolution);

  const std::size_t ntask = state.tasks.size();
  nlp.tasks_.resize(ntask);
  for (std::size_t i = 0; i < ntask; ++i) {
    const auto& s = state.tasks[i];
    auto& d = nlp.tasks_[i];
    d.task = s.task;
    d.basis = InterpBasis::make(options.interp, s.task.local_grid);
    d.fixed_start = s.fixed_start;
    d.frozen = s.frozen_samples;
    const auto offs = s.task.local_grid.offsets();
    for (double o : offs) {
      d.nominal.push_back(s.task.profile(o));
      d.bound.push_back(s.task.curtailment_bound(o));
    }
    d.weights = trapezoid_weights(offs);
    d.request_time = s.task.request_time;
  }
  // Resolve chained request times: constant when the predecessor is committed,
  // a linear coupling when it is still free.
  for (std::size_t i = 0; i < ntask; ++i) {
    auto& d = nlp.tasks_[i];
    if (d.request_time || !d.task.predecessor) continue;
    const auto p = state.index_of(*d.task.predecessor);
    if (!p) throw Error(ErrorCode::validation, "task '" + d.task.id + "' has an unresolved predecessor");
    const auto& pred = state.tasks[*p];
    if (pred.fixed_start)
      d.request_time = *pred.fixed_start + pred.task.duration();
    else
      d.free_predecessor = *p;
  }

  // Layout.
  auto& L = nlp.layout_;
  L.start_slot.assign(ntask, std::nullopt);
  L.sample_slot.resize(ntask);
  std::size_t n = 0;
  for (std::size_t i = 0; i < ntask; ++i)
    if (!nlp.tasks_[i].fixed_start) L.start_slot[i] = n++;
  L.battery_offset = n;
  L.battery_count = nlp.grid_.interval_count();
  n += L.battery_count;
  for (std::size_t i = 0; i < ntask; ++i) {
    const auto& d = nlp.tasks_[i];
    L.sample_slot[i].assign(d.nominal.size(), std::nullopt);
    for (std::size_t j = d.frozen.size(); j < d.nominal.size(); ++j) L.sample_slot[i][j] = n++;
  }
  L.dimension = n;

  // Boxes.
  nlp.lower_.resize(static_cast<Eigen::Index>(n));
  nlp.upper_.resize(static_cast<Eigen::Index>(n));
  std::vector<std::optional<std::pair<double, double>>> start_box(ntask);
  std::function<std::pair<double, double>(std::size_t, int)> box_of = [&](std::size_t i, int depth) {
    if (depth > static_cast<int>(ntask))
      throw Error(ErrorCode::validation, "predecessor cycle in transcription");
    if (start_box[i]) return *start_box[i];
    const auto& d = nlp.tasks_[i];
    std::pair<double, double> b;
    if (d.free_predecessor) {
      const auto pb = box_of(*d.free_predecessor, depth + 1);
      const double tp = nlp.tasks_[*d.free_predecessor].task.duration();
      b = {std::max(state.t0, pb.first + tp), pb.second + tp + d.task.delay_bound};
    } else {
      const double tr = d.request_time.value();
      b = {std::max(tr, state.t0), tr + d.task.delay_bound};
    }
    if (b.first > b.second + 1e-12) {
      std::ostringstream os;
      os << "task '" << d.task.id << "' cannot start: earliest " << b.first << " h is after latest "
         << b.second << " h";
      throw Error(ErrorCode::infeasible, os.str());
    }
    b.first = std::min(b.first, b.second);
    start_box[i] = b;
    return b;
  };
  for (std::size_t i = 0; i < ntask; ++i) {
    if (!L.start_slot[i]) continue;
    const auto b = box_of(i, 0);
    const auto k = static_cast<Eigen::Index>(*L.start_slot[i]);
    nlp.lower_[k] = b.first;
    nlp.upper_[k] = b.second;
  }
  for (std::size_t k = 0; k < L.battery_count; ++k) {
    nlp.lower_[static_cast<Eigen::Index>(L.battery_offset + k)] = state.battery.p_lo;
    nlp.upper_[static_cast<Eigen::Index>(L.battery_offset + k)] = state.battery.p_hi;
  }
  for (std::size_t i = 0; i < ntask; ++i) {
    const auto& d = nlp.tasks_[i];
    for (std::size_t j = 0; j < d.nominal.size(); ++j) {
      if (!L.sample_slot[i][j]) continue;
      const auto k = static_cast<Eigen::Index>(*L.sample_slot[i][j]);
      nlp.lower_[k] = d.nominal[j] - d.bound[j];
      nlp.upper_[k] = d.nominal[j];
    }
  }

  // Rows: bus at nodes 0..N_g-1, energy bounds at nodes 0..N_g, chain couplings.
  const std::size_t ng = nlp.grid_.interval_count();
  for (std::size_t k = 0; k < ng; ++k) nlp.rows_.push_back({RowKind::bus, k});
  for (std::size_t k = 0; k <= ng; ++k) nlp.rows_.push_back({RowKind::energy_low, k});
  for (std::size_t k = 0; k <= ng; ++k) nlp.rows_.push_back({RowKind::energy_high, k});
  for (std::size_t i = 0; i < ntask; ++i)
    if (nlp.tasks_[i].free_predecessor) nlp.chains_.push_back({*nlp.tasks_[i].free_predecessor, i});
  for (std::size_t c = 0; c < nlp.chains_.size(); ++c) {
    nlp.rows_.push_back({RowKind::chain_lower, c});
    nlp.rows_.push_back({RowKind::chain_upper, c});
  }
  for (double t : nlp.grid_.nodes()) nlp.p_min_nodes_.push_back(state.p_min.at(t));

  return {nlp.layout_, std::move(nlp)};
}

double NlpProblem::start_of(std::size_t task, const Eigen::VectorXd& z) const {
  const auto& d = tasks_[task];
  if (d.fixed_start) return *d.fixed_start;
  return z[static_cast<Eigen::Index>(*layout_.start_slot[task])];
}

std::vector<double> NlpProblem::samples_of(std::size_t task, const Eigen::VectorXd& z) const {
  const auto& d = tasks_[task];
  std::vector<double> u(d.nominal.size());
  for (std::size_t j = 0; j < u.size(); ++j)
    u[j] = j < d.frozen.size() ? d.frozen[j]
                               : z[static_cast<Eigen::Index>(*layout_.sample_slot[task][j])];
  return u;
}

double NlpProblem::delay_of(std::size_t task, const Eigen::VectorXd& z) const {
  const auto& d = tasks_[task];
  const double ts = start_of(task, z);
  if (d.free_predecessor)
    return ts - start_of(*d.free_predecessor, z) - tasks_[*d.free_predecessor].task.duration();
  return ts - d.request_time.value();
}

std::vector<double> NlpProblem::energies(const Eigen::VectorXd& z) const {
  std::vector<double> p(layout_.battery_count);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = z[static_cast<Eigen::Index>(layout_.battery_offset + k)];
  return propagate(energy0_, p, grid_);
}

double NlpProblem::objective(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
  if (grad) grad->setZero(static_cast<Eigen::Index>(layout_.dimension));
  double f = 0.0;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const auto& d = tasks_[i];
    const auto delay = evaluate_loss(d.task.delay_loss, delay_of(i, z));
    check_finite(delay.value, "delay loss of task '" + d.task.id + "'");
    f += delay.value;
    if (grad && layout_.start_slot[i]) {
      (*grad)[static_cast<Eigen::Index>(*layout_.start_slot[i])] += delay.derivative;
      if (d.free_predecessor && layout_.start_slot[*d.free_predecessor])
        (*grad)[static_cast<Eigen::Index>(*layout_.start_slot[*d.free_predecessor])] -= delay.derivative;
    }
    // Trapezoid quadrature in relative time: independent of t_s.
    const auto u = samples_of(i, z);
    for (std::size_t j = 0; j < u.size(); ++j) {
      const auto c = evaluate_loss(d.task.curtailment_loss, d.nominal[j] - u[j]);
      check_finite(c.value, "curtailment loss of task '" + d.task.id + "'");
      f += d.weights[j] * c.value;
      if (grad && layout_.sample_slot[i][j])
        (*grad)[static_cast<Eigen::Index>(*layout_.sample_slot[i][j])] -= d.weights[j] * c.derivative;
    }
  }
  return f;
}

void NlpProblem::constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd* jac) const {
  constraints(z, g, jac, execution_);
}

void NlpProblem::constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd* jac,
                             Execution exec) const {
  const auto m = static_cast<Eigen::Index>(rows_.size());
  const auto n = static_cast<Eigen::Index>(layout_.dimension);
  g.resize(m);
  if (jac) jac->setZero(m, n);

  const std::size_t ntask = tasks_.size();
  std::vector<std::vector<double>> samples(ntask);
  std::vector<double> starts(ntask);
  std::size_t widest = 0;
  for (std::size_t i = 0; i < ntask; ++i) {
    samples[i] = samples_of(i, z);
    starts[i] = start_of(i, z);
    widest = std::max(widest, samples[i].size());
  }

  const auto nodes = grid_.nodes();
  const std::size_t ng = grid_.interval_count();
  // Bus rows are independent per node: the data-parallel kernel.
  for_each_index(exec, ng, [&](std::size_t k) {
    const double t = nodes[k];
    std::vector<double> ds(widest);
    double sum = 0.0;
    for (std::size_t i = 0; i < ntask; ++i) {
      const auto& d = tasks_[i];
      const double eps = d.basis->ramp_width();
      if (t < starts[i] - eps || t > starts[i] + d.basis->duration() + eps) continue;
      double dts = 0.0;
      std::span<double> dsi(ds.data(), samples[i].size());
      sum += d.basis->evaluate(starts[i], t, samples[i], jac ? &dts : nullptr,
                               jac ? dsi : std::span<double>{});
      if (!jac) continue;
      const auto row = static_cast<Eigen::Index>(k);
      if (layout_.start_slot[i]) (*jac)(row, static_cast<Eigen::Index>(*layout_.start_slot[i])) += dts;
      for (std::size_t j = 0; j < dsi.size(); ++j)
        if (layout_.sample_slot[i][j])
          (*jac)(row, static_cast<Eigen::Index>(*layout_.sample_slot[i][j])) += dsi[j];
    }
    const auto pk = static_cast<Eigen::Index>(layout_.battery_offset + k);
    g[static_cast<Eigen::Index>(k)] = sum - p_min_nodes_[k] - z[pk];
    if (jac) (*jac)(static_cast<Eigen::Index>(k), pk) = -1.0;
  });
  for (std::size_t k = 0; k < ng; ++k) check_finite(g[static_cast<Eigen::Index>(k)], "bus row " + std::to_string(k));

  // Energy rows, both bounds at every node.
  const auto e = energies(z);
  const auto low0 = static_cast<Eigen::Index>(ng);
  const auto high0 = static_cast<Eigen::Index>(2 * ng + 1);
  for (std::size_t k = 0; k <= ng; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    g[low0 + kk] = -e[k];
    g[high0 + kk] = e[k] - battery_.e_max;
    if (!jac) continue;
    for (std::size_t l = 0; l < k; ++l) {
      const auto pl = static_cast<Eigen::Index>(layout_.battery_offset + l);
      (*jac)(low0 + kk, pl) = grid_.width(l);
      (*jac)(high0 + kk, pl) = -grid_.width(l);
    }
  }

  const auto chain0 = static_cast<Eigen::Index>(3 * ng + 2);
  for (std::size_t c = 0; c < chains_.size(); ++c) {
    const auto [p, s] = chains_[c];
    const double tp = tasks_[p].task.duration();
    const auto lo = chain0 + static_cast<Eigen::Index>(2 * c);
    g[lo] = starts[p] + tp - starts[s];
    g[lo + 1] = starts[s] - starts[p] - tp - tasks_[s].task.delay_bound;
    if (!jac) continue;
    const auto zp = static_cast<Eigen::Index>(*layout_.start_slot[p]);
    const auto zs = static_cast<Eigen::Index>(*layout_.start_slot[s]);
    (*jac)(lo, zp) = 1.0;
    (*jac)(lo, zs) = -1.0;
    (*jac)(lo + 1, zp) = -1.0;
    (*jac)(lo + 1, zs) = 1.0;
  }
}

double NlpProblem::max_violation(const Eigen::VectorXd& z) const {
  Eigen::VectorXd g;
  constraints(z, g, nullptr);
  double v = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) v = std::max(v, g[i]);
  for (Eigen::Index i = 0; i < z.size(); ++i)
    v = std::max({v, lower_[i] - z[i], z[i] - upper_[i]});
  return v;
}

bool NlpProblem::near_kink(const Eigen::VectorXd& z, double h) const {
  const auto nodes = grid_.nodes();
  const double margin = 2.0 * h;
  auto loss_kink = [&](const LossSpec& spec, double x) {
    switch (spec.kind) {
      case LossKind::quadratic_deadband: return std::abs(x - spec.deadband) <= margin;
      case LossKind::weighted_abs: return std::abs(x) <= margin;
      case LossKind::quadratic: return false;
    }
    return false;
  };
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const auto& d = tasks_[i];
    const double ts = start_of(i, z);
    const auto u = samples_of(i, z);
    if (layout_.start_slot[i] && loss_kink(d.task.delay_loss, delay_of(i, z))) return true;
    for (std::size_t j = 0; j < u.size(); ++j)
      if (layout_.sample_slot[i][j] && loss_kink(d.task.curtailment_loss, d.nominal[j] - u[j])) return true;
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k)
      if (d.basis->near_kink(ts, nodes[k], u, h)) return true;
  }
  return false;
}

SchedulePlan extract_plan(const NlpProblem& nlp, const Eigen::VectorXd& z) {
  SchedulePlan plan;
  for (std::size_t i = 0; i < nlp.tasks().size(); ++i) {
    const auto& d = nlp.tasks()[i];
    TaskPlan tp;
    tp.id = d.task.id;
    tp.start = nlp.start_of(i, z);
    tp.start_fixed = d.fixed_start.has_value();
    tp.node_times = instantiate_local_grid(d.task.local_grid, tp.start);
    tp.samples = nlp.samples_of(i, z);
    plan.tasks.push_back(std::move(tp));
  }
  const auto nodes = nlp.grid().nodes();
  plan.battery_nodes.assign(nodes.begin(), nodes.end());
  const auto& L = nlp.layout();
  for (std::size_t k = 0; k < L.battery_count; ++k)
    plan.battery_power.push_back(z[static_cast<Eigen::Index>(L.battery_offset + k)]);
  return plan;
}

Eigen::VectorXd pack_plan(const NlpProblem& nlp, const SchedulePlan& plan, Eigen::VectorXd base) {
  const auto& L = nlp.layout();
  if (base.size() != static_cast<Eigen::Index>(L.dimension))
    base = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.dimension));
  for (std::size_t i = 0; i < nlp.tasks().size(); ++i) {
    const auto& d = nlp.tasks()[i];
    const TaskPlan* tp = plan.find(d.task.id);
    if (!tp) continue;
    if (L.start_slot[i]) base[static_cast<Eigen::Index>(*L.start_slot[i])] = tp->start;
    for (std::size_t j = 0; j < L.sample_slot[i].size() && j < tp->samples.size(); ++j)
      if (L.sample_slot[i][j]) base[static_cast<Eigen::Index>(*L.sample_slot[i][j])] = tp->samples[j];
  }
  // Battery powers are matched by time: each new interval takes the plan's
  // power at its midpoint, zero beyond the plan's horizon.
  const auto nodes = nlp.grid().nodes();
  for (std::size_t k = 0; k < L.battery_count; ++k) {
    const double mid = 0.5 * (nodes[k] + nodes[k + 1]);
    double p = 0.0;
    for (std::size_t q = 0; q < plan.battery_power.size(); ++q)
      if (mid >= plan.battery_nodes[q] && mid < plan.battery_nodes[q + 1]) {
        p = plan.battery_power[q];
        break;
      }
    base[static_cast<Eigen::Index>(L.battery_offset + k)] = p;
  }
  return base;
}

}  // namespace loadshift
