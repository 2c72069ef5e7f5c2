#include "loadshift/mpc_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "loadshift/errors.hpp"
#include "loadshift/transcribe.hpp"

namespace loadshift {

double TraceRow::load() const {
  double s = 0.0;
  for (double p : appliance_power) s += p;
  return s;
}

double TraceRow::headroom() const { return p_min + p_batt - load(); }

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::bus: return "bus";
    case ViolationKind::energy: return "energy";
    case ViolationKind::battery_power: return "battery_power";
    case ViolationKind::energy_balance: return "energy_balance";
    case ViolationKind::delay: return "delay";
    case ViolationKind::precedence: return "precedence";
    case ViolationKind::curtailment: return "curtailment";
    case ViolationKind::unfinished: return "unfinished";
  }
  return "unknown";
}

LoopOptions loop_options(const Scenario& sc) {
  LoopOptions o;
  const auto& c = sc.controller;
  o.controller = c.method;
  o.ts = c.ts;
  o.interp.method = c.interpolation;
  o.interp.sigma = c.rbf_sigma;
  o.interp.ramp_width = c.ramp_width;
  o.solver.seed = c.seed;
  o.solver.multistart = c.multistart;
  o.solver.kkt_tol = c.tolerance;
  return o;
}

namespace {

std::uint64_t replan_seed(std::uint64_t seed, std::size_t index) {
  return seed * 6364136223846793005ULL + 1442695040888963407ULL * (index + 1);
}

std::vector<double> trapezoid(std::span<const double> o) {
  std::vector<double> w(o.size(), 0.0);
  for (std::size_t j = 0; j + 1 < o.size(); ++j) {
    w[j] += 0.5 * (o[j + 1] - o[j]);
    w[j + 1] += 0.5 * (o[j + 1] - o[j]);
  }
  return w;
}

class Loop {
 public:
  Loop(const Scenario& sc, const LoopOptions& opt) : sc_(sc), opt_(opt) {
    trace_.controller = opt.controller;
    trace_.ts = opt.controller == ControllerKind::miqp ? opt.ts : 0.0;
    trace_.battery = sc.battery;
    for (const auto& a : sc.appliances) trace_.appliances.push_back(a.id);
    pending_ = sc.requests;
    std::stable_sort(pending_.begin(), pending_.end(),
                     [](const RequestEvent& a, const RequestEvent& b) { return a.time < b.time; });
    state_.battery = sc.battery;
    state_.energy = sc.initial_energy;
    state_.p_min = sc.p_min;
    state_.global_resolution = sc.global_resolution;
    if (opt.controller == ControllerKind::miqp) {
      if (!(opt.ts > 0.0)) throw Error(ErrorCode::validation, "sampling time must be positive");
      step_ = opt.ts * std::max(1.0, std::round(sc.global_resolution / opt.ts));
    } else {
      step_ = sc.global_resolution;
    }
  }

  ClosedLoopTrace run() {
    const double origin = pending_.empty() ? 0.0 : pending_.front().time;
    double t = origin;
    while (true) {
      const bool arrivals = admit(t);
      retire(t);
      state_.t0 = t;
      // Replan instants sit on the grid origin + k * step; summing steps drifts.
      double t1 = origin + std::floor((t - origin) / step_ + 1e-9 + 1.0) * step_;
      if (next_ < pending_.size() && pending_[next_].time < t1 - 1e-9) t1 = pending_[next_].time;
      if (opt_.controller == ControllerKind::miqp) {
        const double m = std::max(1.0, std::round((t1 - t) / opt_.ts));
        t1 = t + m * opt_.ts;
      }
      if (state_.tasks.empty()) {
        if (next_ >= pending_.size()) {
          idle_row(t);
          trace_.complete = true;
          break;
        }
        idle_row(t);
        t = t1;
        have_prev_ = false;
        continue;
      }
      if (t > opt_.max_time) {
        trace_.failure = "simulation exceeded the time limit of " + std::to_string(opt_.max_time) + " h";
        break;
      }
      try {
        if (opt_.controller == ControllerKind::continuous)
          step_continuous(t, t1, arrivals);
        else
          step_miqp(t, t1, arrivals);
      } catch (const Error& e) {
        std::ostringstream os;
        os << "controller failed at t = " << t << " h: " << e.what();
        trace_.failure = os.str();
        break;
      }
      ++replans_;
      t = t1;
    }
    trace_.end_time = t;
    trace_.final_energy = state_.energy;
    return std::move(trace_);
  }

 private:
  const Scenario& sc_;
  const LoopOptions& opt_;
  ClosedLoopTrace trace_;
  ScenarioState state_;
  std::vector<RequestEvent> pending_;
  std::size_t next_ = 0;
  std::map<std::string, std::size_t> occurrences_;
  std::map<TaskId, std::size_t> record_;
  double step_ = 0.1;
  std::size_t replans_ = 0;
  SchedulePlan prev_;
  bool have_prev_ = false;

  TaskRecord& record(const TaskId& id) { return trace_.tasks[record_.at(id)]; }

  std::size_t appliance_index(const std::string& id) const {
    for (std::size_t a = 0; a < trace_.appliances.size(); ++a)
      if (trace_.appliances[a] == id) return a;
    return 0;
  }

  bool admit(double t) {
    bool any = false;
    while (next_ < pending_.size() && pending_[next_].time <= t + 1e-9) {
      const auto& ev = pending_[next_++];
      const auto tasks = sc_.instantiate(ev.appliance, ++occurrences_[ev.appliance], ev.time);
      for (const auto& task : tasks) {
        TaskRecord rec;
        rec.id = task.id;
        rec.appliance = task.appliance;
        rec.predecessor = task.predecessor;
        rec.request_time = task.request_time.value_or(std::nan(""));
        rec.duration = task.duration();
        rec.delay_bound = task.delay_bound;
        rec.profile = task.profile;
        rec.curtailment_bound = task.curtailment_bound;
        rec.delay_loss = task.delay_loss;
        rec.curtailment_loss = task.curtailment_loss;
        record_[task.id] = trace_.tasks.size();
        trace_.tasks.push_back(std::move(rec));
        state_.tasks.push_back({task, std::nullopt, {}});
      }
      any = true;
    }
    return any;
  }

  double finish_time(const TaskStatus& s) const {
    if (opt_.controller == ControllerKind::miqp) {
      const int length = std::max(1, static_cast<int>(std::lround(s.task.duration() / opt_.ts)));
      return *s.fixed_start + length * opt_.ts;
    }
    return *s.fixed_start + s.task.duration() + opt_.interp.ramp_width;
  }

  void retire(double t) {
    std::vector<TaskStatus> keep;
    for (auto& s : state_.tasks) {
      if (s.fixed_start && t >= finish_time(s) - 1e-9) record(s.task.id).finished = true;
      else keep.push_back(std::move(s));
    }
    state_.tasks = std::move(keep);
  }

  void commit(std::size_t i, double start) {
    auto& s = state_.tasks[i];
    s.fixed_start = start;
    record(s.task.id).start = start;
    for (auto& other : state_.tasks)
      if (other.task.predecessor && *other.task.predecessor == s.task.id) {
        other.task.request_time = start + s.task.duration();
        record(other.task.id).request_time = *other.task.request_time;
      }
  }

  void idle_row(double t) {
    TraceRow row;
    row.time = t;
    row.appliance_power.assign(trace_.appliances.size(), 0.0);
    row.energy = state_.energy;
    row.p_min = sc_.p_min.at(t);
    trace_.rows.push_back(std::move(row));
  }

  void check_bus(const TraceRow& row) const {
    if (row.load() - row.p_min - row.p_batt > kVerifyTolerance) {
      std::ostringstream os;
      os << "applied load " << row.load() << " kW exceeds the bus limit " << row.p_min + row.p_batt << " kW at t = "
         << row.time << " h";
      throw Error(ErrorCode::controller, os.str());
    }
  }

  void notify(double t, bool arrivals, const SchedulePlan& plan, double objective, std::optional<double> warm) {
    if (!opt_.on_replan) return;
    ReplanEvent ev;
    ev.t0 = t;
    ev.index = replans_;
    ev.arrivals = arrivals;
    ev.state = &state_;
    ev.plan = &plan;
    ev.planned_objective = objective;
    ev.warm_objective = warm;
    opt_.on_replan(ev);
  }

  void step_continuous(double t, double t1, bool arrivals) {
    const auto clock = std::chrono::steady_clock::now();
    NlpOptions no;
    no.interp = opt_.interp;
    no.execution = opt_.execution;
    auto [layout, nlp] = build_nlp(state_, no);
    SolverOptions so = opt_.solver;
    so.execution = opt_.execution;
    auto starts = multistart_guesses(nlp, so.multistart, replan_seed(so.seed, replans_));
    std::optional<double> warm;
    if (have_prev_) {
      Eigen::VectorXd z = project(nlp, pack_plan(nlp, prev_, starts.front()));
      if (nlp.max_violation(z) <= so.kkt_tol) warm = nlp.objective(z, nullptr);
      starts.push_back(std::move(z));
    }
    const auto res = solve_multistart(nlp, starts, so);
    trace_.solve_times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - clock).count());
    if (res.report.violation > so.kkt_tol) {
      std::ostringstream os;
      os << "no feasible plan found (violation " << res.report.violation << ")";
      throw Error(ErrorCode::controller, os.str());
    }
    SchedulePlan plan = extract_plan(nlp, res.z);
    notify(t, arrivals, plan, res.report.objective, warm);

    for (std::size_t i = 0; i < state_.tasks.size(); ++i)
      if (!state_.tasks[i].committed() && plan.tasks[i].start < t1 - 1e-12) commit(i, plan.tasks[i].start);

    TraceRow row;
    row.time = t;
    row.appliance_power.assign(trace_.appliances.size(), 0.0);
    for (std::size_t i = 0; i < nlp.tasks().size(); ++i)
      row.appliance_power[appliance_index(state_.tasks[i].task.appliance)] +=
          nlp.tasks()[i].basis->evaluate(plan.tasks[i].start, t, plan.tasks[i].samples);
    row.p_batt = plan.battery_power.front();
    row.energy = state_.energy;
    row.p_min = sc_.p_min.at(t);
    check_bus(row);
    trace_.rows.push_back(std::move(row));

    state_.energy -= plan.battery_power.front() * (t1 - t);
    for (std::size_t i = 0; i < state_.tasks.size(); ++i) {
      auto& s = state_.tasks[i];
      if (!s.committed()) continue;
      const auto& tp = plan.tasks[i];
      const auto offsets = s.task.local_grid.offsets();
      const auto w = trapezoid(offsets);
      auto& rec = record(s.task.id);
      for (std::size_t j = s.frozen_samples.size(); j < tp.node_times.size() && tp.node_times[j] < t1 - 1e-12; ++j) {
        s.frozen_samples.push_back(tp.samples[j]);
        rec.samples.push_back({tp.node_times[j], offsets[j], tp.samples[j], w[j]});
      }
    }
    prev_ = std::move(plan);
    have_prev_ = true;
  }

  void step_miqp(double t, double t1, bool arrivals) {
    const auto clock = std::chrono::steady_clock::now();
    const auto inst = build_miqp(state_, opt_.ts);
    for (const auto& w : inst.warnings)
      if (std::find(trace_.warnings.begin(), trace_.warnings.end(), w) == trace_.warnings.end())
        trace_.warnings.push_back(w);
    const auto sol = solve_bnb(inst, opt_.bnb);
    trace_.solve_times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - clock).count());
    const SchedulePlan plan = miqp_plan(inst, sol);
    notify(t, arrivals, plan, sol.objective, std::nullopt);

    const int steps = std::max(1, static_cast<int>(std::lround((t1 - t) / opt_.ts)));
    for (std::size_t i = 0; i < state_.tasks.size(); ++i)
      if (!state_.tasks[i].committed() && sol.steps[i] < steps) commit(i, inst.time_of(sol.steps[i]));

    for (int m = 0; m < steps; ++m) {
      TraceRow row;
      row.time = inst.time_of(m);
      row.appliance_power.assign(trace_.appliances.size(), 0.0);
      for (std::size_t i = 0; i < inst.tasks.size(); ++i) {
        const int j = m - sol.steps[i];
        const auto& t_i = inst.tasks[i];
        if (j < 0 || j >= t_i.length || m >= inst.steps) continue;
        const double u = inst.task_power(i, sol.x, m);
        row.appliance_power[appliance_index(state_.tasks[i].task.appliance)] += u;
        const double tau = std::min((j + 0.5) * opt_.ts, state_.tasks[i].task.duration());
        record(t_i.id).samples.push_back({row.time, tau, u, opt_.ts});
      }
      row.p_batt = m < inst.steps ? inst.battery_power(sol.x, m) : 0.0;
      row.energy = state_.energy;
      row.p_min = sc_.p_min.at(row.time);
      check_bus(row);
      state_.energy -= row.p_batt * opt_.ts;
      trace_.rows.push_back(std::move(row));
    }
  }
};

}  // namespace

ClosedLoopTrace run(const Scenario& scenario, const LoopOptions& options) {
  scenario.validate();
  Loop loop(scenario, options);
  return loop.run();
}

LossTotals accumulate_losses(const ClosedLoopTrace& trace) {
  LossTotals out;
  out.partial = !trace.complete;
  for (const auto& t : trace.tasks) {
    if (t.start) out.delay += evaluate_loss(t.delay_loss, *t.start - t.request_time).value;
    for (const auto& s : t.samples)
      out.curtailment += s.weight * evaluate_loss(t.curtailment_loss, t.profile(s.tau) - s.u).value;
  }
  out.total = out.delay + out.curtailment;
  return out;
}

VerifyReport verify_trace(const ClosedLoopTrace& trace, const Scenario& sc, double tol, const InterpOptions& interp) {
  VerifyReport rep;
  auto add = [&](ViolationKind k, std::string where, double amount) {
    rep.violations.push_back({k, std::move(where), amount});
  };
  auto at = [](double t) {
    std::ostringstream os;
    os << "t=" << t;
    return os.str();
  };
  const auto& B = sc.battery;
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    const auto& r = trace.rows[k];
    const double excess = r.load() - sc.p_min.at(r.time) - r.p_batt;
    if (excess > tol) add(ViolationKind::bus, at(r.time), excess);
    if (r.energy < -tol) add(ViolationKind::energy, at(r.time), -r.energy);
    if (r.energy > B.e_max + tol) add(ViolationKind::energy, at(r.time), r.energy - B.e_max);
    if (r.p_batt < B.p_lo - tol) add(ViolationKind::battery_power, at(r.time), B.p_lo - r.p_batt);
    if (r.p_batt > B.p_hi + tol) add(ViolationKind::battery_power, at(r.time), r.p_batt - B.p_hi);
    const bool last = k + 1 == trace.rows.size();
    const double t_next = last ? trace.end_time : trace.rows[k + 1].time;
    const double e_next = last ? trace.final_energy : trace.rows[k + 1].energy;
    if (!last || trace.end_time > r.time) {
      const double mismatch = std::abs(e_next - (r.energy - r.p_batt * (t_next - r.time)));
      if (mismatch > tol) add(ViolationKind::energy_balance, at(r.time), mismatch);
    }
  }
  if (trace.final_energy < -tol || trace.final_energy > B.e_max + tol)
    add(ViolationKind::energy, "end", std::max(-trace.final_energy, trace.final_energy - B.e_max));

  std::map<TaskId, const TaskRecord*> by_id;
  for (const auto& t : trace.tasks) by_id[t.id] = &t;
  for (const auto& t : trace.tasks) {
    if (!t.start) {
      if (trace.complete) add(ViolationKind::unfinished, t.id, t.duration);
      continue;
    }
    double tr = t.request_time;
    if (t.predecessor) {
      auto it = by_id.find(*t.predecessor);
      if (it == by_id.end() || !it->second->start) {
        add(ViolationKind::precedence, t.id + " started before its predecessor", t.duration);
        continue;
      }
      tr = *it->second->start + it->second->duration;
      if (*t.start < tr - tol) add(ViolationKind::precedence, t.id, tr - *t.start);
    }
    const double d = *t.start - tr;
    if (d < -tol) add(ViolationKind::delay, t.id, -d);
    if (d > t.delay_bound + tol) add(ViolationKind::delay, t.id, d - t.delay_bound);
    for (const auto& s : t.samples) {
      const double x = t.profile(s.tau) - s.u;
      if (x < -tol) add(ViolationKind::curtailment, t.id + " " + at(s.time), -x);
      if (x > t.curtailment_bound(s.tau) + tol)
        add(ViolationKind::curtailment, t.id + " " + at(s.time), x - t.curtailment_bound(s.tau));
    }
  }

  // Informational dense check between global nodes.
  if (!trace.rows.empty()) {
    std::vector<std::function<double(double)>> loads;
    for (const auto& t : trace.tasks) {
      if (!t.start || t.samples.empty()) continue;
      if (trace.controller == ControllerKind::miqp) {
        const auto* rec = &t;
        const double ts = trace.ts;
        loads.push_back([rec, ts](double time) {
          for (const auto& s : rec->samples)
            if (time >= s.time && time < s.time + ts) return s.u;
          return 0.0;
        });
      } else {
        std::vector<double> offs, u;
        for (const auto& s : t.samples) {
          offs.push_back(s.tau);
          u.push_back(s.u);
        }
        try {
          auto f = std::make_shared<Interpolant>(Interpolant::fit(interp, LocalGridTemplate::make(offs), u));
          const double start = *t.start;
          loads.push_back([f, start](double time) { return f->eval(start, time); });
        } catch (const Error&) {
          // partial sample sets of unfinished tasks are skipped
        }
      }
    }
    std::size_t k = 0;
    for (double time = trace.rows.front().time; time < trace.end_time; time += 1.0 / 60.0) {
      while (k + 1 < trace.rows.size() && trace.rows[k + 1].time <= time) ++k;
      double load = 0.0;
      for (const auto& f : loads) load += f(time);
      rep.dense_bus_excess = std::max(rep.dense_bus_excess, load - sc.p_min.at(time) - trace.rows[k].p_batt);
    }
  }
  return rep;
}

}  // namespace loadshift
