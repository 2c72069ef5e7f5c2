#include "loadshift/commands.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "loadshift/errors.hpp"
#include "loadshift/transcribe.hpp"

namespace loadshift {

SimulateResult simulate(const Scenario& scenario, const LoopOptions& options) {
  SimulateResult r;
  r.trace = run(scenario, options);
  r.losses = accumulate_losses(r.trace);
  r.verify = verify_trace(r.trace, scenario, kVerifyTolerance, options.interp);
  double sum = 0.0;
  for (double s : r.trace.solve_times) sum += s;
  r.solve_time_mean = r.trace.solve_times.empty() ? 0.0 : sum / static_cast<double>(r.trace.solve_times.size());
  return r;
}

void write_trace_csv(const ClosedLoopTrace& trace, std::ostream& out) {
  out << "time_h";
  for (const auto& a : trace.appliances) out << ',' << a;
  out << ",p_batt_kw,e_batt_kwh,p_min_kw,bus_headroom_kw\n";
  out << std::setprecision(10);
  for (const auto& r : trace.rows) {
    out << r.time;
    for (double p : r.appliance_power) out << ',' << p;
    out << ',' << r.p_batt << ',' << r.energy << ',' << r.p_min << ',' << r.headroom() << '\n';
  }
}

std::string summary_json(const Scenario& scenario, const LoopOptions& options, const SimulateResult& result) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kSummarySchemaVersion;
  j["scenario"] = scenario.name;
  j["controller"] = to_string(options.controller);
  if (options.controller == ControllerKind::miqp) j["ts_h"] = options.ts;
  j["seed"] = options.solver.seed;
  j["delay_loss"] = result.losses.delay;
  j["curtailment_loss"] = result.losses.curtailment;
  j["total_loss"] = result.losses.total;
  j["partial"] = result.losses.partial;
  j["solve_time_mean"] = result.solve_time_mean;
  j["controller_calls"] = result.trace.solve_times.size();
  j["complete"] = result.trace.complete;
  j["failure"] = result.trace.failure ? json(*result.trace.failure) : json(nullptr);
  j["warnings"] = result.trace.warnings;
  j["dense_bus_excess_kw"] = result.verify.dense_bus_excess;
  json v = json::array();
  for (const auto& x : result.verify.violations)
    v.push_back({{"kind", to_string(x.kind)}, {"where", x.where}, {"amount", x.amount}});
  j["violations"] = v;
  json tasks = json::array();
  for (const auto& t : result.trace.tasks) {
    json tj{{"id", t.id}, {"request_time_h", t.request_time}};
    if (t.start) {
      tj["start_h"] = *t.start;
      tj["delay_h"] = *t.start - t.request_time;
    }
    tasks.push_back(tj);
  }
  j["tasks"] = tasks;
  return j.dump(2) + "\n";
}

std::vector<CompareRow> compare(const Scenario& scenario, const std::vector<double>& ts_list, std::size_t runs,
                                std::uint64_t seed, Execution exec) {
  for (double ts : ts_list)
    if (!(ts > 0.0)) throw Error(ErrorCode::validation, "sampling times must be positive");
  if (runs == 0) throw Error(ErrorCode::validation, "at least one run per method is required");
  std::vector<CompareRow> rows;
  rows.push_back({"continuous", 0.0});
  for (double ts : ts_list) {
    std::ostringstream name;
    name << "miqp(T_s=" << ts << ")";
    rows.push_back({name.str(), ts});
  }
  struct Cell {
    bool ok = false;
    LossTotals losses;
    double solve_time = 0.0;
  };
  std::vector<Cell> cells(rows.size() * runs);
  // Cells are independent closed loops; each is serial inside.
  for_each_index(exec, cells.size(), [&](std::size_t c) {
    const std::size_t m = c / runs, r = c % runs;
    LoopOptions opt = loop_options(scenario);
    opt.controller = rows[m].ts > 0.0 ? ControllerKind::miqp : ControllerKind::continuous;
    if (rows[m].ts > 0.0) opt.ts = rows[m].ts;
    opt.solver.seed = seed + r;
    try {
      const auto res = simulate(scenario, opt);
      cells[c] = {res.ok(), res.losses, res.solve_time_mean};
    } catch (const Error&) {
      cells[c] = {};
    }
  });
  for (std::size_t m = 0; m < rows.size(); ++m) {
    auto& row = rows[m];
    row.runs = runs;
    std::size_t ok = 0;
    for (std::size_t r = 0; r < runs; ++r) {
      const auto& cell = cells[m * runs + r];
      if (!cell.ok) {
        ++row.failures;
        continue;
      }
      ++ok;
      row.delay_loss += cell.losses.delay;
      row.curtailment_loss += cell.losses.curtailment;
      row.total_loss += cell.losses.total;
      row.solve_time_mean += cell.solve_time;
    }
    if (ok > 0) {
      const double n = static_cast<double>(ok);
      row.delay_loss /= n;
      row.curtailment_loss /= n;
      row.total_loss /= n;
      row.solve_time_mean /= n;
    }
  }
  return rows;
}

void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out) {
  out << "method,ts_h,runs,failures,delay_loss,curtailment_loss,total_loss,solve_time_mean_s\n";
  out << std::setprecision(10);
  for (const auto& r : rows)
    out << r.method << ',' << r.ts << ',' << r.runs << ',' << r.failures << ',' << r.delay_loss << ','
        << r.curtailment_loss << ',' << r.total_loss << ',' << r.solve_time_mean << '\n';
}

void write_compare_table(const std::vector<CompareRow>& rows, std::ostream& out) {
  out << std::left << std::setw(20) << "method" << std::right << std::setw(12) << "delay" << std::setw(14)
      << "curtailment" << std::setw(12) << "total" << std::setw(14) << "solve [s]" << std::setw(10) << "failed"
      << '\n';
  out << std::fixed;
  for (const auto& r : rows)
    out << std::left << std::setw(20) << r.method << std::right << std::setprecision(4) << std::setw(12)
        << r.delay_loss << std::setw(14) << r.curtailment_loss << std::setw(12) << r.total_loss
        << std::setprecision(4) << std::setw(14) << r.solve_time_mean << std::setw(10) << r.failures << '\n';
  out.unsetf(std::ios::fixed);
}

ScenarioState initial_state(const Scenario& sc) {
  sc.validate();
  if (sc.requests.empty()) throw Error(ErrorCode::validation, "scenario has no requests");
  ScenarioState st;
  st.battery = sc.battery;
  st.energy = sc.initial_energy;
  st.p_min = sc.p_min;
  st.global_resolution = sc.global_resolution;
  st.t0 = sc.requests.front().time;
  std::map<std::string, std::size_t> occ;
  for (const auto& r : sc.requests) st.t0 = std::min(st.t0, r.time);
  for (const auto& r : sc.requests)
    for (auto& task : sc.instantiate(r.appliance, ++occ[r.appliance], r.time)) st.tasks.push_back({task, {}, {}});
  return st;
}

GradientCheckReport check_gradients(const Scenario& sc, std::size_t points, std::uint64_t seed, double h, double tol) {
  GradientCheckReport rep;
  const auto state = initial_state(sc);
  NlpOptions no;
  no.interp.method = sc.controller.interpolation;
  no.interp.sigma = sc.controller.rbf_sigma;
  no.interp.ramp_width = sc.controller.ramp_width;
  auto [layout, nlp] = build_nlp(state, no);
  const auto n = static_cast<Eigen::Index>(nlp.dimension());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto note = [&](std::string msg, double err) {
    ++rep.failures;
    rep.worst_error = std::max(rep.worst_error, err);
    if (rep.messages.size() < 10) rep.messages.push_back(std::move(msg));
  };
  auto compare_entry = [&](double analytic, double numeric, const std::string& what) {
    ++rep.entries;
    const double err = relative_error(analytic, numeric);
    if (err >= tol) {
      std::ostringstream os;
      os << what << ": analytic " << analytic << " vs difference " << numeric << " (rel " << err << ")";
      note(os.str(), err);
    } else {
      rep.worst_error = std::max(rep.worst_error, err);
    }
  };

  // Interpolants: random (t_s, t) pairs over the extended support.
  for (std::size_t i = 0; i < nlp.tasks().size(); ++i) {
    const auto& d = nlp.tasks()[i];
    const auto& basis = *d.basis;
    for (std::size_t p = 0; p < points; ++p) {
      std::vector<double> u(basis.size());
      for (std::size_t j = 0; j < u.size(); ++j) u[j] = d.nominal[j] - unit(rng) * d.bound[j];
      const double ts = unit(rng);
      const double t = ts - basis.ramp_width() + unit(rng) * (basis.duration() + 2.0 * basis.ramp_width());
      if (basis.near_kink(ts, t, u, h)) {
        ++rep.kinks_skipped;
        continue;
      }
      double dts = 0.0;
      std::vector<double> du(u.size());
      basis.evaluate(ts, t, u, &dts, du);
      const double fd = (basis.evaluate(ts + h, t, u) - basis.evaluate(ts - h, t, u)) / (2.0 * h);
      compare_entry(dts, fd, "interpolant of '" + d.task.id + "' d/dt_s");
      for (std::size_t j = 0; j < u.size(); ++j) {
        auto up = u, dn = u;
        up[j] += h;
        dn[j] -= h;
        compare_entry(du[j], (basis.evaluate(ts, t, up) - basis.evaluate(ts, t, dn)) / (2.0 * h),
                      "interpolant of '" + d.task.id + "' d/du[" + std::to_string(j) + "]");
      }
    }
  }

  // Transcription: objective gradient and full constraint Jacobian.
  for (std::size_t p = 0; p < points; ++p) {
    Eigen::VectorXd z = initial_guess(nlp, GuessStrategy::random, seed * 7919 + p);
    for (std::size_t i = 0; i < layout.sample_slot.size(); ++i)
      for (const auto& s : layout.sample_slot[i])
        if (s) {
          const auto k = static_cast<Eigen::Index>(*s);
          z[k] = nlp.lower()[k] + unit(rng) * (nlp.upper()[k] - nlp.lower()[k]);
        }
    for (std::size_t k = 0; k < layout.battery_count; ++k) {
      const auto idx = static_cast<Eigen::Index>(layout.battery_offset + k);
      z[idx] = nlp.lower()[idx] + unit(rng) * (nlp.upper()[idx] - nlp.lower()[idx]);
    }
    ++rep.points;
    if (nlp.near_kink(z, h)) {
      ++rep.kinks_skipped;
      continue;
    }
    Eigen::VectorXd grad, g, gp, gm;
    Eigen::MatrixXd jac;
    nlp.objective(z, &grad);
    nlp.constraints(z, g, &jac);
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::VectorXd zp = z, zm = z;
      zp[k] += h;
      zm[k] -= h;
      compare_entry(grad[k], (nlp.objective(zp, nullptr) - nlp.objective(zm, nullptr)) / (2.0 * h),
                    "objective d/dz[" + std::to_string(k) + "]");
      nlp.constraints(zp, gp, nullptr);
      nlp.constraints(zm, gm, nullptr);
      for (Eigen::Index r = 0; r < g.size(); ++r)
        compare_entry(jac(r, k), (gp[r] - gm[r]) / (2.0 * h),
                      describe(nlp.rows()[static_cast<std::size_t>(r)]) + " d/dz[" + std::to_string(k) + "]");
    }
  }
  return rep;
}

}  // namespace loadshift
