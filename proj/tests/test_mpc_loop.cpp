#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <map>

#include "loadshift/commands.hpp"
#include "loadshift/errors.hpp"
#include "loadshift/mpc_loop.hpp"
#include "support.hpp"

using namespace loadshift;

namespace {

Scenario benchmark_first_pair() {
  std::ifstream in(testing::scenario_path("benchmark_2loads.json"));
  auto j = nlohmann::json::parse(in);
  j["requests"] = nlohmann::json::array();
  testing::add_request(j, "load1", 0.0);
  testing::add_request(j, "load2", 0.0);
  return testing::load(j);
}

LoopOptions options_for(const Scenario& sc, ControllerKind kind, double ts = 0.1) {
  auto o = loop_options(sc);
  o.controller = kind;
  o.ts = ts;
  return o;
}

TaskRecord record(double request, double start, double duration, double level) {
  TaskRecord r;
  r.id = "a#1/run";
  r.request_time = request;
  r.start = start;
  r.duration = duration;
  r.delay_bound = 1.0;
  r.profile = StepFunction::constant(duration, level);
  r.curtailment_bound = StepFunction::constant(duration, std::min(level, 0.5));
  r.delay_loss = LossSpec::quadratic_deadband(10, 0.1);
  r.curtailment_loss = LossSpec::quadratic(1.0);
  r.finished = true;
  return r;
}

void add_samples(TaskRecord& r, double curtailment, int n) {
  // trapezoid weights over n + 1 uniform nodes
  const double h = r.duration / n;
  for (int j = 0; j <= n; ++j) {
    const double tau = j * h;
    r.samples.push_back({*r.start + tau, tau, r.profile(tau) - curtailment, (j == 0 || j == n) ? h / 2 : h});
  }
}

}  // namespace

TEST_CASE("loss accumulation") {
  ClosedLoopTrace tr;
  tr.complete = true;
  auto a = record(0.0, 0.0, 2.0, 2.0);
  add_samples(a, 0.0, 10);
  tr.tasks.push_back(a);
  auto z = accumulate_losses(tr);
  CHECK(z.delay == 0.0);
  CHECK(z.curtailment == 0.0);
  CHECK(z.total == 0.0);

  tr.tasks[0] = record(0.0, 0.6, 2.0, 2.0);
  add_samples(tr.tasks[0], 0.0, 10);
  CHECK(accumulate_losses(tr).delay == doctest::Approx(2.5).epsilon(1e-14));

  tr.tasks[0] = record(0.0, 0.0, 2.0, 2.0);
  add_samples(tr.tasks[0], 0.5, 10);
  CHECK(accumulate_losses(tr).curtailment == doctest::Approx(0.5).epsilon(1e-12));
  tr.complete = false;
  CHECK(accumulate_losses(tr).partial);
}

TEST_CASE("abundant power: start on request, no loss") {
  auto j = testing::base_scenario(10.0);
  testing::add_appliance(j, "a", {testing::subtask({})});
  testing::add_request(j, "a", 0.3);
  const auto sc = testing::load(j);
  for (auto kind : {ControllerKind::continuous, ControllerKind::miqp}) {
    const auto res = simulate(sc, options_for(sc, kind));
    CHECK(res.ok());
    REQUIRE(res.trace.tasks.size() == 1);
    CHECK(*res.trace.tasks[0].start <= 0.3 + 0.1 + 1e-9);
    CHECK(*res.trace.tasks[0].start >= 0.3 - 1e-12);
    CHECK(std::abs(res.losses.total) < 1e-6);
  }
}

TEST_CASE("simultaneous conflict shifts exactly one load") {
  const auto sc = benchmark_first_pair();
  const auto res = simulate(sc, options_for(sc, ControllerKind::continuous));
  CHECK(res.ok());
  REQUIRE(res.trace.tasks.size() == 2);
  int shifted = 0;
  for (const auto& t : res.trace.tasks) {
    CHECK(t.finished);
    if (*t.start - t.request_time > 1e-3) ++shifted;
  }
  CHECK(shifted == 1);
}

TEST_CASE("commitment irreversibility, replan descent and trace validity" * doctest::test_suite("properties")) {
  const auto sc = parse_scenario(testing::scenario_path("benchmark_2loads.json"));
  for (auto kind : {ControllerKind::continuous, ControllerKind::miqp}) {
    auto opt = options_for(sc, kind);
    std::map<TaskId, double> committed;
    std::map<TaskId, std::vector<double>> frozen;
    int checked = 0, descents = 0;
    opt.on_replan = [&](const ReplanEvent& ev) {
      for (const auto& s : ev.state->tasks) {
        const auto& id = s.task.id;
        if (committed.count(id)) {
          REQUIRE(s.fixed_start.has_value());
          CHECK(*s.fixed_start == committed[id]);
          ++checked;
        }
        if (s.fixed_start) committed[id] = *s.fixed_start;
        // frozen prefixes only grow
        const auto& prev = frozen[id];
        REQUIRE(s.frozen_samples.size() >= prev.size());
        CHECK(std::equal(prev.begin(), prev.end(), s.frozen_samples.begin()));
        frozen[id] = s.frozen_samples;
      }
      if (kind == ControllerKind::continuous && !ev.arrivals && ev.warm_objective) {
        CHECK(ev.planned_objective <= *ev.warm_objective + 1e-6);
        ++descents;
      }
    };
    const auto res = simulate(sc, opt);
    CHECK(res.ok());
    CHECK(res.verify.violations.empty());
    CHECK(checked > 10);
    if (kind == ControllerKind::continuous) CHECK(descents > 5);
  }
}

TEST_CASE("causality: later requests do not change earlier inputs" * doctest::test_suite("properties")) {
  const auto full = parse_scenario(testing::scenario_path("benchmark_2loads.json"));
  Scenario cut = full;
  const double horizon = 3.0;  // drop the requests from t = 3 on
  cut.requests.erase(std::remove_if(cut.requests.begin(), cut.requests.end(),
                                    [&](const RequestEvent& r) { return r.time >= horizon; }),
                     cut.requests.end());
  REQUIRE(cut.requests.size() < full.requests.size());
  for (auto kind : {ControllerKind::continuous, ControllerKind::miqp}) {
    const auto a = run(full, options_for(full, kind));
    const auto b = run(cut, options_for(cut, kind));
    std::size_t compared = 0;
    for (std::size_t k = 0; k < std::min(a.rows.size(), b.rows.size()); ++k) {
      if (a.rows[k].time >= horizon - 1e-9) break;
      CHECK(a.rows[k].time == b.rows[k].time);
      CHECK(a.rows[k].appliance_power == b.rows[k].appliance_power);
      CHECK(a.rows[k].p_batt == b.rows[k].p_batt);
      ++compared;
    }
    // the cut run ends once its tasks finish; every one of its rows is compared
    const auto cut_rows = static_cast<std::size_t>(std::count_if(
        b.rows.begin(), b.rows.end(), [&](const TraceRow& r) { return r.time < horizon - 1e-9; }));
    CHECK(compared == cut_rows);
    CHECK(compared >= 20);
  }
}

TEST_CASE("verifier flags tampered traces") {
  const auto sc = benchmark_first_pair();
  const auto res = simulate(sc, options_for(sc, ControllerKind::miqp));
  REQUIRE(res.ok());
  auto t = res.trace;
  t.rows[3].p_batt = 0.5;  // beyond the rate limit, and breaks the energy balance
  const auto v = verify_trace(t, sc);
  bool rate = false, balance = false;
  for (const auto& x : v.violations) {
    rate |= x.kind == ViolationKind::battery_power;
    balance |= x.kind == ViolationKind::energy_balance;
  }
  CHECK(rate);
  CHECK(balance);

  auto late = res.trace;
  late.tasks[0].start = late.tasks[0].request_time + 1.5;
  bool delay = false;
  for (const auto& x : verify_trace(late, sc).violations) delay |= x.kind == ViolationKind::delay;
  CHECK(delay);
}

TEST_CASE("no conflict means no loss") {
  // Sum of peaks 2 + 1.5 + 1 = 4.5 <= P_min everywhere.
  auto j = testing::base_scenario(4.5);
  testing::SubtaskArgs a, b, c;
  a.levels = {2.0};
  b.breakpoints = {0.0, 0.4, 1.2};
  b.levels = {1.5, 1.0};
  c.levels = {1.0};
  c.breakpoints = {0.0, 0.6};
  testing::add_appliance(j, "a", {testing::subtask(a)});
  testing::add_appliance(j, "b", {testing::subtask(b)});
  testing::add_appliance(j, "c", {testing::subtask(c)});
  testing::add_request(j, "a", 0.0);
  testing::add_request(j, "b", 0.2);
  testing::add_request(j, "c", 0.45);
  const auto sc = testing::load(j);
  for (auto kind : {ControllerKind::continuous, ControllerKind::miqp}) {
    const auto res = simulate(sc, options_for(sc, kind));
    CHECK(res.ok());
    CHECK(std::abs(res.losses.total) < 1e-6);
  }
}

TEST_CASE("loop option validation") {
  const auto sc = benchmark_first_pair();
  auto o = options_for(sc, ControllerKind::miqp, 0.0);
  CHECK_THROWS_AS(run(sc, o), Error);
}
