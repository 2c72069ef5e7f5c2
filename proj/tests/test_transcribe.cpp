#include "doctest.h"

#include <random>

#include "loadshift/commands.hpp"
#include "loadshift/errors.hpp"
#include "loadshift/transcribe.hpp"
#include "support.hpp"

using namespace loadshift;

namespace {

ScenarioState one_task_state(double level = 2.0, double duration = 1.0, double curtailment = 0.5) {
  auto j = testing::base_scenario(5.0);
  testing::SubtaskArgs a;
  a.breakpoints = {0.0, duration};
  a.levels = {level};
  a.curtailment = curtailment;
  testing::add_appliance(j, "a", {testing::subtask(a)});
  testing::add_request(j, "a", 0.0);
  return initial_state(testing::load(j));
}

NlpOptions linear() {
  NlpOptions o;
  o.interp.method = InterpMethod::piecewise_linear;
  return o;
}

Eigen::VectorXd nominal_point(const NlpProblem& nlp) {
  // u = u-bar, t_s at the earliest admissible start, battery idle
  Eigen::VectorXd z = nlp.upper();
  const auto& L = nlp.layout();
  for (std::size_t i = 0; i < L.start_slot.size(); ++i)
    if (L.start_slot[i]) z[static_cast<Eigen::Index>(*L.start_slot[i])] = nlp.lower()[static_cast<Eigen::Index>(*L.start_slot[i])];
  for (std::size_t k = 0; k < L.battery_count; ++k) z[static_cast<Eigen::Index>(L.battery_offset + k)] = 0.0;
  return z;
}

}  // namespace

TEST_CASE("layout of one free task") {
  auto [layout, nlp] = build_nlp(one_task_state(), linear());
  // horizon 0 + 1 (delay) + 1 (duration) + ramp 0.005 -> 20 full intervals and a sliver
  CHECK(layout.battery_count == 21);
  CHECK(layout.start_count() == 1);
  CHECK(layout.sample_count() == 6);
  CHECK(layout.dimension == 1 + 21 + 6);
  CHECK(nlp.grid().end() == doctest::Approx(2.005));
}

TEST_CASE("benchmark instant layout") {
  const auto sc = parse_scenario(testing::scenario_path("benchmark_2loads.json"));
  auto st = initial_state(sc);
  // keep the two loads requested at t = 0
  std::vector<TaskStatus> first;
  for (auto& s : st.tasks)
    if (*s.task.request_time == 0.0) first.push_back(s);
  REQUIRE(first.size() == 2);
  st.tasks = first;
  auto opt = linear();
  opt.horizon_end = 8.0;
  auto [layout, nlp] = build_nlp(st, opt);
  // 2 starts, 80 global intervals, load1 2.0 h / 0.2 -> 11 nodes, load2 1.6 h / 0.2 -> 9 nodes
  CHECK(layout.start_count() == 2);
  CHECK(layout.battery_count == 80);
  CHECK(layout.sample_count() == 20);
  CHECK(layout.dimension == 102);
  // rows: 80 bus + 2 * 81 energy
  CHECK(nlp.constraint_count() == 80 + 2 * 81);
}

TEST_CASE("running task keeps only its future samples") {
  auto st = one_task_state(2.0, 1.0);  // 6 local nodes
  st.t0 = 0.5;
  st.tasks[0].fixed_start = 0.0;
  st.tasks[0].frozen_samples = {2.0, 1.9, 1.8};
  auto [layout, nlp] = build_nlp(st, linear());
  CHECK(layout.start_count() == 0);
  CHECK(layout.sample_count() == 3);
  const auto plan = extract_plan(nlp, nominal_point(nlp));
  REQUIRE(plan.tasks.size() == 1);
  CHECK(plan.tasks[0].start == 0.0);
  CHECK(plan.tasks[0].start_fixed);
  CHECK(std::vector<double>(plan.tasks[0].samples.begin(), plan.tasks[0].samples.begin() + 3) ==
        std::vector<double>{2.0, 1.9, 1.8});
}

TEST_CASE("row counts with chains" * doctest::test_suite("properties")) {
  const auto sc = parse_scenario(testing::scenario_path("case_study.json"));
  auto [layout, nlp] = build_nlp(initial_state(sc), linear());
  const std::size_t ng = nlp.grid().interval_count();
  CHECK(nlp.constraint_count() == ng + 2 * (ng + 1) + 2);  // one wash -> dry link
  std::size_t bus = 0, chain = 0;
  for (const auto& r : nlp.rows()) {
    bus += r.kind == RowKind::bus;
    chain += r.kind == RowKind::chain_lower || r.kind == RowKind::chain_upper;
  }
  CHECK(bus == ng);
  CHECK(chain == 2);
}

TEST_CASE("objective values") {
  auto [layout, nlp] = build_nlp(one_task_state(2.0, 2.0, 0.5), linear());
  Eigen::VectorXd z = nominal_point(nlp);
  CHECK(nlp.objective(z, nullptr) == 0.0);
  // uniform 0.5 kW curtailment over 2 h, quadratic unit weight: 0.5^2 * 2
  for (const auto& s : layout.sample_slot[0]) z[static_cast<Eigen::Index>(*s)] -= 0.5;
  CHECK(nlp.objective(z, nullptr) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("bus row values") {
  auto j = testing::base_scenario(3.0);
  testing::SubtaskArgs a;
  testing::add_appliance(j, "a", {testing::subtask(a)});
  testing::add_appliance(j, "b", {testing::subtask(a)});
  testing::add_request(j, "a", 0.0);
  testing::add_request(j, "b", 0.0);
  auto st = initial_state(testing::load(j));
  for (auto& s : st.tasks) s.fixed_start = 0.0;
  NlpOptions opt = linear();
  opt.horizon_end = 3.0;
  auto [layout, nlp] = build_nlp(st, opt);
  Eigen::VectorXd z = nominal_point(nlp);
  for (std::size_t k = 0; k < layout.battery_count; ++k) z[static_cast<Eigen::Index>(layout.battery_offset + k)] = 0.5;
  Eigen::VectorXd g;
  nlp.constraints(z, g, nullptr);
  // node 5 (t = 0.5): 2 + 2 - 3 - 0.5
  CHECK(g[5] == doctest::Approx(0.5).epsilon(1e-14));
  // node 20 (t = 2.0): nothing running
  CHECK(g[20] == doctest::Approx(-3.5).epsilon(1e-14));
}

TEST_CASE("pack and extract round trip") {
  const auto sc = parse_scenario(testing::scenario_path("case_study.json"));
  auto [layout, nlp] = build_nlp(initial_state(sc), linear());
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd z(static_cast<Eigen::Index>(layout.dimension));
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = nlp.lower()[k] + u(rng) * (nlp.upper()[k] - nlp.lower()[k]);
  const auto plan = extract_plan(nlp, z);
  const auto back = pack_plan(nlp, plan, Eigen::VectorXd());
  CHECK(back == z);
  const auto again = extract_plan(nlp, back);
  for (std::size_t i = 0; i < plan.tasks.size(); ++i) {
    CHECK(plan.tasks[i].start == again.tasks[i].start);
    CHECK(plan.tasks[i].samples == again.tasks[i].samples);
    CHECK(plan.tasks[i].node_times == again.tasks[i].node_times);
  }
  CHECK(plan.battery_power == again.battery_power);
}

TEST_CASE("analytic derivatives match finite differences" * doctest::test_suite("properties")) {
  for (const char* file : {"case_study.json", "benchmark_2loads.json"}) {
    auto sc = parse_scenario(testing::scenario_path(file));
    const auto rep = check_gradients(sc, 20, 1);
    INFO(file << " worst " << rep.worst_error);
    CHECK(rep.ok());
    CHECK(rep.points == 20);
    CHECK(rep.entries > 1000);
  }
}

TEST_CASE("serial and parallel constraint evaluation agree") {
  const auto sc = parse_scenario(testing::scenario_path("benchmark_2loads.json"));
  NlpOptions opt;
  opt.interp.method = InterpMethod::rbf;
  auto [layout, nlp] = build_nlp(initial_state(sc), opt);
  const auto z = initial_guess(nlp, GuessStrategy::random, 3);
  Eigen::VectorXd g1, g2;
  Eigen::MatrixXd j1, j2;
  nlp.constraints(z, g1, &j1, Execution::serial);
  nlp.constraints(z, g2, &j2, Execution::parallel);
  CHECK(g1 == g2);
  CHECK(j1 == j2);
}

TEST_CASE("feasible points pass an independent node check" * doctest::test_suite("properties")) {
  const auto sc = parse_scenario(testing::scenario_path("case_study.json"));
  const auto st = initial_state(sc);
  auto [layout, nlp] = build_nlp(st, linear());
  const auto res = solve_multistart(nlp, multistart_guesses(nlp, 3, 0));
  REQUIRE(nlp.max_violation(res.z) <= 1e-6);

  // Re-evaluate from the plan alone with freshly fitted interpolants.
  const auto plan = extract_plan(nlp, res.z);
  const auto nodes = nlp.grid().nodes();
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    double load = 0.0;
    for (std::size_t i = 0; i < plan.tasks.size(); ++i) {
      const auto f = Interpolant::fit(linear().interp, st.tasks[i].task.local_grid, plan.tasks[i].samples);
      load += f.eval(plan.tasks[i].start, nodes[k]);
    }
    CHECK(load <= st.p_min.at(nodes[k]) + plan.battery_power[k] + 1e-6);
  }
  const auto e = propagate(st.energy, plan.battery_power, nlp.grid());
  CHECK(check_bounds(e, plan.battery_power, st.battery, 1e-6).empty());
  // precedence: dry no earlier than the end of wash
  const auto* wash = plan.find("washing_machine#1/wash");
  const auto* dry = plan.find("washing_machine#1/dry");
  REQUIRE((wash && dry));
  CHECK(dry->start >= wash->start + 1.5 - 1e-6);
}

TEST_CASE("objective is monotone in the start beyond the deadband" * doctest::test_suite("properties")) {
  auto st = one_task_state(2.0, 1.0, 0.5);
  auto [layout, nlp] = build_nlp(st, linear());
  Eigen::VectorXd z = nominal_point(nlp);
  const auto slot = static_cast<Eigen::Index>(*layout.start_slot[0]);
  double prev = -1.0;
  for (double ts = 0.1; ts <= 1.0 + 1e-12; ts += 0.05) {
    z[slot] = ts;
    const double f = nlp.objective(z, nullptr);
    CHECK(f >= prev);
    prev = f;
  }
}

TEST_CASE("infeasible start windows are reported") {
  auto st = one_task_state();
  st.t0 = 3.0;  // past the latest start t_r + 1
  CHECK_THROWS_AS(build_nlp(st, linear()), Error);
}
