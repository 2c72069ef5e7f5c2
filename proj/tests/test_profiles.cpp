#include "doctest.h"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "loadshift/errors.hpp"
#include "loadshift/profiles.hpp"
#include "loadshift/scenario.hpp"
#include "support.hpp"

using namespace loadshift;

TEST_CASE("step function values") {
  const auto f = StepFunction::make({0.0, 1.5}, {2.0});
  CHECK(f(0.7) == 2.0);
  CHECK(f(-0.1) == 0.0);
  CHECK(f(1.5) == 2.0);
  CHECK(f(1.5000001) == 0.0);

  const auto g = StepFunction::make({0.0, 1.0, 2.0}, {1.0, 3.0});
  CHECK(g(0.0) == 1.0);
  CHECK(g(1.0) == 3.0);  // right-open intervals
  CHECK(g(2.0) == 3.0);  // last one closed
}

TEST_CASE("step function rejects bad data") {
  CHECK_THROWS_AS(StepFunction::make({0.0, 1.0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(StepFunction::make({0.1, 1.0}, {1.0}), Error);
  CHECK_THROWS_AS(StepFunction::make({0.0, 1.0, 1.0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(StepFunction::make({0.0, 1.0}, {-1.0}), Error);
}

TEST_CASE("profile integral matches dense quadrature" * doctest::test_suite("properties")) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lvl(0.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    // Breakpoints on a 1/64 lattice so dense midpoint cells never straddle a jump.
    std::vector<double> bp{0.0};
    std::vector<double> lv;
    const int pieces = 1 + trial % 5;
    for (int i = 0; i < pieces; ++i) {
      bp.push_back(bp.back() + (1 + (trial * 7 + i * 3) % 11) / 64.0);
      lv.push_back(lvl(rng));
    }
    const auto f = StepFunction::make(bp, lv);
    const int cells = static_cast<int>(std::lround(f.duration() * 64.0)) * 8;
    const double h = f.duration() / cells;
    double dense = 0.0;
    for (int k = 0; k < cells; ++k) dense += f((k + 0.5) * h) * h;
    CHECK(std::abs(dense - f.integral()) < 1e-12);
  }
}

TEST_CASE("nominal power is zero outside the support" * doctest::test_suite("properties")) {
  const auto f = StepFunction::make({0.0, 0.4, 2.0}, {3.0, 2.0});
  for (double tau : {-5.0, -1e-9, 2.0 + 1e-9, 7.0}) CHECK(nominal_power(f, tau) == 0.0);
}

TEST_CASE("case-study wash profile at its local nodes") {
  std::ifstream in(testing::scenario_path("case_study.json"));
  const auto raw = nlohmann::json::parse(in);
  nlohmann::json wash;
  for (const auto& a : raw["appliances"])
    if (a["id"] == "washing_machine") wash = a["subtasks"][0];
  const auto bp = wash["profile"]["breakpoints_h"].get<std::vector<double>>();
  const auto lv = wash["profile"]["levels_kw"].get<std::vector<double>>();

  const auto sc = parse_scenario(testing::scenario_path("case_study.json"));
  const auto& spec = sc.find_appliance("washing_machine")->subtasks[0];
  for (double tau : spec.local_grid.offsets()) {
    // table lookup: the last breakpoint not after tau, the final interval closed
    std::size_t k = 0;
    while (k + 1 < lv.size() && bp[k + 1] <= tau) ++k;
    CHECK(spec.profile(tau) == lv[k]);
  }
}

TEST_CASE("loss values") {
  auto a = evaluate_loss(LossSpec::quadratic_deadband(10, 0.1), 0.1);
  CHECK(a.value == 0.0);
  CHECK(a.derivative == 0.0);
  auto b = evaluate_loss(LossSpec::quadratic_deadband(10, 0.1), 0.6);
  CHECK(b.value == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(b.derivative == doctest::Approx(10.0).epsilon(1e-14));
  auto c = evaluate_loss(LossSpec::weighted_abs(0.1), 0.0);
  CHECK(c.value == 0.0);
  CHECK(c.derivative == 0.1);
  CHECK_THROWS_AS(evaluate_loss(LossSpec::weighted_abs(0.1), -0.01), Error);
  CHECK_THROWS_AS(evaluate_loss(LossSpec::quadratic(1.0), NAN), Error);
}

TEST_CASE("loss derivatives match central differences" * doctest::test_suite("properties")) {
  const double h = 1e-6;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> xs(0.0, 3.0);
  const LossSpec specs[] = {LossSpec::quadratic_deadband(10, 0.1), LossSpec::quadratic(2.0),
                            LossSpec::weighted_abs(0.1)};
  for (const auto& s : specs) {
    for (int i = 0; i < 200; ++i) {
      const double x = xs(rng);
      if (std::abs(x - s.deadband) < 2 * h || x < 2 * h) continue;
      const double fd = (evaluate_loss(s, x + h).value - evaluate_loss(s, x - h).value) / (2 * h);
      const double an = evaluate_loss(s, x).derivative;
      CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0}) < 1e-6);
    }
  }
}

namespace {

Task make_task(const std::string& id, double duration, std::optional<std::string> pred) {
  Task t;
  t.id = id;
  t.profile = StepFunction::constant(duration, 1.0);
  t.local_grid = LocalGridTemplate::uniform(duration, 0.5);
  t.curtailment_bound = StepFunction::constant(duration, 0.0);
  t.predecessor = std::move(pred);
  if (!t.predecessor) t.request_time = 0.0;
  return t;
}

SchedulePlan plan_with(std::vector<std::pair<std::string, double>> starts) {
  SchedulePlan p;
  for (auto& [id, s] : starts) p.tasks.push_back({id, s});
  return p;
}

}  // namespace

TEST_CASE("chain request times") {
  std::vector<Task> tasks{make_task("wash", 1.5, std::nullopt), make_task("dry", 2.0, "wash")};
  CHECK(chain_request_time(tasks[1], tasks, plan_with({{"wash", 0.3}})) == doctest::Approx(1.8));
  CHECK(chain_request_time(tasks[0], tasks, plan_with({{"wash", 0.3}})) == 0.0);

  std::vector<Task> three{make_task("a", 2, std::nullopt), make_task("b", 3, "a"), make_task("c", 1, "b")};
  const auto plan = plan_with({{"a", 0}, {"b", 2}, {"c", 5}});
  CHECK(chain_request_time(three[1], three, plan) == 2.0);
  CHECK(chain_request_time(three[2], three, plan) == 5.0);
}

TEST_CASE("chain request time shifts with its predecessor" * doctest::test_suite("properties")) {
  std::vector<Task> tasks{make_task("a", 1.25, std::nullopt), make_task("b", 0.75, "a"),
                          make_task("c", 0.5, "b")};
  for (double delta : {0.125, 0.5, 1.0}) {
    // every downstream start follows its request time
    const auto base = plan_with({{"a", 0.25}, {"b", 1.5}, {"c", 2.25}});
    const auto moved = plan_with({{"a", 0.25 + delta}, {"b", 1.5 + delta}, {"c", 2.25 + delta}});
    CHECK(chain_request_time(tasks[1], tasks, moved) - chain_request_time(tasks[1], tasks, base) == delta);
    CHECK(chain_request_time(tasks[2], tasks, moved) - chain_request_time(tasks[2], tasks, base) == delta);
  }
}

TEST_CASE("chain validation") {
  std::vector<Task> cyc{make_task("a", 1, "b"), make_task("b", 1, "a")};
  CHECK_THROWS_AS(validate_chains(cyc), Error);
  std::vector<Task> dangling{make_task("a", 1, "zzz")};
  CHECK_THROWS_AS(validate_chains(dangling), Error);
  std::vector<Task> ok{make_task("a", 1, std::nullopt), make_task("b", 1, "a")};
  CHECK_NOTHROW(validate_chains(ok));
}

TEST_CASE("task validation rejects curtailment above nominal") {
  Task t = make_task("a", 1.0, std::nullopt);
  t.curtailment_bound = StepFunction::constant(1.0, 1.5);
  CHECK_THROWS_AS(t.validate(), Error);
}
