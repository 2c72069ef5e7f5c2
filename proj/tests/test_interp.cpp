#include "doctest.h"

#include <cmath>
#include <random>

#include "loadshift/errors.hpp"
#include "loadshift/interp.hpp"
#include "loadshift/scenario.hpp"
#include "support.hpp"

using namespace loadshift;

namespace {

InterpOptions pl() { return {InterpMethod::piecewise_linear, 0.0, kDefaultRampWidth}; }
InterpOptions rbf(double sigma) { return {InterpMethod::rbf, sigma, kDefaultRampWidth}; }

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); }

}  // namespace

TEST_CASE("piecewise linear hat midpoint") {
  const auto f = Interpolant::fit(pl(), LocalGridTemplate::make({0, 1, 2}), {0, 2, 0});
  CHECK(f.eval(3.0, 3.5) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("interpolation condition at the nodes" * doctest::test_suite("properties")) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> s(0.5, 4.0);
  const auto grid = LocalGridTemplate::make({0, 0.2, 0.5, 0.9, 1.0, 1.6, 2.0});
  for (auto opt : {pl(), rbf(0.3), rbf(0.0)}) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> y(grid.size());
      for (auto& v : y) v = s(rng);
      const auto f = Interpolant::fit(opt, grid, y);
      for (std::size_t j = 0; j < y.size(); ++j) CHECK(std::abs(f.eval(1.0, 1.0 + grid.offsets()[j]) - y[j]) < 1e-9);
    }
  }
}

TEST_CASE("rbf two-node closed form") {
  const double sigma = 0.3;
  const auto f = Interpolant::fit(rbf(sigma), LocalGridTemplate::make({0, 1}), {1, 1});
  // K = [[1, k], [k, 1]], alpha = 1 / (1 + k) for both nodes
  const double k = std::exp(-1.0 / (2 * sigma * sigma));
  const double kmid = std::exp(-0.25 / (2 * sigma * sigma));
  const double expected = 2 * kmid / (1 + k);
  CHECK(std::abs(f.eval(0.0, 0.5) - expected) < 1e-12);
  REQUIRE(f.coefficients().size() == 2);
  CHECK(std::abs(f.coefficients()[0] - 1 / (1 + k)) < 1e-12);
}

TEST_CASE("support ramps") {
  const auto grid = LocalGridTemplate::make({0, 0.5, 1.0});
  const double eps = kDefaultRampWidth;
  const auto flat = Interpolant::fit(pl(), grid, {2, 2, 2});
  CHECK(flat.eval(1.0, 1.0 - 2 * eps) == 0.0);
  CHECK(flat.eval(1.0, 1.0 - eps / 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(flat.eval(1.0, 2.0 + eps / 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(flat.eval(1.0, 2.0 + 2 * eps) == 0.0);
  const auto r = Interpolant::fit(rbf(0.3), grid, {2, 3, 2});
  CHECK(r.eval(0.0, -2 * eps) == 0.0);
  CHECK(r.eval(0.0, 1.0 + 2 * eps) == 0.0);
}

TEST_CASE("oven grid hat weights") {
  const auto sc = parse_scenario(testing::scenario_path("case_study.json"));
  const auto& bake = sc.find_appliance("oven")->subtasks[0];
  std::vector<double> y;
  for (double o : bake.local_grid.offsets()) y.push_back(bake.profile(o) - 0.05 * o);
  const auto f = Interpolant::fit(pl(), bake.local_grid, y);
  // offsets 0.5 and 0.995 are nodes 2 and 3
  const double theta = (0.75 - 0.5) / 0.495;
  const double expected = (1 - theta) * y[2] + theta * y[3];
  CHECK(std::abs(f.eval(0.4, 0.4 + 0.75) - expected) < 1e-12);
}

TEST_CASE("start-time derivatives") {
  const auto grid = LocalGridTemplate::make({0, 0.5, 1.0});
  const auto flat = Interpolant::fit(pl(), grid, {2, 2, 2});
  CHECK(flat.eval_grad(1.0, 1.3).d_start == 0.0);
  const auto ramp = Interpolant::fit(pl(), LocalGridTemplate::make({0, 1}), {0, 2});
  CHECK(ramp.eval_grad(1.0, 1.5).d_start == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("gradients match central differences" * doctest::test_suite("properties")) {
  const double h = 1e-6;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto grid = LocalGridTemplate::make({0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0});
  for (auto opt : {pl(), rbf(0.3), rbf(0.0)}) {
    const auto basis = InterpBasis::make(opt, grid);
    int compared = 0;
    for (int p = 0; p < 100; ++p) {
      std::vector<double> y(grid.size());
      for (auto& v : y) v = 3.0 + 1.5 * u(rng) - (opt.method == InterpMethod::rbf ? 0.0 : 3.0 * u(rng));
      const double ts = 4 * u(rng);
      const double t = ts - 2 * basis->ramp_width() + u(rng) * (basis->duration() + 4 * basis->ramp_width());
      if (basis->near_kink(ts, t, y, h)) continue;
      ++compared;
      double dts = 0;
      std::vector<double> dy(y.size());
      basis->evaluate(ts, t, y, &dts, dy);
      const double fd = (basis->evaluate(ts + h, t, y) - basis->evaluate(ts - h, t, y)) / (2 * h);
      CHECK(rel(dts, fd) < 1e-5);
      for (std::size_t j = 0; j < y.size(); ++j) {
        auto up = y, dn = y;
        up[j] += h;
        dn[j] -= h;
        CHECK(rel(dy[j], (basis->evaluate(ts, t, up) - basis->evaluate(ts, t, dn)) / (2 * h)) < 1e-5);
      }
    }
    CHECK(compared > 80);
  }
}

TEST_CASE("continuity in t and t_s" * doctest::test_suite("properties")) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto grid = LocalGridTemplate::make({0, 0.3, 0.5, 1.1, 1.5});
  const std::vector<double> y{1.0, 3.0, 0.5, 2.5, 2.0};
  const double delta = 1e-7;
  // Lipschitz bound: steepest hat segment or the support ramp
  double lip = 0.0;
  for (std::size_t j = 1; j < y.size(); ++j)
    lip = std::max(lip, std::abs(y[j] - y[j - 1]) / (grid.offsets()[j] - grid.offsets()[j - 1]));
  lip = std::max(lip, *std::max_element(y.begin(), y.end()) / kDefaultRampWidth);
  const auto f = Interpolant::fit(pl(), grid, y);
  for (int i = 0; i < 500; ++i) {
    const double ts = u(rng);
    const double t = ts - 0.01 + 1.52 * u(rng);
    CHECK(std::abs(f.eval(ts, t + delta) - f.eval(ts, t)) <= lip * delta * (1 + 1e-6) + 1e-12);
    CHECK(std::abs(f.eval(ts + delta, t) - f.eval(ts, t)) <= lip * delta * (1 + 1e-6) + 1e-12);
  }
}

TEST_CASE("translation equivariance" * doctest::test_suite("properties")) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto grid = LocalGridTemplate::make({0, 0.25, 0.5, 1.0, 1.5});
  const std::vector<double> y{1.0, 3.0, 0.5, 2.5, 2.0};
  const auto lin = Interpolant::fit(pl(), grid, y);
  const auto kern = Interpolant::fit(rbf(0.0), grid, y);
  auto dyadic = [&](double scale) { return std::ldexp(std::round(std::ldexp(scale * u(rng), 10)), -10); };
  for (int i = 0; i < 200; ++i) {
    const double ts = dyadic(2.0), t = ts + dyadic(1.5), a = dyadic(4.0);
    CHECK(lin.eval(ts + a, t + a) == lin.eval(ts, t));
    const double ts2 = 2.0 * u(rng), t2 = ts2 + 1.5 * u(rng), a2 = 4.0 * u(rng);
    CHECK(std::abs(kern.eval(ts2 + a2, t2 + a2) - kern.eval(ts2, t2)) < 1e-12);
  }
}

TEST_CASE("smooth clamp") {
  double d = 0;
  CHECK(smooth_clamp(0.5, &d) == 0.5);
  CHECK(d == 1.0);
  CHECK(smooth_clamp(-0.5, &d) == 0.0);
  CHECK(d == 0.0);
  // C1 at both blend edges
  const double s = kClampWidth;
  smooth_clamp(s - 1e-12, &d);
  CHECK(d == doctest::Approx(1.0));
  smooth_clamp(-s + 1e-12, &d);
  CHECK(d == doctest::Approx(0.0));
  CHECK(smooth_clamp(s - 1e-12) == doctest::Approx(s));
}

TEST_CASE("conditioning and sample errors") {
  const auto grid = LocalGridTemplate::make({0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::controller;
  };
  CHECK(code_of([&] { InterpBasis::make(rbf(5.0), grid); }) == ErrorCode::conditioning);
  CHECK(code_of([&] { InterpBasis::make(rbf(0.001), grid); }) == ErrorCode::conditioning);
  CHECK(code_of([&] { Interpolant::fit(pl(), grid, {1.0, 2.0}); }) == ErrorCode::validation);
  CHECK(code_of([&] { Interpolant::fit(pl(), LocalGridTemplate::make({0, 1}), {1.0, NAN}); }) ==
        ErrorCode::numerical_domain);
  CHECK(InterpBasis::make(rbf(0.0), grid)->sigma() == doctest::Approx(0.2));
}
