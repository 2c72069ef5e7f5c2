// Serial vs OpenMP timings of the parallel kernels, with a bitwise agreement check.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "loadshift/commands.hpp"
#include "loadshift/miqp.hpp"
#include "loadshift/solver_nlp.hpp"
#include "loadshift/transcribe.hpp"

using namespace loadshift;

namespace {

std::string scenario(const char* file) { return std::string(LOADSHIFT_SCENARIO_DIR) + "/" + file; }

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-28s serial %10.4f ms  parallel %10.4f ms  speedup %5.2f  %s\n", name, 1e3 * serial, 1e3 * parallel,
              serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
  const auto bench = parse_scenario(scenario("benchmark_2loads.json"));
  const auto study = parse_scenario(scenario("case_study.json"));

  {
    NlpOptions opt;
    opt.interp.method = InterpMethod::rbf;
    auto [layout, nlp] = build_nlp(initial_state(study), opt);
    const auto z = initial_guess(nlp, GuessStrategy::random, 1);
    Eigen::VectorXd g1, g2;
    Eigen::MatrixXd j1, j2;
    const double s = best_of(20, [&] { nlp.constraints(z, g1, &j1, Execution::serial); });
    const double p = best_of(20, [&] { nlp.constraints(z, g2, &j2, Execution::parallel); });
    report("constraint rows + jacobian", s, p, g1 == g2 && j1 == j2);
  }
  {
    NlpOptions opt;
    opt.interp.method = InterpMethod::rbf;
    auto [layout, nlp] = build_nlp(initial_state(bench), opt);
    const auto starts = multistart_guesses(nlp, 8, 0);
    SolverOptions ser, par;
    par.execution = Execution::parallel;
    MultistartResult a, b;
    const double s = best_of(3, [&] { a = solve_multistart(nlp, starts, ser); });
    const double p = best_of(3, [&] { b = solve_multistart(nlp, starts, par); });
    report("multistart (8 starts)", s, p, a.z == b.z);
  }
  {
    auto st = initial_state(bench);
    st.tasks.resize(2);  // the pair requested at t = 0; all five exceed the enumeration limit
    const auto inst = build_miqp(st, 0.05);
    MiqpSolution a, b;
    const double s = best_of(3, [&] { a = enumerate_oracle(inst, Execution::serial); });
    const double p = best_of(3, [&] { b = enumerate_oracle(inst, Execution::parallel); });
    report("enumeration oracle", s, p, a.steps == b.steps && a.objective == b.objective);
  }
  {
    std::vector<CompareRow> a, b;
    const double s = best_of(1, [&] { a = compare(bench, {0.1}, 2, 0, Execution::serial); });
    const double p = best_of(1, [&] { b = compare(bench, {0.1}, 2, 0, Execution::parallel); });
    bool same = a.size() == b.size();
    for (std::size_t k = 0; same && k < a.size(); ++k) same = a[k].total_loss == b[k].total_loss;
    report("compare cells (2 runs)", s, p, same);
  }
}
