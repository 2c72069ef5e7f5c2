#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "loadshift/commands.hpp"
#include "loadshift/errors.hpp"

namespace fs = std::filesystem;
using namespace loadshift;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kValidation = 3 };

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::validation:
    case ErrorCode::schema:
    case ErrorCode::conditioning:
    case ErrorCode::empty_horizon:
      return kValidation;
    default:
      return kFailure;
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::controller, "cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Appliance load shifting and curtailment under a power limit"};
  app.require_subcommand(1);

  std::string scenario_path, controller = "", out_dir = ".";
  double ts = 0.0;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto* sim = app.add_subcommand("simulate", "Run the closed loop and write trace.csv and summary.json");
  sim->add_option("--scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--controller", controller, "continuous or miqp")->check(CLI::IsMember({"continuous", "miqp"}));
  sim->add_option("--ts", ts, "MIQP sampling time [h]")->check(CLI::PositiveNumber);
  auto* sim_seed = sim->add_option("--seed", seed, "Multistart seed");
  sim->add_option("--out", out_dir, "Output directory");

  std::vector<double> ts_list{0.1, 0.05, 0.025};
  std::size_t runs = 50;
  bool parallel = false;
  auto* cmp = app.add_subcommand("compare", "Loss and solve-time table for both formulations");
  cmp->add_option("--scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  cmp->add_option("--ts-list", ts_list, "MIQP sampling times [h]")->delimiter(',')->check(CLI::PositiveNumber);
  cmp->add_option("--runs", runs, "Seeded runs per method")->check(CLI::PositiveNumber);
  auto* cmp_seed = cmp->add_option("--seed", seed, "Base seed");
  cmp->add_option("--out", out_dir, "Output directory");
  cmp->add_flag("--parallel", parallel, "Run cells on all OpenMP threads");

  std::size_t points = 100;
  auto* grad = app.add_subcommand("check-gradients", "Finite-difference check of interpolants and transcription");
  grad->add_option("--scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  grad->add_option("--points", points, "Random points")->check(CLI::PositiveNumber);
  auto* grad_seed = grad->add_option("--seed", seed, "Sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  seed_given = sim_seed->count() + cmp_seed->count() + grad_seed->count() > 0;

  try {
    const Scenario scenario = parse_scenario(scenario_path);

    if (*sim) {
      LoopOptions opt = loop_options(scenario);
      if (!controller.empty()) opt.controller = *parse_controller(controller);
      if (ts > 0.0) opt.ts = ts;
      if (seed_given) opt.solver.seed = seed;
      const auto res = simulate(scenario, opt);
      fs::create_directories(out_dir);
      std::ostringstream csv;
      write_trace_csv(res.trace, csv);
      write_file(fs::path(out_dir) / "trace.csv", csv.str());
      const auto summary = summary_json(scenario, opt, res);
      write_file(fs::path(out_dir) / "summary.json", summary);
      for (const auto& w : res.trace.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << summary;
      if (res.trace.failure) std::cerr << "error: " << *res.trace.failure << '\n';
      for (const auto& v : res.verify.violations)
        std::cerr << "violation: " << to_string(v.kind) << " at " << v.where << " by " << v.amount << '\n';
      return res.ok() ? kOk : kFailure;
    }

    if (*cmp) {
      const auto rows = compare(scenario, ts_list, runs, seed_given ? seed : scenario.controller.seed,
                                parallel ? Execution::parallel : Execution::serial);
      fs::create_directories(out_dir);
      std::ostringstream csv;
      write_compare_csv(rows, csv);
      write_file(fs::path(out_dir) / "compare.csv", csv.str());
      write_compare_table(rows, std::cout);
      for (const auto& r : rows)
        if (r.failures > 0) return kFailure;
      return kOk;
    }

    const auto rep = check_gradients(scenario, points, seed_given ? seed : 0);
    std::cout << "points: " << rep.points << "\nentries compared: " << rep.entries
              << "\nkink-adjacent samples skipped: " << rep.kinks_skipped << "\nfailures: " << rep.failures
              << "\nworst relative error: " << rep.worst_error << '\n';
    for (const auto& m : rep.messages) std::cout << "  " << m << '\n';
    std::cout << (rep.ok() ? "PASS" : "FAIL") << '\n';
    return rep.ok() ? kOk : kFailure;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
