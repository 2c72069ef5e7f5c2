#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "loadshift/commands.hpp"
#include "loadshift/errors.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace loadshift;

namespace {

Scenario tiny() {
  auto j = testing::base_scenario(3.0);
  testing::SubtaskArgs a;
  a.breakpoints = {0.0, 0.4};
  a.levels = {2.0};
  testing::add_appliance(j, "a", {testing::subtask(a)});
  testing::add_appliance(j, "b", {testing::subtask(a)});
  testing::add_request(j, "a", 0.0);
  testing::add_request(j, "b", 0.0);
  return testing::load(j);
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("loadshift_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(LOADSHIFT_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCode parse_code(const std::string& text) {
  try {
    parse_scenario_text(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::controller;
}

}  // namespace

TEST_CASE("scenario round trip") {
  for (const char* f : {"benchmark_2loads.json", "case_study.json"}) {
    const auto sc = parse_scenario(testing::scenario_path(f));
    const auto again = parse_scenario_text(serialize_scenario(sc));
    CHECK(again.appliances == sc.appliances);
    CHECK(again.controller == sc.controller);
    CHECK(again.p_min == sc.p_min);
    CHECK(again.requests.size() == sc.requests.size());
  }
}

TEST_CASE("scenario errors are classified") {
  CHECK(parse_code("{not json") == ErrorCode::schema);
  CHECK(parse_code(R"({"schema_version": 1})") == ErrorCode::schema);
  auto j = testing::base_scenario(3.0);
  testing::SubtaskArgs a;
  a.curtailment = 5.0;  // above the 2 kW profile
  testing::add_appliance(j, "a", {testing::subtask(a)});
  testing::add_request(j, "a", 0.0);
  CHECK(parse_code(j.dump()) == ErrorCode::validation);
  auto k = testing::base_scenario(3.0);
  testing::add_appliance(k, "a", {testing::subtask({})});
  testing::add_request(k, "nobody", 0.0);
  CHECK(parse_code(k.dump()) == ErrorCode::validation);
  auto v = testing::base_scenario(3.0);
  v["schema_version"] = 99;
  CHECK(parse_code(v.dump()) == ErrorCode::schema);
}

TEST_CASE("trace csv columns" * doctest::test_suite("properties")) {
  const auto sc = tiny();
  const auto res = simulate(sc, loop_options(sc));
  std::ostringstream out;
  write_trace_csv(res.trace, out);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "time_h,a,b,p_batt_kw,e_batt_kwh,p_min_kw,bus_headroom_kw");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 6);
    ++rows;
  }
  CHECK(rows == res.trace.rows.size());
}

TEST_CASE("summary json" * doctest::test_suite("properties")) {
  const auto sc = tiny();
  const auto opt = loop_options(sc);
  const auto res = simulate(sc, opt);
  const auto j = nlohmann::json::parse(summary_json(sc, opt, res));
  CHECK(j["schema_version"] == kSummarySchemaVersion);
  CHECK(j["total_loss"].get<double>() == doctest::Approx(res.losses.total));
  CHECK(j["tasks"].size() == 2);
  CHECK(j["violations"].empty());
  CHECK(j.contains("solve_time_mean"));
}

TEST_CASE("compare rows and serial/parallel agreement") {
  const auto sc = tiny();
  const auto a = compare(sc, {0.1, 0.05}, 2, 0, Execution::serial);
  const auto b = compare(sc, {0.1, 0.05}, 2, 0, Execution::parallel);
  REQUIRE(a.size() == 3);
  CHECK(a[0].method == "continuous");
  CHECK(a[1].ts == 0.1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].runs == 2);
    CHECK(a[i].failures == 0);
    CHECK(a[i].total_loss == b[i].total_loss);
    CHECK(a[i].delay_loss == b[i].delay_loss);
  }
  std::ostringstream csv;
  write_compare_csv(a, csv);
  CHECK(csv.str().rfind("method,ts_h,runs,failures,delay_loss,curtailment_loss,total_loss,solve_time_mean_s\n", 0) == 0);
  CHECK_THROWS_AS(compare(sc, {0.0}, 1, 0), Error);
  CHECK_THROWS_AS(compare(sc, {0.1}, 0, 0), Error);
}

TEST_CASE("command line exit codes and outputs") {
  const auto dir = scratch("sim");
  const auto bench = testing::scenario_path("benchmark_2loads.json");
  CHECK(cli("simulate --scenario " + bench + " --controller miqp --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "trace.csv"));
  const auto summary = nlohmann::json::parse(read(dir / "summary.json"));
  CHECK(summary["controller"] == "miqp");
  CHECK(summary["complete"] == true);

  CHECK(cli("") == 2);
  CHECK(cli("simulate") == 2);
  CHECK(cli("simulate --scenario " + bench + " --controller bogus") == 2);

  const auto bad = scratch("bad") / "bad.json";
  {
    auto j = testing::base_scenario(3.0);
    testing::SubtaskArgs a;
    a.curtailment = 5.0;
    testing::add_appliance(j, "a", {testing::subtask(a)});
    testing::add_request(j, "a", 0.0);
    std::ofstream(bad) << j.dump();
  }
  CHECK(cli("simulate --scenario " + bad.string() + " --out " + dir.string()) == 3);

  // infeasible: a 6 kW load against 3 kW plus 0.2 kW of battery
  const auto hard = scratch("hard") / "hard.json";
  {
    auto j = testing::base_scenario(3.0);
    testing::SubtaskArgs a;
    a.levels = {6.0};
    testing::add_appliance(j, "a", {testing::subtask(a)});
    testing::add_request(j, "a", 0.0);
    std::ofstream(hard) << j.dump();
  }
  CHECK(cli("simulate --scenario " + hard.string() + " --out " + dir.string()) == 1);

  const auto cdir = scratch("cmp");
  CHECK(cli("compare --scenario " + bench + " --ts-list 0.1 --runs 1 --out " + cdir.string()) == 0);
  CHECK(read(cdir / "compare.csv").find("miqp(T_s=0.1)") != std::string::npos);
}
