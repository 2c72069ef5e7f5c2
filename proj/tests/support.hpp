#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "loadshift/scenario.hpp"

namespace testing {

inline std::string scenario_path(const std::string& file) {
  return std::string(LOADSHIFT_SCENARIO_DIR) + "/" + file;
}

struct SubtaskArgs {
  std::string id = "run";
  std::vector<double> breakpoints{0.0, 1.0};
  std::vector<double> levels{2.0};
  double resolution = 0.2;
  double delay_bound = 1.0;
  double curtailment = 0.5;
  std::string predecessor;
};

inline nlohmann::json subtask(const SubtaskArgs& a) {
  nlohmann::json s = {
      {"id", a.id},
      {"profile", {{"breakpoints_h", a.breakpoints}, {"levels_kw", a.levels}}},
      {"local_resolution_h", a.resolution},
      {"delay_bound_h", a.delay_bound},
      {"curtailment_bound_kw", a.curtailment},
      {"delay_loss", {{"kind", "quadratic_deadband"}, {"weight", 10.0}, {"deadband", 0.1}}},
      {"curtailment_loss", {{"kind", "quadratic"}, {"weight", 1.0}}},
  };
  if (!a.predecessor.empty()) s["predecessor"] = a.predecessor;
  return s;
}

/// Minimal single-appliance-per-load scenario; callers add appliances and requests.
inline nlohmann::json base_scenario(double p_min, double e_max = 1.0, double e0 = 0.5) {
  return {
      {"schema_version", 1},
      {"name", "test"},
      {"global_resolution_h", 0.1},
      {"p_min", {{{"start_h", 0.0}, {"kw", p_min}}}},
      {"battery", {{"e_max_kwh", e_max}, {"p_lo_kw", -0.2}, {"p_hi_kw", 0.2}, {"e0_kwh", e0}}},
      {"appliances", nlohmann::json::array()},
      {"requests", nlohmann::json::array()},
      {"controller",
       {{"method", "continuous"}, {"interpolation", "piecewise_linear"}, {"ts_h", 0.1}, {"seed", 0},
        {"multistart", 3}}},
  };
}

inline void add_appliance(nlohmann::json& sc, const std::string& id, std::vector<nlohmann::json> subtasks) {
  sc["appliances"].push_back({{"id", id}, {"subtasks", subtasks}});
}

inline void add_request(nlohmann::json& sc, const std::string& appliance, double t) {
  sc["requests"].push_back({{"appliance", appliance}, {"time_h", t}});
}

inline loadshift::Scenario load(const nlohmann::json& sc) {
  return loadshift::parse_scenario_text(sc.dump());
}

/// Small MIQP instance at T_s = 0.1: at most two tasks (sometimes a chain),
/// horizon of at most 24 steps, start windows of at most 8 steps.
inline nlohmann::json random_small_scenario(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> tenths(2, 6), window(0, 7), coin(0, 2);
  std::uniform_real_distribution<double> level(1.0, 4.0), pmin(2.5, 5.5), frac(0.0, 1.0);
  auto piece = [&](int len) {
    SubtaskArgs a;
    a.resolution = 0.1;
    a.breakpoints = {0.0};
    a.levels.clear();
    int at = 0;
    while (at < len) {
      const int step = std::min(len - at, 1 + static_cast<int>(frac(rng) * 3));
      at += step;
      a.breakpoints.push_back(at / 10.0);
      a.levels.push_back(std::round(level(rng) * 10) / 10);
    }
    double lo = *std::min_element(a.levels.begin(), a.levels.end());
    a.curtailment = std::round(std::min(lo, 0.2 + 0.8 * frac(rng)) * 10) / 10;
    a.delay_bound = window(rng) / 10.0;
    return a;
  };
  auto sc = base_scenario(std::round(pmin(rng) * 10) / 10, 0.2 + 0.8 * frac(rng), 0.1 * frac(rng));
  sc["controller"]["method"] = "miqp";
  const int kind = coin(rng);  // 0: one task, 1: two independent, 2: chain
  auto a = piece(tenths(rng));
  if (kind == 2) {
    a.id = "first";
    auto b = piece(tenths(rng));
    b.id = "second";
    b.predecessor = "first";
    b.delay_bound = std::min(b.delay_bound, 0.3);
    a.delay_bound = std::min(a.delay_bound, 0.4);
    add_appliance(sc, "x", {subtask(a), subtask(b)});
    add_request(sc, "x", 0.0);
  } else {
    add_appliance(sc, "x", {subtask(a)});
    add_request(sc, "x", 0.0);
    if (kind == 1) {
      add_appliance(sc, "y", {subtask(piece(tenths(rng)))});
      add_request(sc, "y", std::round(3 * frac(rng)) / 10);
    }
  }
  return sc;
}

}  // namespace testing
