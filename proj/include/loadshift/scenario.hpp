#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "loadshift/battery.hpp"
#include "loadshift/interp.hpp"
#include "loadshift/profiles.hpp"
#include "loadshift/state.hpp"

namespace loadshift {

inline constexpr int kScenarioSchemaVersion = 1;

struct SubtaskSpec {
  std::string name;
  NominalProfile profile;
  LocalGridTemplate local_grid;
  std::optional<double> local_resolution;  // set when the grid was given as a resolution
  double delay_bound = 0.0;
  StepFunction curtailment_bound;
  LossSpec delay_loss;
  LossSpec curtailment_loss;
  std::optional<std::string> predecessor;  // subtask name within the same appliance

  bool operator==(const SubtaskSpec&) const = default;
};

struct ApplianceSpec {
  std::string id;
  std::vector<SubtaskSpec> subtasks;

  bool operator==(const ApplianceSpec&) const = default;
};

enum class ControllerKind { continuous, miqp };
const char* to_string(ControllerKind kind);
std::optional<ControllerKind> parse_controller(const std::string& name);

struct ControllerConfig {
  ControllerKind method = ControllerKind::continuous;
  InterpMethod interpolation = InterpMethod::rbf;
  double rbf_sigma = 0.0;  // 0 selects the default width
  double ramp_width = kDefaultRampWidth;
  double ts = 0.1;
  std::uint64_t seed = 0;
  std::size_t multistart = 5;
  double tolerance = 1e-6;

  bool operator==(const ControllerConfig&) const = default;
};

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string name;
  double global_resolution = 0.1;
  PowerLimit p_min;
  BatteryParams battery;
  double initial_energy = 0.0;
  std::vector<ApplianceSpec> appliances;
  std::vector<RequestEvent> requests;
  ControllerConfig controller;

  const ApplianceSpec* find_appliance(const std::string& id) const;
  /// Tasks for the occurrence-th request (1-based) of an appliance made at time t.
  std::vector<Task> instantiate(const std::string& appliance, std::size_t occurrence, double t) const;
  /// All problems found, empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;  // throws Error(validation) listing every problem
};

bool operator==(const PowerLimit& a, const PowerLimit& b);

/// Throws Error(schema) or Error(validation) with every problem found.
Scenario parse_scenario(const std::filesystem::path& path);
Scenario parse_scenario_text(const std::string& text);
std::string serialize_scenario(const Scenario& scenario);

}  // namespace loadshift
