#include "loadshift/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "loadshift/errors.hpp"

namespace loadshift {

using nlohmann::json;

const char* to_string(ControllerKind kind) {
  return kind == ControllerKind::continuous ? "continuous" : "miqp";
}

std::optional<ControllerKind> parse_controller(const std::string& name) {
  if (name == "continuous") return ControllerKind::continuous;
  if (name == "miqp") return ControllerKind::miqp;
  return std::nullopt;
}

bool operator==(const PowerLimit& a, const PowerLimit& b) {
  return std::equal(a.starts().begin(), a.starts().end(), b.starts().begin(), b.starts().end()) &&
         std::equal(a.levels().begin(), a.levels().end(), b.levels().begin(), b.levels().end());
}

const ApplianceSpec* Scenario::find_appliance(const std::string& id) const {
  for (const auto& a : appliances)
    if (a.id == id) return &a;
  return nullptr;
}

std::vector<Task> Scenario::instantiate(const std::string& appliance, std::size_t occurrence, double t) const {
  const auto* a = find_appliance(appliance);
  if (!a) throw Error(ErrorCode::validation, "request for unknown appliance '" + appliance + "'");
  const std::string prefix = appliance + "#" + std::to_string(occurrence) + "/";
  std::vector<Task> out;
  for (const auto& s : a->subtasks) {
    Task task;
    task.id = prefix + s.name;
    task.appliance = appliance;
    task.profile = s.profile;
    task.local_grid = s.local_grid;
    task.delay_bound = s.delay_bound;
    task.curtailment_bound = s.curtailment_bound;
    task.delay_loss = s.delay_loss;
    task.curtailment_loss = s.curtailment_loss;
    if (s.predecessor) task.predecessor = prefix + *s.predecessor;
    else task.request_time = t;
    out.push_back(std::move(task));
  }
  return out;
}

std::vector<std::string> Scenario::problems() const {
  std::vector<std::string> errs;
  auto guard = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errs.emplace_back(e.what());
    }
  };
  if (schema_version != kScenarioSchemaVersion)
    errs.push_back("unsupported schema_version " + std::to_string(schema_version));
  if (!(global_resolution > 0.0)) errs.emplace_back("global_resolution_h must be positive");
  guard([&] { battery.validate(); });
  if (initial_energy < 0.0 || initial_energy > battery.e_max)
    errs.emplace_back("battery.e0_kwh must lie in [0, e_max_kwh]");
  std::set<std::string> ids;
  for (const auto& a : appliances) {
    if (!ids.insert(a.id).second) errs.push_back("duplicate appliance id '" + a.id + "'");
    if (a.subtasks.empty()) errs.push_back("appliance '" + a.id + "' has no subtasks");
    std::set<std::string> names;
    for (const auto& s : a.subtasks) {
      if (!names.insert(s.name).second) errs.push_back("appliance '" + a.id + "': duplicate subtask '" + s.name + "'");
      if (s.predecessor && !std::any_of(a.subtasks.begin(), a.subtasks.end(),
                                         [&](const SubtaskSpec& o) { return o.name == *s.predecessor; }))
        errs.push_back("appliance '" + a.id + "' subtask '" + s.name + "': unresolved predecessor '" +
                       *s.predecessor + "'");
    }
    if (!errs.empty()) continue;
    guard([&] {
      const auto tasks = instantiate(a.id, 1, 0.0);
      for (const auto& t : tasks) guard([&] { t.validate(); });
      validate_chains(tasks);
    });
  }
  for (const auto& r : requests) {
    if (!find_appliance(r.appliance)) errs.push_back("request for unknown appliance '" + r.appliance + "'");
    if (!std::isfinite(r.time) || r.time < 0.0) errs.push_back("request time must be finite and >= 0");
  }
  if (!(controller.ts > 0.0)) errs.emplace_back("controller.ts_h must be positive");
  if (controller.rbf_sigma < 0.0) errs.emplace_back("controller.rbf_sigma_h must be >= 0");
  if (!(controller.ramp_width > 0.0)) errs.emplace_back("controller.ramp_width_h must be positive");
  if (controller.multistart < 1) errs.emplace_back("controller.multistart must be >= 1");
  if (!(controller.tolerance > 0.0)) errs.emplace_back("controller.tolerance must be positive");
  return errs;
}

void Scenario::validate() const {
  const auto errs = problems();
  if (errs.empty()) return;
  std::ostringstream os;
  os << errs.size() << " scenario problem(s):";
  for (const auto& e : errs) os << "\n  - " << e;
  throw Error(ErrorCode::validation, os.str());
}

namespace {

// Field reader that records every problem instead of stopping at the first.
class Reader {
 public:
  std::vector<std::string> errors;

  const json* field(const json& obj, const std::string& key, const std::string& path, bool required = true) {
    if (!obj.is_object()) {
      errors.push_back(path + ": expected an object");
      return nullptr;
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) errors.push_back(path + "." + key + ": missing");
      return nullptr;
    }
    return &*it;
  }
  double number(const json& obj, const std::string& key, const std::string& path, double fallback = 0.0,
                bool required = true) {
    const json* v = field(obj, key, path, required);
    if (!v) return fallback;
    if (!v->is_number()) {
      errors.push_back(path + "." + key + ": expected a number");
      return fallback;
    }
    const double d = v->get<double>();
    if (!std::isfinite(d)) errors.push_back(path + "." + key + ": must be finite");
    return d;
  }
  std::string text(const json& obj, const std::string& key, const std::string& path, std::string fallback = {},
                   bool required = true) {
    const json* v = field(obj, key, path, required);
    if (!v) return fallback;
    if (!v->is_string()) {
      errors.push_back(path + "." + key + ": expected a string");
      return fallback;
    }
    return v->get<std::string>();
  }
  std::vector<double> numbers(const json& obj, const std::string& key, const std::string& path) {
    const json* v = field(obj, key, path);
    std::vector<double> out;
    if (!v) return out;
    if (!v->is_array()) {
      errors.push_back(path + "." + key + ": expected an array of numbers");
      return out;
    }
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) {
        errors.push_back(path + "." + key + "[" + std::to_string(i) + "]: expected a number");
        continue;
      }
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }
  template <typename Fn>
  void attempt(const std::string& path, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.push_back(path + ": " + e.what());
    }
  }

  StepFunction step(const json& v, const std::string& path) {
    StepFunction f;
    const auto bp = numbers(v, "breakpoints_h", path);
    const auto lv = numbers(v, "levels_kw", path);
    attempt(path, [&] { f = StepFunction::make(bp, lv); });
    return f;
  }

  LossSpec loss(const json& obj, const std::string& key, const std::string& path) {
    LossSpec spec;
    const json* v = field(obj, key, path);
    if (!v) return spec;
    const std::string p = path + "." + key;
    const std::string kind = text(*v, "kind", p);
    spec.weight = number(*v, "weight", p);
    if (kind == "quadratic_deadband") {
      spec.kind = LossKind::quadratic_deadband;
      spec.deadband = number(*v, "deadband", p);
    } else if (kind == "quadratic") {
      spec.kind = LossKind::quadratic;
    } else if (kind == "weighted_abs") {
      spec.kind = LossKind::weighted_abs;
    } else if (!kind.empty()) {
      errors.push_back(p + ".kind: unknown loss kind '" + kind + "'");
    }
    if (spec.weight < 0.0) errors.push_back(p + ".weight: must be >= 0");
    if (spec.deadband < 0.0) errors.push_back(p + ".deadband: must be >= 0");
    return spec;
  }
};

json step_json(const StepFunction& f) {
  return json{{"breakpoints_h", std::vector<double>(f.breakpoints().begin(), f.breakpoints().end())},
              {"levels_kw", std::vector<double>(f.levels().begin(), f.levels().end())}};
}

json loss_json(const LossSpec& s) {
  json j;
  switch (s.kind) {
    case LossKind::quadratic_deadband: j = {{"kind", "quadratic_deadband"}, {"weight", s.weight}, {"deadband", s.deadband}}; break;
    case LossKind::quadratic: j = {{"kind", "quadratic"}, {"weight", s.weight}}; break;
    case LossKind::weighted_abs: j = {{"kind", "weighted_abs"}, {"weight", s.weight}}; break;
  }
  return j;
}

}  // namespace

Scenario parse_scenario_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::schema, std::string("malformed scenario JSON: ") + e.what());
  }
  Reader r;
  Scenario sc;
  if (!root.is_object()) throw Error(ErrorCode::schema, "scenario root must be an object");

  sc.schema_version = static_cast<int>(r.number(root, "schema_version", "$"));
  if (root.contains("schema_version") && sc.schema_version != kScenarioSchemaVersion)
    r.errors.push_back("$.schema_version: unsupported version " + std::to_string(sc.schema_version));
  sc.name = r.text(root, "name", "$", "", false);
  sc.global_resolution = r.number(root, "global_resolution_h", "$", 0.1);

  if (const json* pm = r.field(root, "p_min", "$")) {
    std::vector<double> starts, levels;
    if (pm->is_number()) {
      starts = {0.0};
      levels = {pm->get<double>()};
    } else if (pm->is_array()) {
      for (std::size_t i = 0; i < pm->size(); ++i) {
        const std::string p = "$.p_min[" + std::to_string(i) + "]";
        starts.push_back(r.number((*pm)[i], "start_h", p));
        levels.push_back(r.number((*pm)[i], "kw", p));
      }
    } else {
      r.errors.emplace_back("$.p_min: expected a number or an array of segments");
    }
    if (!starts.empty()) r.attempt("$.p_min", [&] { sc.p_min = PowerLimit::make(starts, levels); });
  }

  if (const json* b = r.field(root, "battery", "$")) {
    sc.battery.e_max = r.number(*b, "e_max_kwh", "$.battery");
    sc.battery.p_lo = r.number(*b, "p_lo_kw", "$.battery");
    sc.battery.p_hi = r.number(*b, "p_hi_kw", "$.battery");
    sc.initial_energy = r.number(*b, "e0_kwh", "$.battery");
  }

  if (const json* apps = r.field(root, "appliances", "$")) {
    if (!apps->is_array()) r.errors.emplace_back("$.appliances: expected an array");
    else
      for (std::size_t i = 0; i < apps->size(); ++i) {
        const std::string p = "$.appliances[" + std::to_string(i) + "]";
        ApplianceSpec a;
        a.id = r.text((*apps)[i], "id", p);
        const json* subs = r.field((*apps)[i], "subtasks", p);
        if (subs && !subs->is_array()) r.errors.push_back(p + ".subtasks: expected an array");
        else if (subs)
          for (std::size_t k = 0; k < subs->size(); ++k) {
            const json& sj = (*subs)[k];
            const std::string q = p + ".subtasks[" + std::to_string(k) + "]";
            SubtaskSpec s;
            s.name = r.text(sj, "id", q);
            if (const json* prof = r.field(sj, "profile", q)) s.profile = r.step(*prof, q + ".profile");
            const bool has_grid = sj.is_object() && sj.contains("local_grid_h");
            const bool has_res = sj.is_object() && sj.contains("local_resolution_h");
            if (has_grid == has_res) {
              r.errors.push_back(q + ": give exactly one of local_grid_h and local_resolution_h");
            } else if (has_grid) {
              const auto offs = r.numbers(sj, "local_grid_h", q);
              r.attempt(q + ".local_grid_h", [&] { s.local_grid = LocalGridTemplate::make(offs); });
            } else {
              s.local_resolution = r.number(sj, "local_resolution_h", q);
              if (s.profile.duration() > 0.0)
                r.attempt(q + ".local_resolution_h",
                          [&] { s.local_grid = LocalGridTemplate::uniform(s.profile.duration(), *s.local_resolution); });
            }
            s.delay_bound = r.number(sj, "delay_bound_h", q);
            if (s.delay_bound < 0.0) r.errors.push_back(q + ".delay_bound_h: must be >= 0");
            if (const json* cb = r.field(sj, "curtailment_bound_kw", q)) {
              if (cb->is_number()) {
                const double c = cb->get<double>();
                if (c < 0.0) r.errors.push_back(q + ".curtailment_bound_kw: must be >= 0");
                if (s.profile.duration() > 0.0)
                  r.attempt(q + ".curtailment_bound_kw",
                            [&] { s.curtailment_bound = StepFunction::constant(s.profile.duration(), c); });
              } else {
                s.curtailment_bound = r.step(*cb, q + ".curtailment_bound_kw");
              }
            }
            s.delay_loss = r.loss(sj, "delay_loss", q);
            s.curtailment_loss = r.loss(sj, "curtailment_loss", q);
            if (sj.is_object() && sj.contains("predecessor")) s.predecessor = r.text(sj, "predecessor", q);
            a.subtasks.push_back(std::move(s));
          }
        sc.appliances.push_back(std::move(a));
      }
  }

  if (const json* reqs = r.field(root, "requests", "$")) {
    if (!reqs->is_array()) r.errors.emplace_back("$.requests: expected an array");
    else
      for (std::size_t i = 0; i < reqs->size(); ++i) {
        const std::string p = "$.requests[" + std::to_string(i) + "]";
        sc.requests.push_back({r.text((*reqs)[i], "appliance", p), r.number((*reqs)[i], "time_h", p)});
      }
  }

  if (const json* c = r.field(root, "controller", "$", false)) {
    const std::string p = "$.controller";
    const std::string method = r.text(*c, "method", p, "continuous", false);
    if (auto k = parse_controller(method)) sc.controller.method = *k;
    else r.errors.push_back(p + ".method: unknown controller '" + method + "'");
    const std::string interp = r.text(*c, "interpolation", p, "rbf", false);
    if (interp == "rbf") sc.controller.interpolation = InterpMethod::rbf;
    else if (interp == "piecewise_linear") sc.controller.interpolation = InterpMethod::piecewise_linear;
    else r.errors.push_back(p + ".interpolation: unknown method '" + interp + "'");
    sc.controller.rbf_sigma = r.number(*c, "rbf_sigma_h", p, 0.0, false);
    sc.controller.ramp_width = r.number(*c, "ramp_width_h", p, kDefaultRampWidth, false);
    sc.controller.ts = r.number(*c, "ts_h", p, 0.1, false);
    const double seed = r.number(*c, "seed", p, 0.0, false);
    if (seed < 0.0 || seed != std::floor(seed)) r.errors.push_back(p + ".seed: must be a non-negative integer");
    else sc.controller.seed = static_cast<std::uint64_t>(seed);
    const double ms = r.number(*c, "multistart", p, 5.0, false);
    if (ms < 1.0 || ms != std::floor(ms)) r.errors.push_back(p + ".multistart: must be a positive integer");
    else sc.controller.multistart = static_cast<std::size_t>(ms);
    sc.controller.tolerance = r.number(*c, "tolerance", p, 1e-6, false);
  }

  if (!r.errors.empty()) {
    std::ostringstream os;
    os << r.errors.size() << " scenario schema error(s):";
    for (const auto& e : r.errors) os << "\n  - " << e;
    throw Error(ErrorCode::schema, os.str());
  }
  sc.validate();
  return sc;
}

Scenario parse_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::schema, "cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

std::string serialize_scenario(const Scenario& sc) {
  json root;
  root["schema_version"] = sc.schema_version;
  root["name"] = sc.name;
  root["global_resolution_h"] = sc.global_resolution;
  json pm = json::array();
  for (std::size_t i = 0; i < sc.p_min.starts().size(); ++i)
    pm.push_back({{"start_h", sc.p_min.starts()[i]}, {"kw", sc.p_min.levels()[i]}});
  root["p_min"] = pm;
  root["battery"] = {{"e_max_kwh", sc.battery.e_max},
                     {"p_lo_kw", sc.battery.p_lo},
                     {"p_hi_kw", sc.battery.p_hi},
                     {"e0_kwh", sc.initial_energy}};
  json apps = json::array();
  for (const auto& a : sc.appliances) {
    json subs = json::array();
    for (const auto& s : a.subtasks) {
      json sj;
      sj["id"] = s.name;
      sj["profile"] = step_json(s.profile);
      if (s.local_resolution) sj["local_resolution_h"] = *s.local_resolution;
      else sj["local_grid_h"] = std::vector<double>(s.local_grid.offsets().begin(), s.local_grid.offsets().end());
      sj["delay_bound_h"] = s.delay_bound;
      if (s.curtailment_bound.levels().size() == 1) sj["curtailment_bound_kw"] = s.curtailment_bound.levels()[0];
      else sj["curtailment_bound_kw"] = step_json(s.curtailment_bound);
      sj["delay_loss"] = loss_json(s.delay_loss);
      sj["curtailment_loss"] = loss_json(s.curtailment_loss);
      if (s.predecessor) sj["predecessor"] = *s.predecessor;
      subs.push_back(sj);
    }
    apps.push_back({{"id", a.id}, {"subtasks", subs}});
  }
  root["appliances"] = apps;
  json reqs = json::array();
  for (const auto& r : sc.requests) reqs.push_back({{"appliance", r.appliance}, {"time_h", r.time}});
  root["requests"] = reqs;
  const auto& c = sc.controller;
  root["controller"] = {{"method", to_string(c.method)},
                        {"interpolation", c.interpolation == InterpMethod::rbf ? "rbf" : "piecewise_linear"},
                        {"rbf_sigma_h", c.rbf_sigma},
                        {"ramp_width_h", c.ramp_width},
                        {"ts_h", c.ts},
                        {"seed", c.seed},
                        {"multistart", c.multistart},
                        {"tolerance", c.tolerance}};
  return root.dump(2) + "\n";
}

}  // namespace loadshift
