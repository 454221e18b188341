#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "decoc/actions.hpp"
#include "decoc/reward.hpp"
#include "decoc/search.hpp"
#include "decoc/world.hpp"

namespace decoc {

/// Raised for malformed or invalid scenario documents. The message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ControllerKind : std::uint8_t { Mcts, ConstantVelocity, Parked };

inline std::string_view controller_name(ControllerKind k) {
  switch (k) {
    case ControllerKind::Mcts: return "mcts";
    case ControllerKind::ConstantVelocity: return "constant_velocity";
    case ControllerKind::Parked: return "parked";
  }
  return "unknown";
}

struct VehicleConfig {
  AgentId id = 0;
  ControllerKind controller = ControllerKind::Mcts;
  double x0 = 0.0;
  double v0 = 0.0;  // signed, negative for oncoming traffic
  int l0 = 0;
  double v_des = 0.0;
  int l_des = 0;
  double lambda = 1.0;
  double length = 4.5;
  double width = 2.0;
  bool oncoming = false;

  AgentDesire desire() const { return {v_des, l_des, lambda}; }
  bool operator==(const VehicleConfig&) const = default;
};

struct ScenarioConfig {
  std::string name;
  RoadGeometry road;
  DynamicsParams dynamics;  // dynamics.step_length is the scenario step length
  MacroParams macros;
  RewardWeights reward;
  SearchParams search;
  int max_epochs = 20;
  std::vector<VehicleConfig> vehicles;

  bool operator==(const ScenarioConfig&) const = default;

  WorldState initial_world() const {
    WorldState w;
    for (const auto& v : vehicles) {
      VehicleState s;
      s.id = v.id;
      s.x = v.x0;
      s.y = v.l0 * road.lane_width;
      s.v = v.v0;
      s.length = v.length;
      s.width = v.width;
      s.oncoming = v.oncoming;
      w.vehicles.push_back(s);
    }
    return w;
  }

  const VehicleConfig& vehicle(AgentId id) const {
    for (const auto& v : vehicles)
      if (v.id == id) return v;
    throw std::out_of_range("unknown vehicle id " + std::to_string(id));
  }
};

/// Checks every invariant; throws ConfigError naming the offending field.
inline void validate(const ScenarioConfig& c) {
  auto fail = [](const std::string& field, const std::string& what) {
    throw ConfigError(field + ": " + what);
  };
  if (c.road.lane_count < 1) fail("road.lane_count", "must be >= 1");
  if (!(c.road.lane_width > 0.0)) fail("road.lane_width", "must be > 0");
  if (!(c.road.length > 0.0)) fail("road.length", "must be > 0");
  if (!(c.dynamics.step_length > 0.0)) fail("step_length", "must be > 0");
  if (!(c.dynamics.velocity_step > 0.0)) fail("dynamics.velocity_step", "must be > 0");
  if (!(c.dynamics.sub_step > 0.0 && c.dynamics.sub_step <= c.dynamics.step_length))
    fail("dynamics.sub_step", "must be in (0, step_length]");
  if (!(c.dynamics.max_speed > 0.0)) fail("dynamics.max_speed", "must be > 0");
  if (!(c.macros.lookahead > 0.0)) fail("macro_actions.lookahead", "must be > 0");
  if (!(c.macros.velocity_tolerance >= 0.0))
    fail("macro_actions.velocity_tolerance", "must be >= 0");
  if (!(c.macros.make_room_termination >= 0.0 && c.macros.make_room_termination <= 1.0))
    fail("macro_actions.make_room_termination", "must be in [0,1]");
  try {
    c.reward.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  try {
    c.search.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.max_epochs < 1) fail("max_epochs", "must be >= 1");
  if (c.vehicles.empty()) fail("vehicles", "at least one vehicle is required");

  std::set<AgentId> ids;
  std::size_t participants = 0;
  for (std::size_t k = 0; k < c.vehicles.size(); ++k) {
    const auto& v = c.vehicles[k];
    const std::string f = "vehicles[" + std::to_string(k) + "]";
    if (!ids.insert(v.id).second) fail(f + ".id", "duplicate id " + std::to_string(v.id));
    if (v.l0 < 0 || v.l0 >= c.road.lane_count) fail(f + ".l0", "lane outside the road");
    if (v.l_des < 0 || v.l_des >= c.road.lane_count) fail(f + ".l_des", "lane outside the road");
    if (!(v.lambda >= 0.0 && v.lambda <= 1.0)) fail(f + ".lambda", "must be in [0,1]");
    if (!(v.v_des >= 0.0)) fail(f + ".v_des", "must be >= 0");
    if (!(v.length > 0.0)) fail(f + ".length", "must be > 0");
    if (!(v.width > 0.0)) fail(f + ".width", "must be > 0");
    if (!(std::abs(v.v0) <= c.dynamics.max_speed)) fail(f + ".v0", "exceeds dynamics.max_speed");
    if (v.oncoming ? v.v0 > 0.0 : v.v0 < 0.0)
      fail(f + ".v0", "sign must match the direction of travel");
    if (!(v.x0 >= 0.0 && v.x0 <= c.road.length)) fail(f + ".x0", "outside the road");
    if (v.controller == ControllerKind::Parked && v.v0 != 0.0) fail(f + ".v0", "parked vehicles have v0 = 0");
    if (v.controller != ControllerKind::Parked) ++participants;
  }
  if (participants > kMaxAgents) fail("vehicles", "at most 9 moving vehicles are supported");
  const WorldState w = c.initial_world();
  for (std::size_t i = 0; i < w.vehicles.size(); ++i)
    for (std::size_t j = i + 1; j < w.vehicles.size(); ++j) {
      const auto& a = w.vehicles[i];
      const auto& b = w.vehicles[j];
      if (footprints_overlap(a.x, a.y, a.length, a.width, a.oncoming, b.x, b.y, b.length, b.width,
                             b.oncoming))
        fail("vehicles", "initial placement collides: vehicles " + std::to_string(a.id) + " and " +
                             std::to_string(b.id));
    }
}

// ---------------------------------------------------------------------------
// JSON document format

namespace detail {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void allow_only(std::initializer_list<std::string_view> keys) const {
    for (const auto& [k, _] : obj_.items()) {
      bool known = false;
      for (auto a : keys) known = known || a == k;
      if (!known) throw ConfigError(field(k) + ": unknown key");
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out, bool required = false) const {
    if (!obj_.contains(key)) {
      if (required) throw ConfigError(field(key) + ": missing field");
      return;
    }
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(field(key) + ": expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
      } else {
        if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  Reader child(const std::string& key) const { return Reader(obj_.at(key), field(key)); }
  const json& raw(const std::string& key) const { return obj_.at(key); }
  std::string field(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

 private:
  const json& obj_;
  std::string path_;
};

}  // namespace detail

inline nlohmann::json to_json(const ScenarioConfig& c) {
  using nlohmann::json;
  json j;
  j["name"] = c.name;
  j["road"] = {{"lane_count", c.road.lane_count},
               {"lane_width", c.road.lane_width},
               {"length", c.road.length}};
  j["step_length"] = c.dynamics.step_length;
  j["dynamics"] = {{"velocity_step", c.dynamics.velocity_step},
                   {"sub_step", c.dynamics.sub_step},
                   {"max_speed", c.dynamics.max_speed}};
  j["macro_actions"] = {{"lookahead", c.macros.lookahead},
                        {"overtake_margin", c.macros.overtake_margin},
                        {"velocity_tolerance", c.macros.velocity_tolerance},
                        {"make_room_termination", c.macros.make_room_termination}};
  j["reward"] = {{"collision", c.reward.collision},
                 {"velocity", c.reward.velocity},
                 {"lane", c.reward.lane},
                 {"efficiency", c.reward.efficiency},
                 {"lane_efficiency", c.reward.lane_efficiency},
                 {"lane_change", c.reward.lane_change},
                 {"acceleration", c.reward.acceleration},
                 {"gamma", c.reward.gamma}};
  j["search"] = {{"iterations", c.search.iterations},
                 {"max_depth", c.search.max_depth},
                 {"gamma", c.search.gamma},
                 {"epsilon", c.search.epsilon},
                 {"c_uct", c.search.c_uct},
                 {"final_rule", c.search.final_rule == FinalRule::MaxVisits ? "max_visits" : "max_reward"},
                 {"mode", c.search.mode == ControlMode::Polling ? "polling" : "hierarchical"},
                 {"flat", c.search.flat},
                 {"domain_knowledge", c.search.domain_knowledge},
                 {"seed", c.search.seed}};
  j["max_epochs"] = c.max_epochs;
  j["vehicles"] = json::array();
  for (const auto& v : c.vehicles) {
    j["vehicles"].push_back({{"id", v.id},
                             {"controller", std::string(controller_name(v.controller))},
                             {"x0", v.x0},
                             {"v0", v.v0},
                             {"l0", v.l0},
                             {"v_des", v.v_des},
                             {"l_des", v.l_des},
                             {"lambda", v.lambda},
                             {"length", v.length},
                             {"width", v.width},
                             {"oncoming", v.oncoming}});
  }
  return j;
}

inline std::string serialize(const ScenarioConfig& c) { return to_json(c).dump(2); }

inline ScenarioConfig from_json(const nlohmann::json& doc) {
  using detail::Reader;
  ScenarioConfig c;
  Reader top(doc, "");
  top.allow_only({"name", "road", "step_length", "dynamics", "macro_actions", "reward", "search",
                  "max_epochs", "vehicles"});
  top.get("name", c.name, true);
  if (!top.has("road")) throw ConfigError("road: missing field");
  {
    Reader r = top.child("road");
    r.allow_only({"lane_count", "lane_width", "length"});
    r.get("lane_count", c.road.lane_count, true);
    r.get("lane_width", c.road.lane_width);
    r.get("length", c.road.length);
  }
  top.get("step_length", c.dynamics.step_length, true);
  if (top.has("dynamics")) {
    Reader r = top.child("dynamics");
    r.allow_only({"velocity_step", "sub_step", "max_speed"});
    r.get("velocity_step", c.dynamics.velocity_step);
    r.get("sub_step", c.dynamics.sub_step);
    r.get("max_speed", c.dynamics.max_speed);
  }
  if (top.has("macro_actions")) {
    Reader r = top.child("macro_actions");
    r.allow_only({"lookahead", "overtake_margin", "velocity_tolerance", "make_room_termination"});
    r.get("lookahead", c.macros.lookahead);
    r.get("overtake_margin", c.macros.overtake_margin);
    r.get("velocity_tolerance", c.macros.velocity_tolerance);
    r.get("make_room_termination", c.macros.make_room_termination);
  }
  if (top.has("reward")) {
    Reader r = top.child("reward");
    r.allow_only({"collision", "velocity", "lane", "efficiency", "lane_efficiency", "lane_change",
                  "acceleration", "gamma"});
    r.get("collision", c.reward.collision);
    r.get("velocity", c.reward.velocity);
    r.get("lane", c.reward.lane);
    r.get("efficiency", c.reward.efficiency);
    r.get("lane_efficiency", c.reward.lane_efficiency);
    r.get("lane_change", c.reward.lane_change);
    r.get("acceleration", c.reward.acceleration);
    r.get("gamma", c.reward.gamma);
  }
  if (top.has("search")) {
    Reader r = top.child("search");
    r.allow_only({"iterations", "max_depth", "gamma", "epsilon", "c_uct", "final_rule", "mode",
                  "flat", "domain_knowledge", "seed"});
    r.get("iterations", c.search.iterations);
    r.get("max_depth", c.search.max_depth);
    r.get("gamma", c.search.gamma);
    r.get("epsilon", c.search.epsilon);
    r.get("c_uct", c.search.c_uct);
    std::string rule = c.search.final_rule == FinalRule::MaxVisits ? "max_visits" : "max_reward";
    r.get("final_rule", rule);
    if (rule == "max_visits")
      c.search.final_rule = FinalRule::MaxVisits;
    else if (rule == "max_reward")
      c.search.final_rule = FinalRule::MaxReward;
    else
      throw ConfigError("search.final_rule: expected max_visits or max_reward");
    std::string mode = c.search.mode == ControlMode::Polling ? "polling" : "hierarchical";
    r.get("mode", mode);
    if (mode == "polling")
      c.search.mode = ControlMode::Polling;
    else if (mode == "hierarchical")
      c.search.mode = ControlMode::Hierarchical;
    else
      throw ConfigError("search.mode: expected polling or hierarchical");
    r.get("flat", c.search.flat);
    r.get("domain_knowledge", c.search.domain_knowledge);
    r.get("seed", c.search.seed);
  }
  top.get("max_epochs", c.max_epochs);
  if (!top.has("vehicles")) throw ConfigError("vehicles: missing field");
  const auto& vs = top.raw("vehicles");
  if (!vs.is_array()) throw ConfigError("vehicles: expected an array");
  for (std::size_t k = 0; k < vs.size(); ++k) {
    Reader r(vs[k], "vehicles[" + std::to_string(k) + "]");
    r.allow_only({"id", "controller", "x0", "v0", "l0", "v_des", "l_des", "lambda", "length",
                  "width", "oncoming"});
    VehicleConfig v;
    r.get("id", v.id, true);
    std::string controller;
    r.get("controller", controller, true);
    if (controller == "mcts")
      v.controller = ControllerKind::Mcts;
    else if (controller == "constant_velocity")
      v.controller = ControllerKind::ConstantVelocity;
    else if (controller == "parked")
      v.controller = ControllerKind::Parked;
    else
      throw ConfigError(r.field("controller") + ": expected mcts, constant_velocity or parked");
    r.get("x0", v.x0, true);
    r.get("v0", v.v0, true);
    r.get("l0", v.l0, true);
    r.get("v_des", v.v_des, true);
    r.get("l_des", v.l_des, true);
    r.get("lambda", v.lambda, true);
    r.get("length", v.length);
    r.get("width", v.width);
    r.get("oncoming", v.oncoming);
    c.vehicles.push_back(v);
  }
  validate(c);
  return c;
}

inline ScenarioConfig parse(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("syntax error: ") + e.what());
  }
  return from_json(doc);
}

// ---------------------------------------------------------------------------
// Built-in scenarios

inline VehicleConfig make_vehicle(AgentId id, ControllerKind k, double x0, double v0, int l0,
                                  double v_des, int l_des, double lambda) {
  VehicleConfig v;
  v.id = id;
  v.controller = k;
  v.x0 = x0;
  v.v0 = v0;
  v.l0 = l0;
  v.v_des = v_des;
  v.l_des = l_des;
  v.lambda = lambda;
  return v;
}

inline ScenarioConfig overtake_scenario() {
  ScenarioConfig c;
  c.name = "overtake";
  c.road = {3, 3.5, 1000.0};
  c.search.iterations = 2000;
  c.search.max_depth = 20;
  c.max_epochs = 20;
  using K = ControllerKind;
  c.vehicles = {make_vehicle(0, K::Mcts, 5.0, 15.0, 0, 25.0, 0, 1.0),
                make_vehicle(1, K::Mcts, 25.0, 15.0, 0, 20.0, 0, 1.0),
                make_vehicle(2, K::Mcts, 45.0, 15.0, 0, 15.0, 0, 1.0)};
  return c;
}

inline ScenarioConfig double_merge_scenario() {
  ScenarioConfig c;
  c.name = "double_merge";
  c.road = {3, 3.5, 1000.0};
  c.search.iterations = 1000;
  c.search.max_depth = 20;
  c.max_epochs = 20;
  using K = ControllerKind;
  c.vehicles = {make_vehicle(0, K::Mcts, 5.0, 25.0, 0, 25.0, 0, 1.0),
                make_vehicle(1, K::Mcts, 5.0, 25.0, 2, 25.0, 2, 1.0),
                make_vehicle(2, K::Parked, 120.0, 0.0, 2, 0.0, 2, 1.0),
                make_vehicle(3, K::Parked, 135.0, 0.0, 2, 0.0, 2, 1.0),
                make_vehicle(4, K::Parked, 120.0, 0.0, 0, 0.0, 0, 1.0),
                make_vehicle(5, K::Parked, 135.0, 0.0, 0, 0.0, 0, 1.0)};
  return c;
}

/// Overrides the speed of the oncoming vehicles (v0 and v_des).
inline void set_oncoming_speed(ScenarioConfig& c, double speed) {
  for (auto& v : c.vehicles) {
    if (!v.oncoming) continue;
    v.v0 = -speed;
    v.v_des = speed;
  }
}

inline ScenarioConfig bottleneck_scenario(double red_speed = 13.0) {
  ScenarioConfig c;
  c.name = "bottleneck";
  c.road = {2, 3.5, 1000.0};
  c.search.iterations = 2000;
  c.search.max_depth = 6;
  c.max_epochs = 20;
  using K = ControllerKind;
  VehicleConfig red = make_vehicle(1, K::ConstantVelocity, 195.0, -red_speed, 1, red_speed, 1, 1.0);
  red.oncoming = true;
  c.vehicles = {make_vehicle(0, K::Mcts, 5.0, 10.0, 0, 15.0, 0, 1.0), red,
                make_vehicle(2, K::Parked, 100.0, 0.0, 0, 0.0, 0, 1.0)};
  return c;
}

inline ScenarioConfig builtin(std::string_view name) {
  ScenarioConfig c;
  if (name == "overtake")
    c = overtake_scenario();
  else if (name == "double_merge")
    c = double_merge_scenario();
  else if (name == "bottleneck")
    c = bottleneck_scenario();
  else
    throw ConfigError("scenario: unknown builtin '" + std::string(name) + "'");
  validate(c);
  return c;
}

}  // namespace decoc
