#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "decoc/world.hpp"

namespace decoc {

// Hierarchical action graph: the root macro-action selects one of four
// macro-actions, each of which selects primitives from its own action set.

enum class MacroKind : std::uint8_t {
  Root = 0,
  Overtake = 1,
  MergeIn = 2,
  MakeRoom = 3,
  ToDesiredVelocity = 4,
};

inline constexpr std::size_t kMacroKindCount = 5;
inline constexpr std::array<MacroKind, 4> kMacroActions = {
    MacroKind::Overtake, MacroKind::MergeIn, MacroKind::MakeRoom, MacroKind::ToDesiredVelocity};

inline constexpr std::string_view macro_name(MacroKind k) {
  switch (k) {
    case MacroKind::Root: return "root";
    case MacroKind::Overtake: return "overtake";
    case MacroKind::MergeIn: return "merge_in";
    case MacroKind::MakeRoom: return "make_room";
    case MacroKind::ToDesiredVelocity: return "to_desired_velocity";
  }
  return "unknown";
}

inline constexpr std::string_view macro_label(MacroKind k) {
  switch (k) {
    case MacroKind::Root: return "Root";
    case MacroKind::Overtake: return "Overtake";
    case MacroKind::MergeIn: return "Merge In";
    case MacroKind::MakeRoom: return "Make Room";
    case MacroKind::ToDesiredVelocity: return "To Desired Velocity";
  }
  return "Unknown";
}

class MacroSet {
 public:
  constexpr MacroSet() = default;
  constexpr MacroSet(std::initializer_list<MacroKind> ks) {
    for (auto k : ks) insert(k);
  }
  constexpr void insert(MacroKind k) { bits_ |= bit(k); }
  constexpr bool contains(MacroKind k) const { return (bits_ & bit(k)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  constexpr bool operator==(const MacroSet&) const = default;

  constexpr MacroKind nth(std::size_t k) const {
    for (auto m : kMacroActions) {
      if (!contains(m)) continue;
      if (k == 0) return m;
      --k;
    }
    return MacroKind::MakeRoom;
  }
  std::vector<MacroKind> to_vector() const {
    std::vector<MacroKind> out;
    for (auto m : kMacroActions)
      if (contains(m)) out.push_back(m);
    return out;
  }

 private:
  static constexpr std::uint8_t bit(MacroKind k) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(k));
  }
  std::uint8_t bits_ = 0;
};

struct AgentDesire {
  double v_des = 0.0;  // desired speed, m/s (magnitude)
  int l_des = 0;
  double lambda = 1.0;  // cooperation factor

  bool operator==(const AgentDesire&) const = default;
};

/// Thresholds behind the initiation and termination conditions.
struct MacroParams {
  double lookahead = 100.0;          // range for "behind slower vehicle"
  double overtake_margin = 2.0;      // clearance = vehicle length + margin
  double velocity_tolerance = 0.5;   // "at desired velocity"
  double make_room_termination = 0.3;

  bool operator==(const MacroParams&) const = default;
};

/// Set of primitives a macro-action may choose from, before feasibility filtering.
inline PrimitiveSet primitive_set(MacroKind kind) {
  using P = Primitive;
  switch (kind) {
    case MacroKind::Overtake:
      return {P::LaneChangeLeft, P::LaneChangeRight, P::Accelerate, P::DoNothing};
    case MacroKind::MergeIn:
    case MacroKind::MakeRoom:
      return PrimitiveSet::all();
    case MacroKind::ToDesiredVelocity:
      return {P::Accelerate, P::Decelerate, P::DoNothing};
    case MacroKind::Root:
      break;
  }
  throw std::invalid_argument("primitive_set: the root selects macro-actions, not primitives");
}

/// Nearest vehicle ahead in the same lane within `lookahead`, as an index into world.vehicles.
inline std::optional<std::size_t> lead_vehicle(const WorldState& world, std::size_t index,
                                               const RoadGeometry& road, double lookahead) {
  const auto& ego = world.vehicles[index];
  const int lane = ego.lane(road.lane_width);
  std::optional<std::size_t> best;
  double best_gap = lookahead;
  for (std::size_t j = 0; j < world.vehicles.size(); ++j) {
    if (j == index) continue;
    const auto& other = world.vehicles[j];
    if (other.lane(road.lane_width) != lane) continue;
    const double gap = ego.direction() * (other.x - ego.x);
    if (gap <= 0.0 || gap > best_gap) continue;
    best_gap = gap;
    best = j;
  }
  return best;
}

inline bool left_lane_exists(const VehicleState& s, const RoadGeometry& road) {
  const int lane = s.lane(road.lane_width);
  return s.oncoming ? lane - 1 >= 0 : lane + 1 < road.lane_count;
}

/// Candidate target of an overtake: a slower lead vehicle, when a left lane exists.
inline std::optional<AgentId> overtake_target(const WorldState& world, AgentId agent,
                                              const AgentDesire& desire, const RoadGeometry& road,
                                              const MacroParams& params) {
  const std::size_t idx = world.index_of(agent);
  const auto& ego = world.vehicles[idx];
  if (!left_lane_exists(ego, road)) return std::nullopt;
  const auto lead = lead_vehicle(world, idx, road, params.lookahead);
  if (!lead) return std::nullopt;
  const auto& other = world.vehicles[*lead];
  if (ego.direction() * other.v >= desire.v_des) return std::nullopt;
  return other.id;
}

inline bool initiation(MacroKind kind, const WorldState& world, AgentId agent,
                       const AgentDesire& desire, const RoadGeometry& road,
                       const MacroParams& params) {
  const auto& s = world.vehicle(agent);
  switch (kind) {
    case MacroKind::Root: return true;
    case MacroKind::Overtake: return overtake_target(world, agent, desire, road, params).has_value();
    case MacroKind::MergeIn: return s.lane(road.lane_width) != desire.l_des;
    case MacroKind::MakeRoom: return true;
    case MacroKind::ToDesiredVelocity:
      return std::abs(s.speed() - desire.v_des) > params.velocity_tolerance;
  }
  return false;
}

inline MacroSet available_macros(const WorldState& world, AgentId agent, const AgentDesire& desire,
                                 const RoadGeometry& road, const MacroParams& params) {
  MacroSet set;
  for (auto k : kMacroActions)
    if (initiation(k, world, agent, desire, road, params)) set.insert(k);
  return set;
}

/// Termination probability beta(s) of an active macro-action. `target` is the
/// vehicle being overtaken and is required for Overtake.
inline double termination_probability(MacroKind kind, const WorldState& world, AgentId agent,
                                      const AgentDesire& desire, std::optional<AgentId> target,
                                      const RoadGeometry& road, const MacroParams& params) {
  const auto& s = world.vehicle(agent);
  switch (kind) {
    case MacroKind::Root: return 0.0;
    case MacroKind::Overtake: {
      if (!target) throw std::invalid_argument("terminated: overtake without a recorded target");
      const auto& t = world.vehicle(*target);
      const double clearance = s.length + params.overtake_margin;
      return s.direction() * (s.x - t.x) > clearance ? 1.0 : 0.0;
    }
    case MacroKind::MergeIn: return s.lane(road.lane_width) == desire.l_des ? 1.0 : 0.0;
    case MacroKind::MakeRoom: return params.make_room_termination;
    case MacroKind::ToDesiredVelocity:
      return std::abs(s.speed() - desire.v_des) <= params.velocity_tolerance ? 1.0 : 0.0;
  }
  return 1.0;
}

/// Samples the termination event; `uniform01` supplies draws in [0,1) and is only
/// consulted for stochastic termination.
template <class Uniform>
bool terminated(MacroKind kind, const WorldState& world, AgentId agent, const AgentDesire& desire,
                std::optional<AgentId> target, const RoadGeometry& road,
                const MacroParams& params, Uniform&& uniform01) {
  const double beta = termination_probability(kind, world, agent, desire, target, road, params);
  if (beta <= 0.0) return false;
  if (beta >= 1.0) return true;
  return uniform01() < beta;
}

}  // namespace decoc
