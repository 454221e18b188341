#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "decoc/actions.hpp"
#include "decoc/reward.hpp"
#include "decoc/scenarios.hpp"
#include "decoc/world.hpp"

namespace decoc {

/// Road-traffic model seen by one planning vehicle. Every non-parked vehicle is a
/// search participant with the same reward machinery; parked vehicles are static
/// obstacles. Search agent i maps to world.vehicles[participant(i)].
class DrivingDomain {
 public:
  using State = WorldState;
  static constexpr std::size_t kMaxVehicles = 16;

  explicit DrivingDomain(const ScenarioConfig& config)
      : road_(config.road), dyn_(config.dynamics), macros_(config.macros), weights_(config.reward) {
    if (config.vehicles.size() > kMaxVehicles)
      throw std::invalid_argument("driving domain: at most 16 vehicles");
    for (std::size_t k = 0; k < config.vehicles.size(); ++k) {
      const auto& v = config.vehicles[k];
      desires_.push_back(v.desire());
      if (v.controller != ControllerKind::Parked) participants_.push_back(k);
    }
  }

  std::size_t agent_count() const { return participants_.size(); }
  std::size_t participant(std::size_t agent) const { return participants_.at(agent); }
  std::span<const std::size_t> participants() const { return participants_; }

  /// Search agent index of a vehicle index, if it participates.
  std::optional<std::size_t> agent_of_vehicle(std::size_t vehicle_index) const {
    for (std::size_t i = 0; i < participants_.size(); ++i)
      if (participants_[i] == vehicle_index) return i;
    return std::nullopt;
  }

  MacroSet available_macros(const State& s, std::size_t agent) const {
    const std::size_t v = participants_[agent];
    return decoc::available_macros(s, s.vehicles[v].id, desires_[v], road_, macros_);
  }

  PrimitiveSet primitives(const State& s, std::size_t agent, MacroKind macro) const {
    const PrimitiveSet feasible = feasible_primitives(s.vehicles[participants_[agent]], road_, dyn_);
    if (macro == MacroKind::Root) return feasible;
    return feasible & primitive_set(macro);
  }

  int macro_target(const State& s, std::size_t agent, MacroKind macro) const {
    if (macro != MacroKind::Overtake) return -1;
    const std::size_t v = participants_[agent];
    const auto t = overtake_target(s, s.vehicles[v].id, desires_[v], road_, macros_);
    return t ? static_cast<int>(*t) : -1;
  }

  double termination_probability(const State& s, std::size_t agent, MacroKind macro,
                                 int target) const {
    const std::size_t v = participants_[agent];
    std::optional<AgentId> t;
    if (target >= 0) t = static_cast<AgentId>(target);
    if (macro == MacroKind::Overtake && !t) return 1.0;
    return decoc::termination_probability(macro, s, s.vehicles[v].id, desires_[v], t, road_,
                                          macros_);
  }

  /// Advances every vehicle; parked vehicles hold still. Returns true on collision.
  bool step(const State& s, std::span<const Primitive> joint, State& next,
            std::span<double> rewards) const {
    const std::size_t n = s.vehicles.size();
    std::array<Primitive, kMaxVehicles> all;
    all.fill(Primitive::DoNothing);
    for (std::size_t i = 0; i < participants_.size(); ++i) all[participants_[i]] = joint[i];
    std::array<std::uint8_t, kMaxVehicles> collided{};
    next.epoch = s.epoch + 1;
    next.time = next.epoch * dyn_.step_length;
    next.vehicles.resize(n);
    const bool any = step_in_place(s.vehicles, std::span<const Primitive>(all.data(), n),
                                   next.vehicles, std::span<std::uint8_t>(collided.data(), n),
                                   road_, dyn_);
    for (std::size_t i = 0; i < participants_.size(); ++i) {
      const std::size_t v = participants_[i];
      rewards[i] = ego_reward(s.vehicles[v], next.vehicles[v], all[v], collided[v] != 0,
                              desires_[v], weights_, road_.lane_width);
    }
    return any;
  }

  double lambda(std::size_t agent) const { return desires_[participants_[agent]].lambda; }

  /// Overtake rollout heuristic: move left behind the target, accelerate beside
  /// it, return right once clear.
  std::optional<Primitive> heuristic_primitive(const State& s, std::size_t agent, MacroKind macro,
                                               int target) const {
    if (macro != MacroKind::Overtake || target < 0) return std::nullopt;
    const std::size_t v = participants_[agent];
    const auto& ego = s.vehicles[v];
    const auto& tgt = s.vehicle(static_cast<AgentId>(target));
    const double clearance = ego.length + macros_.overtake_margin;
    const bool ahead = ego.direction() * (ego.x - tgt.x) > clearance;
    const int lane = ego.lane(road_.lane_width);
    if (!ahead && lane == tgt.lane(road_.lane_width))
      return ego.oncoming ? Primitive::LaneChangeRight : Primitive::LaneChangeLeft;
    if (!ahead)
      return ego.speed() < desires_[v].v_des ? Primitive::Accelerate : Primitive::DoNothing;
    if (lane != desires_[v].l_des)
      return lane > desires_[v].l_des ? Primitive::LaneChangeRight : Primitive::LaneChangeLeft;
    return Primitive::DoNothing;
  }

  const AgentDesire& desire(std::size_t vehicle_index) const { return desires_[vehicle_index]; }
  const RoadGeometry& road() const { return road_; }
  const DynamicsParams& dynamics() const { return dyn_; }
  const MacroParams& macro_params() const { return macros_; }
  const RewardWeights& weights() const { return weights_; }

 private:
  RoadGeometry road_;
  DynamicsParams dyn_;
  MacroParams macros_;
  RewardWeights weights_;
  std::vector<AgentDesire> desires_;     // per vehicle index
  std::vector<std::size_t> participants_;
};

static_assert(SearchDomain<DrivingDomain>);

}  // namespace decoc
