#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

#include "decoc/actions.hpp"
#include "decoc/world.hpp"

namespace decoc {

/// One weight set shared by every agent's model of every agent.
struct RewardWeights {
  double collision = -1000.0;   // r_safety on collision, must be negative
  double velocity = 1.0;        // potential, per m/s of deviation
  double lane = 10.0;           // potential, per lane of deviation
  double efficiency = 1.0;      // per-step penalty per m/s of deviation
  double lane_efficiency = 2.0; // per-step penalty per lane of deviation
  double lane_change = 1.0;
  double acceleration = 0.5;
  double gamma = 0.95;

  bool operator==(const RewardWeights&) const = default;

  void validate() const {
    if (!(collision < 0.0)) throw std::invalid_argument("reward.collision must be negative");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("reward.gamma must be in [0,1]");
    for (double w : {velocity, lane, efficiency, lane_efficiency, lane_change, acceleration})
      if (!std::isfinite(w)) throw std::invalid_argument("reward weights must be finite");
  }
};

/// phi(s) = -(w_v |v - v_des| + w_lane |lane - l_des|); zero exactly at the desire.
inline double potential(const VehicleState& s, const AgentDesire& desire, const RewardWeights& w,
                        double lane_width) {
  const double dv = std::abs(s.speed() - desire.v_des);
  const double dl = std::abs(s.lane(lane_width) - desire.l_des);
  return -(w.velocity * dv + w.lane * dl);
}

inline double shaped_step_reward(double phi, double phi_next, double gamma) {
  return gamma * phi_next - phi;
}

inline double shaped_step_reward(const VehicleState& s, const VehicleState& s_next,
                                 const AgentDesire& desire, const RewardWeights& w,
                                 double lane_width) {
  return shaped_step_reward(potential(s, desire, w, lane_width),
                            potential(s_next, desire, w, lane_width), w.gamma);
}

/// Shaping over a macro-action lasting tau steps: gamma^tau phi_end - phi_start.
inline double smdp_shaped_reward(double phi_start, double phi_end, int tau, double gamma) {
  if (tau < 1) throw std::invalid_argument("smdp_shaped_reward: tau must be >= 1");
  return std::pow(gamma, tau) * phi_end - phi_start;
}

/// r_safety + r_efficiency + r_comfort for one step.
inline double action_reward(const VehicleState& s_next, Primitive action, bool collided,
                            const AgentDesire& desire, const RewardWeights& w, double lane_width) {
  const double safety = collided ? w.collision : 0.0;
  const double efficiency =
      -w.efficiency * std::abs(s_next.speed() - desire.v_des) -
      w.lane_efficiency * std::abs(s_next.lane(lane_width) - desire.l_des);
  double comfort = 0.0;
  if (action == Primitive::LaneChangeLeft || action == Primitive::LaneChangeRight)
    comfort -= w.lane_change;
  if (action == Primitive::Accelerate || action == Primitive::Decelerate)
    comfort -= w.acceleration;
  return safety + efficiency + comfort;
}

/// Ego reward r^i = r_action + gamma phi(s') - phi(s).
inline double ego_reward(const VehicleState& s, const VehicleState& s_next, Primitive action,
                         bool collided, const AgentDesire& desire, const RewardWeights& w,
                         double lane_width) {
  return action_reward(s_next, action, collided, desire, w, lane_width) +
         shaped_step_reward(s, s_next, desire, w, lane_width);
}

/// R^i = r^i + lambda * sum_{j != i} r^j.
inline double cooperative_reward(std::size_t ego, std::span<const double> ego_rewards,
                                 double lambda) {
  if (ego >= ego_rewards.size()) throw std::out_of_range("cooperative_reward: ego index");
  double others = 0.0;
  for (std::size_t j = 0; j < ego_rewards.size(); ++j)
    if (j != ego) others += ego_rewards[j];
  return ego_rewards[ego] + lambda * others;
}

}  // namespace decoc
