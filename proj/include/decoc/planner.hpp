#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "decoc/domain.hpp"
#include "decoc/reward.hpp"
#include "decoc/scenarios.hpp"
#include "decoc/search.hpp"
#include "decoc/world.hpp"

namespace decoc {

enum class TerminalCause : std::uint8_t { MaxEpochs, Collision, DesiresSatisfied };

inline std::string_view terminal_cause_name(TerminalCause c) {
  switch (c) {
    case TerminalCause::MaxEpochs: return "max_epochs";
    case TerminalCause::Collision: return "collision";
    case TerminalCause::DesiresSatisfied: return "desires_satisfied";
  }
  return "unknown";
}

struct AgentEpoch {
  AgentId id = 0;
  Primitive primitive = Primitive::DoNothing;
  MacroKind macro = MacroKind::Root;  // Root for scripted agents and flat search
  bool planned = false;               // chosen by a search
  double ego_reward = 0.0;
  double cooperative_reward = 0.0;
  std::vector<Primitive> plan;        // own part of the principal plan
  MacroKind plan_macro = MacroKind::Root;
};

struct EpochRecord {
  WorldState state;  // at the start of the epoch
  std::vector<AgentEpoch> agents;
  std::vector<TrajectorySegment> segments;
};

struct EpisodeLog {
  std::string scenario;
  bool flat = false;
  std::vector<EpochRecord> epochs;
  WorldState final_state;
  TerminalCause cause = TerminalCause::MaxEpochs;
};

/// Seed of one search: depends on episode seed, epoch and vehicle only.
inline std::uint64_t derive_seed(std::uint64_t seed, int epoch, AgentId id) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) * 0xBF58476D1CE4E5B9ull +
                    static_cast<std::uint64_t>(id) * 0x94D049BB133111EBull + 0x2545F4914F6CDD1Dull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline bool desires_satisfied(const ScenarioConfig& config, const WorldState& world) {
  for (std::size_t k = 0; k < config.vehicles.size(); ++k) {
    const auto& vc = config.vehicles[k];
    if (vc.controller != ControllerKind::Mcts) continue;
    const auto& s = world.vehicles[k];
    if (std::abs(s.speed() - vc.v_des) > config.macros.velocity_tolerance) return false;
    if (s.lane(config.road.lane_width) != vc.l_des) return false;
  }
  return true;
}

/// Decentralized closed-loop execution: every MCTS vehicle plans with its own
/// tree, scripted vehicles follow their fixed policy, the joint action executes.
inline EpisodeLog run_episode(const ScenarioConfig& config, int max_epochs, std::uint64_t seed) {
  validate(config);
  const DrivingDomain domain(config);
  EpisodeLog log;
  log.scenario = config.name;
  log.flat = config.search.flat;
  WorldState world = config.initial_world();
  if (has_overlap(world)) throw ConfigError("vehicles: initial placement collides");

  const std::size_t n = config.vehicles.size();
  // MA carried between epochs in hierarchical mode, per vehicle index.
  std::vector<AgentContext> carried(n);
  int satisfied_streak = 0;
  log.cause = TerminalCause::MaxEpochs;

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    EpochRecord rec;
    rec.state = world;
    rec.agents.resize(n);
    std::vector<Primitive> joint(n, Primitive::DoNothing);

    for (std::size_t k = 0; k < n; ++k) {
      const auto& vc = config.vehicles[k];
      AgentEpoch& a = rec.agents[k];
      a.id = vc.id;
      if (vc.controller != ControllerKind::Mcts) continue;
      const std::size_t ego = *domain.agent_of_vehicle(k);
      SearchParams params = config.search;
      params.seed = derive_seed(seed, epoch, vc.id);
      std::vector<AgentContext> root(domain.agent_count());
      if (params.mode == ControlMode::Hierarchical && !params.flat &&
          carried[k].active != MacroKind::Root) {
        const double beta = domain.termination_probability(world, ego, carried[k].active,
                                                           carried[k].target);
        if (beta < 1.0) root[ego] = carried[k];
      }
      DecoupledSearch<DrivingDomain> search(domain, params);
      const SearchResult r = search.run(world, ego, root);
      joint[k] = r.primitive;
      a.primitive = r.primitive;
      a.macro = r.macro;
      a.planned = true;
      for (const auto& step : r.principal_plan) a.plan.push_back(step.decisions[ego].primitive);
      if (!r.principal_plan.empty()) a.plan_macro = r.principal_plan.front().decisions[ego].macro;
      carried[k] = AgentContext{r.macro, r.macro_target, 0};
      if (params.flat) carried[k] = AgentContext{};
    }

    StepResult res = step(world, joint, config.road, config.dynamics);
    const bool collided = collision_check(res.segments);

    // Rewards of the executed transition, from each vehicle's own point of view.
    std::vector<double> ego_rewards(domain.agent_count(), 0.0);
    {
      WorldState next;
      std::vector<Primitive> pj(domain.agent_count());
      for (std::size_t i = 0; i < domain.agent_count(); ++i) pj[i] = joint[domain.participant(i)];
      domain.step(world, pj, next, ego_rewards);
    }
    for (std::size_t i = 0; i < domain.agent_count(); ++i) {
      const std::size_t k = domain.participant(i);
      rec.agents[k].ego_reward = ego_rewards[i];
      rec.agents[k].cooperative_reward = cooperative_reward(i, ego_rewards, domain.lambda(i));
    }
    rec.segments = std::move(res.segments);
    for (std::size_t k = 0; k < n; ++k) rec.agents[k].primitive = joint[k];
    log.epochs.push_back(std::move(rec));
    world = std::move(res.next);

    if (collided) {
      log.cause = TerminalCause::Collision;
      break;
    }
    satisfied_streak = desires_satisfied(config, world) ? satisfied_streak + 1 : 0;
    if (satisfied_streak >= 2) {
      log.cause = TerminalCause::DesiresSatisfied;
      break;
    }
  }
  log.final_state = world;
  return log;
}

inline EpisodeLog run_episode(const ScenarioConfig& config, std::uint64_t seed) {
  return run_episode(config, config.max_epochs, seed);
}

struct Divergence {
  int epoch = 0;
  AgentId agent = 0;
  Primitive planned = Primitive::DoNothing;
  Primitive executed = Primitive::DoNothing;
};

/// Epochs where a planning vehicle executed something other than the second
/// step of its previous principal plan.
inline std::vector<Divergence> replan_consistency_check(const EpisodeLog& log) {
  std::vector<Divergence> out;
  for (std::size_t e = 1; e < log.epochs.size(); ++e) {
    const auto& prev = log.epochs[e - 1];
    const auto& cur = log.epochs[e];
    for (std::size_t k = 0; k < cur.agents.size() && k < prev.agents.size(); ++k) {
      const auto& p = prev.agents[k];
      const auto& c = cur.agents[k];
      if (!p.planned || !c.planned || p.plan.size() < 2) continue;
      if (p.plan[1] != c.primitive)
        out.push_back({static_cast<int>(e), c.id, p.plan[1], c.primitive});
    }
  }
  return out;
}

/// True iff no two footprints overlapped at any executed sub-step sample.
inline bool episode_collision_free(const EpisodeLog& log) {
  for (const auto& e : log.epochs)
    if (collision_check(e.segments)) return false;
  return true;
}

}  // namespace decoc
