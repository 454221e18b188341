#include <gtest/gtest.h>

#include <set>

#include "decoc/planner.hpp"

using namespace decoc;

namespace {

ScenarioConfig small(const char* name, int iterations = 60, int depth = 6) {
  ScenarioConfig c = builtin(name);
  c.search.iterations = iterations;
  c.search.max_depth = depth;
  return c;
}

}  // namespace

TEST(Planner, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (int e = 0; e < 20; ++e)
      for (AgentId a = 0; a < 3; ++a) seen.insert(derive_seed(s, e, a));
  EXPECT_EQ(seen.size(), 4u * 20u * 3u);
  EXPECT_EQ(derive_seed(7, 3, 1), derive_seed(7, 3, 1));
}

TEST(Planner, EpisodeIsDeterministic) {
  const auto c = small("overtake");
  const auto a = run_episode(c, 6, 11);
  const auto b = run_episode(c, 6, 11);
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    EXPECT_EQ(a.epochs[e].state, b.epochs[e].state);
    for (std::size_t k = 0; k < a.epochs[e].agents.size(); ++k) {
      EXPECT_EQ(a.epochs[e].agents[k].primitive, b.epochs[e].agents[k].primitive);
      EXPECT_EQ(a.epochs[e].agents[k].plan, b.epochs[e].agents[k].plan);
    }
  }
  EXPECT_EQ(a.final_state, b.final_state);
}

TEST(Planner, EpochsChainThroughTheWorldModel) {
  const auto c = small("overtake");
  const auto log = run_episode(c, 5, 3);
  ASSERT_FALSE(log.epochs.empty());
  EXPECT_EQ(log.epochs.front().state, c.initial_world());
  for (std::size_t e = 0; e < log.epochs.size(); ++e) {
    const auto& rec = log.epochs[e];
    std::vector<Primitive> joint;
    for (const auto& a : rec.agents) joint.push_back(a.primitive);
    const auto next = step(rec.state, joint, c.road, c.dynamics).next;
    const auto& expected = e + 1 < log.epochs.size() ? log.epochs[e + 1].state : log.final_state;
    EXPECT_EQ(next, expected);
    EXPECT_EQ(rec.segments.size(), rec.agents.size());
  }
}

TEST(Planner, PlansStartWithTheExecutedAction) {
  const auto log = run_episode(small("overtake"), 4, 5);
  for (const auto& rec : log.epochs)
    for (const auto& a : rec.agents) {
      ASSERT_TRUE(a.planned);
      if (!a.plan.empty()) EXPECT_EQ(a.plan.front(), a.primitive);
    }
}

TEST(Planner, ScriptedVehiclesFollowTheirPolicy) {
  const auto log = run_episode(small("bottleneck"), 4, 1);
  for (const auto& rec : log.epochs) {
    EXPECT_TRUE(rec.agents[0].planned);
    EXPECT_FALSE(rec.agents[1].planned);
    EXPECT_EQ(rec.agents[1].primitive, Primitive::DoNothing);
    EXPECT_FALSE(rec.agents[2].planned);
  }
  EXPECT_DOUBLE_EQ(log.final_state.vehicles[2].x, 100.0);
}

TEST(Planner, FlatEpisodesCarryNoMacros) {
  auto c = small("overtake");
  c.search.flat = true;
  const auto log = run_episode(c, 3, 2);
  EXPECT_TRUE(log.flat);
  for (const auto& rec : log.epochs)
    for (const auto& a : rec.agents) EXPECT_EQ(a.macro, MacroKind::Root);
}

TEST(Planner, CooperativeRewardAggregatesEgoRewards) {
  const auto log = run_episode(small("overtake"), 3, 9);
  for (const auto& rec : log.epochs) {
    double total = 0.0;
    for (const auto& a : rec.agents) total += a.ego_reward;
    for (const auto& a : rec.agents) EXPECT_NEAR(a.cooperative_reward, total, 1e-9);
  }
}

TEST(Planner, ReplanConsistencyFlagsDivergence) {
  EpisodeLog log;
  log.epochs.resize(3);
  for (auto& rec : log.epochs) rec.agents.resize(1);
  for (auto& rec : log.epochs) rec.agents[0].planned = true;
  using P = Primitive;
  log.epochs[0].agents[0].primitive = P::LaneChangeLeft;
  log.epochs[0].agents[0].plan = {P::LaneChangeLeft, P::Accelerate, P::DoNothing};
  log.epochs[1].agents[0].primitive = P::Accelerate;
  log.epochs[1].agents[0].plan = {P::Accelerate, P::DoNothing};
  log.epochs[2].agents[0].primitive = P::Decelerate;
  const auto d = replan_consistency_check(log);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].epoch, 2);
  EXPECT_EQ(d[0].planned, P::DoNothing);
  EXPECT_EQ(d[0].executed, P::Decelerate);
}

TEST(Planner, DesiresSatisfiedChecksSpeedAndLane) {
  const auto c = builtin("double_merge");
  EXPECT_TRUE(desires_satisfied(c, c.initial_world()));
  const auto o = builtin("overtake");
  EXPECT_FALSE(desires_satisfied(o, o.initial_world()));
}

TEST(Planner, HierarchicalModeRuns) {
  auto c = small("overtake");
  c.search.mode = ControlMode::Hierarchical;
  const auto log = run_episode(c, 4, 4);
  EXPECT_FALSE(log.epochs.empty());
  EXPECT_EQ(episode_collision_free(log), log.cause != TerminalCause::Collision);
}
