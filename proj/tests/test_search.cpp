#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "decoc/search.hpp"
#include "toy_domains.hpp"

using namespace decoc;

namespace {

SearchParams params(int iterations, int depth, std::uint64_t seed, double epsilon = 0.1) {
  SearchParams p;
  p.iterations = iterations;
  p.max_depth = depth;
  p.seed = seed;
  p.epsilon = epsilon;
  p.gamma = 0.9;
  return p;
}

// Interval-scan oracle for the bounded return of the entry decided at step d.
double scan_return(const std::vector<double>& r, const std::vector<bool>& terminated,
                   std::size_t d, double gamma, bool to_end) {
  double g = 0.0, discount = 1.0;
  for (std::size_t k = d; k < r.size(); ++k) {
    g += discount * r[k];
    discount *= gamma;
    if (!to_end && terminated[k]) break;
  }
  return g;
}

// Checks every per-agent table of every node against the brute-force
// marginalization over the node's joint-action edges.
template <class Search>
void expect_marginal_consistency(const Search& search, std::size_t agents) {
  const auto& nodes = search.nodes();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto& node = nodes[k];
    std::uint32_t edge_visits = 0;
    for (const auto& e : node.edges) edge_visits += e.n;
    // A node is a leaf once when it is expanded, and on every visit once it
    // can no longer be extended.
    if (node.terminal || node.depth >= search.params().max_depth)
      ASSERT_TRUE(node.edges.empty());
    else
      ASSERT_EQ(node.visits, edge_visits + (k == 0 ? 0u : 1u));
    for (std::size_t i = 0; i < agents; ++i) {
      std::map<int, std::vector<JointStat>> by_primitive, by_macro;
      for (const auto& e : node.edges) {
        const auto& d = e.decisions[i];
        const int prim_code = static_cast<int>(d.macro) * 8 + static_cast<int>(d.primitive);
        std::vector<int> acts(agents, -1);
        acts[i] = prim_code;
        by_primitive[prim_code].push_back({acts, e.n, e.q_primitive[i]});
        if (d.selected) {
          acts[i] = static_cast<int>(d.macro);
          by_macro[0].push_back({acts, e.n, e.q_macro[i]});
        }
      }
      const auto& t = node.agents[i];
      for (std::size_t m = 0; m < kMacroKindCount; ++m) {
        for (std::size_t p = 0; p < kPrimitiveCount; ++p) {
          const int code = static_cast<int>(m) * 8 + static_cast<int>(p);
          const auto& stat = t.primitive[m][p];
          auto it = by_primitive.find(code);
          if (it == by_primitive.end()) {
            ASSERT_EQ(stat.n, 0u);
            continue;
          }
          std::uint32_t n = 0;
          for (const auto& j : it->second) n += j.n;
          ASSERT_EQ(stat.n, n);
          ASSERT_NEAR(stat.q, *marginal_q(it->second, i, code), 1e-9);
        }
        if (m == 0) continue;
        std::uint32_t n = 0;
        std::vector<JointStat> js;
        for (const auto& j : by_macro[0])
          if (j.actions[i] == static_cast<int>(m)) {
            n += j.n;
            js.push_back(j);
          }
        ASSERT_EQ(t.macro[m].n, n);
        if (n > 0) ASSERT_NEAR(t.macro[m].q, *marginal_q(js, i, static_cast<int>(m)), 1e-9);
      }
    }
  }
}

}  // namespace

TEST(Uct, ValueExamples) {
  EXPECT_TRUE(std::isinf(uct_value({0, 0.0}, 10, 2.0)));
  EXPECT_DOUBLE_EQ(uct_value({1, 1.0}, 0, 1.0), 1.0);
  EXPECT_NEAR(uct_value({1, 1.0}, static_cast<std::uint32_t>(std::exp(1.0)), 1.0),
              1.0 + std::sqrt(std::log(2.0)), 1e-12);
  // ln e = 1 for the real-valued parent count.
  EXPECT_DOUBLE_EQ(1.0 + 1.0 * std::sqrt(std::log(std::exp(1.0)) / 1.0), 2.0);
  EXPECT_DOUBLE_EQ(uct_value({4, 3.0}, 100, 0.0), 3.0);
}

TEST(Uct, ArgmaxTiesPickLowestIndex) {
  const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
  EXPECT_EQ(argmax_index(v), 1u);
  EXPECT_THROW(argmax_index(std::vector<double>{}), std::invalid_argument);
}

TEST(EpsilonGreedy, ProbabilitiesSumToOne) {
  const std::vector<double> v{0.1, 0.9, 0.3, 0.2, 0.4};
  double total = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) total += epsilon_greedy_probability(v, 0.1, k);
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(epsilon_greedy_probability(v, 0.1, 1), 0.92, 1e-12);
  EXPECT_NEAR(epsilon_greedy_probability(v, 0.1, 0), 0.02, 1e-12);
  EXPECT_NEAR(epsilon_greedy_probability(v, 1.0, 3), 0.2, 1e-12);
}

TEST(EpsilonGreedy, EmpiricalFrequenciesMatch) {
  const std::vector<double> v{0.1, 0.9, 0.3, 0.2, 0.4};
  for (double eps : {0.0, 0.1, 0.5, 1.0}) {
    std::mt19937_64 rng(3);
    std::vector<int> counts(v.size(), 0);
    const int n = 10000;
    for (int k = 0; k < n; ++k) ++counts[epsilon_greedy_select(v, eps, rng)];
    for (std::size_t a = 0; a < v.size(); ++a)
      EXPECT_NEAR(static_cast<double>(counts[a]) / n, epsilon_greedy_probability(v, eps, a), 0.02)
          << "eps " << eps << " action " << a;
  }
}

TEST(Marginal, Examples) {
  const std::vector<JointStat> joints{{{0, 0}, 2, 1.0}, {{0, 1}, 1, 4.0}, {{1, 1}, 5, 9.0}};
  EXPECT_DOUBLE_EQ(*marginal_q(joints, 0, 0), 2.0);
  EXPECT_DOUBLE_EQ(*marginal_q(std::vector<JointStat>{{{3}, 4, 7.0}}, 0, 3), 7.0);
  EXPECT_FALSE(marginal_q(joints, 0, 4).has_value());
}

TEST(Marginal, TablesMatchBruteForceAfterSearch) {
  for (std::uint64_t trial = 0; trial < 60; ++trial) {
    const std::size_t agents = 1 + trial % 4;
    const int actions = 1 + static_cast<int>(trial % 5);
    toy::RandomDomain domain(agents, actions, trial * 977 + 1);
    DecoupledSearch<toy::RandomDomain> search(domain, params(150, 6, trial));
    search.run({}, 0);
    expect_marginal_consistency(search, agents);
  }
}

TEST(BoundedReturn, OvertakeTimeline) {
  // Single agent: Overtake chosen under the root at t=0 ends at t=3; the root
  // itself runs until the iteration ends at t=4.
  const double g = 0.9;
  const std::vector<double> r{1.0, -2.0, 4.0, 8.0};
  toy::TimelineDomain domain(r);
  DecoupledSearch<toy::TimelineDomain> search(domain, params(1, 4, 0, 0.0));
  search.run(0, 0);
  const auto& root = search.nodes().front().agents[0];
  const double g_overtake = r[0] + g * r[1] + g * g * r[2] + g * g * g * r[3];
  const double g_left = r[0] + g * r[1] + g * g * r[2];
  EXPECT_EQ(root.macro[static_cast<std::size_t>(MacroKind::Overtake)].n, 1u);
  EXPECT_DOUBLE_EQ(root.macro[static_cast<std::size_t>(MacroKind::Overtake)].q, g_overtake);
  const auto& left = root.primitive[static_cast<std::size_t>(MacroKind::Overtake)]
                                   [static_cast<std::size_t>(Primitive::LaneChangeLeft)];
  EXPECT_EQ(left.n, 1u);
  EXPECT_DOUBLE_EQ(left.q, g_left);
  ASSERT_EQ(search.last_trace().size(), 4u);
  EXPECT_TRUE(search.last_trace().steps[2][0].macro_terminated);
}

TEST(BoundedReturn, MatchesIntervalScanOnRandomTraces) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> reward(-5.0, 5.0), coin(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t T = 1 + static_cast<std::size_t>(coin(rng) * 15);
    std::vector<double> r(T);
    std::vector<bool> term(T);
    RewardTrace trace;
    for (std::size_t k = 0; k < T; ++k) {
      r[k] = reward(rng);
      term[k] = coin(rng) < 0.3;
      TraceEntry e;
      e.ego_reward = r[k];
      e.macro = MacroKind::MakeRoom;
      e.macro_terminated = term[k];
      trace.steps.push_back({e});
    }
    const double gamma = trial % 2 ? 0.9 : 1.0;
    const auto ends = macro_end_steps(trace, 0);
    const auto b = bounded_returns(r, ends, gamma);
    for (std::size_t d = 0; d < T; ++d) {
      ASSERT_NEAR(b.primitive[d], scan_return(r, term, d, gamma, false), 1e-9);
      ASSERT_NEAR(b.macro[d], scan_return(r, term, d, gamma, true), 1e-9);
      // No reward past the parent's termination contributes.
      for (std::size_t k = d; k < T; ++k)
        if (term[k]) {
          ASSERT_LE(ends[d], k + 1);
          break;
        }
    }
  }
}

TEST(BoundedReturn, IncrementalMeanArithmetic) {
  AgentStat s;
  s.update(4.0);
  EXPECT_DOUBLE_EQ(s.q, 4.0);
  s.update(2.0);
  EXPECT_DOUBLE_EQ(s.q, 3.0);
  EXPECT_EQ(s.n, 2u);
  const std::vector<double> ones{1, 1, 1};
  const std::vector<std::size_t> end{3, 3, 3};
  EXPECT_DOUBLE_EQ(bounded_returns(ones, end, 1.0).primitive[0], 3.0);
}

TEST(Search, FindsDeceptiveOptimum) {
  toy::DeceptiveChain domain;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SearchParams p = params(1000, toy::DeceptiveChain::kHorizon, seed);
    p.flat = true;
    p.gamma = 1.0;
    DecoupledSearch<toy::DeceptiveChain> search(domain, p);
    hits += search.run({}, 0).primitive == Primitive::Decelerate;
  }
  EXPECT_GE(hits, 19);
}

TEST(Search, FlatRootExploresExactlyTheFeasibleSet) {
  toy::RandomDomain domain(2, 4, 99);
  SearchParams p = params(200, 5, 1);
  p.flat = true;
  DecoupledSearch<toy::RandomDomain> search(domain, p);
  const auto r = search.run({}, 0);
  std::size_t explored = 0;
  for (const auto& s : r.root_stats) {
    EXPECT_FALSE(s.is_macro);
    EXPECT_EQ(s.parent, MacroKind::Root);
    explored += s.agent == 0;
  }
  EXPECT_EQ(explored, 4u);
  EXPECT_EQ(r.macro, MacroKind::Root);
}

TEST(Search, DeterministicForFixedSeed) {
  toy::RandomDomain domain(3, 5, 1234);
  auto once = [&] {
    DecoupledSearch<toy::RandomDomain> search(domain, params(400, 8, 77));
    const auto r = search.run({}, 1);
    std::vector<double> qs;
    for (const auto& s : r.root_stats) qs.push_back(s.q);
    return std::pair{r.primitive, qs};
  };
  EXPECT_EQ(once(), once());
}

TEST(Search, SingleIterationReturnsTheExploredAction) {
  toy::RandomDomain domain(1, 5, 8);
  DecoupledSearch<toy::RandomDomain> search(domain, params(1, 4, 0, 0.0));
  const auto r = search.run({}, 0);
  std::size_t explored = 0;
  Primitive only = Primitive::DoNothing;
  for (const auto& s : r.root_stats)
    if (!s.is_macro) {
      ++explored;
      only = s.primitive;
    }
  EXPECT_EQ(explored, 1u);
  EXPECT_EQ(r.primitive, only);
}

TEST(Search, TreeRespectsDepthAndExpandsOneNodePerIteration) {
  toy::RandomDomain domain(2, 3, 5, 0.0);
  DecoupledSearch<toy::RandomDomain> deep(domain, params(300, 40, 2));
  deep.run({}, 0);
  EXPECT_EQ(deep.nodes().size(), 301u);
  DecoupledSearch<toy::RandomDomain> shallow(domain, params(300, 3, 2));
  shallow.run({}, 0);
  EXPECT_LT(shallow.nodes().size(), 301u);
  for (const auto& n : shallow.nodes()) EXPECT_LE(n.depth, 3);
}

TEST(Search, CollisionMakesBranchTerminal) {
  toy::RandomDomain domain(2, 5, 17, 0.5);
  DecoupledSearch<toy::RandomDomain> search(domain, params(200, 6, 3));
  search.run({}, 0);
  bool any_terminal = false;
  for (const auto& n : search.nodes()) {
    if (!n.terminal) continue;
    any_terminal = true;
    EXPECT_TRUE(n.edges.empty());
  }
  EXPECT_TRUE(any_terminal);
}

TEST(Search, RejectsBadParameters) {
  toy::RandomDomain domain(1, 2, 1);
  SearchParams p;
  p.iterations = 0;
  EXPECT_THROW((DecoupledSearch<toy::RandomDomain>(domain, p)), std::invalid_argument);
  p = SearchParams{};
  p.epsilon = 1.5;
  EXPECT_THROW((DecoupledSearch<toy::RandomDomain>(domain, p)), std::invalid_argument);
}
