#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "decoc/actions.hpp"
#include "decoc/world.hpp"

namespace decoc {

enum class FinalRule : std::uint8_t { MaxVisits, MaxReward };
enum class ControlMode : std::uint8_t { Polling, Hierarchical };

struct SearchParams {
  int iterations = 1000;
  int max_depth = 20;
  double gamma = 0.95;
  double epsilon = 0.1;
  double c_uct = 2.0;
  FinalRule final_rule = FinalRule::MaxVisits;
  ControlMode mode = ControlMode::Polling;
  bool flat = false;
  bool domain_knowledge = false;
  std::uint64_t seed = 0;

  bool operator==(const SearchParams&) const = default;

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("search.iterations must be >= 1");
    if (max_depth < 1) throw std::invalid_argument("search.max_depth must be >= 1");
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
      throw std::invalid_argument("search.epsilon must be in [0,1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("search.gamma must be in [0,1]");
    if (!(c_uct >= 0.0)) throw std::invalid_argument("search.c_uct must be >= 0");
  }
};

/// Visit count and running mean return of one action of one agent.
struct AgentStat {
  std::uint32_t n = 0;
  double q = 0.0;

  void update(double g) {
    ++n;
    q += (g - q) / static_cast<double>(n);
  }
};

/// Active macro-action of one agent during an iteration. Root means the agent
/// has no running macro-action and selects a new one at the next node.
struct AgentContext {
  MacroKind active = MacroKind::Root;
  int target = -1;  // vehicle id being overtaken, -1 if none
  int start_step = 0;

  bool operator==(const AgentContext&) const = default;
};

/// What one agent chose at a node: the macro-action in effect, whether it was
/// selected at this node, and the primitive.
struct Decision {
  MacroKind macro = MacroKind::Root;
  bool selected = false;
  Primitive primitive = Primitive::DoNothing;

  std::uint64_t code() const {
    return (static_cast<std::uint64_t>(macro) << 4) | (selected ? 8u : 0u) |
           static_cast<std::uint64_t>(primitive);
  }
  bool operator==(const Decision&) const = default;
};

inline constexpr std::size_t kMaxAgents = 9;

inline std::uint64_t joint_key(std::span<const Decision> ds) {
  std::uint64_t key = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) key |= ds[i].code() << (7 * i);
  return key;
}

inline std::uint64_t primitive_key(std::span<const Decision> ds) {
  std::uint64_t key = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    key |= static_cast<std::uint64_t>(ds[i].primitive) << (3 * i);
  return key;
}

// ---------------------------------------------------------------------------
// Selection rules

/// UCB1 value. Unexplored actions map to +infinity.
inline double uct_value(const AgentStat& stat, std::uint32_t parent_n, double c_uct) {
  if (stat.n == 0) return std::numeric_limits<double>::infinity();
  const double parent = std::max<double>(1.0, parent_n);
  return stat.q + c_uct * std::sqrt(std::log(parent) / static_cast<double>(stat.n));
}

/// Index of the largest value; ties resolve to the lowest index.
inline std::size_t argmax_index(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax_index: empty action set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

/// Probability that epsilon_greedy_select returns `index`.
inline double epsilon_greedy_probability(std::span<const double> values, double epsilon,
                                         std::size_t index) {
  const double k = static_cast<double>(values.size());
  const double base = epsilon / k;
  return index == argmax_index(values) ? 1.0 - epsilon + base : base;
}

/// Argmax with probability 1 - eps + eps/|A|, any other action with eps/|A|.
template <class Rng>
std::size_t epsilon_greedy_select(std::span<const double> values, double epsilon, Rng& rng) {
  if (values.empty()) throw std::invalid_argument("epsilon_greedy_select: empty action set");
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
      std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
      return pick(rng);
    }
  }
  return argmax_index(values);
}

// ---------------------------------------------------------------------------
// Visit-weighted marginalization over joint statistics; oracle for the incremental tables.

struct JointStat {
  std::vector<int> actions;  // one action index per agent
  std::uint32_t n = 0;
  double q = 0.0;
};

/// Mean of Q(s,a) over joint actions containing `action` for `agent`, weighted by
/// N(s,a). Returns nullopt when no such joint action has been visited.
inline std::optional<double> marginal_q(std::span<const JointStat> joints, std::size_t agent,
                                        int action) {
  double weighted = 0.0;
  std::uint64_t count = 0;
  for (const auto& j : joints) {
    if (agent >= j.actions.size() || j.actions[agent] != action) continue;
    weighted += static_cast<double>(j.n) * j.q;
    count += j.n;
  }
  if (count == 0) return std::nullopt;
  return weighted / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Reward traces and hierarchically bounded returns

struct TraceEntry {
  double ego_reward = 0.0;
  MacroKind macro = MacroKind::Root;  // macro-action in effect during the step
  int macro_start = 0;
  bool macro_terminated = false;       // the macro-action ended at the end of this step
  Primitive primitive = Primitive::DoNothing;
};

/// steps[k][i]: agent i's entry for step k of one iteration.
struct RewardTrace {
  std::vector<std::vector<TraceEntry>> steps;

  std::size_t size() const { return steps.size(); }
};

/// sum_{k=begin}^{end-1} gamma^{k-begin} rewards[k]
inline double discounted_sum(std::span<const double> rewards, std::size_t begin, std::size_t end,
                             double gamma) {
  double g = 0.0, discount = 1.0;
  for (std::size_t k = begin; k < end && k < rewards.size(); ++k) {
    g += discount * rewards[k];
    discount *= gamma;
  }
  return g;
}

/// Per-step cooperative rewards R^i_k for every agent.
inline std::vector<std::vector<double>> cooperative_rewards(const RewardTrace& trace,
                                                            std::span<const double> lambdas) {
  const std::size_t agents = lambdas.size();
  std::vector<std::vector<double>> out(agents, std::vector<double>(trace.size(), 0.0));
  for (std::size_t k = 0; k < trace.size(); ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < agents; ++i) total += trace.steps[k][i].ego_reward;
    for (std::size_t i = 0; i < agents; ++i) {
      const double own = trace.steps[k][i].ego_reward;
      out[i][k] = own + lambdas[i] * (total - own);
    }
  }
  return out;
}

/// For every step, the (exclusive) step at which the macro-action active during
/// that step terminated; trace.size() when it ran to the end of the iteration.
inline std::vector<std::size_t> macro_end_steps(const RewardTrace& trace, std::size_t agent) {
  const std::size_t T = trace.size();
  std::vector<std::size_t> end(T, T);
  std::size_t open = 0;
  for (std::size_t k = 0; k < T; ++k) {
    if (trace.steps[k][agent].macro_terminated) {
      for (std::size_t m = open; m <= k; ++m) end[m] = k + 1;
      open = k + 1;
    }
  }
  return end;
}

/// Returns credited to the decisions of one agent at every step of a trace.
struct BoundedReturns {
  std::vector<double> primitive;  // bounded by the parent macro-action
  std::vector<double> macro;      // bounded by the root, i.e. the iteration end
};

inline BoundedReturns bounded_returns(std::span<const double> coop_rewards,
                                      std::span<const std::size_t> macro_end, double gamma) {
  const std::size_t T = coop_rewards.size();
  BoundedReturns out{std::vector<double>(T), std::vector<double>(T)};
  for (std::size_t d = 0; d < T; ++d) {
    out.primitive[d] = discounted_sum(coop_rewards, d, macro_end[d], gamma);
    out.macro[d] = discounted_sum(coop_rewards, d, T, gamma);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Domain interface

/// Everything the search needs to know about the problem being planned.
template <class D>
concept SearchDomain = requires(const D& d, const typename D::State& s, std::size_t agent,
                                MacroKind macro, int target, std::span<const Primitive> joint,
                                typename D::State& next, std::span<double> rewards) {
  { d.agent_count() } -> std::convertible_to<std::size_t>;
  { d.available_macros(s, agent) } -> std::same_as<MacroSet>;
  { d.primitives(s, agent, macro) } -> std::same_as<PrimitiveSet>;
  { d.macro_target(s, agent, macro) } -> std::convertible_to<int>;
  { d.termination_probability(s, agent, macro, target) } -> std::convertible_to<double>;
  { d.step(s, joint, next, rewards) } -> std::convertible_to<bool>;
  { d.lambda(agent) } -> std::convertible_to<double>;
  { d.heuristic_primitive(s, agent, macro, target) } -> std::same_as<std::optional<Primitive>>;
};

// ---------------------------------------------------------------------------
// Diagnostics

struct RootActionStat {
  std::size_t agent = 0;
  MacroKind parent = MacroKind::Root;
  bool is_macro = false;
  MacroKind macro = MacroKind::Root;
  Primitive primitive = Primitive::DoNothing;
  std::uint32_t n = 0;
  double q = 0.0;
};

struct PlanStep {
  std::vector<Decision> decisions;
  std::vector<double> ego_rewards;
  bool collided = false;
};

struct SearchResult {
  Primitive primitive = Primitive::DoNothing;
  MacroKind macro = MacroKind::Root;
  int macro_target = -1;
  std::vector<RootActionStat> root_stats;
  std::vector<PlanStep> principal_plan;
  std::size_t nodes = 0;
  bool domain_knowledge_active = false;
};

/// Symbol string of one agent's principal plan, e.g. "L L + + 0 0 R R".
inline std::string plan_string(std::span<const PlanStep> plan, std::size_t agent) {
  std::string out;
  for (const auto& step : plan) {
    if (!out.empty()) out += ' ';
    out += primitive_symbol(step.decisions[agent].primitive);
  }
  return out;
}

/// Undiscounted sum of an agent's cooperative reward along the principal plan.
inline double plan_return(std::span<const PlanStep> plan, std::size_t agent,
                          std::span<const double> lambdas) {
  double g = 0.0;
  for (const auto& step : plan) {
    double total = 0.0;
    for (double r : step.ego_rewards) total += r;
    const double own = step.ego_rewards[agent];
    g += own + lambdas[agent] * (total - own);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Search tree

struct AgentTables {
  std::array<AgentStat, kMacroKindCount> macro{};
  std::array<std::array<AgentStat, kPrimitiveCount>, kMacroKindCount> primitive{};
};

struct Edge {
  std::uint64_t key = 0;
  std::uint64_t primitive_key = 0;
  std::vector<Decision> decisions;
  std::uint32_t n = 0;
  std::vector<double> q_primitive;  // per agent
  std::vector<double> q_macro;      // per agent, meaningful where decisions[i].selected
};

template <class State>
struct SearchNode {
  State state;
  int depth = 0;
  bool terminal = false;
  std::vector<double> ego_rewards;  // of the transition into this node
  std::uint32_t visits = 0;
  std::vector<AgentTables> agents;
  std::vector<Edge> edges;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> children;

  std::optional<std::uint32_t> child(std::uint64_t prim_key) const {
    for (const auto& [k, idx] : children)
      if (k == prim_key) return idx;
    return std::nullopt;
  }
};

/// Decoupled-UCT search over macro-actions for every agent of a domain. One
/// instance owns one tree and one RNG; the tree is rebuilt by each run().
template <SearchDomain Domain>
class DecoupledSearch {
 public:
  using State = typename Domain::State;
  using Node = SearchNode<State>;

  struct PathEntry {
    std::uint32_t node = 0;
    std::uint32_t edge = 0;
  };

  DecoupledSearch(const Domain& domain, SearchParams params)
      : domain_(domain), params_(params), rng_(params.seed) {
    params_.validate();
    agents_ = domain_.agent_count();
    if (agents_ == 0 || agents_ > kMaxAgents)
      throw std::invalid_argument("search: agent count must be in [1, 9]");
    lambdas_.resize(agents_);
    for (std::size_t i = 0; i < agents_; ++i) lambdas_[i] = domain_.lambda(i);
  }

  /// Runs params.iterations iterations from `root` and selects the action of `ego`.
  SearchResult run(const State& root, std::size_t ego,
                   std::span<const AgentContext> root_context = {}) {
    if (ego >= agents_) throw std::out_of_range("search: ego index");
    reset(root, root_context);
    for (int it = 0; it < params_.iterations; ++it) iterate();
    return finalize(ego);
  }

  /// Starts a fresh tree without running iterations.
  void reset(const State& root, std::span<const AgentContext> root_context = {}) {
    nodes_.clear();
    nodes_.reserve(static_cast<std::size_t>(params_.iterations) + 1);
    root_context_.assign(agents_, AgentContext{});
    if (!root_context.empty()) {
      if (root_context.size() != agents_)
        throw std::invalid_argument("search: root context size does not match agent count");
      root_context_.assign(root_context.begin(), root_context.end());
      for (auto& c : root_context_) c.start_step = 0;
    }
    if (params_.flat) root_context_.assign(agents_, AgentContext{});
    new_node(root, 0, false, {});
  }

  /// One selection / expansion / simulation / backpropagation cycle.
  void iterate() {
    path_.clear();
    trace_.steps.clear();
    context_ = root_context_;
    std::uint32_t node = 0;
    int depth = 0;
    std::vector<Decision> decisions(agents_);
    std::vector<Primitive> joint(agents_);

    while (true) {
      if (nodes_[node].terminal || depth >= params_.max_depth) break;
      for (std::size_t i = 0; i < agents_; ++i) {
        decisions[i] = select_decision(node, i, context_[i], depth);
        joint[i] = decisions[i].primitive;
      }
      const std::uint32_t edge = find_or_add_edge(node, decisions);
      const std::uint64_t pkey = primitive_key(decisions);
      bool expanded = false;
      std::uint32_t next;
      if (auto c = nodes_[node].child(pkey)) {
        next = *c;
      } else {
        State succ;
        std::vector<double> rewards(agents_, 0.0);
        const bool collided = domain_.step(nodes_[node].state, joint, succ, rewards);
        next = new_node(std::move(succ), depth + 1, collided, std::move(rewards));
        nodes_[node].children.emplace_back(pkey, next);
        expanded = true;
      }
      path_.push_back({node, edge});
      record_step(decisions, nodes_[next].ego_rewards, nodes_[next].state, depth);
      node = next;
      ++depth;
      if (expanded) break;
    }

    if (!nodes_[node].terminal && depth < params_.max_depth)
      simulate(nodes_[node].state, depth);
    backpropagate(node);
  }

  /// Hierarchically bounded returns of the current trace, one entry per agent.
  std::vector<BoundedReturns> trace_returns() const {
    const auto coop = cooperative_rewards(trace_, lambdas_);
    std::vector<BoundedReturns> out;
    out.reserve(agents_);
    for (std::size_t i = 0; i < agents_; ++i) {
      const auto ends = macro_end_steps(trace_, i);
      out.push_back(bounded_returns(coop[i], ends, params_.gamma));
    }
    return out;
  }

  SearchResult finalize(std::size_t ego) const {
    SearchResult result;
    result.nodes = nodes_.size();
    result.domain_knowledge_active = params_.domain_knowledge && !params_.flat;
    const Node& root = nodes_.front();
    const AgentContext& ctx = root_context_[ego];

    MacroKind macro = ctx.active;
    if (needs_selection(ctx)) {
      const auto m = best_macro(root.agents[ego], domain_.available_macros(root.state, ego));
      macro = m.value_or(MacroKind::MakeRoom);
    }
    const auto prim =
        best_primitive(root.agents[ego], macro, domain_.primitives(root.state, ego, macro));
    result.macro = params_.flat ? MacroKind::Root : macro;
    result.primitive = prim.value_or(Primitive::DoNothing);
    if (macro == ctx.active)
      result.macro_target = ctx.target;
    else if (!params_.flat)
      result.macro_target = domain_.macro_target(root.state, ego, macro);

    for (std::size_t i = 0; i < agents_; ++i) {
      const auto& t = root.agents[i];
      for (auto m : kMacroActions)
        if (t.macro[idx(m)].n > 0)
          result.root_stats.push_back({i, MacroKind::Root, true, m, Primitive::DoNothing,
                                       t.macro[idx(m)].n, t.macro[idx(m)].q});
      for (std::size_t m = 0; m < kMacroKindCount; ++m)
        for (auto p : kAllPrimitives)
          if (t.primitive[m][idx(p)].n > 0)
            result.root_stats.push_back({i, static_cast<MacroKind>(m), false,
                                         static_cast<MacroKind>(m), p, t.primitive[m][idx(p)].n,
                                         t.primitive[m][idx(p)].q});
    }
    result.principal_plan = principal_plan();
    return result;
  }

  /// Greedy descent through the tree using each agent's own statistics.
  std::vector<PlanStep> principal_plan() const {
    std::vector<PlanStep> plan;
    std::vector<AgentContext> ctx = root_context_;
    std::uint32_t node = 0;
    std::vector<Decision> ds(agents_);
    while (!nodes_[node].terminal && nodes_[node].depth < params_.max_depth) {
      const Node& n = nodes_[node];
      bool ok = true;
      for (std::size_t i = 0; i < agents_ && ok; ++i) {
        Decision d;
        if (needs_selection(ctx[i])) {
          const auto m = best_macro(n.agents[i], domain_.available_macros(n.state, i));
          if (!m) {
            ok = false;
            break;
          }
          d.macro = *m;
          d.selected = true;
        } else {
          d.macro = ctx[i].active;
        }
        const auto p = best_primitive(n.agents[i], d.macro, domain_.primitives(n.state, i, d.macro));
        if (!p) {
          ok = false;
          break;
        }
        d.primitive = *p;
        ds[i] = d;
      }
      if (!ok) break;
      const auto next = n.child(primitive_key(ds));
      if (!next) break;
      for (std::size_t i = 0; i < agents_; ++i) {
        if (ds[i].selected) {
          ctx[i].active = ds[i].macro;
          ctx[i].target = domain_.macro_target(n.state, i, ds[i].macro);
        }
      }
      const Node& c = nodes_[*next];
      plan.push_back({ds, c.ego_rewards, c.terminal});
      for (std::size_t i = 0; i < agents_; ++i) {
        if (ctx[i].active == MacroKind::Root) continue;
        if (domain_.termination_probability(c.state, i, ctx[i].active, ctx[i].target) >= 0.5)
          ctx[i] = AgentContext{};
      }
      node = *next;
    }
    return plan;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const RewardTrace& last_trace() const { return trace_; }
  const std::vector<PathEntry>& last_path() const { return path_; }
  const SearchParams& params() const { return params_; }
  std::span<const double> lambdas() const { return lambdas_; }

 private:
  static std::size_t idx(MacroKind m) { return static_cast<std::size_t>(m); }
  static std::size_t idx(Primitive p) { return static_cast<std::size_t>(p); }

  bool needs_selection(const AgentContext& c) const {
    return !params_.flat && c.active == MacroKind::Root;
  }

  std::uint32_t new_node(State state, int depth, bool terminal, std::vector<double> rewards) {
    Node n;
    n.state = std::move(state);
    n.depth = depth;
    n.terminal = terminal;
    n.ego_rewards = std::move(rewards);
    n.agents.resize(agents_);
    nodes_.push_back(std::move(n));
    return static_cast<std::uint32_t>(nodes_.size() - 1);
  }

  double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  template <class Candidates, class StatOf>
  std::size_t uct_pick(const Candidates& candidates, std::size_t count, StatOf&& stat_of) {
    std::array<double, 8> values{};
    std::uint32_t parent = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t k = 0; k < count; ++k) {
      const AgentStat& s = stat_of(candidates.nth(k));
      parent += s.n;
      if (s.n == 0) continue;
      lo = std::min(lo, s.q);
      hi = std::max(hi, s.q);
    }
    // Exploration acts on returns rescaled to [0,1] within the table.
    const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      AgentStat s = stat_of(candidates.nth(k));
      if (s.n > 0) s.q = (s.q - lo) * scale;
      values[k] = uct_value(s, parent, params_.c_uct);
    }
    return epsilon_greedy_select(std::span<const double>(values.data(), count), params_.epsilon,
                                 rng_);
  }

  Decision select_decision(std::uint32_t node, std::size_t agent, AgentContext& ctx, int depth) {
    const Node& n = nodes_[node];
    const AgentTables& t = n.agents[agent];
    Decision d;
    if (needs_selection(ctx)) {
      const MacroSet macros = domain_.available_macros(n.state, agent);
      const std::size_t k =
          uct_pick(macros, macros.size(), [&](MacroKind m) -> const AgentStat& { return t.macro[idx(m)]; });
      d.macro = macros.nth(k);
      d.selected = true;
      ctx.active = d.macro;
      ctx.target = domain_.macro_target(n.state, agent, d.macro);
      ctx.start_step = depth;
    } else {
      d.macro = ctx.active;
    }
    const PrimitiveSet prims = domain_.primitives(n.state, agent, d.macro);
    const auto& row = t.primitive[idx(d.macro)];
    const std::size_t k =
        uct_pick(prims, prims.size(), [&](Primitive p) -> const AgentStat& { return row[idx(p)]; });
    d.primitive = prims.nth(k);
    return d;
  }

  std::uint32_t find_or_add_edge(std::uint32_t node, std::span<const Decision> ds) {
    Node& n = nodes_[node];
    const std::uint64_t key = joint_key(ds);
    for (std::size_t e = 0; e < n.edges.size(); ++e)
      if (n.edges[e].key == key) return static_cast<std::uint32_t>(e);
    Edge e;
    e.key = key;
    e.primitive_key = primitive_key(ds);
    e.decisions.assign(ds.begin(), ds.end());
    e.q_primitive.assign(agents_, 0.0);
    e.q_macro.assign(agents_, 0.0);
    n.edges.push_back(std::move(e));
    return static_cast<std::uint32_t>(n.edges.size() - 1);
  }

  /// Appends one step to the trace and applies terminations at the successor.
  void record_step(std::span<const Decision> ds, std::span<const double> rewards,
                   const State& next, int depth) {
    std::vector<TraceEntry> row(agents_);
    for (std::size_t i = 0; i < agents_; ++i) {
      row[i].ego_reward = rewards[i];
      row[i].macro = context_[i].active;
      row[i].macro_start = context_[i].start_step;
      row[i].primitive = ds[i].primitive;
      if (context_[i].active != MacroKind::Root) {
        const double beta =
            domain_.termination_probability(next, i, context_[i].active, context_[i].target);
        const bool done = beta >= 1.0 || (beta > 0.0 && uniform01() < beta);
        if (done) {
          row[i].macro_terminated = true;
          context_[i] = AgentContext{};
          context_[i].start_step = depth + 1;
        }
      }
    }
    trace_.steps.push_back(std::move(row));
  }

  void simulate(State state, int depth) {
    std::vector<Decision> ds(agents_);
    std::vector<Primitive> joint(agents_);
    std::vector<double> rewards(agents_);
    State next;
    for (; depth < params_.max_depth; ++depth) {
      for (std::size_t i = 0; i < agents_; ++i) {
        Decision d;
        if (needs_selection(context_[i])) {
          const MacroSet macros = domain_.available_macros(state, i);
          d.macro = macros.nth(uniform_index(macros.size()));
          d.selected = true;
          context_[i].active = d.macro;
          context_[i].target = domain_.macro_target(state, i, d.macro);
          context_[i].start_step = depth;
        } else {
          d.macro = context_[i].active;
        }
        const PrimitiveSet prims = domain_.primitives(state, i, d.macro);
        d.primitive = rollout_primitive(state, i, d.macro, prims);
        ds[i] = d;
        joint[i] = d.primitive;
      }
      const bool collided = domain_.step(state, joint, next, rewards);
      record_step(ds, rewards, next, depth);
      if (collided) break;
      std::swap(state, next);
    }
  }

  Primitive rollout_primitive(const State& state, std::size_t agent, MacroKind macro,
                              PrimitiveSet prims) {
    if (params_.domain_knowledge && macro == MacroKind::Overtake) {
      const auto h = domain_.heuristic_primitive(state, agent, macro, context_[agent].target);
      if (h && prims.contains(*h) && uniform01() >= params_.epsilon) return *h;
    }
    return prims.nth(uniform_index(prims.size()));
  }

  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

  void backpropagate(std::uint32_t leaf) {
    const auto returns = trace_returns();
    for (std::size_t d = 0; d < path_.size(); ++d) {
      Node& n = nodes_[path_[d].node];
      Edge& e = n.edges[path_[d].edge];
      ++n.visits;
      ++e.n;
      const double inv = 1.0 / static_cast<double>(e.n);
      for (std::size_t i = 0; i < agents_; ++i) {
        const Decision& dec = e.decisions[i];
        const double gp = returns[i].primitive[d];
        e.q_primitive[i] += (gp - e.q_primitive[i]) * inv;
        n.agents[i].primitive[idx(dec.macro)][idx(dec.primitive)].update(gp);
        if (dec.selected) {
          const double gm = returns[i].macro[d];
          e.q_macro[i] += (gm - e.q_macro[i]) * inv;
          n.agents[i].macro[idx(dec.macro)].update(gm);
        }
      }
    }
    ++nodes_[leaf].visits;
  }

  std::optional<MacroKind> best_macro(const AgentTables& t, MacroSet available) const {
    std::optional<MacroKind> best;
    for (auto m : kMacroActions) {
      if (!available.contains(m) || t.macro[idx(m)].n == 0) continue;
      if (!best || better(t.macro[idx(m)], t.macro[idx(*best)])) best = m;
    }
    return best;
  }

  std::optional<Primitive> best_primitive(const AgentTables& t, MacroKind macro,
                                          PrimitiveSet allowed) const {
    std::optional<Primitive> best;
    const auto& row = t.primitive[idx(macro)];
    for (auto p : kAllPrimitives) {
      if (!allowed.contains(p) || row[idx(p)].n == 0) continue;
      if (!best || better(row[idx(p)], row[idx(*best)])) best = p;
    }
    return best;
  }

  // Strict comparison: candidates are scanned in index order, so ties keep the lowest index.
  bool better(const AgentStat& a, const AgentStat& b) const {
    if (params_.final_rule == FinalRule::MaxVisits) return a.n > b.n;
    return a.q > b.q;
  }

  const Domain& domain_;
  SearchParams params_;
  std::mt19937_64 rng_;
  std::size_t agents_ = 0;
  std::vector<double> lambdas_;
  std::vector<Node> nodes_;
  std::vector<AgentContext> root_context_;
  std::vector<AgentContext> context_;
  std::vector<PathEntry> path_;
  RewardTrace trace_;
};

}  // namespace decoc
