#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "decoc/planner.hpp"
#include "decoc/sweep.hpp"

namespace decoc {

inline constexpr std::string_view kTrajectoryHeader =
    "epoch,time_s,agent,x_m,y_m,v_mps,lane,primitive,macro";
inline constexpr std::string_view kConvergenceHeader =
    "scenario,algorithm,iterations,depth,seed,return_undiscounted";
inline constexpr std::string_view kSummaryHeader =
    "scenario,algorithm,iterations,depth,runs,mean,lower_quartile,upper_quartile";

/// Fixed-precision formatting so output bytes do not depend on stream state.
inline std::string fmt_num(double v, int digits = 6) {
  if (v == 0.0) v = 0.0;  // drop negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

namespace detail {

inline void trajectory_row(std::ostream& os, int epoch, double t, AgentId agent, double x, double y,
                           double v, int lane, std::string_view primitive, std::string_view macro) {
  os << epoch << ',' << fmt_num(t, 3) << ',' << agent << ',' << fmt_num(x, 4) << ','
     << fmt_num(y, 4) << ',' << fmt_num(v, 4) << ',' << lane << ',' << primitive << ',' << macro
     << '\n';
}

inline std::string_view macro_column(const EpisodeLog& log, const AgentEpoch& a) {
  if (log.flat || !a.planned || a.macro == MacroKind::Root) return "";
  return macro_name(a.macro);
}

}  // namespace detail

/// One row per vehicle per epoch (state at the epoch start and the action taken
/// from it), then one row per vehicle for the final state with empty action
/// columns. With `dense`, the sampled sub-step poses of every segment follow
/// instead of the epoch-start rows.
inline void write_trajectory_csv(std::ostream& os, const EpisodeLog& log, const RoadGeometry& road,
                                 bool dense = false) {
  os << kTrajectoryHeader << '\n';
  for (const auto& e : log.epochs) {
    for (std::size_t k = 0; k < e.agents.size(); ++k) {
      const auto& a = e.agents[k];
      const std::string prim(1, primitive_symbol(a.primitive));
      const auto macro = detail::macro_column(log, a);
      if (!dense) {
        const auto& s = e.state.vehicles[k];
        detail::trajectory_row(os, e.state.epoch, e.state.time, s.id, s.x, s.y, s.v,
                               s.lane(road.lane_width), prim, macro);
        continue;
      }
      const auto& poses = e.segments[k].poses;
      for (std::size_t p = 0; p + 1 < poses.size(); ++p) {
        const Pose& q = poses[p];
        const int lane = static_cast<int>(std::lround(q.y / road.lane_width));
        detail::trajectory_row(os, e.state.epoch, q.t, a.id, q.x, q.y, q.v, lane, prim, macro);
      }
    }
  }
  const auto& f = log.final_state;
  for (const auto& s : f.vehicles)
    detail::trajectory_row(os, f.epoch, f.time, s.id, s.x, s.y, s.v, s.lane(road.lane_width), "",
                           "");
}

inline void write_convergence_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kConvergenceHeader << '\n';
  for (const auto& r : rows)
    os << r.scenario << ',' << algorithm_name(r.algorithm) << ',' << r.iterations << ','
       << r.depth << ',' << r.seed << ',' << fmt_num(r.return_undiscounted) << '\n';
}

inline void write_summary_csv(std::ostream& os, std::string_view scenario,
                              const std::vector<SweepCell>& cells) {
  os << kSummaryHeader << '\n';
  for (const auto& c : cells)
    os << scenario << ',' << algorithm_name(c.algorithm) << ',' << c.iterations << ',' << c.depth
       << ',' << c.runs << ',' << fmt_num(c.mean) << ',' << fmt_num(c.lower_quartile) << ','
       << fmt_num(c.upper_quartile) << '\n';
}

/// Per-epoch principal plans, e.g. "epoch 0 agent 0 overtake: L L + + 0 0 R R".
inline void write_plans(std::ostream& os, const EpisodeLog& log) {
  for (const auto& e : log.epochs) {
    for (const auto& a : e.agents) {
      if (!a.planned) continue;
      os << "epoch " << e.state.epoch << " agent " << a.id;
      if (!log.flat) os << ' ' << macro_name(a.plan_macro);
      os << ':';
      for (auto p : a.plan) os << ' ' << primitive_symbol(p);
      os << '\n';
    }
  }
  os << "result: " << terminal_cause_name(log.cause) << " after " << log.epochs.size()
     << " epochs\n";
}

}  // namespace decoc
