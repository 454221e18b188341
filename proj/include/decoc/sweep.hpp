#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "decoc/domain.hpp"
#include "decoc/planner.hpp"
#include "decoc/scenarios.hpp"
#include "decoc/search.hpp"

namespace decoc {

enum class Algorithm : std::uint8_t { Flat, Hierarchical, HierarchicalDk };

inline constexpr std::array<Algorithm, 3> kAllAlgorithms = {
    Algorithm::Flat, Algorithm::Hierarchical, Algorithm::HierarchicalDk};

inline std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Flat: return "flat";
    case Algorithm::Hierarchical: return "hierarchical";
    case Algorithm::HierarchicalDk: return "hierarchical+dk";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(std::string_view s) {
  for (auto a : kAllAlgorithms)
    if (algorithm_name(a) == s) return a;
  throw ConfigError("algorithm: unknown value '" + std::string(s) + "'");
}

inline void apply_algorithm(SearchParams& p, Algorithm a) {
  p.flat = a == Algorithm::Flat;
  p.domain_knowledge = a == Algorithm::HierarchicalDk;
}

struct SweepSpec {
  std::string scenario = "double_merge";
  std::vector<Algorithm> algorithms{kAllAlgorithms.begin(), kAllAlgorithms.end()};
  std::vector<int> iterations{10, 32, 100, 316, 1000, 2000};
  std::vector<int> depths{5, 10, 20};
  int runs = 30;
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  void validate() const {
    if (algorithms.empty()) throw ConfigError("sweep.algorithms: must be non-empty");
    if (iterations.empty()) throw ConfigError("sweep.iterations: must be non-empty");
    if (depths.empty()) throw ConfigError("sweep.depths: must be non-empty");
    if (runs < 1) throw ConfigError("sweep.runs: must be >= 1");
    for (int i : iterations)
      if (i < 1) throw ConfigError("sweep.iterations: entries must be >= 1");
    for (int d : depths)
      if (d < 1) throw ConfigError("sweep.depths: entries must be >= 1");
  }
};

struct SweepRow {
  std::string scenario;
  Algorithm algorithm = Algorithm::Flat;
  int iterations = 0;
  int depth = 0;
  std::uint64_t seed = 0;
  double return_undiscounted = 0.0;
};

struct SweepCell {
  Algorithm algorithm = Algorithm::Flat;
  int iterations = 0;
  int depth = 0;
  int runs = 0;
  double mean = 0.0;
  double lower_quartile = 0.0;
  double upper_quartile = 0.0;

  double iqr() const { return upper_quartile - lower_quartile; }
};

/// Linear-interpolation quantile (the default of numpy and R type 7).
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Undiscounted cooperative return of vehicle 0's principal plan after one
/// planning step from the scenario's initial state.
inline double first_step_return(const ScenarioConfig& config) {
  const DrivingDomain domain(config);
  const auto ego = domain.agent_of_vehicle(0);
  if (!ego) throw ConfigError("vehicles[0]: must not be parked");
  DecoupledSearch<DrivingDomain> search(domain, config.search);
  const SearchResult r = search.run(config.initial_world(), *ego);
  return plan_return(r.principal_plan, *ego, search.lambdas());
}

/// Seed of one sweep run; shared by all algorithms and grid cells so cells
/// differ only in the search configuration.
inline std::uint64_t sweep_run_seed(std::uint64_t base, int run) {
  return derive_seed(base, run, 0);
}

/// Runs the full grid. Rows come back in (algorithm, iterations, depth, run)
/// order regardless of the number of worker threads.
inline std::vector<SweepRow> run_sweep(const ScenarioConfig& base, const SweepSpec& spec) {
  spec.validate();
  validate(base);
  std::vector<SweepRow> rows;
  for (auto a : spec.algorithms)
    for (int it : spec.iterations)
      for (int d : spec.depths)
        for (int r = 0; r < spec.runs; ++r)
          rows.push_back({base.name, a, it, d, sweep_run_seed(spec.seed, r), 0.0});

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < rows.size(); k = next++) {
      try {
        ScenarioConfig c = base;
        apply_algorithm(c.search, rows[k].algorithm);
        c.search.iterations = rows[k].iterations;
        c.search.max_depth = rows[k].depth;
        c.search.seed = rows[k].seed;
        rows[k].return_undiscounted = first_step_return(c);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, spec.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

inline std::vector<SweepCell> aggregate(const std::vector<SweepRow>& rows) {
  std::vector<SweepCell> cells;
  std::vector<std::vector<double>> samples;
  for (const auto& r : rows) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const SweepCell& c) {
      return c.algorithm == r.algorithm && c.iterations == r.iterations && c.depth == r.depth;
    });
    if (it == cells.end()) {
      cells.push_back({r.algorithm, r.iterations, r.depth, 0, 0.0, 0.0, 0.0});
      samples.emplace_back();
      it = cells.end() - 1;
    }
    samples[static_cast<std::size_t>(it - cells.begin())].push_back(r.return_undiscounted);
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& s = samples[k];
    double sum = 0.0;
    for (double v : s) sum += v;
    cells[k].runs = static_cast<int>(s.size());
    cells[k].mean = sum / static_cast<double>(s.size());
    cells[k].lower_quartile = quantile(s, 0.25);
    cells[k].upper_quartile = quantile(s, 0.75);
  }
  return cells;
}

inline const SweepCell& find_cell(const std::vector<SweepCell>& cells, Algorithm a, int iterations,
                                  int depth) {
  for (const auto& c : cells)
    if (c.algorithm == a && c.iterations == iterations && c.depth == depth) return c;
  throw std::out_of_range("sweep: no such cell");
}

}  // namespace decoc
