// decoc: run cooperative planning episodes and convergence sweeps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "decoc/csv.hpp"
#include "decoc/planner.hpp"
#include "decoc/scenarios.hpp"
#include "decoc/sweep.hpp"

namespace fs = std::filesystem;
using namespace decoc;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

struct CommonOptions {
  std::string scenario;
  std::string config_path;
  std::optional<int> iterations;
  std::optional<int> depth;
  std::optional<double> lambda;
  std::optional<double> epsilon;
  std::optional<std::string> mode;
  bool flat = false;
  bool domain_knowledge = false;
  std::optional<double> red_speed;
  std::uint64_t seed = 0;
  std::string out = ".";
};

void add_common(CLI::App* cmd, CommonOptions& o, std::string default_scenario) {
  o.scenario = std::move(default_scenario);
  cmd->add_option("--scenario", o.scenario, "builtin scenario: overtake, double_merge, bottleneck")
      ->capture_default_str();
  cmd->add_option("--config", o.config_path, "scenario JSON file (overrides --scenario)");
  cmd->add_option("--iterations", o.iterations, "search iterations per planning step");
  cmd->add_option("--depth", o.depth, "maximum search depth in steps");
  cmd->add_option("--lambda", o.lambda, "cooperation factor for every planning vehicle");
  cmd->add_option("--epsilon", o.epsilon, "epsilon of the stochastic UCT selection");
  cmd->add_option("--mode", o.mode, "control mode")
      ->check(CLI::IsMember({"polling", "hierarchical"}));
  cmd->add_flag("--flat", o.flat, "flat MCTS baseline without macro-actions");
  cmd->add_flag("--domain-knowledge", o.domain_knowledge, "biased overtake rollouts");
  cmd->add_option("--red-speed", o.red_speed, "speed of the oncoming vehicle in m/s");
  cmd->add_option("--seed", o.seed, "base seed")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioConfig load(const CommonOptions& o) {
  ScenarioConfig c = o.config_path.empty() ? builtin(o.scenario) : parse(read_file(o.config_path));
  if (o.iterations) c.search.iterations = *o.iterations;
  if (o.depth) c.search.max_depth = *o.depth;
  if (o.epsilon) c.search.epsilon = *o.epsilon;
  if (o.mode) c.search.mode = *o.mode == "hierarchical" ? ControlMode::Hierarchical : ControlMode::Polling;
  if (o.flat && o.domain_knowledge)
    throw ConfigError("--flat and --domain-knowledge are mutually exclusive");
  if (o.flat) c.search.flat = true;
  if (o.domain_knowledge) c.search.domain_knowledge = true;
  if (o.lambda)
    for (auto& v : c.vehicles)
      if (v.controller == ControllerKind::Mcts) v.lambda = *o.lambda;
  if (o.red_speed) {
    bool any = false;
    for (const auto& v : c.vehicles) any = any || v.oncoming;
    if (!any) throw ConfigError("--red-speed: scenario has no oncoming vehicle");
    if (!(*o.red_speed > 0.0)) throw ConfigError("--red-speed: must be positive");
    set_oncoming_speed(c, *o.red_speed);
  }
  c.search.seed = o.seed;
  validate(c);
  return c;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  return f;
}

int cmd_run(const CommonOptions& o, bool dense, std::optional<int> epochs) {
  const ScenarioConfig c = load(o);
  const EpisodeLog log = run_episode(c, epochs.value_or(c.max_epochs), o.seed);
  fs::create_directories(o.out);
  {
    auto f = open_out(fs::path(o.out) / "trajectory.csv");
    write_trajectory_csv(f, log, c.road, dense);
  }
  std::ostringstream plans;
  write_plans(plans, log);
  {
    auto f = open_out(fs::path(o.out) / "plans.txt");
    f << plans.str();
  }
  std::cout << plans.str();
  return kOk;
}

std::vector<int> parse_int_list(const std::string& s, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": expected comma-separated integers, got '" + s + "'");
    }
  }
  return out;
}

int cmd_sweep(const CommonOptions& o, int runs, unsigned jobs, const std::string& algorithms,
              const std::string& iterations, const std::string& depths) {
  CommonOptions base_opts = o;
  base_opts.iterations.reset();
  base_opts.depth.reset();
  if (o.flat || o.domain_knowledge)
    throw ConfigError("sweep: choose algorithms with --algorithms instead of --flat/--domain-knowledge");
  const ScenarioConfig base = load(base_opts);
  SweepSpec spec;
  spec.scenario = base.name;
  spec.runs = runs;
  spec.seed = o.seed;
  spec.jobs = jobs;
  if (!algorithms.empty()) {
    spec.algorithms.clear();
    std::stringstream ss(algorithms);
    std::string item;
    while (std::getline(ss, item, ',')) spec.algorithms.push_back(parse_algorithm(item));
  }
  if (!iterations.empty()) spec.iterations = parse_int_list(iterations, "--iterations");
  if (o.iterations) spec.iterations = {*o.iterations};
  if (!depths.empty()) spec.depths = parse_int_list(depths, "--depths");
  if (o.depth) spec.depths = {*o.depth};
  spec.validate();

  const auto rows = run_sweep(base, spec);
  const auto cells = aggregate(rows);
  fs::create_directories(o.out);
  {
    auto f = open_out(fs::path(o.out) / "convergence.csv");
    write_convergence_csv(f, rows);
  }
  {
    auto f = open_out(fs::path(o.out) / "convergence_summary.csv");
    write_summary_csv(f, base.name, cells);
  }
  write_summary_csv(std::cout, base.name, cells);
  return kOk;
}

int cmd_config(const CommonOptions& o) {
  std::cout << serialize(load(o)) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized cooperative maneuver planning with hierarchical MCTS"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  bool dense = false;
  std::optional<int> epochs;
  auto* run = app.add_subcommand("run", "run one closed-loop episode");
  add_common(run, run_opts, "overtake");
  run->add_flag("--dense", dense, "emit sub-step trajectory samples");
  run->add_option("--epochs", epochs, "maximum number of epochs (default from scenario)");

  CommonOptions sweep_opts;
  int runs = 30;
  unsigned jobs = 1;
  std::string algorithms, iteration_grid, depth_grid;
  auto* sweep = app.add_subcommand("sweep", "first-step return over an iteration and depth grid");
  add_common(sweep, sweep_opts, "double_merge");
  sweep->add_option("--runs", runs, "runs per grid cell")->capture_default_str();
  sweep->add_option("--jobs", jobs, "worker threads")->capture_default_str();
  sweep->add_option("--algorithms", algorithms, "comma list of flat, hierarchical, hierarchical+dk");
  sweep->add_option("--iteration-grid", iteration_grid, "comma list of iteration counts");
  sweep->add_option("--depths", depth_grid, "comma list of maximum depths");

  CommonOptions config_opts;
  auto* config = app.add_subcommand("config", "print the effective scenario as JSON");
  add_common(config, config_opts, "overtake");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(run_opts, dense, epochs);
    if (*sweep) return cmd_sweep(sweep_opts, runs, jobs, algorithms, iteration_grid, depth_grid);
    if (*config) return cmd_config(config_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
