#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layopt/layout.hpp"
#include "layopt/measures.hpp"
#include "layopt/planner.hpp"
#include "layopt/validation.hpp"

namespace layopt {

enum class PlannerKind { RHCR, DPP };

std::string_view planner_name(PlannerKind p);
PlannerKind planner_from_name(std::string_view name);
std::string_view solver_name(MapfSolver s);
MapfSolver solver_from_name(std::string_view name);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised before a simulation starts when the layout or configuration does not
// meet the simulator's preconditions.
class PreconditionError : public std::runtime_error {
 public:
  PreconditionError(const std::string& what, ValidationReport report = {})
      : std::runtime_error(what), report(std::move(report)) {}
  ValidationReport report;
};

struct SimConfig {
  Scenario scenario = Scenario::Workstation;
  int n_agents = 1;
  int horizon = 1000;  // T
  PlannerKind planner = PlannerKind::RHCR;
  int window = 10;         // w
  int replan_period = 5;   // h
  MapfSolver solver = MapfSolver::PBS;
  std::uint64_t seed = 0;
  bool early_stop_on_congestion = true;
  bool zero_on_congestion = false;  // evaluate(): congested runs score 0 instead of their truncated throughput
  int pbs_node_limit = 10000;
  bool record_trajectory = false;

  // Throws ConfigError on inconsistent fields.
  void check() const;
};

enum class Action { Move, Wait, Idle };

// True iff strictly more than half of the agents wait. Idle agents (no goal
// assigned) still count towards the agent total.
bool detect_congestion(std::span<const Action> actions);

struct SimResult {
  double throughput = 0.0;
  std::vector<int> finished_per_timestep;
  int height = 0;
  int width = 0;
  std::vector<long long> tile_usage;  // row-major visit counts, one per agent per executed step
  bool congested = false;
  std::optional<int> congestion_timestep;
  int elapsed_steps = 0;
  int solver_failures = 0;
  long long total_finished = 0;
  std::vector<int> tasks_per_agent;
  std::uint64_t seed = 0;
  // trajectory[t][agent] = tile index at timestep t (t = 0..elapsed_steps), when recorded.
  std::vector<std::vector<int>> trajectory;
};

SimResult run_simulation(const Layout& layout, const SimConfig& config);

struct EvalResult {
  double mean_throughput = 0.0;
  double throughput_sd = 0.0;
  double success_rate = 0.0;  // fraction of runs without congestion
  MeasureVector measures;
  std::vector<double> tile_usage_normalized;
  std::vector<SimResult> runs;
};

// Runs `n_runs` simulations with seeds derived from config.seed and the run
// index, using up to `n_threads` workers.
EvalResult evaluate(const Layout& layout, const SimConfig& config, int n_runs, int n_threads = 1,
                    DistanceMetric metric = DistanceMetric::ShortestPath);

std::uint64_t run_seed(std::uint64_t master, int run);

nlohmann::json to_json(const SimConfig& c);
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});
nlohmann::json to_json(const SimResult& r, bool include_series = true);
nlohmann::json to_json(const EvalResult& r, bool include_runs = true);

// CSV grid (height rows of width comma-separated values).
std::string grid_csv(std::span<const double> values, int height, int width);
std::string grid_csv(std::span<const long long> values, int height, int width);

}  // namespace layopt
