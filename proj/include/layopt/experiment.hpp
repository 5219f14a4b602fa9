#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "layopt/search.hpp"
#include "layopt/setups.hpp"
#include "layopt/validation.hpp"

namespace layopt {

// One declarative experiment. Loaded from JSON: an optional "setup" names the
// base (1-4 or desk) and every other key overrides it.
struct ExperimentConfig {
  std::string setup;  // named base, empty for a fully explicit config
  Scenario scenario = Scenario::Workstation;
  int height = 0;
  int width = 0;
  Rect storage;
  std::string template_file;  // optional non-storage template instead of the generated one
  int n_shelves = 0;
  int n_workstations = 0;
  int n_homes = 0;

  SimConfig sim;    // planner, N_a, T (search-time horizon), w, h, ...
  int n_evals = 5;  // N_e simulations per evaluation during search

  int eval_horizon = 5000;         // T_eval for the evaluate verb
  int eval_runs = 10;              // simulations per evaluate call
  std::vector<int> sweep_agents;   // optional agent counts for a throughput sweep

  ArchiveConfig archive;
  std::string archive_variant;  // "printed" or "corrected" table row (setups 1-4), empty if explicit

  std::string algorithm = "mapelites";  // or "dsage"
  int eval_budget = 10000;
  int batch = 50;
  int n_rand = 500;
  int inner_iterations = 10000;
  int max_failed_batches = 20;
  std::string surrogate;  // make_surrogate spec

  std::uint64_t seed = 0;
  int n_threads = 1;
  std::string solver;  // make_solver spec; empty consults LAYOPT_SOLVER
  double repair_time_limit = kDefaultRepairTimeLimit;
  DistanceMetric metric = DistanceMetric::ShortestPath;
  std::string output_dir;

  // Throws ConfigError naming the offending field path.
  void check() const;
};

// Resolves setup inheritance and validates. Unknown keys are rejected.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
// Fully resolved form (no inheritance left); round-trips through experiment_from_json.
nlohmann::json to_json(const ExperimentConfig& c);
// Reads a JSON file and applies `overrides` (a JSON merge patch) on top.
ExperimentConfig load_experiment_file(const std::string& path, const nlohmann::json& overrides = nlohmann::json::object());
ExperimentConfig load_experiment(nlohmann::json j, const nlohmann::json& overrides = nlohmann::json::object());

Layout base_layout(const ExperimentConfig& c);
SearchConfig search_config(const ExperimentConfig& c);

nlohmann::json to_json(const ValidationReport& r);

// Runs MAP-Elites or DSAGE and writes, under c.output_dir: config.json,
// stats.csv, archive/ (table + elite layouts), heatmap.csv/.ppm, checkpoint/
// and manifest.json. An interrupted run in the same directory resumes.
SearchResult cmd_optimize(const ExperimentConfig& c, ProgressFn progress = {});

// Simulates a layout eval_runs times at eval_horizon (and once per sweep
// agent count) and writes report.json, finished_per_timestep.csv,
// tile_usage.csv/.ppm, sweep.csv and manifest.json when c.output_dir is set.
// Layouts that are not acceptable for the scenario raise PreconditionError.
nlohmann::json cmd_evaluate(const Layout& layout, const ExperimentConfig& c);

// Writes a grayscale-to-colour PPM heat map; NaN cells are drawn grey.
void write_heatmap_ppm(const std::string& path, const std::vector<double>& values, int height, int width,
                       int scale = 8);
std::vector<double> archive_heatmap(const Archive& archive);

std::string sha256_file(const std::string& path);
std::string sha256_string(const std::string& data);
// manifest.json: tool version, resolved config hash, master seed and the
// sha256 of every other file under `dir`.
void write_manifest(const std::string& dir, const ExperimentConfig& c, const nlohmann::json& extra = {});

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace layopt
