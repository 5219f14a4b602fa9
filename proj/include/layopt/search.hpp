#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "layopt/qd.hpp"
#include "layopt/repair.hpp"
#include "layopt/simulator.hpp"

namespace layopt {

// Everything one optimization run needs. `base` holds the non-storage
// template; its storage tiles are ignored.
struct SearchConfig {
  Layout base;
  int n_shelves = 0;
  SimConfig sim;  // scenario, agents, horizon, planner; its seed is overridden per evaluation
  int n_evals = 5;  // N_e simulations per evaluation
  int eval_budget = 10000;
  int batch = 50;
  ArchiveConfig archive;
  std::uint64_t seed = 0;
  int n_threads = 1;
  std::string solver = "";  // make_solver spec; empty uses LAYOPT_SOLVER / HiGHS
  double repair_time_limit = kDefaultRepairTimeLimit;
  DistanceMetric metric = DistanceMetric::ShortestPath;
  // Consecutive batches without a single successful repair before giving up.
  int max_failed_batches = 20;

  // DSAGE.
  int n_rand = 500;
  int inner_iterations = 10000;

  // Persistence: when set, a checkpoint is written after every batch and an
  // existing checkpoint is resumed.
  std::string checkpoint_dir;

  void check() const;  // throws ConfigError
};

// One simulator-evaluated layout, as stored for surrogate training.
struct DatasetRecord {
  Layout unrepaired;
  Layout repaired;
  std::vector<double> tile_usage_normalized;
  double objective = 0.0;
  MeasureVector measures;
};

nlohmann::json to_json(const DatasetRecord& r);
DatasetRecord dataset_record_from_json(const nlohmann::json& j);

struct IterationStats {
  int iteration = 0;
  std::string phase;  // "mapelites", "seed" or "dsage"
  int evaluations = 0;  // cumulative simulator evaluations
  int repair_failures = 0;  // cumulative
  double qd_score = 0.0;
  double coverage = 0.0;
  int num_elites = 0;
  double best_objective = 0.0;
  double elapsed_seconds = 0.0;
};

// Without timing the columns are reproducible from (config, seed).
std::string stats_csv_header(bool timing = true);
std::string stats_csv_row(const IterationStats& s, bool timing = true);

struct SearchResult {
  Archive archive;
  std::vector<IterationStats> log;
  std::vector<DatasetRecord> dataset;
  int evaluations = 0;
  int repair_failures = 0;
  bool degraded = false;  // DSAGE fell back to MAP-Elites
  std::string surrogate;  // name of the surrogate used, if any
};

// Result of repairing and evaluating one genome.
struct Candidate {
  Layout genome;
  std::optional<Layout> repaired;
  RepairStatus repair_status = RepairStatus::Infeasible;
  std::shared_ptr<const EvalResult> eval;  // set iff repaired
};

// Repairs and evaluates genomes in parallel (one solver per worker). The
// simulation seed of genome i is derived from (config.seed, tag, i), so the
// outcome does not depend on the thread count.
std::vector<Candidate> evaluate_genomes(const SearchConfig& config, const std::vector<Layout>& genomes,
                                        std::uint64_t tag);

// Surrogate predictions for unrepaired genomes.
struct Prediction {
  double objective = 0.0;
  MeasureVector measures;
  std::vector<double> tile_usage;  // optional, row-major
  std::optional<Layout> repaired;  // optional predicted repaired layout
};

class SurrogateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Surrogate model contract used by the exploitation phase.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual std::vector<Prediction> predict(const std::vector<Layout>& genomes) = 0;
  virtual void train(const std::vector<DatasetRecord>& dataset) = 0;
  virtual std::string name() const = 0;
};

// Control surrogate that answers with real repair + simulation results. It
// uses its own seed stream and never counts towards the evaluation budget.
class OracleSurrogate : public Surrogate {
 public:
  explicit OracleSurrogate(SearchConfig config);
  std::vector<Prediction> predict(const std::vector<Layout>& genomes) override;
  void train(const std::vector<DatasetRecord>&) override {}
  std::string name() const override { return "oracle"; }

 private:
  SearchConfig config_;
  std::uint64_t calls_ = 0;
};

// External surrogate speaking the JSON exchange protocol:
//   <command> <request.json> <response.json>
// Request: {"protocol": "layopt-surrogate", "version": 1, "mode": "predict" | "train",
//           "height", "width", "channels": [...], "layouts": [H][W][C] one-hot arrays,
//           "records": [...] (train only)}.
// Predict response: {"predictions": [{"objective", "measures": [components, task length],
//                    "tile_usage": [H*W], "repaired": [H][W][C]}]}.
// Train response: {"loss": {...}}. A non-zero exit status is an error.
class ProcessSurrogate : public Surrogate {
 public:
  explicit ProcessSurrogate(std::string command, std::string work_dir = "");
  std::vector<Prediction> predict(const std::vector<Layout>& genomes) override;
  void train(const std::vector<DatasetRecord>& dataset) override;
  std::string name() const override { return "command:" + command_; }
  const nlohmann::json& last_train_response() const { return last_train_; }

 private:
  nlohmann::json exchange(const nlohmann::json& request);
  std::string command_;
  std::string work_dir_;
  nlohmann::json last_train_;
};

inline constexpr int kSurrogateProtocolVersion = 1;
// Channel order of the one-hot encoding (DummySource is never encoded).
inline constexpr Tile kOneHotChannels[kNumPersistedTiles] = {Tile::Shelf, Tile::Endpoint, Tile::Workstation,
                                                             Tile::HomeLocation, Tile::Empty};
nlohmann::json one_hot(const Layout& layout);
Layout from_one_hot(const nlohmann::json& tensor, const Layout& like);

using ProgressFn = std::function<void(const IterationStats&)>;

// select -> mutate -> repair -> evaluate -> add, until eval_budget simulator
// evaluations. Failed repairs consume no budget and are counted.
SearchResult run_mapelites(const SearchConfig& config, ProgressFn progress = {});

// Three-phase DSAGE loop. Without a surrogate (null), or when the surrogate
// fails during seeding, the run degrades to run_mapelites with a warning on
// stderr and `degraded = true`.
SearchResult run_dsage(const SearchConfig& config, Surrogate* surrogate, ProgressFn progress = {});

// Surrogate selection: "" (none), "oracle" or "command:<exe>".
std::unique_ptr<Surrogate> make_surrogate(const std::string& spec, const SearchConfig& config);

}  // namespace layopt
