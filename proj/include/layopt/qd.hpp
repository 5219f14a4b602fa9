#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "layopt/layout.hpp"
#include "layopt/measures.hpp"
#include "layopt/simulator.hpp"

namespace layopt {

// Discretization of the two-dimensional measure space: axis 0 is the number of
// connected shelf components, axis 1 the mean task length.
struct ArchiveConfig {
  std::array<int, 2> dims{15, 100};
  std::array<double, 2> component_range{5, 20};
  std::array<double, 2> task_length_range{9, 14};
  std::array<int, 2> downsample_dims{15, 25};

  int num_cells() const { return dims[0] * dims[1]; }
  void check() const;  // throws ConfigError
  friend bool operator==(const ArchiveConfig&, const ArchiveConfig&) = default;
};

nlohmann::json to_json(const ArchiveConfig& c);
ArchiveConfig archive_config_from_json(const nlohmann::json& j);

struct Elite {
  Layout genome;    // unrepaired layout the search operates on
  Layout repaired;  // layout that was simulated
  double objective = 0.0;
  MeasureVector measures;
  std::shared_ptr<const EvalResult> eval;  // may be null for surrogate predictions
};

enum class ArchiveKind { GroundTruth, Surrogate };
enum class AddStatus { Inserted, Replaced, Rejected, OutOfRange };
std::string_view add_status_name(AddStatus s);

struct ArchiveStats {
  double qd_score = 0.0;
  double coverage = 0.0;
  int num_elites = 0;
  double best_objective = 0.0;  // 0 on an empty archive
  long long out_of_range = 0;
};

// Flat cell index (axis-0 major) or nullopt when a measure falls outside its
// range. Values equal to the upper bound land in the last cell.
std::optional<int> cell_index(const MeasureVector& m, const ArchiveConfig& config);
std::array<int, 2> cell_coords(int cell, const ArchiveConfig& config);

class Archive {
 public:
  explicit Archive(ArchiveConfig config, ArchiveKind kind = ArchiveKind::GroundTruth);

  // Inserts into an empty cell or replaces an elite with a strictly lower objective.
  AddStatus add(Elite candidate);
  void clear();

  const ArchiveConfig& config() const { return config_; }
  ArchiveKind kind() const { return kind_; }
  const std::map<int, Elite>& cells() const { return cells_; }
  const Elite* find(int cell) const;
  bool empty() const { return cells_.empty(); }
  int size() const { return static_cast<int>(cells_.size()); }
  long long out_of_range() const { return out_of_range_; }
  ArchiveStats stats() const;

  // Table export: one row per elite with measures, objective and layout file names.
  // Layouts are written under `dir/layouts/`.
  void save(const std::string& dir) const;
  static Archive load(const std::string& dir);

 private:
  ArchiveConfig config_;
  ArchiveKind kind_;
  std::map<int, Elite> cells_;
  long long out_of_range_ = 0;
};

ArchiveStats stats(const Archive& archive);

// Genome whose storage tiles are i.i.d. uniform over {Shelf, Endpoint, Empty};
// non-storage tiles come from `base`.
Layout random_genome(const Layout& base, std::mt19937_64& rng);

// b genomes drawn uniformly with replacement from the occupied cells, or b
// random genomes over `base` when the archive is empty.
std::vector<Layout> select_batch(const Archive& archive, int b, const Layout& base, std::mt19937_64& rng);

// Number of tiles to mutate: k >= 1 with P(k) = (1-p)^(k-1) p, p = 1/2, clamped to max_k.
int sample_mutation_count(std::mt19937_64& rng, int max_k);

// Sets k distinct uniformly chosen storage tiles to uniform draws from
// {Shelf, Endpoint, Empty}; non-storage tiles are untouched.
Layout mutate(const Layout& genome, std::mt19937_64& rng);

// One uniformly chosen elite per non-empty rectangular sub-area of a
// `dims`-shaped partition of the cell lattice, in sub-area order.
std::vector<const Elite*> downsample(const Archive& archive, std::array<int, 2> dims, std::mt19937_64& rng);

// Objective per cell as a CSV grid (axis 0 down, axis 1 across); empty cells are blank.
std::string heatmap_csv(const Archive& archive);

}  // namespace layopt
