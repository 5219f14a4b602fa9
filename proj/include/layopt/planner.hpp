#pragma once

#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "layopt/sipp.hpp"

namespace layopt {

enum class MapfSolver { PBS, PrioritizedPlanning };

class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WindowRequest {
  int t0 = 0;
  std::vector<int> starts;               // one distinct traversable tile per agent
  std::vector<std::vector<int>> goals;   // per-agent goal sequence; empty = stay put
  int window = 10;                       // conflicts are resolved for timesteps t0 .. t0+window
};

struct WindowStats {
  int high_level_nodes = 0;
  int low_level_calls = 0;
};

// Per-agent paths (index 0 at t0) free of vertex and swap conflicts for the
// window. Prioritized planning reshuffles the agent order with `rng` on every
// call. PBS explores a priority tree depth-first, capped at `pbs_node_limit`
// generated nodes. Throws SolverFailure when no conflict-free plan is found.
std::vector<Path> plan_window(const GridMap& map, const WindowRequest& request, MapfSolver solver,
                              std::mt19937_64& rng, int pbs_node_limit = 10000, WindowStats* stats = nullptr);

struct Conflict {
  int a = -1;
  int b = -1;
  int time = -1;
  bool swap = false;
};

// First conflict (earliest timestep) among paths departing at t0, considering
// timesteps t0 .. last_time; paths hold their final tile after they end.
std::optional<Conflict> first_conflict(const std::vector<Path>& paths, int t0, int last_time);

}  // namespace layopt
