#pragma once

#include <stdexcept>
#include <vector>

#include "layopt/layout.hpp"

namespace layopt {

struct MeasureVector {
  double n_shelf_components = 0.0;
  double mean_task_length = 0.0;

  friend bool operator==(const MeasureVector&, const MeasureVector&) = default;
};

enum class DistanceMetric { ShortestPath, Manhattan };

class UnreachablePairError : public std::runtime_error {
 public:
  UnreachablePairError(Cell a, Cell b);
  Cell first;
  Cell second;
};

// Unweighted BFS over non-shelf tiles; -1 marks unreachable tiles. A shelf
// source yields all -1 except itself at 0.
std::vector<int> bfs_distances(const Layout& layout, int source);

// 4-connected components of shelf tiles.
int connected_shelf_components(const Layout& layout);

// Mean distance over unordered pairs of task locations: (endpoint, workstation)
// for the workstation scenario, two distinct endpoints for the home-location
// scenario. Returns 0 when there are no pairs.
double mean_task_length(const Layout& layout, Scenario scenario,
                        DistanceMetric metric = DistanceMetric::ShortestPath);

MeasureVector compute_measures(const Layout& layout, Scenario scenario,
                               DistanceMetric metric = DistanceMetric::ShortestPath);

}  // namespace layopt
