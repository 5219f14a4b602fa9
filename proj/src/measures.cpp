#include "layopt/measures.hpp"

#include <cstdlib>
#include <deque>

namespace layopt {

UnreachablePairError::UnreachablePairError(Cell a, Cell b)
    : std::runtime_error("task tiles (" + std::to_string(a.row) + "," + std::to_string(a.col) + ") and (" +
                         std::to_string(b.row) + "," + std::to_string(b.col) +
                         ") are not connected; repair the layout first"),
      first(a),
      second(b) {}

std::vector<int> bfs_distances(const Layout& layout, int source) {
  std::vector<int> dist(static_cast<std::size_t>(layout.size()), -1);
  dist[source] = 0;
  if (!traversable(layout.at(source))) return dist;
  std::deque<int> queue{source};
  int nb[4];
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    const int n = layout.neighbors(v, nb);
    for (int k = 0; k < n; ++k) {
      const int u = nb[k];
      if (dist[u] < 0 && traversable(layout.at(u))) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

int connected_shelf_components(const Layout& layout) {
  std::vector<char> seen(static_cast<std::size_t>(layout.size()), 0);
  std::vector<int> stack;
  int components = 0;
  int nb[4];
  for (int s = 0; s < layout.size(); ++s) {
    if (seen[s] || layout.at(s) != Tile::Shelf) continue;
    ++components;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      const int n = layout.neighbors(v, nb);
      for (int k = 0; k < n; ++k) {
        if (!seen[nb[k]] && layout.at(nb[k]) == Tile::Shelf) {
          seen[nb[k]] = 1;
          stack.push_back(nb[k]);
        }
      }
    }
  }
  return components;
}

double mean_task_length(const Layout& layout, Scenario scenario, DistanceMetric metric) {
  const auto endpoints = layout.indices_of(Tile::Endpoint);
  // Sources are the workstations (workstation scenario) or the endpoints
  // themselves (home-location scenario, unordered pairs).
  const bool home = scenario == Scenario::HomeLocation;
  const auto sources = home ? endpoints : layout.indices_of(Tile::Workstation);

  double total = 0.0;
  long long pairs = 0;
  for (std::size_t si = 0; si < sources.size(); ++si) {
    const int s = sources[si];
    const Cell cs = layout.cell(s);
    std::vector<int> dist;
    if (metric == DistanceMetric::ShortestPath) dist = bfs_distances(layout, s);
    for (std::size_t ti = home ? si + 1 : 0; ti < endpoints.size(); ++ti) {
      const int t = endpoints[ti];
      const Cell ct = layout.cell(t);
      int d = 0;
      if (metric == DistanceMetric::Manhattan) {
        d = std::abs(cs.row - ct.row) + std::abs(cs.col - ct.col);
      } else {
        d = dist[t];
        if (d < 0) throw UnreachablePairError(cs, ct);
      }
      total += d;
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

MeasureVector compute_measures(const Layout& layout, Scenario scenario, DistanceMetric metric) {
  return {static_cast<double>(connected_shelf_components(layout)), mean_task_length(layout, scenario, metric)};
}

}  // namespace layopt
