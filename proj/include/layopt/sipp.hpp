#pragma once

#include <climits>
#include <optional>
#include <span>
#include <vector>

#include "layopt/layout.hpp"

namespace layopt {

inline constexpr int kForever = INT_MAX;

// A path lists one tile index per timestep, starting at the departure time.
using Path = std::vector<int>;

// Closed interval of timesteps [lo, hi]; hi == kForever means unbounded.
struct Interval {
  int lo = 0;
  int hi = kForever;

  friend bool operator==(const Interval&, const Interval&) = default;
};

// Traversability, adjacency and lazily cached BFS distances for one layout.
// Not thread-safe; give every simulation its own instance.
class GridMap {
 public:
  explicit GridMap(const Layout& layout);

  const Layout& layout() const { return layout_; }
  int size() const { return layout_.size(); }
  bool traversable(int v) const { return traversable_[v] != 0; }
  std::span<const int> neighbors(int v) const {
    return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
  }
  // Shortest traversable distance from v to goal, or -1.
  int distance(int v, int goal) const;

 private:
  Layout layout_;
  std::vector<char> traversable_;
  std::vector<int> offsets_;
  std::vector<int> adjacency_;
  mutable std::vector<std::vector<int>> to_goal_;
};

// Vertex and edge occupancy of already-planned paths. Vertex entries block a
// tile for a time range; edge entries block the reverse traversal (swaps).
class ReservationTable {
 public:
  explicit ReservationTable(int n_vertices);

  // Reserves `path` departing at t0. Vertex times beyond `last_time` are not
  // reserved; a path ending before `last_time` keeps its final tile reserved
  // through `last_time`, or forever when `last_time == kForever`.
  void reserve_path(int agent, int t0, std::span<const int> path, int last_time);
  void remove_agent(int agent);
  void clear();

  // Free intervals of a vertex in ascending order.
  std::vector<Interval> safe_intervals(int v) const;
  // Appends the free intervals of v to `out`; `scratch` is reusable working memory.
  void append_safe_intervals(int v, std::vector<Interval>& out, std::vector<std::pair<int, int>>& scratch) const;
  bool vertex_free(int v, int t) const;
  // True if moving from -> to, departing at t, would swap with a reservation.
  bool swap_blocked(int from, int to, int t) const;
  // Largest finite reserved timestep (or -1 when nothing finite is reserved).
  int last_finite_time() const { return last_finite_; }
  bool empty() const { return touched_.empty(); }

 private:
  struct VertexEntry {
    int lo;
    int hi;  // inclusive, may be kForever
    int agent;
  };
  struct EdgeEntry {
    int to;
    int t;
    int agent;
  };
  std::vector<std::vector<VertexEntry>> vertex_;
  std::vector<std::vector<EdgeEntry>> edge_;  // indexed by move origin
  std::vector<std::pair<int, std::vector<int>>> touched_;  // agent -> vertices
  int last_finite_ = -1;
};

struct SippQuery {
  int start = 0;
  std::vector<int> goals;  // visited in order; the agent must be able to stay at the last one
  int depart = 0;
  int max_time = kForever;  // latest admissible arrival at any tile
};

// Time-minimal path visiting `goals` in order while avoiding every vertex and
// swap reservation. Ties: earliest arrival, then fewer waits, then lower tile
// index. Returns nullopt when no path exists within max_time.
std::optional<Path> sipp_plan(const GridMap& map, const ReservationTable& table, const SippQuery& query);

// Convenience single-goal form over cell coordinates.
std::optional<Path> sipp_plan(const GridMap& map, const ReservationTable& table, Cell start, Cell goal,
                              int depart, int max_time = kForever);

}  // namespace layopt
