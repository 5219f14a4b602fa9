#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// deliberately avoid the library's own algorithms (BFS, labelling, SIPP) so
// that agreement is meaningful.

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <cstdlib>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "layopt/layout.hpp"

namespace testutil {

using layopt::Cell;
using layopt::Layout;
using layopt::Rect;
using layopt::Tile;

// Builds a layout from rows of tile characters; storage defaults to the full grid.
inline Layout from_rows(const std::vector<std::string>& rows, std::optional<Rect> storage = std::nullopt) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows.front().size());
  Layout l(h, w, storage.value_or(Rect{0, 0, h, w}));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) l.set(Cell{r, c}, *layopt::tile_from_char(rows[r][c]));
  }
  return l;
}

inline std::vector<std::string> to_rows(const Layout& l) {
  std::vector<std::string> rows;
  for (int r = 0; r < l.height(); ++r) {
    std::string s;
    for (int c = 0; c < l.width(); ++c) s += layopt::tile_char(l.at(Cell{r, c}));
    rows.push_back(s);
  }
  return rows;
}

// Random storage fill over {@, e, .} inside `base`'s storage rectangle.
inline Layout random_fill(Layout base, std::mt19937_64& rng, double p_shelf = 1.0 / 3, double p_endpoint = 1.0 / 3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int v : base.storage_indices()) {
    const double x = u(rng);
    base.set(v, x < p_shelf ? Tile::Shelf : x < p_shelf + p_endpoint ? Tile::Endpoint : Tile::Empty);
  }
  return base;
}

// Storage fill that satisfies the shelf/endpoint adjacency clauses by
// construction: isolated shelves, each flanked by two endpoints. Connectivity
// is not guaranteed; callers filter with validate().
inline Layout random_adjacent_fill(Layout base, std::mt19937_64& rng, int n_shelves) {
  auto idx = base.storage_indices();
  for (int v : idx) base.set(v, Tile::Empty);
  std::shuffle(idx.begin(), idx.end(), rng);
  int placed = 0;
  for (int v : idx) {
    if (placed == n_shelves) break;
    const Cell c = base.cell(v);
    std::vector<int> free;
    bool touches_shelf = false;
    const Cell nbs[4] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}};
    for (Cell x : nbs) {
      if (!base.in_bounds(x) || !base.storage().contains(x)) continue;
      const Tile t = base.at(x);
      if (t == Tile::Shelf) touches_shelf = true;
      if (t == Tile::Empty || t == Tile::Endpoint) free.push_back(base.index(x));
    }
    if (touches_shelf || base.at(v) != Tile::Empty || free.size() < 2) continue;
    std::shuffle(free.begin(), free.end(), rng);
    base.set(v, Tile::Shelf);
    base.set(free[0], Tile::Endpoint);
    base.set(free[1], Tile::Endpoint);
    ++placed;
  }
  return base;
}

// Dense all-pairs shortest paths (Floyd–Warshall) over non-shelf tiles.
inline std::vector<std::vector<int>> floyd_warshall(const Layout& l) {
  const int n = l.size();
  const int inf = 1 << 28;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int v = 0; v < n; ++v) {
    if (l.at(v) == Tile::Shelf) continue;
    d[v][v] = 0;
    const Cell c = l.cell(v);
    const Cell nbs[4] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}};
    for (Cell x : nbs) {
      if (l.in_bounds(x) && l.at(x) != Tile::Shelf) d[v][l.index(x)] = 1;
    }
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  for (auto& row : d)
    for (auto& x : row)
      if (x >= inf) x = -1;
  return d;
}

// Union–find over 4-adjacent pairs satisfying `same`.
inline int count_components(const Layout& l, const std::function<bool(Tile)>& member) {
  std::vector<int> parent(l.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (int r = 0; r < l.height(); ++r) {
    for (int c = 0; c < l.width(); ++c) {
      const int v = l.index({r, c});
      if (!member(l.at(v))) continue;
      if (c + 1 < l.width() && member(l.at(v + 1))) parent[find(v)] = find(v + 1);
      if (r + 1 < l.height() && member(l.at(v + l.width()))) parent[find(v)] = find(v + l.width());
    }
  }
  std::set<int> roots;
  for (int v = 0; v < l.size(); ++v)
    if (member(l.at(v))) roots.insert(find(v));
  return static_cast<int>(roots.size());
}

// Depth-first search from a to b whose intermediate tiles are all Empty.
inline bool empty_path_exists(const Layout& l, int a, int b) {
  std::vector<char> on(l.size(), 0);
  std::function<bool(int)> dfs = [&](int v) {
    const Cell c = l.cell(v);
    const Cell nbs[4] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}};
    for (Cell x : nbs) {
      if (!l.in_bounds(x)) continue;
      const int u = l.index(x);
      if (u == b) return true;
      if (on[u] || l.at(u) != Tile::Empty) continue;
      on[u] = 1;
      if (dfs(u)) return true;
    }
    return false;
  };
  on[a] = 1;
  return dfs(a);
}

struct TrajectoryCheck {
  int vertex_conflicts = 0;
  int swap_conflicts = 0;
  int illegal_moves = 0;
};

// Independent audit of an executed joint trajectory (traj[t][agent]).
inline TrajectoryCheck audit_trajectory(const Layout& l, const std::vector<std::vector<int>>& traj) {
  TrajectoryCheck out;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    std::set<int> seen;
    for (int v : traj[t]) {
      if (!seen.insert(v).second) ++out.vertex_conflicts;
      if (l.at(v) == Tile::Shelf) ++out.illegal_moves;
    }
    if (t == 0) continue;
    const auto& a = traj[t - 1];
    const auto& b = traj[t];
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Cell p = l.cell(a[i]);
      const Cell q = l.cell(b[i]);
      if (std::abs(p.row - q.row) + std::abs(p.col - q.col) > 1) ++out.illegal_moves;
      for (std::size_t j = i + 1; j < a.size(); ++j) {
        if (a[i] != b[i] && a[i] == b[j] && a[j] == b[i]) ++out.swap_conflicts;
      }
    }
  }
  return out;
}

}  // namespace testutil
