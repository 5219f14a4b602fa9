#include "layopt/setups.hpp"

#include <algorithm>
#include <deque>

namespace layopt {

namespace {

struct ArchiveRow {
  std::array<int, 2> dims;
  std::array<int, 2> downsample;
  std::array<double, 2> components;
  std::array<double, 2> task_length;
};

// Hyperparameter table rows in printed order (setups 1-4).
constexpr ArchiveRow kPrintedRows[4] = {
    {{15, 100}, {15, 25}, {5, 20}, {9, 14}},
    {{30, 100}, {15, 25}, {10, 40}, {12, 18}},
    {{100, 100}, {20, 20}, {140, 240}, {27, 33}},
    {{15, 100}, {15, 25}, {5, 20}, {6, 12}},
};

ArchiveConfig from_row(const ArchiveRow& r) {
  ArchiveConfig c;
  c.dims = r.dims;
  c.downsample_dims = r.downsample;
  c.component_range = r.components;
  c.task_length_range = r.task_length;
  return c;
}

void check_setup_id(int setup) {
  if (setup < 1 || setup > 4) throw ConfigError("archive table has rows for setups 1-4 only");
}

}  // namespace

ArchiveConfig printed_archive_config(int setup) {
  check_setup_id(setup);
  return from_row(kPrintedRows[setup - 1]);
}

ArchiveConfig corrected_archive_config(int setup) {
  check_setup_id(setup);
  // Row whose component upper bound equals the setup's shelf count (20, 20, 40, 240).
  constexpr int kRowFor[4] = {0, 3, 1, 2};
  return from_row(kPrintedRows[kRowFor[setup - 1]]);
}

Layout workstation_template(int height, int width, Rect storage, int n_workstations) {
  if (storage.col < 1 || storage.col + storage.width > width - 1) {
    throw ConfigError("workstation template needs at least one non-storage column on each side");
  }
  if (n_workstations < 0 || n_workstations > 2 * height) throw ConfigError("too many workstations for the grid height");
  Layout l(height, width, storage);
  const int left = (n_workstations + 1) / 2;
  const int right = n_workstations / 2;
  auto place = [&](int count, int col) {
    for (int i = 0; i < count; ++i) l.set(Cell{(2 * i + 1) * height / (2 * count), col}, Tile::Workstation);
  };
  place(left, 0);
  place(right, width - 1);
  return l;
}

namespace {

// Empty non-storage tiles form one 4-connected region.
bool outer_empty_connected(const Layout& l) {
  int start = -1;
  int total = 0;
  for (int v = 0; v < l.size(); ++v) {
    if (!l.in_storage(v) && l.at(v) == Tile::Empty) {
      ++total;
      if (start < 0) start = v;
    }
  }
  if (total == 0) return false;
  std::vector<char> seen(static_cast<std::size_t>(l.size()), 0);
  std::deque<int> q{start};
  seen[start] = 1;
  int count = 0;
  int nb[4];
  while (!q.empty()) {
    const int v = q.front();
    q.pop_front();
    ++count;
    const int k = l.neighbors(v, nb);
    for (int j = 0; j < k; ++j) {
      const int u = nb[j];
      if (!seen[u] && !l.in_storage(u) && l.at(u) == Tile::Empty) {
        seen[u] = 1;
        q.push_back(u);
      }
    }
  }
  return count == total;
}

bool touches(const Layout& l, int v, auto pred) {
  int nb[4];
  const int k = l.neighbors(v, nb);
  for (int j = 0; j < k; ++j)
    if (pred(nb[j])) return true;
  return false;
}

}  // namespace

Layout home_template(int height, int width, Rect storage, int n_homes) {
  Layout l(height, width, storage);
  // Distance of each non-storage tile to the storage rectangle (Chebyshev);
  // candidates are visited ring by ring, starting one tile away from storage
  // so the ring adjacent to storage stays empty and keeps storage reachable.
  auto ring = [&](Cell c) {
    const int dr = std::max({storage.row - c.row, c.row - (storage.row + storage.height - 1), 0});
    const int dc = std::max({storage.col - c.col, c.col - (storage.col + storage.width - 1), 0});
    return std::max(dr, dc);
  };
  std::vector<int> order;
  for (int v = 0; v < l.size(); ++v)
    if (!l.in_storage(v)) order.push_back(v);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const int ra = ring(l.cell(a));
    const int rb = ring(l.cell(b));
    // Rings 2, 3, ... first (outermost last), ring 1 (adjacent to storage) never.
    return (ra == 1 ? 1 << 20 : ra) < (rb == 1 ? 1 << 20 : rb);
  });
  auto is_empty = [&](int u) { return l.at(u) == Tile::Empty && !l.in_storage(u); };
  int placed = 0;
  for (int pass = 0; pass < 2 && placed < n_homes; ++pass) {
    for (int v : order) {
      if (placed == n_homes) break;
      if (l.at(v) != Tile::Empty) continue;
      if (ring(l.cell(v)) == 1) continue;
      // First pass keeps a checkerboard spacing so rings stay porous.
      if (pass == 0 && (l.cell(v).row + l.cell(v).col) % 2 != 0) continue;
      l.set(v, Tile::HomeLocation);
      bool ok = touches(l, v, is_empty) && outer_empty_connected(l);
      // Neighbouring homes must keep an empty neighbour.
      int nb[4];
      const int k = l.neighbors(v, nb);
      for (int j = 0; j < k && ok; ++j)
        if (l.at(nb[j]) == Tile::HomeLocation && !touches(l, nb[j], is_empty)) ok = false;
      if (ok) {
        ++placed;
      } else {
        l.set(v, Tile::Empty);
      }
    }
  }
  if (placed < n_homes) throw ConfigError("cannot fit " + std::to_string(n_homes) + " home locations around storage");
  for (int v = 0; v < l.size(); ++v) {
    if (l.at(v) != Tile::HomeLocation) continue;
    // The first home acts as the repair flow source; it must not touch storage.
    if (touches(l, v, [&](int u) { return l.in_storage(u); })) throw ConfigError("home template: source touches storage");
    break;
  }
  return l;
}

Layout make_template(const SetupSpec& s) {
  return s.scenario == Scenario::Workstation ? workstation_template(s.height, s.width, s.storage, s.n_workstations)
                                             : home_template(s.height, s.width, s.storage, s.n_homes);
}

Layout human_layout(const Layout& base, int n_shelves) {
  const Rect s = base.storage();
  const int bands = (s.height + 1) / 4;
  if (bands == 0 || n_shelves % bands != 0) {
    throw ConfigError("human layout: " + std::to_string(n_shelves) + " shelves cannot be split evenly over " +
                      std::to_string(bands) + " shelf rows");
  }
  const int per_row = n_shelves / bands;
  const int runs = (per_row + 9) / 10;
  const int run_len = per_row / runs;
  const int used_width = per_row + (runs - 1);
  if (per_row % runs != 0 || used_width > s.width) {
    throw ConfigError("human layout: " + std::to_string(per_row) + " shelves do not fit in a row of width " +
                      std::to_string(s.width));
  }
  Layout l = base;
  for (int v : l.storage_indices()) l.set(v, Tile::Empty);
  const int top = s.row + (s.height - (4 * bands - 1)) / 2;
  const int left = s.col + (s.width - used_width) / 2;
  for (int b = 0; b < bands; ++b) {
    const int shelf_row = top + 4 * b + 1;
    for (int r = 0; r < runs; ++r) {
      for (int i = 0; i < run_len; ++i) {
        const int col = left + r * (run_len + 1) + i;
        l.set(Cell{shelf_row - 1, col}, Tile::Endpoint);
        l.set(Cell{shelf_row, col}, Tile::Shelf);
        l.set(Cell{shelf_row + 1, col}, Tile::Endpoint);
      }
    }
  }
  return l;
}

Layout human_layout(const SetupSpec& setup) { return human_layout(make_template(setup), setup.n_shelves); }

SetupSpec named_setup(const std::string& name) {
  SetupSpec s;
  s.name = name;
  if (name == "1") {
    s.scenario = Scenario::HomeLocation;
    s.height = 17;
    s.width = 20;
    s.storage = Rect{4, 4, 9, 12};
    s.n_shelves = 20;
    s.n_homes = 88;
    s.n_agents = 88;
    s.archive = printed_archive_config(1);
  } else if (name == "2") {
    s.height = 9;
    s.width = 16;
    s.storage = Rect{0, 2, 9, 12};
    s.n_shelves = 20;
    s.n_workstations = 6;
    s.n_agents = 60;
    s.archive = printed_archive_config(2);
  } else if (name == "3") {
    s.height = 17;
    s.width = 16;
    s.storage = Rect{0, 2, 17, 12};
    s.n_shelves = 40;
    s.n_workstations = 10;
    s.n_agents = 90;
    s.archive = printed_archive_config(3);
  } else if (name == "4") {
    s.height = 33;
    s.width = 36;
    s.storage = Rect{0, 2, 33, 32};
    s.n_shelves = 240;
    s.n_workstations = 22;
    s.n_agents = 200;
    s.archive = printed_archive_config(4);
  } else if (name == "desk") {
    s.height = 7;
    s.width = 13;
    s.storage = Rect{0, 2, 7, 9};
    s.n_shelves = 12;
    s.n_workstations = 4;
    s.n_agents = 20;
    s.horizon = 500;
    s.n_evals = 3;
    s.eval_budget = 500;
    s.batch = 25;
    s.archive.dims = {12, 20};
    s.archive.downsample_dims = {6, 10};
    s.archive.component_range = {1, 13};
    s.archive.task_length_range = {6, 12};
  } else {
    throw ConfigError("unknown setup '" + name + "' (expected 1, 2, 3, 4 or desk)");
  }
  return s;
}

std::vector<std::string> setup_names() { return {"1", "2", "3", "4", "desk"}; }

}  // namespace layopt
