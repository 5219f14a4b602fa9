#include "layopt/validation.hpp"

#include <algorithm>
#include <array>

namespace layopt {

std::string_view rule_name(Rule r) {
  switch (r) {
    case Rule::Disconnected: return "disconnected";
    case Rule::EndpointWithoutShelf: return "endpoint-without-shelf";
    case Rule::ShelfWithoutEndpoints: return "shelf-without-two-endpoints";
    case Rule::TooFewHomeLocations: return "too-few-home-locations";
    case Rule::NoEmptyPath: return "no-empty-path";
    case Rule::Unreachable: return "unreachable";
  }
  return "?";
}

bool ValidationReport::has(Rule r) const {
  return std::any_of(violations.begin(), violations.end(), [r](const Violation& v) { return v.rule == r; });
}

namespace {

// Component labels over tiles accepted by `pred`; -1 elsewhere.
template <typename Pred>
std::vector<int> label_components(const Layout& layout, Pred pred) {
  std::vector<int> label(static_cast<std::size_t>(layout.size()), -1);
  std::vector<int> stack;
  int next = 0;
  int nb[4];
  for (int s = 0; s < layout.size(); ++s) {
    if (label[s] >= 0 || !pred(layout.at(s))) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      const int n = layout.neighbors(v, nb);
      for (int k = 0; k < n; ++k) {
        if (label[nb[k]] < 0 && pred(layout.at(nb[k]))) {
          label[nb[k]] = next;
          stack.push_back(nb[k]);
        }
      }
    }
    ++next;
  }
  return label;
}

bool is_task_tile(Tile t) {
  return t == Tile::Endpoint || t == Tile::Workstation || t == Tile::HomeLocation;
}

}  // namespace

ValidationReport validate(const Layout& layout, Scenario /*scenario*/, int n_agents) {
  ValidationReport report;
  auto add = [&](Rule r, int idx) { report.violations.push_back({r, layout.cell(idx)}); };
  int nb[4];

  // (1) task tiles mutually connected through non-shelf tiles.
  const auto trav = label_components(layout, [](Tile t) { return traversable(t); });
  int task_component = -1;
  bool connected = true;
  for (int i = 0; i < layout.size(); ++i) {
    if (!is_task_tile(layout.at(i))) continue;
    if (task_component < 0) task_component = trav[i];
    if (trav[i] != task_component) {
      connected = false;
      add(Rule::Disconnected, i);
    }
  }

  // (2) endpoints touch a shelf, (3) shelves touch two endpoints.
  bool adjacency = true;
  for (int i = 0; i < layout.size(); ++i) {
    const Tile t = layout.at(i);
    if (t != Tile::Endpoint && t != Tile::Shelf) continue;
    const int n = layout.neighbors(i, nb);
    int shelves = 0;
    int endpoints = 0;
    for (int k = 0; k < n; ++k) {
      shelves += layout.at(nb[k]) == Tile::Shelf;
      endpoints += layout.at(nb[k]) == Tile::Endpoint;
    }
    if (t == Tile::Endpoint && shelves < 1) {
      adjacency = false;
      add(Rule::EndpointWithoutShelf, i);
    }
    if (t == Tile::Shelf && endpoints < 2) {
      adjacency = false;
      add(Rule::ShelfWithoutEndpoints, i);
    }
  }
  report.is_valid = connected && adjacency;

  // Reachability: every traversable tile in one component.
  int main_component = task_component;
  if (main_component < 0) {
    for (int i = 0; i < layout.size(); ++i) {
      if (trav[i] >= 0) {
        main_component = trav[i];
        break;
      }
    }
  }
  report.is_reachable = true;
  for (int i = 0; i < layout.size(); ++i) {
    if (trav[i] >= 0 && trav[i] != main_component) {
      report.is_reachable = false;
      add(Rule::Unreachable, i);
    }
  }

  // Well-formed: enough home locations, and every endpoint/home pair is joined
  // by a path whose intermediate tiles are all empty.
  bool well_formed = report.is_valid;
  const int homes = layout.count(Tile::HomeLocation);
  if (homes < n_agents) {
    well_formed = false;
    report.violations.push_back({Rule::TooFewHomeLocations, Cell{-1, -1}});
  }
  const auto white = label_components(layout, [](Tile t) { return t == Tile::Empty; });
  std::vector<int> special;
  for (int i = 0; i < layout.size(); ++i) {
    const Tile t = layout.at(i);
    if (t == Tile::Endpoint || t == Tile::HomeLocation) special.push_back(i);
  }
  std::vector<std::array<int, 4>> comps(special.size());
  for (std::size_t a = 0; a < special.size(); ++a) {
    comps[a].fill(-1);
    const int n = layout.neighbors(special[a], nb);
    for (int k = 0; k < n; ++k) comps[a][k] = white[nb[k]];
  }
  auto linked = [&](std::size_t a, std::size_t b) {
    const int ia = special[a];
    const int ib = special[b];
    const Cell ca = layout.cell(ia);
    const Cell cb = layout.cell(ib);
    if (std::abs(ca.row - cb.row) + std::abs(ca.col - cb.col) == 1) return true;
    for (int x : comps[a]) {
      if (x < 0) continue;
      for (int y : comps[b]) {
        if (x == y) return true;
      }
    }
    return false;
  };
  std::vector<char> failing(special.size(), 0);
  for (std::size_t a = 0; a < special.size(); ++a) {
    for (std::size_t b = a + 1; b < special.size(); ++b) {
      if (!linked(a, b)) failing[a] = failing[b] = 1;
    }
  }
  for (std::size_t a = 0; a < special.size(); ++a) {
    if (failing[a]) {
      well_formed = false;
      add(Rule::NoEmptyPath, special[a]);
    }
  }
  report.is_well_formed = well_formed;
  return report;
}

}  // namespace layopt
