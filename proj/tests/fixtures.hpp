#pragma once

// Hand-built layouts shared by unit and acceptance tests.

#include "helpers.hpp"

namespace testutil {

// Open 8x8 workstation map: workstation at (3,0), one shelf at (3,d-1) with
// endpoints above and below it. Both endpoints lie at BFS distance d from the
// workstation, so a lone agent alternating between them finishes one task
// every d steps.
inline Layout single_agent_map(int d) {
  Layout l(8, 8, Rect{0, 1, 8, 7});
  l.set(Cell{3, 0}, Tile::Workstation);
  l.set(Cell{3, d - 1}, Tile::Shelf);
  l.set(Cell{2, d - 1}, Tile::Endpoint);
  l.set(Cell{4, d - 1}, Tile::Endpoint);
  return l;
}

// One-tile-high corridor with a workstation at each end; agents travelling
// between the ends must pass each other head-on, which is impossible.
inline Layout corridor_map(int length = 12) {
  Layout l(1, length, Rect{0, 1, 1, length - 2});
  l.set(Cell{0, 0}, Tile::Workstation);
  l.set(Cell{0, length - 1}, Tile::Workstation);
  return l;
}

// Well-formed home-location map: home columns on both sides of a 5x6 storage
// area holding two shelves.
inline Layout small_home_map() {
  return from_rows({"r......r",
                    "r.e@e..r",
                    "r......r",
                    "r..e@e.r",
                    "r......r"},
                   Rect{0, 1, 5, 6});
}

// Sparse workstation layout with wide aisles, used as a free-flow control.
inline Layout open_workstation_map() {
  return from_rows({"................",
                    "w..............w",
                    "...e@e....e@e...",
                    "................",
                    "w..............w",
                    "................",
                    "...e@e....e@e...",
                    "w..............w",
                    "................"},
                   Rect{0, 2, 9, 12});
}

}  // namespace testutil
