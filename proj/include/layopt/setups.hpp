#pragma once

#include <string>
#include <vector>

#include "layopt/layout.hpp"
#include "layopt/qd.hpp"
#include "layopt/simulator.hpp"

namespace layopt {

// One experiment setup: grid geometry, counts and default search parameters.
struct SetupSpec {
  std::string name;
  Scenario scenario = Scenario::Workstation;
  int height = 0;  // full grid
  int width = 0;
  Rect storage;
  int n_shelves = 0;
  int n_workstations = 0;  // non-storage template counts
  int n_homes = 0;
  int n_agents = 0;
  PlannerKind planner = PlannerKind::RHCR;
  int horizon = 1000;       // T per simulation during search
  int n_evals = 5;          // N_e simulations per evaluation
  int eval_budget = 10000;  // N_eval
  int batch = 50;           // b
  ArchiveConfig archive;
};

// Named setups "1".."4" (benchmark experiments) and "desk" (9x7 storage, small
// enough to optimize on one machine).
SetupSpec named_setup(const std::string& name);
std::vector<std::string> setup_names();

// Archive table rows exactly as printed. The component ranges of setups 2-4
// do not match their shelf counts; `corrected_archive_config` returns the
// rotation in which each component upper bound equals N_s.
ArchiveConfig printed_archive_config(int setup);
ArchiveConfig corrected_archive_config(int setup);

// Non-storage template with an all-empty storage area.
//  - Workstation: storage centred horizontally between two empty border
//    columns per side; workstations on the outermost columns, evenly spaced.
//  - HomeLocation: home locations on a frame around the storage area chosen so
//    every home touches an empty tile, the empty tiles outside storage form one
//    connected region, and the first home (row-major) touches no storage tile.
Layout workstation_template(int height, int width, Rect storage, int n_workstations);
Layout home_template(int height, int width, Rect storage, int n_homes);
Layout make_template(const SetupSpec& setup);

// Human-style storage fill: shelves in horizontal runs of at most 10 with
// endpoints directly above and below each shelf, bands repeating every 4 rows
// (endpoint, shelf, endpoint, empty), centred in the storage area. Throws
// ConfigError when n_shelves cannot be placed evenly.
Layout human_layout(const Layout& base, int n_shelves);
Layout human_layout(const SetupSpec& setup);

}  // namespace layopt
