#pragma once

#include <string_view>
#include <vector>

#include "layopt/layout.hpp"

namespace layopt {

enum class Rule {
  Disconnected,          // endpoint/workstation/home tiles not mutually connected via non-shelf tiles
  EndpointWithoutShelf,  // endpoint with no adjacent shelf
  ShelfWithoutEndpoints, // shelf with fewer than two adjacent endpoints
  TooFewHomeLocations,   // fewer home locations than agents
  NoEmptyPath,           // endpoint/home pair not connected through empty tiles only
  Unreachable,           // traversable tile outside the main traversable component
};

std::string_view rule_name(Rule r);

struct Violation {
  Rule rule;
  Cell cell;
};

struct ValidationReport {
  bool is_valid = false;
  bool is_well_formed = false;
  bool is_reachable = false;
  std::vector<Violation> violations;

  // Valid for the workstation scenario, well-formed for the home-location one.
  bool acceptable_for(Scenario s) const {
    return s == Scenario::Workstation ? is_valid : is_well_formed;
  }
  bool has(Rule r) const;
};

// Checks the valid / well-formed / reachable definitions. Pure.
ValidationReport validate(const Layout& layout, Scenario scenario, int n_agents);

}  // namespace layopt
