#include "layopt/repair.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "layopt/validation.hpp"

namespace layopt {

char slot_letter(Slot s) {
  switch (s) {
    case Slot::Home: return 'h';
    case Slot::Workstation: return 'w';
    case Slot::Endpoint: return 'e';
    case Slot::Shelf: return 's';
    case Slot::Empty: return 'p';
    case Slot::Dummy: return 'd';
  }
  return '?';
}

std::vector<Slot> RepairModel::slots() const {
  if (scenario == Scenario::Workstation) return {Slot::Workstation, Slot::Endpoint, Slot::Shelf, Slot::Empty, Slot::Dummy};
  return {Slot::Home, Slot::Endpoint, Slot::Shelf, Slot::Empty, Slot::Dummy};
}

int RepairModel::num_binaries() const {
  return static_cast<int>(std::count_if(variables.begin(), variables.end(), [](const Variable& v) { return v.binary; }));
}

int RepairModel::num_continuous() const { return static_cast<int>(variables.size()) - num_binaries(); }

namespace {

std::optional<Slot> slot_of(Tile t) {
  switch (t) {
    case Tile::HomeLocation: return Slot::Home;
    case Tile::Workstation: return Slot::Workstation;
    case Tile::Endpoint: return Slot::Endpoint;
    case Tile::Shelf: return Slot::Shelf;
    case Tile::Empty: return Slot::Empty;
    case Tile::DummySource: return Slot::Dummy;
  }
  return std::nullopt;
}

Tile tile_of(Slot s) {
  switch (s) {
    case Slot::Home: return Tile::HomeLocation;
    case Slot::Workstation: return Tile::Workstation;
    case Slot::Endpoint: return Tile::Endpoint;
    case Slot::Shelf: return Tile::Shelf;
    case Slot::Empty: return Tile::Empty;
    case Slot::Dummy: return Tile::DummySource;
  }
  return Tile::Empty;
}

std::string rc(const Layout& l, int v) {
  const Cell c = l.cell(v);
  return std::to_string(c.row) + "_" + std::to_string(c.col);
}

}  // namespace

RepairModel build_model(const Layout& input, Scenario scenario, int n_shelves, int n_workstations, int n_homes) {
  RepairModel m;
  m.scenario = scenario;
  m.input = input;
  m.n_shelves = n_shelves;
  m.n_workstations = n_workstations;
  m.n_homes = n_homes;
  const int n = input.size();
  const double big = static_cast<double>(n);
  const Tile source_tile = scenario == Scenario::Workstation ? Tile::Workstation : Tile::HomeLocation;
  for (int v = 0; v < n && m.source < 0; ++v) {
    if (!input.in_storage(v) && input.at(v) == source_tile) m.source = v;
  }
  if (m.source < 0) {
    throw std::invalid_argument(std::string("repair: the non-storage area has no ") +
                                (scenario == Scenario::Workstation ? "workstation" : "home location") +
                                " to act as the flow source");
  }
  const auto slots = m.slots();
  auto modelled = [&](Slot s) { return std::find(slots.begin(), slots.end(), s) != slots.end(); };

  // Unrepaired slot per vertex; the source counts as the dummy type.
  std::vector<Slot> initial(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    const auto s = v == m.source ? std::optional<Slot>(Slot::Dummy) : slot_of(input.at(v));
    if (!s || (*s == Slot::Dummy && v != m.source) || !modelled(*s)) {
      throw std::invalid_argument("repair: tile '" + std::string(1, tile_char(input.at(v))) + "' at (" +
                                  std::to_string(input.cell(v).row) + "," + std::to_string(input.cell(v).col) + ")" +
                                  " cannot appear in the " + std::string(scenario_name(scenario)) + " scenario");
    }
    initial[v] = *s;
  }

  auto add_var = [&](std::string name, double lo, double hi, bool binary, double cost) {
    m.variables.push_back({std::move(name), lo, hi, binary, cost});
    return static_cast<int>(m.variables.size()) - 1;
  };
  for (auto& col : m.x) col.assign(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    for (Slot s : slots) {
      const double x0 = initial[v] == s ? 1.0 : 0.0;
      double lo = 0.0;
      double hi = 1.0;
      if (s == Slot::Dummy) lo = hi = v == m.source ? 1.0 : 0.0;
      m.x[static_cast<int>(s)][v] =
          add_var(std::string("x_") + slot_letter(s) + "_" + rc(input, v), lo, hi, true, 1.0 - 2.0 * x0);
    }
  }
  m.objective_constant = n;

  int nb[4];
  for (int u = 0; u < n; ++u) {
    const int k = input.neighbors(u, nb);
    for (int j = 0; j < k; ++j) {
      m.flow_edges.emplace_back(u, nb[j]);
      m.flow_var.push_back(add_var("f_" + rc(input, u) + "_" + rc(input, nb[j]), 0.0, kInfinity, false, 0.0));
    }
  }
  m.supply_var.resize(static_cast<std::size_t>(n));
  m.demand_var.resize(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) m.supply_var[v] = add_var("fs_" + rc(input, v), 0.0, kInfinity, false, 0.0);
  for (int v = 0; v < n; ++v) m.demand_var[v] = add_var("ft_" + rc(input, v), 0.0, kInfinity, false, 0.0);

  auto X = [&](Slot s, int v) { return m.x[static_cast<int>(s)][v]; };
  auto add_row = [&](std::string name, std::vector<Term> terms, Sense sense, double rhs) {
    m.constraints.push_back({std::move(name), std::move(terms), sense, rhs});
  };

  // Exactly one type per vertex.
  for (int v = 0; v < n; ++v) {
    std::vector<Term> t;
    for (Slot s : slots) t.push_back({X(s, v), 1.0});
    add_row("uniq_" + rc(input, v), std::move(t), Sense::Equal, 1.0);
  }
  // Non-storage tiles keep their type (the source is fixed through its bounds).
  for (int v = 0; v < n; ++v) {
    if (input.in_storage(v) || v == m.source) continue;
    add_row("fix_" + rc(input, v), {{X(initial[v], v), 1.0}}, Sense::Equal, 1.0);
  }
  // Global counts.
  {
    std::vector<Term> t;
    const Slot counted = scenario == Scenario::Workstation ? Slot::Workstation : Slot::Home;
    for (int v = 0; v < n; ++v) {
      t.push_back({X(counted, v), 1.0});
      t.push_back({X(Slot::Dummy, v), 1.0});
    }
    if (scenario == Scenario::Workstation) {
      add_row("count_w", std::move(t), Sense::Equal, n_workstations);
    } else {
      add_row("count_h", std::move(t), Sense::Equal, n_homes);
    }
  }
  // Shelf/endpoint adjacency.
  for (int v = 0; v < n; ++v) {
    const int k = input.neighbors(v, nb);
    std::vector<Term> te;
    std::vector<Term> ts;
    for (int j = 0; j < k; ++j) {
      te.push_back({X(Slot::Shelf, nb[j]), 1.0});
      ts.push_back({X(Slot::Endpoint, nb[j]), 1.0});
    }
    te.push_back({X(Slot::Endpoint, v), -1.0});
    ts.push_back({X(Slot::Shelf, v), -2.0});
    add_row("adj_e_" + rc(input, v), std::move(te), Sense::GreaterEqual, 0.0);
    add_row("adj_s_" + rc(input, v), std::move(ts), Sense::GreaterEqual, 0.0);
  }
  // Reachability as single-source flow: every sink-type vertex consumes one
  // unit, only the dummy source supplies, blocked types emit nothing.
  std::vector<Slot> sinks;
  for (Slot s : slots) {
    if (s != Slot::Dummy && s != Slot::Shelf) sinks.push_back(s);
  }
  std::vector<Slot> blocking{Slot::Shelf};
  if (scenario == Scenario::HomeLocation) blocking = {Slot::Shelf, Slot::Home, Slot::Endpoint};
  for (int v = 0; v < n; ++v) {
    std::vector<Term> t{{m.demand_var[v], 1.0}};
    for (Slot s : sinks) t.push_back({X(s, v), -1.0});
    add_row("demand_" + rc(input, v), std::move(t), Sense::Equal, 0.0);
  }
  for (int v = 0; v < n; ++v) {
    add_row("supply_" + rc(input, v), {{m.supply_var[v], 1.0}, {X(Slot::Dummy, v), -big}}, Sense::LessEqual, 0.0);
  }
  {
    std::vector<std::vector<Term>> balance(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
      balance[v].push_back({m.supply_var[v], 1.0});
      balance[v].push_back({m.demand_var[v], -1.0});
    }
    for (std::size_t e = 0; e < m.flow_edges.size(); ++e) {
      const auto [u, v] = m.flow_edges[e];
      balance[v].push_back({m.flow_var[e], 1.0});
      balance[u].push_back({m.flow_var[e], -1.0});
    }
    for (int v = 0; v < n; ++v) add_row("balance_" + rc(input, v), std::move(balance[v]), Sense::Equal, 0.0);
  }
  for (std::size_t e = 0; e < m.flow_edges.size(); ++e) {
    const auto [u, v] = m.flow_edges[e];
    std::vector<Term> t{{m.flow_var[e], 1.0}};
    for (Slot s : blocking) t.push_back({X(s, u), big});
    add_row("block_" + rc(input, u) + "_" + rc(input, v), std::move(t), Sense::LessEqual, big);
  }
  // Storage capacity.
  {
    std::vector<Term> t;
    for (int v = 0; v < n; ++v) t.push_back({X(Slot::Shelf, v), 1.0});
    add_row("count_s", std::move(t), Sense::Equal, n_shelves);
  }
  return m;
}

namespace {

std::string number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_terms(std::ostringstream& os, const RepairModel& m, const std::vector<Term>& terms) {
  int on_line = 0;
  bool first = true;
  for (const auto& t : terms) {
    if (t.coef == 0.0) continue;
    if (on_line == 8) {
      os << "\n   ";
      on_line = 0;
    }
    const double a = std::abs(t.coef);
    if (first) {
      if (t.coef < 0) os << "- ";
    } else {
      os << (t.coef < 0 ? " - " : " + ");
    }
    if (a != 1.0) os << number(a) << ' ';
    os << m.variables[t.var].name;
    first = false;
    ++on_line;
  }
  if (first) os << "0 " << m.variables.front().name;
}

}  // namespace

std::string export_lp(const RepairModel& m) {
  std::ostringstream os;
  const Rect s = m.input.storage();
  os << "\\ warehouse layout repair, scenario " << scenario_name(m.scenario) << ", grid " << m.input.height() << "x"
     << m.input.width() << ", storage " << s.row << " " << s.col << " " << s.height << " " << s.width << "\n";
  os << "\\ N_s " << m.n_shelves << " N_w " << m.n_workstations << " N_h " << m.n_homes << "\n";
  os << "\\ objective constant " << number(m.objective_constant) << " (objective + constant = sum |x - x0|)\n";
  os << "Minimize\n obj: ";
  std::vector<Term> obj;
  for (std::size_t i = 0; i < m.variables.size(); ++i) {
    if (m.variables[i].objective != 0.0) obj.push_back({static_cast<int>(i), m.variables[i].objective});
  }
  write_terms(os, m, obj);
  os << "\nSubject To\n";
  for (const auto& c : m.constraints) {
    os << ' ' << c.name << ": ";
    write_terms(os, m, c.terms);
    os << (c.sense == Sense::LessEqual ? " <= " : c.sense == Sense::GreaterEqual ? " >= " : " = ") << number(c.rhs)
       << '\n';
  }
  os << "Bounds\n";
  for (const auto& v : m.variables) {
    if (v.lower == v.upper) {
      os << ' ' << v.name << " = " << number(v.lower) << '\n';
    } else if (!v.binary && (v.lower != 0.0 || v.upper < kInfinity)) {
      os << ' ' << number(v.lower) << " <= " << v.name << " <= " << number(v.upper) << '\n';
    }
  }
  os << "Binaries\n";
  int on_line = 0;
  for (const auto& v : m.variables) {
    if (!v.binary) continue;
    os << (on_line == 0 ? " " : " ") << v.name;
    if (++on_line == 8) {
      os << '\n';
      on_line = 0;
    }
  }
  if (on_line) os << '\n';
  os << "End\n";
  return os.str();
}

std::string_view solve_status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Timeout: return "timeout";
    case SolveStatus::Error: return "error";
  }
  return "?";
}

std::string_view repair_status_name(RepairStatus s) {
  switch (s) {
    case RepairStatus::Optimal: return "optimal";
    case RepairStatus::Feasible: return "feasible";
    case RepairStatus::Infeasible: return "infeasible";
    case RepairStatus::Timeout: return "timeout";
  }
  return "?";
}

Layout decode_solution(const RepairModel& m, const std::vector<double>& values) {
  if (values.size() != m.variables.size()) throw SolverError("solution has the wrong number of values");
  Layout out = m.input;
  for (int v = 0; v < out.size(); ++v) {
    std::optional<Slot> chosen;
    for (Slot s : m.slots()) {
      const double x = values[m.x[static_cast<int>(s)][v]];
      const double r = std::round(x);
      if (std::abs(x - r) > kIntegralityTolerance || (r != 0.0 && r != 1.0)) {
        throw SolverError("non-integral value " + number(x) + " for " + m.variables[m.x[static_cast<int>(s)][v]].name);
      }
      if (r == 1.0) {
        if (chosen) throw SolverError("two tile types chosen at " + rc(out, v));
        chosen = s;
      }
    }
    if (!chosen) throw SolverError("no tile type chosen at " + rc(out, v));
    out.set(v, *chosen == Slot::Dummy ? m.input.at(v) : tile_of(*chosen));
  }
  return out;
}

RepairOutcome repair(const Layout& unrepaired, Scenario scenario, int n_shelves, SolverAdapter& solver,
                     double time_limit) {
  int n_ws = 0;
  int n_home = 0;
  for (int v = 0; v < unrepaired.size(); ++v) {
    if (unrepaired.in_storage(v)) continue;
    n_ws += unrepaired.at(v) == Tile::Workstation;
    n_home += unrepaired.at(v) == Tile::HomeLocation;
  }
  const auto model = build_model(unrepaired, scenario, n_shelves, n_ws, n_home);
  const auto start = std::chrono::steady_clock::now();
  const auto result = solver.solve(model, time_limit);
  RepairOutcome out;
  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  switch (result.status) {
    case SolveStatus::Optimal: out.status = RepairStatus::Optimal; break;
    case SolveStatus::Feasible: out.status = RepairStatus::Feasible; break;
    case SolveStatus::Infeasible: out.status = RepairStatus::Infeasible; return out;
    case SolveStatus::Timeout: out.status = RepairStatus::Timeout; return out;
    case SolveStatus::Error: throw SolverError(solver.name() + ": " + result.message);
  }
  Layout repaired = decode_solution(model, result.values);
  const auto report = validate(repaired, scenario, 0);
  std::string problem;
  if (!report.acceptable_for(scenario) || !report.is_reachable) problem = "fails validation";
  if (repaired.count(Tile::Shelf) != n_shelves) problem = "has the wrong shelf count";
  for (int v = 0; v < repaired.size(); ++v) {
    if (!repaired.in_storage(v) && repaired.at(v) != unrepaired.at(v)) problem = "changed the non-storage area";
  }
  if (!problem.empty()) throw std::logic_error("repaired layout " + problem + ":\n" + serialize_layout(repaired));
  out.hamming_distance = hamming_distance(unrepaired, repaired);
  out.objective = 2.0 * out.hamming_distance;
  out.repaired = std::move(repaired);
  return out;
}

nlohmann::json to_json(const RepairOutcome& o) {
  nlohmann::json j = {{"status", repair_status_name(o.status)},
                      {"hamming_distance", o.hamming_distance},
                      {"solve_time", o.solve_time},
                      {"objective", o.objective}};
  j["repaired"] = o.repaired ? layout_to_json(*o.repaired) : nlohmann::json(nullptr);
  return j;
}

}  // namespace layopt
