#pragma once

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "layopt/layout.hpp"

namespace layopt {

enum class Sense { LessEqual, GreaterEqual, Equal };

struct Term {
  int var;
  double coef;
};

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;  // kInfinity for unbounded
  bool binary = false;
  double objective = 0.0;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::Equal;
  double rhs = 0.0;
};

inline constexpr double kInfinity = 1e30;

// Tile-type slots of the repair model. Only the five slots relevant to the
// scenario get variables: Workstation drops h, HomeLocation drops w.
enum class Slot { Home = 0, Workstation, Endpoint, Shelf, Empty, Dummy };
inline constexpr int kNumSlots = 6;
char slot_letter(Slot s);  // h w e s p d

// The mixed-integer repair program for one unrepaired layout.
struct RepairModel {
  Scenario scenario = Scenario::Workstation;
  Layout input;  // unrepaired layout
  int n_shelves = 0;
  int n_workstations = 0;
  int n_homes = 0;
  int source = -1;  // vertex index of the dummy source
  std::vector<Variable> variables;
  std::vector<Constraint> constraints;
  double objective_constant = 0.0;  // objective + constant = sum |x - x0| over all slots

  // x[slot][v] -> variable index, or -1 when the slot is not modelled.
  std::array<std::vector<int>, kNumSlots> x;
  std::vector<std::pair<int, int>> flow_edges;  // (u, v) per flow variable, directed
  std::vector<int> flow_var;                    // parallel to flow_edges
  std::vector<int> supply_var;                  // per vertex
  std::vector<int> demand_var;                  // per vertex

  std::vector<Slot> slots() const;  // modelled slots in a fixed order
  int num_binaries() const;
  int num_continuous() const;
};

// Builds the program; throws std::invalid_argument when the non-storage area
// holds a tile type the scenario cannot represent or has no source candidate.
RepairModel build_model(const Layout& unrepaired, Scenario scenario, int n_shelves, int n_workstations,
                        int n_homes);

// CPLEX LP text. Deterministic: identical models give identical bytes.
std::string export_lp(const RepairModel& model);

enum class SolveStatus { Optimal, Feasible, Infeasible, Timeout, Error };
std::string_view solve_status_name(SolveStatus s);

struct SolveResult {
  SolveStatus status = SolveStatus::Error;
  std::vector<double> values;  // one per model variable, empty when none found
  std::string message;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pluggable MILP backend: model in, variable assignment out.
class SolverAdapter {
 public:
  virtual ~SolverAdapter() = default;
  virtual SolveResult solve(const RepairModel& model, double time_limit_seconds) = 0;
  virtual std::string name() const = 0;
};

// In-process HiGHS loaded at runtime from a shared library. The library path
// is taken from LAYOPT_HIGHS_LIBRARY, then the build-time default, then the
// system loader search path.
class HighsAdapter : public SolverAdapter {
 public:
  explicit HighsAdapter(std::string library_path = "");
  SolveResult solve(const RepairModel& model, double time_limit_seconds) override;
  std::string name() const override { return "highs"; }
  static bool available(const std::string& library_path = "");
  std::string library() const { return library_; }

 private:
  std::string library_;
};

// External solver process: `<command> <model.lp> <time_limit>`. The process
// prints `<variable name> <value>` lines on stdout and reports status through
// its exit code: 0 optimal, 1 feasible (limit reached), 2 infeasible,
// 3 limit reached without a solution; anything else is an error.
class CommandAdapter : public SolverAdapter {
 public:
  explicit CommandAdapter(std::string command, std::string work_dir = "");
  SolveResult solve(const RepairModel& model, double time_limit_seconds) override;
  std::string name() const override { return "command:" + command_; }

 private:
  std::string command_;
  std::string work_dir_;
};

// Adapter selection: "highs", "highs:<library path>" or "command:<executable>".
// An empty spec consults LAYOPT_SOLVER and falls back to "highs".
std::unique_ptr<SolverAdapter> make_solver(const std::string& spec = "");

enum class RepairStatus { Optimal, Feasible, Infeasible, Timeout };
std::string_view repair_status_name(RepairStatus s);

struct RepairOutcome {
  RepairStatus status = RepairStatus::Infeasible;
  std::optional<Layout> repaired;
  int hamming_distance = 0;  // number of tiles that differ from the input
  double solve_time = 0.0;   // seconds
  double objective = 0.0;    // model objective including the constant (2 x changed tiles)
};

inline constexpr double kDefaultRepairTimeLimit = 120.0;
inline constexpr double kIntegralityTolerance = 1e-6;

// Builds, solves and decodes. The workstation and home-location counts are
// those of the fixed non-storage template. A decoded layout that fails the
// validity checks raises std::logic_error (it would indicate a modelling bug).
RepairOutcome repair(const Layout& unrepaired, Scenario scenario, int n_shelves, SolverAdapter& solver,
                     double time_limit = kDefaultRepairTimeLimit);

// Decodes a solver assignment into a layout (dummy source mapped back).
Layout decode_solution(const RepairModel& model, const std::vector<double>& values);

nlohmann::json to_json(const RepairOutcome& o);

}  // namespace layopt
