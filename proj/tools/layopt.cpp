// layopt: command-line driver for layout optimization experiments.
//
// Exit codes: 0 success, 1 I/O or internal error, 2 configuration/input
// error, 3 solver error (including an unrepairable layout), 4 simulation
// precondition failure (layout not valid for the scenario).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "layopt/experiment.hpp"

using namespace layopt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kSolver = 3, kPrecondition = 4 };

// Flags shared by the verbs that take an experiment config. Every flag is a
// JSON override applied on top of the config file (or named setup).
struct ConfigFlags {
  std::string config_file;
  std::string setup;
  std::vector<std::string> sets;
  json overrides = json::object();

  void add(CLI::App* app) {
    app->add_option("-c,--config", config_file, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--setup", setup, "Named setup to inherit from (1, 2, 3, 4, desk)");
    app->add_option("--set", sets, "Override any config field: key=value, dotted keys for nesting (repeatable)");
  }

  template <typename T>
  void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    app->add_option_function<T>(name, [this, key](const T& v) { set_path(key, json(v)); }, help);
  }

  void set_path(const std::string& dotted, json value) {
    json* node = &overrides;
    std::stringstream ss(dotted);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = std::move(value);
  }

  bool given() const { return !config_file.empty() || !setup.empty(); }

  ExperimentConfig load(json base = json::object()) {
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
      const std::string value = s.substr(eq + 1);
      json parsed = json::parse(value, nullptr, false);
      set_path(s.substr(0, eq), parsed.is_discarded() ? json(value) : parsed);
    }
    if (!setup.empty()) overrides["setup"] = setup;
    if (!config_file.empty()) return load_experiment_file(config_file, overrides);
    return load_experiment(std::move(base), overrides);
  }
};

void add_sim_flags(CLI::App* app, ConfigFlags& f) {
  f.flag<int>(app, "--agents", "sim.n_agents", "Number of agents N_a");
  f.flag<std::string>(app, "--planner", "sim.planner", "rhcr or dpp");
  f.flag<int>(app, "--window", "sim.window", "RHCR window w");
  f.flag<int>(app, "--replan", "sim.replan_period", "RHCR replanning period h");
  f.flag<std::uint64_t>(app, "--seed", "seed", "Master seed");
  f.flag<int>(app, "-j,--threads", "n_threads", "Worker threads");
  f.flag<std::string>(app, "--scenario", "scenario", "workstation or home");
}

// Config describing a stand-alone layout file (grid, storage and template counts taken from it).
json config_for_layout(const Layout& l) {
  int w = 0, h = 0, s = 0;
  for (Tile t : l.tiles()) {
    w += t == Tile::Workstation;
    h += t == Tile::HomeLocation;
    s += t == Tile::Shelf;
  }
  const Rect r = l.storage();
  return {{"scenario", h > 0 && w == 0 ? "home" : "workstation"},
          {"height", l.height()},
          {"width", l.width()},
          {"storage", {{"row", r.row}, {"col", r.col}, {"height", r.height}, {"width", r.width}}},
          {"n_shelves", s},
          {"n_workstations", w},
          {"n_homes", h}};
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string archive_dir_of(const std::string& path) {
  if (fs::exists(fs::path(path) / "archive" / "archive.json")) return (fs::path(path) / "archive").string();
  if (fs::exists(fs::path(path) / "archive.json")) return path;
  throw ConfigError("'" + path + "' is neither an archive directory nor an optimize output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Warehouse layout optimization: quality-diversity search with MILP repair and lifelong MAPF evaluation"};
  app.require_subcommand(1);
  app.footer(
      "Solver selection: --solver or the LAYOPT_SOLVER environment variable ('highs', 'highs:<libhighs.so>', "
      "'command:<executable>'). LAYOPT_HIGHS_LIBRARY overrides the HiGHS library path.\n"
      "Exit codes: 0 ok, 1 internal, 2 config/input, 3 solver, 4 simulation precondition.");

  // optimize
  ConfigFlags opt_flags;
  auto* optimize = app.add_subcommand("optimize", "Run MAP-Elites or DSAGE and write the archive, stats and checkpoint");
  opt_flags.add(optimize);
  add_sim_flags(optimize, opt_flags);
  opt_flags.flag<std::string>(optimize, "--algorithm", "algorithm", "mapelites or dsage");
  opt_flags.flag<std::string>(optimize, "--surrogate", "surrogate", "DSAGE surrogate: oracle or command:<exe>");
  opt_flags.flag<int>(optimize, "--budget", "eval_budget", "Simulator evaluations N_eval");
  opt_flags.flag<int>(optimize, "--batch", "batch", "Batch size b");
  opt_flags.flag<int>(optimize, "--n-evals", "n_evals", "Simulations per evaluation N_e");
  opt_flags.flag<int>(optimize, "--horizon", "sim.horizon", "Timesteps T per simulation");
  opt_flags.flag<std::string>(optimize, "--solver", "solver", "MILP solver adapter");
  opt_flags.flag<std::string>(optimize, "--archive-variant", "archive_variant", "printed or corrected (setups 1-4)");
  opt_flags.flag<std::string>(optimize, "-o,--output", "output_dir", "Output directory");
  bool quiet = false;
  optimize->add_flag("-q,--quiet", quiet, "No per-iteration progress on stderr");

  // evaluate
  ConfigFlags ev_flags;
  std::string ev_layout;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Simulate a layout and write a JSON report and plot-ready CSVs");
  evaluate_cmd->add_option("layout", ev_layout, "Layout file")->required()->check(CLI::ExistingFile);
  ev_flags.add(evaluate_cmd);
  add_sim_flags(evaluate_cmd, ev_flags);
  ev_flags.flag<int>(evaluate_cmd, "--runs", "eval_runs", "Number of simulations");
  ev_flags.flag<int>(evaluate_cmd, "--horizon", "eval_horizon", "Timesteps T_eval per simulation");
  ev_flags.flag<std::vector<int>>(evaluate_cmd, "--sweep", "sweep_agents", "Agent counts for a throughput sweep");
  ev_flags.flag<std::string>(evaluate_cmd, "-o,--output", "output_dir", "Output directory");

  // repair
  ConfigFlags rep_flags;
  std::string rep_layout, rep_out, rep_lp;
  auto* repair_cmd = app.add_subcommand("repair", "Repair a layout with the MILP and print the outcome");
  repair_cmd->add_option("layout", rep_layout, "Layout file (unrepaired)")->required()->check(CLI::ExistingFile);
  rep_flags.add(repair_cmd);
  rep_flags.flag<std::string>(repair_cmd, "--scenario", "scenario", "workstation or home");
  rep_flags.flag<int>(repair_cmd, "--shelves", "n_shelves", "Required shelf count N_s");
  rep_flags.flag<std::string>(repair_cmd, "--solver", "solver", "MILP solver adapter");
  rep_flags.flag<double>(repair_cmd, "--time-limit", "repair_time_limit", "Seconds");
  repair_cmd->add_option("-o,--output", rep_out, "Write the repaired layout here");
  repair_cmd->add_option("--lp", rep_lp, "Also export the model in LP format");

  // gen-human-layout
  ConfigFlags hum_flags;
  std::string hum_out;
  auto* human = app.add_subcommand("gen-human-layout", "Generate the human-designed row layout for a setup");
  hum_flags.add(human);
  hum_flags.flag<int>(human, "--shelves", "n_shelves", "Shelf count N_s");
  human->add_option("-o,--output", hum_out, "Layout file (stdout if omitted)");

  // stats
  std::string stats_dir;
  auto* stats_cmd = app.add_subcommand("stats", "Print summary statistics of an archive");
  stats_cmd->add_option("dir", stats_dir, "optimize output directory or archive directory")->required();

  // export-heatmap
  std::string hm_dir, hm_csv, hm_image;
  auto* heatmap = app.add_subcommand("export-heatmap", "Export the archive objective heat map as CSV and PPM image");
  heatmap->add_option("dir", hm_dir, "optimize output directory or archive directory")->required();
  heatmap->add_option("-o,--output", hm_csv, "CSV file (stdout if omitted)");
  heatmap->add_option("--image", hm_image, "PPM image file");

  // validate
  ConfigFlags val_flags;
  std::string val_layout;
  auto* validate_cmd = app.add_subcommand("validate", "Check a layout against the validity rules");
  validate_cmd->add_option("layout", val_layout, "Layout file")->required()->check(CLI::ExistingFile);
  val_flags.add(validate_cmd);
  val_flags.flag<std::string>(validate_cmd, "--scenario", "scenario", "workstation or home");
  val_flags.flag<int>(validate_cmd, "--agents", "sim.n_agents", "Number of agents");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*optimize) {
      const ExperimentConfig c = opt_flags.load();
      if (c.output_dir.empty()) throw ConfigError("config.output_dir: optimize needs an output directory (-o)");
      ProgressFn progress;
      if (!quiet) {
        progress = [](const IterationStats& s) {
          std::fprintf(stderr, "[%s %d] evals=%d failures=%d qd=%.4f coverage=%.4f best=%.4f (%.1fs)\n",
                       s.phase.c_str(), s.iteration, s.evaluations, s.repair_failures, s.qd_score, s.coverage,
                       s.best_objective, s.elapsed_seconds);
        };
      }
      const SearchResult r = cmd_optimize(c, progress);
      const auto st = r.archive.stats();
      std::cout << json{{"output_dir", c.output_dir},
                        {"evaluations", r.evaluations},
                        {"repair_failures", r.repair_failures},
                        {"degraded", r.degraded},
                        {"qd_score", st.qd_score},
                        {"coverage", st.coverage},
                        {"best_objective", st.best_objective}}
                       .dump(2)
                << '\n';
    } else if (*evaluate_cmd) {
      const Layout layout = read_layout_file(ev_layout);
      const ExperimentConfig c = ev_flags.load(ev_flags.given() ? json::object() : config_for_layout(layout));
      json report = cmd_evaluate(layout, c);
      report.erase("tile_usage_normalized");
      report.erase("layout");
      std::cout << report.dump(2) << '\n';
    } else if (*repair_cmd) {
      const Layout layout = read_layout_file(rep_layout);
      const ExperimentConfig c = rep_flags.load(rep_flags.given() ? json::object() : config_for_layout(layout));
      if (!rep_lp.empty()) {
        const json counts = config_for_layout(layout);
        write_or_print(rep_lp, export_lp(build_model(layout, c.scenario, c.n_shelves, counts["n_workstations"],
                                                     counts["n_homes"])));
      }
      auto solver = make_solver(c.solver);
      const RepairOutcome o = repair(layout, c.scenario, c.n_shelves, *solver, c.repair_time_limit);
      json j = to_json(o);
      j["solver"] = solver->name();
      std::cout << j.dump(2) << '\n';
      if (!o.repaired) return kSolver;
      if (!rep_out.empty()) write_layout_file(rep_out, *o.repaired);
    } else if (*human) {
      const ExperimentConfig c = hum_flags.load();
      write_or_print(hum_out, serialize_layout(human_layout(base_layout(c), c.n_shelves)));
    } else if (*stats_cmd) {
      const Archive a = Archive::load(archive_dir_of(stats_dir));
      const auto st = a.stats();
      json j = {{"qd_score", st.qd_score},
                {"coverage", st.coverage},
                {"num_elites", st.num_elites},
                {"best_objective", st.best_objective},
                {"out_of_range", st.out_of_range},
                {"cells", a.config().dims[0] * a.config().dims[1]}};
      if (const fs::path summary = fs::path(stats_dir) / "summary.json"; fs::exists(summary)) {
        std::ifstream in(summary);
        j["run"] = json::parse(in);
      }
      std::cout << j.dump(2) << '\n';
    } else if (*heatmap) {
      const Archive a = Archive::load(archive_dir_of(hm_dir));
      write_or_print(hm_csv, heatmap_csv(a));
      if (!hm_image.empty())
        write_heatmap_ppm(hm_image, archive_heatmap(a), a.config().dims[0], a.config().dims[1]);
    } else if (*validate_cmd) {
      const Layout layout = read_layout_file(val_layout);
      const ExperimentConfig c = val_flags.load(val_flags.given() ? json::object() : config_for_layout(layout));
      const ValidationReport r = validate(layout, c.scenario, c.sim.n_agents);
      std::cout << to_json(r).dump(2) << '\n';
      if (!r.acceptable_for(c.scenario)) return kPrecondition;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kConfig;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolver;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition failed: " << e.what() << '\n';
    if (!e.report.violations.empty()) std::cerr << to_json(e.report).dump(2) << '\n';
    return kPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}
