#include "layopt/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace layopt {

namespace fs = std::filesystem;

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config." + path + ": " + what);
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& prefix) {
  if (!j.is_object()) fail(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) fail(prefix.empty() ? key : prefix + "." + key, "unknown field");
  }
}

template <typename T>
void read(const json& j, const std::string& key, T& out, const std::string& prefix = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(prefix.empty() ? key : prefix + "." + key, e.what());
  }
}

const std::set<std::string> kTopKeys = {
    "setup",          "scenario",        "height",       "width",          "storage",
    "template",       "n_shelves",       "n_workstations", "n_homes",      "sim",
    "n_evals",        "eval_horizon",    "eval_runs",    "sweep_agents",   "archive",
    "archive_variant", "algorithm",      "eval_budget",  "batch",          "n_rand",
    "inner_iterations", "max_failed_batches", "surrogate", "seed",         "n_threads",
    "solver",         "repair_time_limit", "metric",     "output_dir"};

// Simulation keys that may be set in the "sim" object; the scenario and seed
// live at the top level.
const std::set<std::string> kSimKeys = {"n_agents",     "horizon",
                                        "planner",      "window",
                                        "replan_period", "solver",
                                        "early_stop_on_congestion", "zero_on_congestion",
                                        "pbs_node_limit"};

const std::set<std::string> kArchiveKeys = {"dims", "component_range", "task_length_range", "downsample_dims"};

std::string metric_name(DistanceMetric m) { return m == DistanceMetric::Manhattan ? "manhattan" : "shortest_path"; }

DistanceMetric metric_from_name(const std::string& s) {
  if (s == "manhattan") return DistanceMetric::Manhattan;
  if (s == "shortest_path") return DistanceMetric::ShortestPath;
  fail("metric", "expected 'shortest_path' or 'manhattan', got '" + s + "'");
}

json rect_to_json(const Rect& r) {
  return {{"row", r.row}, {"col", r.col}, {"height", r.height}, {"width", r.width}};
}

Rect rect_from_json(const json& j) {
  reject_unknown(j, {"row", "col", "height", "width"}, "storage");
  Rect r;
  read(j, "row", r.row, "storage");
  read(j, "col", r.col, "storage");
  read(j, "height", r.height, "storage");
  read(j, "width", r.width, "storage");
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void apply_setup(ExperimentConfig& c, const SetupSpec& s) {
  c.scenario = s.scenario;
  c.height = s.height;
  c.width = s.width;
  c.storage = s.storage;
  c.n_shelves = s.n_shelves;
  c.n_workstations = s.n_workstations;
  c.n_homes = s.n_homes;
  c.sim.n_agents = s.n_agents;
  c.sim.planner = s.planner;
  c.sim.horizon = s.horizon;
  c.n_evals = s.n_evals;
  c.eval_budget = s.eval_budget;
  c.batch = s.batch;
  c.archive = s.archive;
}

}  // namespace

void ExperimentConfig::check() const {
  if (height < 1 || width < 1) fail("height", "grid must be at least 1x1");
  if (storage.height < 1 || storage.width < 1 || storage.row < 0 || storage.col < 0 ||
      storage.row + storage.height > height || storage.col + storage.width > width) {
    fail("storage", "rectangle must be non-empty and lie inside the grid");
  }
  if (n_shelves < 0 || n_shelves > storage.height * storage.width) fail("n_shelves", "must lie in [0, storage area]");
  if (scenario == Scenario::Workstation && template_file.empty() && n_workstations < 1)
    fail("n_workstations", "the workstation scenario needs at least one workstation");
  if (scenario == Scenario::HomeLocation && template_file.empty() && n_homes < sim.n_agents)
    fail("n_homes", "fewer home locations than agents");
  if (n_workstations < 0) fail("n_workstations", "must be >= 0");
  if (n_homes < 0) fail("n_homes", "must be >= 0");
  if (sim.n_agents < 1) fail("sim.n_agents", "must be >= 1");
  try {
    sim.check();
  } catch (const ConfigError& e) {
    fail("sim", e.what());
  }
  if (sim.scenario != scenario) fail("sim", "scenario differs from the top-level scenario");
  if (n_evals < 1) fail("n_evals", "must be >= 1");
  if (eval_horizon < 1) fail("eval_horizon", "must be >= 1");
  if (eval_runs < 1) fail("eval_runs", "must be >= 1");
  for (std::size_t i = 0; i < sweep_agents.size(); ++i)
    if (sweep_agents[i] < 1) fail("sweep_agents[" + std::to_string(i) + "]", "must be >= 1");
  try {
    archive.check();
  } catch (const ConfigError& e) {
    fail("archive", e.what());
  }
  if (!archive_variant.empty() && archive_variant != "printed" && archive_variant != "corrected")
    fail("archive_variant", "expected 'printed' or 'corrected'");
  if (algorithm != "mapelites" && algorithm != "dsage") fail("algorithm", "expected 'mapelites' or 'dsage'");
  if (eval_budget < 0) fail("eval_budget", "must be >= 0");
  if (batch < 1) fail("batch", "must be >= 1");
  if (n_rand < 0) fail("n_rand", "must be >= 0");
  if (inner_iterations < 0) fail("inner_iterations", "must be >= 0");
  if (max_failed_batches < 1) fail("max_failed_batches", "must be >= 1");
  if (n_threads < 1) fail("n_threads", "must be >= 1");
  if (!(repair_time_limit > 0)) fail("repair_time_limit", "must be positive");
}

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j, kTopKeys, "");
  ExperimentConfig c;
  read(j, "setup", c.setup);
  if (!c.setup.empty()) {
    try {
      apply_setup(c, named_setup(c.setup));
    } catch (const ConfigError& e) {
      fail("setup", e.what());
    }
  }
  read(j, "archive_variant", c.archive_variant);
  if (!c.archive_variant.empty()) {
    if (c.setup.empty() || c.setup == "desk") fail("archive_variant", "only defined for setups 1-4");
    if (c.archive_variant == "printed") {
      c.archive = printed_archive_config(std::stoi(c.setup));
    } else if (c.archive_variant == "corrected") {
      c.archive = corrected_archive_config(std::stoi(c.setup));
    } else {
      fail("archive_variant", "expected 'printed' or 'corrected'");
    }
  }
  if (j.contains("scenario")) {
    std::string name;
    read(j, "scenario", name);
    try {
      c.scenario = scenario_from_name(name);
    } catch (const std::invalid_argument& e) {
      fail("scenario", e.what());
    }
  }
  read(j, "height", c.height);
  read(j, "width", c.width);
  if (j.contains("storage")) c.storage = rect_from_json(j.at("storage"));
  read(j, "template", c.template_file);
  read(j, "n_shelves", c.n_shelves);
  read(j, "n_workstations", c.n_workstations);
  read(j, "n_homes", c.n_homes);
  if (j.contains("sim")) {
    reject_unknown(j.at("sim"), kSimKeys, "sim");
    try {
      c.sim = sim_config_from_json(j.at("sim"), c.sim);
    } catch (const std::exception& e) {
      fail("sim", e.what());
    }
  }
  c.sim.scenario = c.scenario;
  read(j, "n_evals", c.n_evals);
  read(j, "eval_horizon", c.eval_horizon);
  read(j, "eval_runs", c.eval_runs);
  read(j, "sweep_agents", c.sweep_agents);
  if (j.contains("archive")) {
    reject_unknown(j.at("archive"), kArchiveKeys, "archive");
    json merged = to_json(c.archive);
    merged.merge_patch(j.at("archive"));
    try {
      c.archive = archive_config_from_json(merged);
    } catch (const ConfigError& e) {
      fail("archive", e.what());
    }
  }
  read(j, "algorithm", c.algorithm);
  read(j, "eval_budget", c.eval_budget);
  read(j, "batch", c.batch);
  read(j, "n_rand", c.n_rand);
  read(j, "inner_iterations", c.inner_iterations);
  read(j, "max_failed_batches", c.max_failed_batches);
  read(j, "surrogate", c.surrogate);
  read(j, "seed", c.seed);
  read(j, "n_threads", c.n_threads);
  read(j, "solver", c.solver);
  read(j, "repair_time_limit", c.repair_time_limit);
  if (j.contains("metric")) {
    std::string m;
    read(j, "metric", m);
    c.metric = metric_from_name(m);
  }
  read(j, "output_dir", c.output_dir);
  c.check();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json sim = to_json(c.sim);
  for (auto it = sim.begin(); it != sim.end();) {
    it = kSimKeys.count(it.key()) ? std::next(it) : sim.erase(it);
  }
  json j = {{"scenario", scenario_name(c.scenario)},
            {"height", c.height},
            {"width", c.width},
            {"storage", rect_to_json(c.storage)},
            {"n_shelves", c.n_shelves},
            {"n_workstations", c.n_workstations},
            {"n_homes", c.n_homes},
            {"sim", sim},
            {"n_evals", c.n_evals},
            {"eval_horizon", c.eval_horizon},
            {"eval_runs", c.eval_runs},
            {"sweep_agents", c.sweep_agents},
            {"archive", to_json(c.archive)},
            {"algorithm", c.algorithm},
            {"eval_budget", c.eval_budget},
            {"batch", c.batch},
            {"n_rand", c.n_rand},
            {"inner_iterations", c.inner_iterations},
            {"max_failed_batches", c.max_failed_batches},
            {"surrogate", c.surrogate},
            {"seed", c.seed},
            {"n_threads", c.n_threads},
            {"solver", c.solver},
            {"repair_time_limit", c.repair_time_limit},
            {"metric", metric_name(c.metric)},
            {"output_dir", c.output_dir}};
  if (!c.setup.empty()) j["setup"] = c.setup;
  if (!c.archive_variant.empty()) j["archive_variant"] = c.archive_variant;
  if (!c.template_file.empty()) j["template"] = c.template_file;
  return j;
}

ExperimentConfig load_experiment(json j, const json& overrides) {
  if (!j.is_object()) fail("<root>", "expected an object");
  j.merge_patch(overrides);
  return experiment_from_json(j);
}

ExperimentConfig load_experiment_file(const std::string& path, const json& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return load_experiment(std::move(j), overrides);
}

Layout base_layout(const ExperimentConfig& c) {
  if (!c.template_file.empty()) {
    Layout l;
    try {
      l = read_layout_file(c.template_file);
    } catch (const std::exception& e) {
      fail("template", e.what());
    }
    if (l.height() != c.height || l.width() != c.width || !(l.storage() == c.storage))
      fail("template", "grid size or storage rectangle differs from the config");
    for (int v : l.storage_indices()) l.set(v, Tile::Empty);
    return l;
  }
  SetupSpec s;
  s.scenario = c.scenario;
  s.height = c.height;
  s.width = c.width;
  s.storage = c.storage;
  s.n_workstations = c.n_workstations;
  s.n_homes = c.n_homes;
  return make_template(s);
}

SearchConfig search_config(const ExperimentConfig& c) {
  SearchConfig s;
  s.base = base_layout(c);
  s.n_shelves = c.n_shelves;
  s.sim = c.sim;
  s.n_evals = c.n_evals;
  s.eval_budget = c.eval_budget;
  s.batch = c.batch;
  s.archive = c.archive;
  s.seed = c.seed;
  s.n_threads = c.n_threads;
  s.solver = c.solver;
  s.repair_time_limit = c.repair_time_limit;
  s.metric = c.metric;
  s.max_failed_batches = c.max_failed_batches;
  s.n_rand = c.n_rand;
  s.inner_iterations = c.inner_iterations;
  if (!c.output_dir.empty()) s.checkpoint_dir = (fs::path(c.output_dir) / "checkpoint").string();
  return s;
}

json to_json(const ValidationReport& r) {
  json violations = json::array();
  for (const auto& v : r.violations)
    violations.push_back({{"rule", rule_name(v.rule)}, {"row", v.cell.row}, {"col", v.cell.col}});
  return {{"valid", r.is_valid},
          {"well_formed", r.is_well_formed},
          {"reachable", r.is_reachable},
          {"violations", violations}};
}

std::vector<double> archive_heatmap(const Archive& archive) {
  const auto& c = archive.config();
  std::vector<double> grid(static_cast<std::size_t>(c.dims[0]) * c.dims[1], std::nan(""));
  for (const auto& [cell, e] : archive.cells()) grid[cell] = e.objective;
  return grid;
}

void write_heatmap_ppm(const std::string& path, const std::vector<double>& values, int height, int width,
                       int scale) {
  if (static_cast<int>(values.size()) != height * width) throw std::invalid_argument("heat map size mismatch");
  double lo = INFINITY;
  double hi = -INFINITY;
  for (double v : values) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  // Dark-to-bright ramp (black, purple, orange, pale yellow).
  constexpr double kStops[4][3] = {{0, 0, 4}, {120, 28, 109}, {237, 105, 37}, {252, 255, 164}};
  auto colour = [&](double v, unsigned char* px) {
    if (!std::isfinite(v)) {
      px[0] = px[1] = px[2] = 128;
      return;
    }
    const double t = hi > lo ? (v - lo) / (hi - lo) : 1.0;
    const double x = t * 3.0;
    const int k = std::min(2, static_cast<int>(x));
    const double f = x - k;
    for (int ch = 0; ch < 3; ++ch)
      px[ch] = static_cast<unsigned char>(std::lround(kStops[k][ch] + f * (kStops[k + 1][ch] - kStops[k][ch])));
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << width * scale << ' ' << height * scale << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(width) * scale * 3);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      unsigned char px[3];
      colour(values[static_cast<std::size_t>(r) * width + c], px);
      for (int s = 0; s < scale; ++s) std::copy(px, px + 3, row.begin() + (c * scale + s) * 3);
    }
    for (int s = 0; s < scale; ++s) out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

std::string sha256_string(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return sha256_string(os.str());
}

void write_manifest(const std::string& dir, const ExperimentConfig& c, const json& extra) {
  // Resume state and wall-clock timings are not reproducible; they are listed but not hashed.
  auto is_volatile = [](const std::string& rel) {
    return rel.rfind("checkpoint/", 0) == 0 || rel == "timing.csv";
  };
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json hashes = json::object();
  json volatile_files = json::array();
  for (const auto& rel : files) {
    if (is_volatile(rel)) {
      volatile_files.push_back(rel);
    } else {
      hashes[rel] = sha256_file((fs::path(dir) / rel).string());
    }
  }
  json reproducible = to_json(c);
  reproducible.erase("output_dir");
  reproducible.erase("n_threads");
  json m = {{"tool", "layopt"},
            {"version", kToolVersion},
            {"seed", c.seed},
            {"config_sha256", sha256_string(reproducible.dump())},
            {"files", hashes},
            {"volatile", volatile_files}};
  if (extra.is_object()) m.update(extra);
  write_text(fs::path(dir) / "manifest.json", m.dump(2) + "\n");
}

SearchResult cmd_optimize(const ExperimentConfig& c, ProgressFn progress) {
  c.check();
  const SearchConfig sc = search_config(c);
  const fs::path out(c.output_dir);
  json resolved = to_json(c);
  if (!c.output_dir.empty()) {
    fs::create_directories(out);
    // A directory may only be resumed by the experiment that created it.
    if (std::ifstream prev(out / "config.json"); prev) {
      json old = json::parse(prev, nullptr, false);
      json a = resolved;
      for (auto* x : {&old, &a}) {
        if (x->is_object()) {
          x->erase("n_threads");
          x->erase("output_dir");
        }
      }
      if (old != a) fail("output_dir", "directory holds a different experiment (config.json differs)");
    }
    write_text(out / "config.json", resolved.dump(2) + "\n");
  }

  SearchResult r = [&] {
    if (c.algorithm != "dsage") return run_mapelites(sc, progress);
    auto surrogate = make_surrogate(c.surrogate, sc);
    return run_dsage(sc, surrogate.get(), progress);
  }();
  if (c.output_dir.empty()) return r;

  std::string stats = stats_csv_header(false) + "\n";
  std::string timing = "iteration,elapsed_seconds\n";
  for (const auto& s : r.log) {
    stats += stats_csv_row(s, false) + "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d,%.3f\n", s.iteration, s.elapsed_seconds);
    timing += buf;
  }
  write_text(out / "stats.csv", stats);
  write_text(out / "timing.csv", timing);
  fs::remove_all(out / "archive");
  r.archive.save((out / "archive").string());
  write_text(out / "heatmap.csv", heatmap_csv(r.archive));
  write_heatmap_ppm((out / "heatmap.ppm").string(), archive_heatmap(r.archive), c.archive.dims[0],
                    c.archive.dims[1]);
  const auto st = r.archive.stats();
  const json summary = {{"algorithm", c.algorithm},
                        {"evaluations", r.evaluations},
                        {"repair_failures", r.repair_failures},
                        {"degraded", r.degraded},
                        {"surrogate", r.surrogate},
                        {"qd_score", st.qd_score},
                        {"coverage", st.coverage},
                        {"num_elites", st.num_elites},
                        {"best_objective", st.best_objective}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  write_manifest(c.output_dir, c);
  return r;
}

json cmd_evaluate(const Layout& layout, const ExperimentConfig& c) {
  c.check();
  const ValidationReport report = validate(layout, c.scenario, c.sim.n_agents);
  if (!report.acceptable_for(c.scenario)) {
    std::string msg = std::string("layout is not ") +
                      (c.scenario == Scenario::Workstation ? "valid" : "well-formed") + " for the " +
                      std::string(scenario_name(c.scenario)) + " scenario";
    if (!report.violations.empty()) {
      const auto& v = report.violations.front();
      msg += " (" + std::to_string(report.violations.size()) + " violations, first: " +
             std::string(rule_name(v.rule)) + " at (" + std::to_string(v.cell.row) + "," +
             std::to_string(v.cell.col) + "))";
    }
    throw PreconditionError(msg, report);
  }

  SimConfig s = c.sim;
  s.horizon = c.eval_horizon;
  s.seed = c.seed;
  const EvalResult ev = evaluate(layout, s, c.eval_runs, c.n_threads, c.metric);

  json j = to_json(ev, false);
  j["sim"] = to_json(s);
  j["layout"] = serialize_layout(layout);
  j["validation"] = to_json(report);

  std::string sweep_csv = "agents,mean_throughput,throughput_sd,success_rate\n";
  json sweep = json::array();
  for (int n : c.sweep_agents) {
    SimConfig sn = s;
    sn.n_agents = n;
    json point = {{"agents", n}};
    try {
      const EvalResult e = evaluate(layout, sn, c.eval_runs, c.n_threads, c.metric);
      point["mean_throughput"] = e.mean_throughput;
      point["throughput_sd"] = e.throughput_sd;
      point["success_rate"] = e.success_rate;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", n, e.mean_throughput, e.throughput_sd,
                    e.success_rate);
      sweep_csv += buf;
    } catch (const PreconditionError& e) {
      point["error"] = e.what();
    }
    sweep.push_back(point);
  }
  j["sweep"] = sweep;

  if (!c.output_dir.empty()) {
    const fs::path out(c.output_dir);
    fs::create_directories(out);
    write_text(out / "config.json", to_json(c).dump(2) + "\n");
    write_text(out / "report.json", j.dump(2) + "\n");
    std::size_t steps = 0;
    for (const auto& r : ev.runs) steps = std::max(steps, r.finished_per_timestep.size());
    std::ostringstream csv;
    csv << "timestep";
    for (std::size_t k = 0; k < ev.runs.size(); ++k) csv << ",run_" << k;
    csv << '\n';
    for (std::size_t t = 0; t < steps; ++t) {
      csv << t;
      for (const auto& r : ev.runs) {
        csv << ',';
        if (t < r.finished_per_timestep.size()) csv << r.finished_per_timestep[t];
      }
      csv << '\n';
    }
    write_text(out / "finished_per_timestep.csv", csv.str());
    write_text(out / "tile_usage.csv", grid_csv(ev.tile_usage_normalized, layout.height(), layout.width()));
    write_heatmap_ppm((out / "tile_usage.ppm").string(), ev.tile_usage_normalized, layout.height(), layout.width());
    if (!c.sweep_agents.empty()) write_text(out / "sweep.csv", sweep_csv);
    write_manifest(c.output_dir, c);
  }
  return j;
}

}  // namespace layopt
