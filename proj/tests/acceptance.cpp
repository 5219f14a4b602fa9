// Acceptance suite: one PASS/FAIL line per primary criterion, with the
// tolerances pinned below. Exit status 0 iff every selected criterion passes,
// except those listed with --expected-fail (known failures, still printed).
//
//   layopt_acceptance [--only id[,id...]] [--expected-fail id[,id...]] [--json report.json]

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "layopt/experiment.hpp"
#include "layopt/rng.hpp"
#include "repair_oracle.hpp"

using namespace layopt;
using nlohmann::json;

namespace {

// Pinned tolerances and sizes.
constexpr int kConflictSims = 200;
constexpr int kConflictLayoutsPerScenario = 20;
constexpr double kConflictBudgetSeconds = 300.0;
constexpr double kOracleRelTol = 0.10;
constexpr int kFreeFlowSeeds = 20;
constexpr int kRepairLayoutsPerScenario = 100;
constexpr int kMinimalityCasesRequired = 20;
constexpr double kRepairTimeLimit = 120.0;
constexpr int kMutationDraws = 100000;
constexpr double kMutationMeanTol = 0.02;
constexpr double kMutationP1Tol = 0.01;
constexpr double kSelectionSigmas = 4.0;
constexpr int kTrendSeeds = 5;
constexpr int kTrendSeedsRequired = 4;
constexpr int kRandomBaseline = 500;
constexpr int kReevalRuns = 10;
constexpr double kTrendBudgetSeconds = 7200.0;
constexpr int kSweepRuns = 5;
constexpr int kSweepHorizon = 1000;
const std::vector<int> kSweepAgents = {20, 24, 28, 32, 36, 40};

struct Outcome {
  bool pass = false;
  std::string detail;
  json data = json::object();
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& msg) { std::fprintf(stderr, "  .. %s\n", msg.c_str()); }

int worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------

// Random layouts are repaired once into a pool per scenario (repair dominates
// the cost); the simulations then cycle through the pool with fresh seeds,
// planners, solvers and agent counts.
Outcome conflict_freedom() {
  const auto t0 = std::chrono::steady_clock::now();
  auto solver = make_solver();
  const Layout ws_base = make_template(named_setup("2"));  // 9x16
  const Layout home_base = home_template(9, 16, Rect{2, 3, 5, 10}, 16);
  std::mt19937_64 rng(derive_seed(2024, {1}));
  std::vector<Layout> pools[2];
  for (int home = 0; home < 2; ++home) {
    const Scenario s = home ? Scenario::HomeLocation : Scenario::Workstation;
    while (static_cast<int>(pools[home].size()) < kConflictLayoutsPerScenario) {
      // Home storage is 5x10; above ~30% shelf density its repairs get slow.
      const int n_shelves = home ? std::uniform_int_distribution<int>(6, 14)(rng)
                                 : std::uniform_int_distribution<int>(8, 20)(rng);
      const auto rep = repair(random_genome(home ? home_base : ws_base, rng), s, n_shelves, *solver);
      if (rep.repaired) pools[home].push_back(*rep.repaired);
    }
  }
  const double repair_secs = seconds_since(t0);
  long long vertex = 0, swap = 0, illegal = 0, steps = 0;
  json planners = json::object();
  for (int i = 0; i < kConflictSims; ++i) {
    const bool home = i % 2 == 1;
    SimConfig c;
    c.scenario = home ? Scenario::HomeLocation : Scenario::Workstation;
    c.planner = home && i % 4 == 1 ? PlannerKind::DPP : PlannerKind::RHCR;
    c.solver = (i / 2) % 2 == 0 ? MapfSolver::PBS : MapfSolver::PrioritizedPlanning;
    c.n_agents = std::uniform_int_distribution<int>(4, 16)(rng);
    c.horizon = 500;
    c.seed = rng();
    c.early_stop_on_congestion = false;
    c.record_trajectory = true;
    const Layout& layout = pools[home][(i / 2) % kConflictLayoutsPerScenario];
    const auto r = run_simulation(layout, c);
    const auto audit = testutil::audit_trajectory(layout, r.trajectory);
    vertex += audit.vertex_conflicts;
    swap += audit.swap_conflicts;
    illegal += audit.illegal_moves;
    steps += r.elapsed_steps;
    const std::string key = std::string(planner_name(c.planner)) + "/" + std::string(solver_name(c.solver)) + "/" +
                            std::string(scenario_name(c.scenario));
    planners[key] = planners.value(key, 0) + 1;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = vertex == 0 && swap == 0 && illegal == 0 && secs <= kConflictBudgetSeconds;
  o.detail = fmt("%d sims on %d random repaired 9x16 layouts (%lld steps): %lld vertex, %lld swap conflicts, "
                 "%lld illegal moves; %.0f s incl. %.0f s repair (<= %.0f s)",
                 kConflictSims, 2 * kConflictLayoutsPerScenario, steps, vertex, swap, illegal, secs, repair_secs,
                 kConflictBudgetSeconds);
  o.data = {{"mix", planners}, {"seconds", secs}, {"repair_seconds", repair_secs}};
  return o;
}

Outcome single_agent_oracle() {
  Outcome o;
  o.pass = true;
  std::string parts;
  for (int d : {3, 5, 7}) {
    SimConfig c;
    c.n_agents = 1;
    c.horizon = 1000;
    c.seed = 7;
    const auto r = run_simulation(testutil::single_agent_map(d), c);
    const double target = 1.0 / d;
    const double err = std::abs(r.throughput - target) / target;
    o.pass &= err <= kOracleRelTol && !r.congested;
    parts += fmt("d=%d: %.4f vs %.4f (%.1f%%)  ", d, r.throughput, target, 100 * err);
    o.data[std::to_string(d)] = r.throughput;
  }
  o.detail = parts + fmt("(tolerance %.0f%%)", 100 * kOracleRelTol);
  return o;
}

Outcome congestion_detector() {
  Outcome o;
  // Exact threshold: strictly more than half.
  const std::vector<Action> half = {Action::Wait, Action::Wait, Action::Wait, Action::Move, Action::Move, Action::Move};
  std::vector<Action> more = half;
  more[3] = Action::Wait;
  const bool threshold_ok = !detect_congestion(half) && detect_congestion(more);

  // Corridor: 6 agents forced head-on.
  SimConfig c;
  c.n_agents = 6;
  c.horizon = 200;
  c.seed = 3;
  c.record_trajectory = true;
  const auto r = run_simulation(testutil::corridor_map(), c);
  int stationary = -1;
  if (r.congested && r.congestion_timestep && r.trajectory.size() >= static_cast<std::size_t>(*r.congestion_timestep) + 2) {
    const auto& a = r.trajectory[*r.congestion_timestep];
    const auto& b = r.trajectory[*r.congestion_timestep + 1];
    stationary = 0;
    for (std::size_t k = 0; k < a.size(); ++k) stationary += a[k] == b[k];
  }
  const bool corridor_ok = r.congested && 2 * stationary > c.n_agents;

  // Free flow: never congests.
  int congested_free = 0;
  for (int seed = 0; seed < kFreeFlowSeeds; ++seed) {
    SimConfig f;
    f.n_agents = 8;
    f.horizon = 500;
    f.seed = derive_seed(99, {static_cast<std::uint64_t>(seed)});
    congested_free += run_simulation(testutil::open_workstation_map(), f).congested;
  }
  o.pass = threshold_ok && corridor_ok && congested_free == 0;
  o.detail = fmt("threshold 3/6 -> no, 4/6 -> yes: %s; corridor congested at t=%d with %d/6 stationary; "
                 "free-flow congested in %d/%d seeds",
                 threshold_ok ? "ok" : "WRONG", r.congestion_timestep.value_or(-1), stationary, congested_free,
                 kFreeFlowSeeds);
  return o;
}

Outcome milp_repair() {
  auto solver = make_solver();
  std::mt19937_64 rng(derive_seed(2024, {4}));
  int sound = 0, total = 0;
  double max_time = 0;
  json per_scenario = json::object();
  for (Scenario s : {Scenario::Workstation, Scenario::HomeLocation}) {
    const SetupSpec setup = named_setup(s == Scenario::Workstation ? "2" : "1");  // both have 12x9 storage
    const Layout base = make_template(setup);
    int ok = 0;
    for (int k = 0; k < kRepairLayoutsPerScenario; ++k) {
      const Layout input = random_genome(base, rng);
      const auto out = repair(input, s, 20, *solver, kRepairTimeLimit);
      max_time = std::max(max_time, out.solve_time);
      ++total;
      if (!out.repaired) continue;
      const Layout& r = *out.repaired;
      bool good = r.count(Tile::Shelf) == 20 && testutil::repair_feasible(r, s, 20) &&
                  validate(r, s, setup.n_agents).acceptable_for(s);
      for (int v = 0; v < r.size() && good; ++v)
        if (!r.in_storage(v)) good = r.at(v) == input.at(v);
      ok += good;
    }
    sound += ok;
    per_scenario[std::string(scenario_name(s))] = ok;
    progress(fmt("repair %s: %d/%d sound", std::string(scenario_name(s)).c_str(), ok, kRepairLayoutsPerScenario));
  }

  int compared = 0, matched = 0, infeasible_agree = 0;
  for (Scenario s : {Scenario::Workstation, Scenario::HomeLocation}) {
    const Layout base = s == Scenario::Workstation ? testutil::tiny_workstation_base() : testutil::tiny_home_base();
    for (int trial = 0; trial < 15; ++trial) {
      const Layout input = testutil::random_fill(base, rng);
      const int n_shelves = 1 + trial % 2;
      const auto expected = testutil::exhaustive_min_repair(input, s, n_shelves);
      const auto out = repair(input, s, n_shelves, *solver, kRepairTimeLimit);
      max_time = std::max(max_time, out.solve_time);
      if (!expected) {
        infeasible_agree += out.status == RepairStatus::Infeasible;
        continue;
      }
      ++compared;
      matched += out.status == RepairStatus::Optimal && out.hamming_distance == *expected;
    }
  }
  Outcome o;
  o.pass = sound == total && compared >= kMinimalityCasesRequired && matched == compared && max_time <= kRepairTimeLimit;
  o.detail = fmt("%d/%d random 12x9-storage repairs sound (20 shelves; valid / well-formed); exhaustive minimality "
                 "%d/%d (need >= %d); max solve %.2f s (<= %.0f s)",
                 sound, total, matched, compared, kMinimalityCasesRequired, max_time, kRepairTimeLimit);
  o.data = {{"sound", per_scenario}, {"minimality_compared", compared}, {"max_solve_seconds", max_time}};
  return o;
}

Outcome mutation_distribution() {
  std::mt19937_64 rng(derive_seed(2024, {5}));
  const int max_k = named_setup("2").storage.area();
  double sum = 0;
  int ones = 0;
  for (int i = 0; i < kMutationDraws; ++i) {
    const int k = sample_mutation_count(rng, max_k);
    sum += k;
    ones += k == 1;
  }
  const double mean = sum / kMutationDraws;
  const double p1 = static_cast<double>(ones) / kMutationDraws;
  Outcome o;
  o.pass = std::abs(mean - 2.0) <= kMutationMeanTol && std::abs(p1 - 0.5) <= kMutationP1Tol;
  o.detail = fmt("%d draws: mean k = %.4f (2.00 +- %.2f), P(k=1) = %.4f (0.50 +- %.2f)", kMutationDraws, mean,
                 kMutationMeanTol, p1, kMutationP1Tol);
  return o;
}

Elite make_elite(const Layout& genome, double objective, double m0, double m1) {
  Elite e;
  e.genome = genome;
  e.repaired = genome;
  e.objective = objective;
  e.measures = {m0, m1};
  return e;
}

Outcome archive_laws() {
  std::mt19937_64 rng(derive_seed(2024, {6}));
  const Layout base = testutil::tiny_workstation_base();
  ArchiveConfig cfg;
  cfg.dims = {10, 10};
  cfg.downsample_dims = {5, 5};
  cfg.component_range = {0, 10};
  cfg.task_length_range = {0, 10};
  int violations = 0;
  long long adds = 0;
  for (int seq = 0; seq < 50; ++seq) {
    Archive a(cfg);
    auto prev = a.stats();
    std::uniform_real_distribution<double> m(-1.0, 11.0);
    for (int i = 0; i < 500; ++i, ++adds) {
      // Objectives on a coarse grid so equal-objective collisions are frequent.
      const double obj = std::uniform_int_distribution<int>(0, 20)(rng) / 4.0;
      const Elite cand = make_elite(random_genome(base, rng), obj, m(rng), m(rng));
      const auto cell = cell_index(cand.measures, cfg);
      const Elite* before = cell ? a.find(*cell) : nullptr;
      const double before_obj = before ? before->objective : 0.0;
      const bool occupied = before != nullptr;
      const auto status = a.add(cand);
      if (occupied && obj <= before_obj && status != AddStatus::Rejected) ++violations;
      if (occupied && obj <= before_obj && a.find(*cell)->objective != before_obj) ++violations;
      const auto now = a.stats();
      if (now.qd_score < prev.qd_score || now.coverage < prev.coverage) ++violations;
      prev = now;
    }
  }

  // Uniform selection over 8 elites.
  Archive a(cfg);
  std::vector<Layout> genomes;
  for (int k = 0; k < 8; ++k) {
    Layout g = random_genome(base, rng);
    while (std::find(genomes.begin(), genomes.end(), g) != genomes.end()) g = random_genome(base, rng);
    genomes.push_back(g);
    a.add(make_elite(g, 1.0 + k, k + 0.5, k + 0.5));
  }
  const int draws = 40000;
  const auto batch = select_batch(a, draws, base, rng);
  double worst_z = 0;
  for (const auto& g : genomes) {
    const double count = static_cast<double>(std::count(batch.begin(), batch.end(), g));
    const double p = 1.0 / genomes.size();
    worst_z = std::max(worst_z, std::abs(count - draws * p) / std::sqrt(draws * p * (1 - p)));
  }
  Outcome o;
  o.pass = violations == 0 && worst_z <= kSelectionSigmas && a.size() == 8;
  o.detail = fmt("%lld adds over 50 sequences: %d monotonicity/equal-objective violations; uniform selection "
                 "max |z| = %.2f (<= %.0f sigma)",
                 adds, violations, worst_z, kSelectionSigmas);
  return o;
}

// ---------------------------------------------------------------------------
// Desk-scale optimization.

struct TrendSeed {
  std::uint64_t seed = 0;
  double me_search = 0, random_search = 0;
  double me = 0, random = 0, human = 0;  // re-evaluated throughput
  Layout me_layout;
  int random_failures = 0;
  double seconds = 0;
};

ExperimentConfig desk_config(std::uint64_t seed) {
  return experiment_from_json({{"setup", "desk"}, {"seed", seed}, {"n_threads", worker_count()}});
}

double reevaluate(const Layout& l, const ExperimentConfig& c, std::uint64_t seed) {
  SimConfig s = c.sim;
  s.seed = derive_seed(seed, {0xACCE55ULL});
  return evaluate(l, s, kReevalRuns, c.n_threads).mean_throughput;
}

const Elite& best_elite(const Archive& a) {
  const Elite* best = nullptr;
  for (const auto& [cell, e] : a.cells())
    if (!best || e.objective > best->objective) best = &e;
  return *best;
}

TrendSeed run_trend_seed(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = desk_config(seed);
  const SearchConfig sc = search_config(c);
  TrendSeed t;
  t.seed = seed;

  const auto me = run_mapelites(sc);
  const Elite& best = best_elite(me.archive);
  t.me_search = best.objective;
  t.me_layout = best.repaired;

  std::mt19937_64 rng(derive_seed(seed, {0xBA5Eull}));
  std::optional<Layout> best_random;
  for (int done = 0; done < kRandomBaseline;) {
    std::vector<Layout> genomes;
    for (int k = 0; k < std::min(c.batch, kRandomBaseline - done); ++k) genomes.push_back(random_genome(sc.base, rng));
    const auto cands = evaluate_genomes(sc, genomes, derive_seed(seed, {0xBA5Eull, static_cast<std::uint64_t>(done)}));
    for (const auto& cand : cands) {
      if (!cand.eval) {
        ++t.random_failures;
        continue;
      }
      ++done;
      if (!best_random || cand.eval->mean_throughput > t.random_search) {
        t.random_search = cand.eval->mean_throughput;
        best_random = *cand.repaired;
      }
    }
  }
  const Layout human = human_layout(named_setup("desk"));
  t.me = reevaluate(t.me_layout, c, seed);
  t.random = reevaluate(*best_random, c, seed);
  t.human = reevaluate(human, c, seed);
  t.seconds = seconds_since(t0);
  progress(fmt("seed %llu: MAP-Elites %.3f (search %.3f), random %.3f (search %.3f), human %.3f; %.0f s",
               static_cast<unsigned long long>(seed), t.me, t.me_search, t.random, t.random_search, t.human,
               t.seconds));
  return t;
}

std::vector<TrendSeed> g_trend;  // shared with the sweep

Outcome desk_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  g_trend.clear();
  int wins = 0;
  json seeds = json::array();
  for (int s = 1; s <= kTrendSeeds; ++s) {
    const auto t = run_trend_seed(static_cast<std::uint64_t>(s));
    const bool win = t.me > t.random && t.me > t.human;
    wins += win;
    seeds.push_back({{"seed", t.seed},
                     {"mapelites", t.me},
                     {"random", t.random},
                     {"human", t.human},
                     {"mapelites_search", t.me_search},
                     {"random_search", t.random_search},
                     {"random_repair_failures", t.random_failures},
                     {"seconds", t.seconds},
                     {"win", win}});
    g_trend.push_back(t);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = wins >= kTrendSeedsRequired && secs <= kTrendBudgetSeconds;
  std::string per;
  for (const auto& t : g_trend) per += fmt(" [%.2f/%.2f/%.2f]", t.me, t.random, t.human);
  o.detail = fmt("MAP-Elites beats best-of-%d random and human in %d/%d seeds (need %d); "
                 "[ME/random/human] re-evaluated throughput:%s; %.0f s (<= %.0f s)",
                 kRandomBaseline, wins, kTrendSeeds, kTrendSeedsRequired, per.c_str(), secs, kTrendBudgetSeconds);
  o.data = {{"seeds", seeds}, {"seconds", secs}};
  return o;
}

Outcome agent_sweep() {
  if (g_trend.empty()) g_trend.push_back(run_trend_seed(1));
  const TrendSeed* best = &g_trend.front();
  for (const auto& t : g_trend)
    if (t.me > best->me) best = &t;
  const ExperimentConfig c = desk_config(best->seed);
  const Layout human = human_layout(named_setup("desk"));
  bool pass = true;
  std::string per;
  json points = json::array();
  for (int n : kSweepAgents) {
    SimConfig s = c.sim;
    s.n_agents = n;
    s.horizon = kSweepHorizon;
    s.seed = derive_seed(77, {static_cast<std::uint64_t>(n)});
    const auto opt = evaluate(best->me_layout, s, kSweepRuns, c.n_threads);
    const auto hum = evaluate(human, s, kSweepRuns, c.n_threads);
    pass &= opt.mean_throughput >= hum.mean_throughput;
    per += fmt(" %d:%.2f/%.2f(SR %.1f/%.1f)", n, opt.mean_throughput, hum.mean_throughput, opt.success_rate,
               hum.success_rate);
    points.push_back({{"agents", n},
                      {"optimized", opt.mean_throughput},
                      {"optimized_success_rate", opt.success_rate},
                      {"human", hum.mean_throughput},
                      {"human_success_rate", hum.success_rate}});
  }
  Outcome o;
  o.pass = pass;
  o.detail = fmt("optimized (seed %llu) >= human at every agent count; agents:optimized/human =%s (T=%d, %d runs)",
                 static_cast<unsigned long long>(best->seed), per.c_str(), kSweepHorizon, kSweepRuns);
  o.data = {{"points", points}, {"optimized_layout", serialize_layout(best->me_layout)}};
  return o;
}

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the layout optimization pipeline"};
  std::string only;
  std::string json_path;
  std::string expected_fail;
  app.add_option("--only", only, "Comma-separated criterion ids to run");
  app.add_option("--expected-fail", expected_fail,
                 "Comma-separated ids of known, documented failures; they still print FAIL but do not "
                 "affect the exit status");
  app.add_option("--json", json_path, "Write a JSON report here");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {"conflict_freedom", "200 randomized simulations are conflict-free", conflict_freedom},
      {"single_agent_oracle", "single-agent throughput within 10% of 1/d", single_agent_oracle},
      {"congestion_detector", "congestion threshold, corridor trigger, free-flow control", congestion_detector},
      {"milp_repair", "MILP repair soundness, minimality and time", milp_repair},
      {"mutation_distribution", "mutation count is geometric(1/2)", mutation_distribution},
      {"archive_laws", "archive monotonicity, strict improvement, uniform selection", archive_laws},
      {"desk_trend", "desk-scale MAP-Elites beats random and human layouts", desk_trend},
      {"agent_sweep", "optimized throughput >= human across agent counts", agent_sweep},
  };
  const auto split_ids = [](const std::string& list) {
    std::set<std::string> ids;
    std::stringstream ss(list);
    for (std::string id; std::getline(ss, id, ',');)
      if (!id.empty()) ids.insert(id);
    return ids;
  };
  const std::set<std::string> selected = split_ids(only);
  const std::set<std::string> known_failures = split_ids(expected_fail);
  std::set<std::string> all_ids = selected;
  all_ids.insert(known_failures.begin(), known_failures.end());
  for (const auto& id : all_ids) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.id == id; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", id.c_str());
      return 2;
    }
  }

  json report = json::array();
  int failed = 0;
  int known_failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::fprintf(stderr, "running %s ...\n", c.id.c_str());
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    const bool known = known_failures.count(c.id) > 0;
    if (!o.pass) ++(known ? known_failed : failed);
    std::printf("%s  %-22s %s -- %s [%.1f s]%s\n", o.pass ? "PASS" : "FAIL", c.id.c_str(), c.title.c_str(),
                o.detail.c_str(), secs, !o.pass && known ? " (known failure)" : "");
    std::fflush(stdout);
    report.push_back({{"id", c.id},
                      {"pass", o.pass},
                      {"known_failure", !o.pass && known},
                      {"detail", o.detail},
                      {"seconds", secs},
                      {"data", o.data}});
  }
  std::printf("%d unexpected failure(s), %d known failure(s)\n", failed, known_failed);
  if (!json_path.empty()) std::ofstream(json_path) << report.dump(2) << '\n';
  return failed == 0 ? 0 : 1;
}
