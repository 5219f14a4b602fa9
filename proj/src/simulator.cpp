#include "layopt/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "layopt/rng.hpp"

namespace layopt {

std::string_view planner_name(PlannerKind p) { return p == PlannerKind::RHCR ? "rhcr" : "dpp"; }

PlannerKind planner_from_name(std::string_view name) {
  if (name == "rhcr" || name == "RHCR") return PlannerKind::RHCR;
  if (name == "dpp" || name == "DPP") return PlannerKind::DPP;
  throw ConfigError("unknown planner '" + std::string(name) + "' (expected rhcr or dpp)");
}

std::string_view solver_name(MapfSolver s) { return s == MapfSolver::PBS ? "pbs" : "pp"; }

MapfSolver solver_from_name(std::string_view name) {
  if (name == "pbs" || name == "PBS") return MapfSolver::PBS;
  if (name == "pp" || name == "PP" || name == "prioritized") return MapfSolver::PrioritizedPlanning;
  throw ConfigError("unknown MAPF solver '" + std::string(name) + "' (expected pbs or pp)");
}

void SimConfig::check() const {
  if (n_agents < 0) throw ConfigError("n_agents must be >= 0");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (replan_period < 1) throw ConfigError("replan_period (h) must be >= 1");
  if (window < replan_period) throw ConfigError("window (w) must be >= replan_period (h)");
  if (pbs_node_limit < 1) throw ConfigError("pbs_node_limit must be >= 1");
  if (planner == PlannerKind::DPP && scenario != Scenario::HomeLocation) {
    throw ConfigError("DPP requires the home-location scenario");
  }
}

bool detect_congestion(std::span<const Action> actions) {
  const auto waits = std::count(actions.begin(), actions.end(), Action::Wait);
  return 2 * static_cast<long long>(waits) > static_cast<long long>(actions.size());
}

std::uint64_t run_seed(std::uint64_t master, int run) {
  return derive_seed(master, {0x51ULL, static_cast<std::uint64_t>(run)});
}

namespace {

int uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

// Uniform draw from `pool`, avoiding `previous` when another option exists.
int sample_excluding(const std::vector<int>& pool, int previous, std::mt19937_64& rng) {
  if (pool.size() == 1) return pool.front();
  const auto it = std::find(pool.begin(), pool.end(), previous);
  if (it == pool.end()) return pool[uniform_index(rng, pool.size())];
  int k = uniform_index(rng, pool.size() - 1);
  if (k >= static_cast<int>(it - pool.begin())) ++k;
  return pool[k];
}

class TaskAssigner {
 public:
  TaskAssigner(const Layout& layout, Scenario scenario, int n_agents, std::mt19937_64& rng)
      : scenario_(scenario),
        endpoints_(layout.indices_of(Tile::Endpoint)),
        workstations_(layout.indices_of(Tile::Workstation)),
        want_workstation_(static_cast<std::size_t>(n_agents), 0) {
    if (scenario_ == Scenario::Workstation) {
      std::bernoulli_distribution coin(0.5);
      for (auto& w : want_workstation_) w = coin(rng) ? 1 : 0;
    }
  }

  // Next goal for `agent` whose previous goal (or location) is `previous`;
  // -1 when there is nothing to assign.
  int next(int agent, int previous, std::mt19937_64& rng) {
    if (scenario_ == Scenario::HomeLocation) {
      return endpoints_.empty() ? -1 : sample_excluding(endpoints_, previous, rng);
    }
    const bool ws = want_workstation_[agent] != 0;
    const auto* pool = ws ? &workstations_ : &endpoints_;
    if (pool->empty()) pool = ws ? &endpoints_ : &workstations_;
    if (pool->empty()) return -1;
    want_workstation_[agent] = ws ? 0 : 1;
    return sample_excluding(*pool, previous, rng);
  }

 private:
  Scenario scenario_;
  std::vector<int> endpoints_;
  std::vector<int> workstations_;
  std::vector<char> want_workstation_;
};

// Traversable tiles connected to the task tiles (or all traversable tiles when
// there are none).
std::vector<int> start_candidates(const Layout& layout, Scenario scenario) {
  if (scenario == Scenario::HomeLocation) return layout.indices_of(Tile::HomeLocation);
  std::vector<int> seeds;
  for (int v = 0; v < layout.size(); ++v) {
    const Tile t = layout.at(v);
    if (t == Tile::Endpoint || t == Tile::Workstation) seeds.push_back(v);
  }
  std::vector<int> out;
  if (seeds.empty()) {
    for (int v = 0; v < layout.size(); ++v) {
      if (traversable(layout.at(v))) out.push_back(v);
    }
    return out;
  }
  const auto dist = bfs_distances(layout, seeds.front());
  for (int v = 0; v < layout.size(); ++v) {
    if (dist[v] >= 0) out.push_back(v);
  }
  return out;
}

int path_at(const Path& p, int k) { return p[std::min<std::size_t>(static_cast<std::size_t>(k), p.size() - 1)]; }

class Simulation {
 public:
  Simulation(const Layout& layout, const SimConfig& cfg)
      : layout_(layout),
        cfg_(cfg),
        map_(layout),
        rng_(cfg.seed),
        assigner_(layout, cfg.scenario, cfg.n_agents, rng_),
        n_(cfg.n_agents),
        goals_(static_cast<std::size_t>(cfg.n_agents)),
        occupied_(static_cast<std::size_t>(layout.size()), -1) {
    res_.seed = cfg.seed;
    res_.height = layout.height();
    res_.width = layout.width();
    res_.tile_usage.assign(static_cast<std::size_t>(layout.size()), 0);
    res_.tasks_per_agent.assign(static_cast<std::size_t>(n_), 0);

    auto candidates = start_candidates(layout, cfg.scenario);
    if (static_cast<int>(candidates.size()) < n_) {
      throw PreconditionError("not enough start tiles for " + std::to_string(n_) + " agents (have " +
                              std::to_string(candidates.size()) + ")");
    }
    for (int i = 0; i < n_; ++i) {
      const int j = i + uniform_index(rng_, candidates.size() - static_cast<std::size_t>(i));
      std::swap(candidates[i], candidates[j]);
    }
    pos_.assign(candidates.begin(), candidates.begin() + n_);
    for (int i = 0; i < n_; ++i) refill(i);
    if (cfg.record_trajectory) res_.trajectory.push_back(pos_);
  }

  SimResult run() {
    if (cfg_.planner == PlannerKind::RHCR) {
      run_rhcr();
    } else {
      run_dpp();
    }
    res_.throughput =
        res_.elapsed_steps > 0 ? static_cast<double>(res_.total_finished) / res_.elapsed_steps : 0.0;
    return std::move(res_);
  }

 private:
  void refill(int i) {
    if (!goals_[i].empty()) return;
    const int g = assigner_.next(i, pos_[i], rng_);
    if (g >= 0) goals_[i].push_back(g);
  }

  // Queue further goals until the summed task distance covers the window, so
  // agents keep moving between replans.
  void extend_goals(int i) {
    auto& q = goals_[i];
    if (q.empty()) return;
    int total = map_.distance(pos_[i], q.front());
    for (std::size_t k = 1; k < q.size(); ++k) total += map_.distance(q[k - 1], q[k]);
    while (total < cfg_.window && static_cast<int>(q.size()) <= cfg_.window) {
      const int g = assigner_.next(i, q.back(), rng_);
      if (g < 0) break;
      total += map_.distance(q.back(), g);
      q.push_back(g);
    }
  }

  // Executes one timestep; returns true when the run should stop.
  bool step(int t, const std::vector<int>& next) {
    std::vector<Action> actions(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) {
      if (goals_[i].empty()) {
        actions[i] = next[i] == pos_[i] ? Action::Idle : Action::Move;
      } else {
        actions[i] = next[i] == pos_[i] ? Action::Wait : Action::Move;
      }
    }
    check_transition(next);
    pos_ = next;
    int finished = 0;
    for (int i = 0; i < n_; ++i) {
      ++res_.tile_usage[pos_[i]];
      if (!goals_[i].empty() && pos_[i] == goals_[i].front()) {
        goals_[i].pop_front();
        ++finished;
        ++res_.tasks_per_agent[i];
        on_finish(i);
        refill(i);
      }
    }
    res_.finished_per_timestep.push_back(finished);
    res_.total_finished += finished;
    res_.elapsed_steps = t + 1;
    if (cfg_.record_trajectory) res_.trajectory.push_back(pos_);
    if (detect_congestion(actions)) {
      if (!res_.congested) res_.congestion_timestep = t;
      res_.congested = true;
      if (cfg_.early_stop_on_congestion) return true;
    }
    return false;
  }

  // Internal guard: executed moves must be legal and conflict-free.
  void check_transition(const std::vector<int>& next) {
    for (int i = 0; i < n_; ++i) {
      const int u = pos_[i];
      const int v = next[i];
      bool adjacent = u == v;
      for (int x : map_.neighbors(u)) adjacent = adjacent || x == v;
      if (!adjacent || !map_.traversable(v)) throw std::logic_error("simulator produced an illegal move");
      if (occupied_[v] >= 0) {
        throw std::logic_error("simulator produced a vertex conflict between agents " + std::to_string(occupied_[v]) +
                               " and " + std::to_string(i) + " at tile " + std::to_string(v));
      }
      occupied_[v] = i;
    }
    for (int i = 0; i < n_; ++i) {
      const int j = occupied_[pos_[i]];
      if (j >= 0 && j != i && next[i] != pos_[i] && pos_[j] == next[i]) {
        throw std::logic_error("simulator produced a swap conflict");
      }
    }
    for (int i = 0; i < n_; ++i) occupied_[next[i]] = -1;
  }

  void on_finish(int i) {
    if (cfg_.planner == PlannerKind::DPP) idle_[i] = 1;
  }

  void run_rhcr() {
    std::vector<Path> paths(static_cast<std::size_t>(n_));
    int plan_t = 0;
    std::vector<int> next(static_cast<std::size_t>(n_));
    for (int t = 0; t < cfg_.horizon; ++t) {
      if (t % cfg_.replan_period == 0) {
        WindowRequest req;
        req.t0 = t;
        req.starts = pos_;
        req.window = cfg_.window;
        req.goals.resize(static_cast<std::size_t>(n_));
        for (int i = 0; i < n_; ++i) {
          extend_goals(i);
          req.goals[i].assign(goals_[i].begin(), goals_[i].end());
        }
        try {
          paths = plan_window(map_, req, cfg_.solver, rng_, cfg_.pbs_node_limit);
        } catch (const SolverFailure&) {
          ++res_.solver_failures;
          for (int i = 0; i < n_; ++i) paths[i] = Path{pos_[i]};
        }
        plan_t = t;
      }
      for (int i = 0; i < n_; ++i) next[i] = path_at(paths[i], t - plan_t + 1);
      if (step(t, next)) return;
    }
  }

  void run_dpp() {
    const auto homes = layout_.indices_of(Tile::HomeLocation);
    ReservationTable table(map_.size());
    std::vector<Path> plan(static_cast<std::size_t>(n_));
    std::vector<int> plan_start(static_cast<std::size_t>(n_), 0);
    std::vector<int> parking(pos_);
    std::vector<char> parked(static_cast<std::size_t>(map_.size()), 0);
    idle_.assign(static_cast<std::size_t>(n_), 1);
    for (int i = 0; i < n_; ++i) {
      plan[i] = Path{pos_[i]};
      table.reserve_path(i, 0, plan[i], kForever);
      parked[pos_[i]] = 1;
    }
    std::vector<int> order;
    std::vector<int> next(static_cast<std::size_t>(n_));
    for (int t = 0; t < cfg_.horizon; ++t) {
      order.clear();
      for (int i = 0; i < n_; ++i) {
        if (idle_[i] && !goals_[i].empty()) order.push_back(i);
      }
      std::shuffle(order.begin(), order.end(), rng_);
      for (int i : order) {
        const int goal = goals_[i].front();
        parked[parking[i]] = 0;
        int best = -1;
        int best_d = 0;
        for (int h : homes) {
          if (parked[h]) continue;
          const int d = map_.distance(h, goal);
          if (d < 0) continue;
          if (best < 0 || d < best_d) {
            best = h;
            best_d = d;
          }
        }
        std::optional<Path> p;
        if (best >= 0) {
          table.remove_agent(i);
          const int bound = std::max(t, table.last_finite_time()) + 2 * map_.size() + 2;
          p = sipp_plan(map_, table, SippQuery{pos_[i], {goal, best}, t, bound});
        }
        if (p) {
          plan[i] = std::move(*p);
          plan_start[i] = t;
          table.reserve_path(i, t, plan[i], kForever);
          parking[i] = best;
          idle_[i] = 0;
        } else {
          ++res_.solver_failures;
          if (best >= 0) {
            Path rest(plan[i].begin() + std::min<std::ptrdiff_t>(t - plan_start[i],
                                                                 static_cast<std::ptrdiff_t>(plan[i].size()) - 1),
                      plan[i].end());
            plan[i] = std::move(rest);
            plan_start[i] = t;
            table.reserve_path(i, t, plan[i], kForever);
          }
        }
        parked[parking[i]] = 1;
      }
      for (int i = 0; i < n_; ++i) next[i] = path_at(plan[i], t - plan_start[i] + 1);
      if (step(t, next)) return;
    }
  }

  const Layout& layout_;
  SimConfig cfg_;
  GridMap map_;
  std::mt19937_64 rng_;
  TaskAssigner assigner_;
  int n_;
  std::vector<int> pos_;
  std::vector<std::deque<int>> goals_;
  std::vector<char> idle_;
  std::vector<int> occupied_;
  SimResult res_;
};

}  // namespace

SimResult run_simulation(const Layout& layout, const SimConfig& config) {
  config.check();
  auto report = validate(layout, config.scenario, config.n_agents);
  if (!report.acceptable_for(config.scenario)) {
    throw PreconditionError(std::string("layout is not ") +
                                (config.scenario == Scenario::Workstation ? "valid" : "well-formed") +
                                " for the " + std::string(scenario_name(config.scenario)) + " scenario",
                            std::move(report));
  }
  if (layout.count(Tile::DummySource) > 0) throw PreconditionError("layout contains a dummy source tile");
  return Simulation(layout, config).run();
}

EvalResult evaluate(const Layout& layout, const SimConfig& config, int n_runs, int n_threads,
                    DistanceMetric metric) {
  if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
  EvalResult out;
  out.measures = compute_measures(layout, config.scenario, metric);
  out.runs.resize(static_cast<std::size_t>(n_runs));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < n_runs; r = next++) {
      try {
        SimConfig c = config;
        c.seed = run_seed(config.seed, r);
        out.runs[r] = run_simulation(layout, c);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(n_threads, 1, n_runs);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<double> scores;
  std::vector<long long> usage(static_cast<std::size_t>(layout.size()), 0);
  int ok = 0;
  for (const auto& r : out.runs) {
    scores.push_back(r.congested && config.zero_on_congestion ? 0.0 : r.throughput);
    if (!r.congested) ++ok;
    for (std::size_t v = 0; v < usage.size(); ++v) usage[v] += r.tile_usage[v];
  }
  out.mean_throughput = std::accumulate(scores.begin(), scores.end(), 0.0) / n_runs;
  double ss = 0.0;
  for (double s : scores) ss += (s - out.mean_throughput) * (s - out.mean_throughput);
  out.throughput_sd = n_runs > 1 ? std::sqrt(ss / (n_runs - 1)) : 0.0;
  out.success_rate = static_cast<double>(ok) / n_runs;
  const long long total = std::accumulate(usage.begin(), usage.end(), 0LL);
  out.tile_usage_normalized.assign(usage.size(), 0.0);
  if (total > 0) {
    for (std::size_t v = 0; v < usage.size(); ++v) {
      out.tile_usage_normalized[v] = static_cast<double>(usage[v]) / static_cast<double>(total);
    }
  }
  return out;
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"scenario", scenario_name(c.scenario)},
          {"n_agents", c.n_agents},
          {"horizon", c.horizon},
          {"planner", planner_name(c.planner)},
          {"window", c.window},
          {"replan_period", c.replan_period},
          {"solver", solver_name(c.solver)},
          {"seed", c.seed},
          {"early_stop_on_congestion", c.early_stop_on_congestion},
          {"zero_on_congestion", c.zero_on_congestion},
          {"pbs_node_limit", c.pbs_node_limit}};
}

SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig c) {
  try {
    if (j.contains("scenario")) c.scenario = scenario_from_name(j.at("scenario").get<std::string>());
    if (j.contains("n_agents")) c.n_agents = j.at("n_agents").get<int>();
    if (j.contains("horizon")) c.horizon = j.at("horizon").get<int>();
    if (j.contains("planner")) c.planner = planner_from_name(j.at("planner").get<std::string>());
    if (j.contains("window")) c.window = j.at("window").get<int>();
    if (j.contains("replan_period")) c.replan_period = j.at("replan_period").get<int>();
    if (j.contains("solver")) c.solver = solver_from_name(j.at("solver").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("early_stop_on_congestion")) c.early_stop_on_congestion = j.at("early_stop_on_congestion").get<bool>();
    if (j.contains("zero_on_congestion")) c.zero_on_congestion = j.at("zero_on_congestion").get<bool>();
    if (j.contains("pbs_node_limit")) c.pbs_node_limit = j.at("pbs_node_limit").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("simulation config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const SimResult& r, bool include_series) {
  nlohmann::json j = {{"seed", r.seed},
                      {"throughput", r.throughput},
                      {"total_finished", r.total_finished},
                      {"elapsed_steps", r.elapsed_steps},
                      {"congested", r.congested},
                      {"congestion_timestep", r.congestion_timestep ? nlohmann::json(*r.congestion_timestep)
                                                                    : nlohmann::json(nullptr)},
                      {"solver_failures", r.solver_failures}};
  if (include_series) {
    j["finished_per_timestep"] = r.finished_per_timestep;
    j["tasks_per_agent"] = r.tasks_per_agent;
    j["tile_usage"] = {{"height", r.height}, {"width", r.width}, {"counts", r.tile_usage}};
  }
  return j;
}

nlohmann::json to_json(const EvalResult& r, bool include_runs) {
  nlohmann::json j = {{"mean_throughput", r.mean_throughput},
                      {"throughput_sd", r.throughput_sd},
                      {"success_rate", r.success_rate},
                      {"measures",
                       {{"n_shelf_components", r.measures.n_shelf_components},
                        {"mean_task_length", r.measures.mean_task_length}}},
                      {"tile_usage_normalized", r.tile_usage_normalized}};
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) runs.push_back(to_json(run, include_runs));
  j["runs"] = std::move(runs);
  return j;
}

namespace {

template <typename T>
std::string csv_impl(std::span<const T> values, int height, int width) {
  std::ostringstream os;
  os.precision(17);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (c) os << ',';
      os << values[static_cast<std::size_t>(r) * width + c];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string grid_csv(std::span<const double> values, int height, int width) {
  return csv_impl(values, height, width);
}

std::string grid_csv(std::span<const long long> values, int height, int width) {
  return csv_impl(values, height, width);
}

}  // namespace layopt
