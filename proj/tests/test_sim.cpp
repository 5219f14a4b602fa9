#include <doctest.h>

#include <queue>
#include <random>

#include "fixtures.hpp"
#include "layopt/planner.hpp"
#include "layopt/simulator.hpp"
#include "layopt/sipp.hpp"

using namespace layopt;
using testutil::from_rows;

namespace {

// Joint-state BFS for two agents: can they reach their goals without vertex
// or swap conflicts?
bool joint_solution_exists(const Layout& l, int s1, int s2, int g1, int g2) {
  auto moves = [&](int v) {
    std::vector<int> out{v};
    const Cell c = l.cell(v);
    const Cell nbs[4] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}};
    for (Cell x : nbs)
      if (l.in_bounds(x) && l.at(x) != Tile::Shelf) out.push_back(l.index(x));
    return out;
  };
  std::vector<char> seen(static_cast<std::size_t>(l.size() * l.size()), 0);
  std::queue<std::pair<int, int>> q;
  q.push({s1, s2});
  seen[s1 * l.size() + s2] = 1;
  while (!q.empty()) {
    auto [a, b] = q.front();
    q.pop();
    if (a == g1 && b == g2) return true;
    for (int na : moves(a))
      for (int nb : moves(b)) {
        if (na == nb || (na == b && nb == a)) continue;
        if (seen[na * l.size() + nb]) continue;
        seen[na * l.size() + nb] = 1;
        q.push({na, nb});
      }
  }
  return false;
}

std::vector<std::vector<int>> as_trajectory(const std::vector<Path>& paths, int steps) {
  std::vector<std::vector<int>> traj;
  for (int t = 0; t <= steps; ++t) {
    std::vector<int> row;
    for (const auto& p : paths) row.push_back(p[std::min<std::size_t>(t, p.size() - 1)]);
    traj.push_back(row);
  }
  return traj;
}

}  // namespace

TEST_CASE("sipp: open grid is Manhattan-optimal") {
  const Layout l(5, 5, Rect{0, 0, 5, 5});
  GridMap map(l);
  ReservationTable table(l.size());
  const auto p = sipp_plan(map, table, Cell{0, 0}, Cell{0, 4}, 3);
  REQUIRE(p);
  CHECK(p->size() == 5);  // departs at 3, arrives at 3 + 4
  CHECK(p->back() == l.index({0, 4}));
}

TEST_CASE("sipp: enclosed goal has no path") {
  const auto l = from_rows({".....", "..@..", ".@.@.", "..@..", "....."});
  GridMap map(l);
  ReservationTable table(l.size());
  CHECK_FALSE(sipp_plan(map, table, Cell{0, 0}, Cell{2, 2}, 0, 200));
}

TEST_CASE("sipp: avoids a reserved opposing agent in a corridor with a bay") {
  const auto l = from_rows({"......", "@@.@@@"});
  GridMap map(l);
  ReservationTable table(l.size());
  Path other;
  for (int c = 5; c >= 0; --c) other.push_back(l.index({0, c}));
  table.reserve_path(0, 0, other, kForever);
  const auto p = sipp_plan(map, table, SippQuery{l.index({0, 0}), {l.index({0, 5})}, 0, 100});
  // The reserved agent ends at (0,0) forever, which is our start, so we must leave.
  REQUIRE(p);
  const auto audit = testutil::audit_trajectory(l, as_trajectory({other, *p}, static_cast<int>(p->size()) + 6));
  CHECK(audit.vertex_conflicts == 0);
  CHECK(audit.swap_conflicts == 0);
  CHECK(audit.illegal_moves == 0);
  CHECK(p->back() == l.index({0, 5}));
}

TEST_CASE("sipp: multi-goal sequence visits goals in order") {
  const Layout l(4, 4, Rect{0, 0, 4, 4});
  GridMap map(l);
  ReservationTable table(l.size());
  const auto p = sipp_plan(map, table, SippQuery{0, {3, 12, 15}, 0, 100});
  REQUIRE(p);
  CHECK(p->size() == 1 + 3 + 6 + 3);
}

TEST_CASE("plan_window: two agents crossing on an open 4x4 grid") {
  const Layout l(4, 4, Rect{0, 0, 4, 4});
  GridMap map(l);
  WindowRequest req;
  req.starts = {l.index({1, 0}), l.index({0, 1})};
  req.goals = {{l.index({1, 3})}, {l.index({3, 1})}};
  CHECK(joint_solution_exists(l, req.starts[0], req.starts[1], req.goals[0][0], req.goals[1][0]));
  for (auto solver : {MapfSolver::PBS, MapfSolver::PrioritizedPlanning}) {
    std::mt19937_64 rng(1);
    const auto paths = plan_window(map, req, solver, rng);
    const auto audit = testutil::audit_trajectory(l, as_trajectory(paths, 20));
    CHECK(audit.vertex_conflicts == 0);
    CHECK(audit.swap_conflicts == 0);
    CHECK(audit.illegal_moves == 0);
    CHECK(paths[0].back() == req.goals[0][0]);
    CHECK(paths[1].back() == req.goals[1][0]);
  }
}

TEST_CASE("plan_window: one agent gets its SIPP path") {
  const auto l = from_rows({"....", ".@@.", "...."});
  GridMap map(l);
  WindowRequest req;
  req.starts = {l.index({1, 0})};
  req.goals = {{l.index({1, 3})}};
  std::mt19937_64 rng(1);
  ReservationTable empty(l.size());
  const auto expected = sipp_plan(map, empty, SippQuery{req.starts[0], req.goals[0], 0, 1000});
  CHECK(plan_window(map, req, MapfSolver::PBS, rng) == std::vector<Path>{*expected});
}

TEST_CASE("plan_window: head-on swap in a dead-end corridor never yields a swap") {
  const Layout l(1, 4, Rect{0, 0, 1, 4});
  GridMap map(l);
  CHECK_FALSE(joint_solution_exists(l, 0, 3, 3, 0));
  WindowRequest req;
  req.starts = {0, 3};
  req.goals = {{3}, {0}};
  req.window = 10;
  for (auto solver : {MapfSolver::PBS, MapfSolver::PrioritizedPlanning}) {
    std::mt19937_64 rng(2);
    try {
      const auto paths = plan_window(map, req, solver, rng);
      CHECK_FALSE(first_conflict(paths, 0, req.window));
      const auto audit = testutil::audit_trajectory(l, as_trajectory(paths, req.window));
      CHECK(audit.vertex_conflicts == 0);
      CHECK(audit.swap_conflicts == 0);
    } catch (const SolverFailure&) {
      CHECK(true);
    }
  }
}

TEST_CASE("first_conflict finds vertex and swap conflicts") {
  CHECK_FALSE(first_conflict({{0, 1, 2}, {5, 6, 7}}, 0, 5));
  const auto v = first_conflict({{0, 1, 2}, {2, 1, 0}}, 4, 10);
  REQUIRE(v);
  CHECK(v->time == 5);
  CHECK_FALSE(v->swap);
  const auto s = first_conflict({{0, 1}, {1, 0}}, 0, 3);
  REQUIRE(s);
  CHECK(s->swap);
  // Conflicts after the window are ignored.
  CHECK_FALSE(first_conflict({{0, 1, 2, 3}, {3, 3, 3, 3}}, 0, 2));
}

TEST_CASE("detect_congestion: strictly more than half waiting") {
  using A = Action;
  CHECK_FALSE(detect_congestion(std::vector<Action>{A::Wait, A::Wait, A::Move, A::Move}));
  CHECK(detect_congestion(std::vector<Action>{A::Wait, A::Wait, A::Wait, A::Move}));
  CHECK_FALSE(detect_congestion(std::vector<Action>{}));
  CHECK_FALSE(detect_congestion(std::vector<Action>{A::Idle, A::Idle, A::Wait}));
}

TEST_CASE("config checks") {
  SimConfig c;
  c.window = 4;
  c.replan_period = 5;
  CHECK_THROWS_AS(c.check(), ConfigError);
  c = SimConfig{};
  c.planner = PlannerKind::DPP;
  CHECK_THROWS_AS(c.check(), ConfigError);
  c.scenario = Scenario::HomeLocation;
  CHECK_NOTHROW(c.check());
}

TEST_CASE("run_simulation rejects invalid layouts before starting") {
  SimConfig c;
  c.n_agents = 1;
  try {
    run_simulation(from_rows({"e@.", "..."}), c);
    FAIL("expected PreconditionError");
  } catch (const PreconditionError& e) {
    CHECK(e.report.has(Rule::ShelfWithoutEndpoints));
  }
  c.scenario = Scenario::HomeLocation;
  c.n_agents = 20;
  CHECK_THROWS_AS(run_simulation(testutil::small_home_map(), c), PreconditionError);
}

TEST_CASE("single agent throughput approaches 1/d") {
  for (int d : {3, 5, 7}) {
    SimConfig c;
    c.n_agents = 1;
    c.horizon = 1000;
    c.seed = 42;
    const auto r = run_simulation(testutil::single_agent_map(d), c);
    CHECK(r.throughput == doctest::Approx(1.0 / d).epsilon(0.1));
    CHECK_FALSE(r.congested);
  }
}

TEST_CASE("empty goal pool: zero throughput, not congested") {
  SimConfig c;
  c.n_agents = 3;
  c.horizon = 50;
  const auto r = run_simulation(Layout(4, 4, Rect{0, 0, 4, 4}), c);
  CHECK(r.throughput == 0.0);
  CHECK_FALSE(r.congested);
  CHECK(r.elapsed_steps == 50);
}

TEST_CASE("corridor head-on traffic congests") {
  SimConfig c;
  c.n_agents = 6;
  c.horizon = 200;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    const auto r = run_simulation(testutil::corridor_map(), c);
    CHECK(r.congested);
    REQUIRE(r.congestion_timestep);
    CHECK(r.elapsed_steps == *r.congestion_timestep + 1);
  }
}

TEST_CASE("simulation accounting, determinism and conflict-freedom") {
  struct Case {
    Layout layout;
    SimConfig cfg;
  };
  std::vector<Case> cases;
  for (auto solver : {MapfSolver::PBS, MapfSolver::PrioritizedPlanning}) {
    SimConfig c;
    c.n_agents = 12;
    c.horizon = 150;
    c.solver = solver;
    c.seed = 3;
    c.early_stop_on_congestion = false;
    c.record_trajectory = true;
    cases.push_back({testutil::open_workstation_map(), c});
  }
  {
    SimConfig c;
    c.scenario = Scenario::HomeLocation;
    c.planner = PlannerKind::DPP;
    c.n_agents = 8;
    c.horizon = 150;
    c.seed = 5;
    c.early_stop_on_congestion = false;
    c.record_trajectory = true;
    cases.push_back({testutil::small_home_map(), c});
    c.planner = PlannerKind::RHCR;
    cases.push_back({testutil::small_home_map(), c});
  }
  for (const auto& [layout, cfg] : cases) {
    const auto r = run_simulation(layout, cfg);
    long long per_agent = 0;
    for (int x : r.tasks_per_agent) per_agent += x;
    long long per_step = 0;
    for (int x : r.finished_per_timestep) per_step += x;
    CHECK(per_agent == r.total_finished);
    CHECK(per_step == r.total_finished);
    long long usage = 0;
    for (auto x : r.tile_usage) usage += x;
    CHECK(usage == static_cast<long long>(cfg.n_agents) * r.elapsed_steps);
    CHECK(r.throughput == doctest::Approx(static_cast<double>(r.total_finished) / r.elapsed_steps));
    CHECK(r.total_finished > 0);
    REQUIRE(r.trajectory.size() == static_cast<std::size_t>(r.elapsed_steps) + 1);
    const auto audit = testutil::audit_trajectory(layout, r.trajectory);
    CHECK(audit.vertex_conflicts == 0);
    CHECK(audit.swap_conflicts == 0);
    CHECK(audit.illegal_moves == 0);
    if (cfg.planner == PlannerKind::DPP) CHECK(r.solver_failures == 0);

    const auto again = run_simulation(layout, cfg);
    CHECK(again.finished_per_timestep == r.finished_per_timestep);
    CHECK(again.trajectory == r.trajectory);
  }
}

TEST_CASE("evaluate aggregates runs") {
  SimConfig c;
  c.n_agents = 4;
  c.horizon = 100;
  c.seed = 9;
  const auto layout = testutil::open_workstation_map();
  const auto one = evaluate(layout, c, 1);
  CHECK(one.mean_throughput == one.runs[0].throughput);

  const auto five = evaluate(layout, c, 5, 2);
  double sum = 0;
  for (const auto& r : five.runs) sum += r.throughput;
  CHECK(five.mean_throughput == doctest::Approx(sum / 5).epsilon(1e-12));
  double total = 0;
  for (double x : five.tile_usage_normalized) total += x;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(five.measures.n_shelf_components == 4);

  // Same seed for every run => identical results.
  SimConfig fixed = c;
  fixed.seed = 77;
  const auto a = run_simulation(layout, fixed);
  const auto b = run_simulation(layout, fixed);
  CHECK(a.throughput == b.throughput);
}

TEST_CASE("sipp: paths never violate random reservations") {
  std::mt19937_64 rng(1);
  const Layout l(5, 6, Rect{0, 0, 5, 6});
  GridMap map(l);
  int planned = 0;
  for (int it = 0; it < 3000; ++it) {
    ReservationTable table(l.size());
    std::vector<Path> others;
    std::vector<int> lasts;
    const int n = static_cast<int>(rng() % 5);
    for (int a = 0; a < n; ++a) {
      int v = static_cast<int>(rng() % l.size());
      Path p{v};
      const int len = static_cast<int>(rng() % 8);
      for (int k = 0; k < len; ++k) {
        const auto nb = map.neighbors(v);
        v = rng() % 3 == 0 ? v : nb[rng() % nb.size()];
        p.push_back(v);
      }
      const int last = rng() % 2 ? kForever : static_cast<int>(rng() % 12);
      table.reserve_path(a, 0, p, last);
      others.push_back(p);
      lasts.push_back(last);
    }
    const int s = static_cast<int>(rng() % l.size());
    const int g1 = static_cast<int>(rng() % l.size());
    const int g2 = static_cast<int>(rng() % l.size());
    if (!table.vertex_free(s, 0)) continue;
    const auto res = sipp_plan(map, table, SippQuery{s, {g1, g2}, 0, 200});
    if (!res) continue;
    ++planned;
    const Path& p = *res;
    auto at = [](const Path& q, int t) { return q[std::min<std::size_t>(t, q.size() - 1)]; };
    REQUIRE(p.front() == s);
    REQUIRE(p.back() == g2);
    for (int t = 0; t < static_cast<int>(p.size()) + 15; ++t) {
      for (int a = 0; a < n; ++a) {
        if (t <= lasts[a]) CHECK(at(others[a], t) != at(p, t));
        const bool other_moves = t + 1 < static_cast<int>(others[a].size()) && t < lasts[a];
        if (other_moves && at(p, t) != at(p, t + 1)) {
          CHECK_FALSE((at(others[a], t) == at(p, t + 1) && at(others[a], t + 1) == at(p, t)));
        }
      }
    }
  }
  CHECK(planned > 500);
}
