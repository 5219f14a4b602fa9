#include "layopt/planner.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

namespace layopt {

namespace {

int at(const Path& p, int k) { return p[std::min<std::size_t>(static_cast<std::size_t>(k), p.size() - 1)]; }

bool paths_conflict(const Path& p, const Path& q, int horizon) {
  for (int k = 0; k <= horizon; ++k) {
    if (at(p, k) == at(q, k)) return true;
    if (k < horizon && at(p, k) == at(q, k + 1) && at(p, k + 1) == at(q, k) && at(p, k) != at(p, k + 1)) return true;
  }
  return false;
}

int max_time_for(const GridMap& map, const WindowRequest& r, std::size_t n_goals) {
  const long long bound = static_cast<long long>(r.t0) + r.window + 1 +
                          static_cast<long long>(n_goals + 1) * static_cast<long long>(map.size());
  return bound >= kForever ? kForever - 1 : static_cast<int>(bound);
}

class Bits {
 public:
  explicit Bits(int n = 0) : words_(static_cast<std::size_t>((n + 63) / 64), 0) {}
  bool test(int i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(int i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void merge(const Bits& o) {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] |= o.words_[w];
  }
  int count() const {
    int c = 0;
    for (auto w : words_) c += __builtin_popcountll(w);
    return c;
  }

 private:
  std::vector<std::uint64_t> words_;
};

struct PbsNode {
  std::vector<Path> paths;
  std::vector<Bits> higher;  // transitively closed: agents with priority over i
  long long cost = 0;
};

long long total_cost(const std::vector<Path>& paths) {
  long long c = 0;
  for (const auto& p : paths) c += static_cast<long long>(p.size());
  return c;
}

}  // namespace

std::optional<Conflict> first_conflict(const std::vector<Path>& paths, int t0, int last_time) {
  const int horizon = last_time - t0;
  int max_v = 0;
  for (const auto& p : paths) {
    for (int v : p) max_v = std::max(max_v, v);
  }
  std::vector<int> occupant(static_cast<std::size_t>(max_v) + 1, -1);
  const int n = static_cast<int>(paths.size());
  for (int k = 0; k <= horizon; ++k) {
    for (int i = 0; i < n; ++i) {
      const int v = at(paths[i], k);
      if (occupant[v] >= 0) {
        const int j = occupant[v];
        for (int x = 0; x < n; ++x) occupant[at(paths[x], k)] = -1;
        return Conflict{j, i, t0 + k, false};
      }
      occupant[v] = i;
    }
    // Swaps between k and k+1: agent i moves u -> v while the occupant of v at k moves v -> u.
    if (k < horizon) {
      for (int i = 0; i < n; ++i) {
        const int u = at(paths[i], k);
        const int v = at(paths[i], k + 1);
        if (u == v) continue;
        const int j = occupant[v];
        if (j >= 0 && j != i && at(paths[j], k + 1) == u) {
          for (int x = 0; x < n; ++x) occupant[at(paths[x], k)] = -1;
          return Conflict{std::min(i, j), std::max(i, j), t0 + k + 1, true};
        }
      }
    }
    for (int i = 0; i < n; ++i) occupant[at(paths[i], k)] = -1;
  }
  return std::nullopt;
}

std::vector<Path> plan_window(const GridMap& map, const WindowRequest& r, MapfSolver solver, std::mt19937_64& rng,
                              int pbs_node_limit, WindowStats* stats) {
  const int n = static_cast<int>(r.starts.size());
  const int last_time = r.t0 + r.window;
  WindowStats local;
  WindowStats& st = stats ? *stats : local;

  std::vector<int> moving;
  std::vector<Path> paths(static_cast<std::size_t>(n));
  ReservationTable table(map.size());
  // Agents without goals stay where they are and outrank everyone.
  auto reserve_fixed = [&] {
    for (int i = 0; i < n; ++i) {
      if (r.goals[i].empty()) table.reserve_path(i, r.t0, paths[i], last_time);
    }
  };
  for (int i = 0; i < n; ++i) {
    if (r.goals[i].empty()) {
      paths[i] = Path{r.starts[i]};
    } else {
      moving.push_back(i);
    }
  }
  auto plan_one = [&](int i) {
    ++st.low_level_calls;
    return sipp_plan(map, table, SippQuery{r.starts[i], r.goals[i], r.t0, max_time_for(map, r, r.goals[i].size())});
  };

  if (solver == MapfSolver::PrioritizedPlanning) {
    std::shuffle(moving.begin(), moving.end(), rng);
    reserve_fixed();
    for (int i : moving) {
      auto p = plan_one(i);
      if (!p) throw SolverFailure("prioritized planning: no path for agent " + std::to_string(i));
      paths[i] = std::move(*p);
      table.reserve_path(i, r.t0, paths[i], last_time);
    }
    return paths;
  }

  // Priority-based search.
  PbsNode root;
  root.higher.assign(static_cast<std::size_t>(n), Bits(n));
  root.paths = paths;
  reserve_fixed();
  for (int i : moving) {
    auto p = plan_one(i);
    if (!p) throw SolverFailure("PBS: no individual path for agent " + std::to_string(i));
    root.paths[i] = std::move(*p);
  }
  root.cost = total_cost(root.paths);

  std::vector<PbsNode> stack;
  stack.push_back(std::move(root));
  int generated = 1;
  while (!stack.empty()) {
    PbsNode node = std::move(stack.back());
    stack.pop_back();
    ++st.high_level_nodes;
    const auto conflict = first_conflict(node.paths, r.t0, last_time);
    if (!conflict) return node.paths;

    std::vector<PbsNode> children;
    for (int side = 0; side < 2; ++side) {
      const int hi = side == 0 ? conflict->a : conflict->b;
      const int lo = side == 0 ? conflict->b : conflict->a;
      if (node.higher[hi].test(lo)) continue;  // would create a priority cycle
      if (r.goals[lo].empty()) continue;       // fixed agents cannot yield
      PbsNode child = node;
      Bits add = child.higher[hi];
      add.set(hi);
      std::vector<int> lower;
      for (int x = 0; x < n; ++x) {
        if (x == lo || child.higher[x].test(lo)) lower.push_back(x);
      }
      for (int x : lower) child.higher[x].merge(add);
      std::stable_sort(lower.begin(), lower.end(),
                       [&](int x, int y) { return child.higher[x].count() < child.higher[y].count(); });
      bool ok = true;
      for (int x : lower) {
        if (r.goals[x].empty()) continue;
        bool needs = x == lo;
        for (int y = 0; y < n && !needs; ++y) {
          if (y != x && child.higher[x].test(y) && paths_conflict(child.paths[x], child.paths[y], r.window)) {
            needs = true;
          }
        }
        if (!needs) continue;
        table.clear();
        reserve_fixed();
        for (int y = 0; y < n; ++y) {
          if (y != x && child.higher[x].test(y)) table.reserve_path(y, r.t0, child.paths[y], last_time);
        }
        auto p = plan_one(x);
        if (!p) {
          ok = false;
          break;
        }
        child.paths[x] = std::move(*p);
      }
      if (!ok) continue;
      child.cost = total_cost(child.paths);
      children.push_back(std::move(child));
    }
    generated += static_cast<int>(children.size());
    if (generated > pbs_node_limit) throw SolverFailure("PBS: node limit reached");
    std::sort(children.begin(), children.end(), [](const PbsNode& x, const PbsNode& y) { return x.cost > y.cost; });
    for (auto& c : children) stack.push_back(std::move(c));
  }
  throw SolverFailure("PBS: priority tree exhausted");
}

}  // namespace layopt
