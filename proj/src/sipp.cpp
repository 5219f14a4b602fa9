#include "layopt/sipp.hpp"

#include <algorithm>
#include <cstdint>
#include <climits>
#include <functional>

#include "layopt/measures.hpp"

namespace layopt {

GridMap::GridMap(const Layout& layout)
    : layout_(layout),
      traversable_(static_cast<std::size_t>(layout.size())),
      offsets_(static_cast<std::size_t>(layout.size()) + 1, 0),
      to_goal_(static_cast<std::size_t>(layout.size())) {
  int nb[4];
  for (int v = 0; v < layout.size(); ++v) traversable_[v] = layopt::traversable(layout.at(v));
  for (int v = 0; v < layout.size(); ++v) {
    offsets_[v] = static_cast<int>(adjacency_.size());
    if (!traversable_[v]) continue;
    const int n = layout.neighbors(v, nb);
    for (int k = 0; k < n; ++k) {
      if (traversable_[nb[k]]) adjacency_.push_back(nb[k]);
    }
  }
  offsets_[layout.size()] = static_cast<int>(adjacency_.size());
}

int GridMap::distance(int v, int goal) const {
  auto& d = to_goal_[goal];
  if (d.empty()) d = bfs_distances(layout_, goal);
  return d[v];
}

ReservationTable::ReservationTable(int n_vertices)
    : vertex_(static_cast<std::size_t>(n_vertices)), edge_(static_cast<std::size_t>(n_vertices)) {}

void ReservationTable::reserve_path(int agent, int t0, std::span<const int> path, int last_time) {
  if (path.empty()) return;
  std::vector<int>* touched = nullptr;
  for (auto& [a, list] : touched_) {
    if (a == agent) touched = &list;
  }
  if (touched == nullptr) {
    touched_.emplace_back(agent, std::vector<int>{});
    touched = &touched_.back().second;
  }
  const int len = static_cast<int>(path.size());
  int k = 0;
  while (k < len && t0 + k <= last_time) {
    int j = k;
    while (j + 1 < len && path[j + 1] == path[k] && t0 + j + 1 <= last_time) ++j;
    int hi = t0 + j;
    if (j == len - 1 && hi < last_time) hi = last_time;
    vertex_[path[k]].push_back({t0 + k, hi, agent});
    touched->push_back(path[k]);
    if (hi != kForever) last_finite_ = std::max(last_finite_, hi);
    k = j + 1;
  }
  for (int i = 0; i + 1 < len; ++i) {
    const int t = t0 + i;
    if (t >= last_time) break;
    if (path[i] != path[i + 1]) {
      edge_[path[i]].push_back({path[i + 1], t, agent});
      touched->push_back(path[i]);
    }
  }
}

void ReservationTable::remove_agent(int agent) {
  for (auto it = touched_.begin(); it != touched_.end(); ++it) {
    if (it->first != agent) continue;
    for (int v : it->second) {
      std::erase_if(vertex_[v], [agent](const VertexEntry& e) { return e.agent == agent; });
      std::erase_if(edge_[v], [agent](const EdgeEntry& e) { return e.agent == agent; });
    }
    touched_.erase(it);
    return;
  }
}

void ReservationTable::clear() {
  for (auto& [a, list] : touched_) {
    for (int v : list) {
      vertex_[v].clear();
      edge_[v].clear();
    }
  }
  touched_.clear();
  last_finite_ = -1;
}

std::vector<Interval> ReservationTable::safe_intervals(int v) const {
  std::vector<Interval> out;
  std::vector<std::pair<int, int>> scratch;
  append_safe_intervals(v, out, scratch);
  return out;
}

void ReservationTable::append_safe_intervals(int v, std::vector<Interval>& out,
                                             std::vector<std::pair<int, int>>& occ) const {
  const auto& entries = vertex_[v];
  if (entries.empty()) {
    out.push_back(Interval{0, kForever});
    return;
  }
  occ.clear();
  for (const auto& e : entries) occ.emplace_back(e.lo, e.hi);
  std::sort(occ.begin(), occ.end());
  long long cursor = 0;
  for (const auto& [lo, hi] : occ) {
    if (lo > cursor) out.push_back({static_cast<int>(cursor), lo - 1});
    if (hi == kForever) return;
    cursor = std::max<long long>(cursor, static_cast<long long>(hi) + 1);
  }
  out.push_back({static_cast<int>(cursor), kForever});
}

bool ReservationTable::vertex_free(int v, int t) const {
  for (const auto& e : vertex_[v]) {
    if (t >= e.lo && t <= e.hi) return false;
  }
  return true;
}

bool ReservationTable::swap_blocked(int from, int to, int t) const {
  for (const auto& e : edge_[to]) {
    if (e.to == from && e.t == t) return true;
  }
  return false;
}

namespace {

struct Node {
  int v;
  int lo;
  int hi;
  int g;
  int waits;
  int stage;
  int parent;
  int interval;  // global id of (v, safe interval) in the scratch table
};

struct OpenEntry {
  int f;
  int waits;
  int v;
  int node;
  bool operator>(const OpenEntry& o) const {
    if (f != o.f) return f > o.f;
    if (waits != o.waits) return waits > o.waits;
    if (v != o.v) return v > o.v;
    return node > o.node;
  }
};

// Per-thread working memory reused across searches to avoid allocation churn.
struct Scratch {
  std::vector<int> iv_start;  // per vertex: first id in `ivs`, -1 if not computed
  std::vector<int> iv_count;
  std::vector<Interval> ivs;
  std::vector<int> touched;
  std::vector<int> best;  // per (interval id, stage): best g
  std::vector<Node> nodes;
  std::vector<OpenEntry> heap;
  std::vector<std::pair<int, int>> occ;

  void reset(int n_vertices) {
    if (static_cast<int>(iv_start.size()) < n_vertices) {
      iv_start.assign(static_cast<std::size_t>(n_vertices), -1);
      iv_count.assign(static_cast<std::size_t>(n_vertices), 0);
    }
    for (int v : touched) iv_start[v] = -1;
    touched.clear();
    ivs.clear();
    best.clear();
    nodes.clear();
    heap.clear();
  }
};

thread_local Scratch tls;

}  // namespace

std::optional<Path> sipp_plan(const GridMap& map, const ReservationTable& table, const SippQuery& q) {
  if (q.goals.empty()) return Path{q.start};
  if (!map.traversable(q.start)) return std::nullopt;
  for (int g : q.goals) {
    if (!map.traversable(g)) return std::nullopt;
  }
  const int last = static_cast<int>(q.goals.size()) - 1;
  const int n_stages = last + 1;
  // suffix[k]: remaining leg lengths after reaching goal k-1.
  std::vector<int> suffix(q.goals.size() + 1, 0);
  for (int k = last; k >= 1; --k) {
    const int d = map.distance(q.goals[k - 1], q.goals[k]);
    if (d < 0) return std::nullopt;
    suffix[k] = suffix[k + 1] + d;
  }
  auto heuristic = [&](int v, int stage) {
    const int d = map.distance(v, q.goals[stage]);
    return d < 0 ? -1 : d + suffix[stage + 1];
  };

  Scratch& s = tls;
  s.reset(map.layout().size());
  auto intervals = [&](int v) {
    if (s.iv_start[v] < 0) {
      s.iv_start[v] = static_cast<int>(s.ivs.size());
      table.append_safe_intervals(v, s.ivs, s.occ);
      s.iv_count[v] = static_cast<int>(s.ivs.size()) - s.iv_start[v];
      s.touched.push_back(v);
    }
    return std::pair{s.iv_start[v], s.iv_start[v] + s.iv_count[v]};
  };
  auto best_slot = [&](const Node& n) -> int& {
    const auto key = static_cast<std::size_t>(n.interval) * n_stages + n.stage;
    if (key >= s.best.size()) s.best.resize(std::max(key + 1, s.ivs.size() * n_stages), INT32_MAX);
    return s.best[key];
  };

  auto advance = [&](Node& n) {
    while (n.stage < last && n.v == q.goals[n.stage]) ++n.stage;
  };
  auto push = [&](const Node& n) {
    const int h = heuristic(n.v, n.stage);
    if (h < 0) return;
    int& b = best_slot(n);
    if (b <= n.g) return;
    b = n.g;
    s.nodes.push_back(n);
    s.heap.push_back({n.g + h, n.waits, n.v, static_cast<int>(s.nodes.size()) - 1});
    std::push_heap(s.heap.begin(), s.heap.end(), std::greater<>{});
  };

  int root_id = -1;
  {
    const auto [b, e] = intervals(q.start);
    for (int i = b; i < e; ++i) {
      if (s.ivs[i].lo <= q.depart && q.depart <= s.ivs[i].hi) root_id = i;
    }
  }
  if (root_id < 0) return std::nullopt;
  Node root{q.start, s.ivs[root_id].lo, s.ivs[root_id].hi, q.depart, 0, 0, -1, root_id};
  // A goal equal to the start only counts once the agent has stayed a step.
  if (q.start == q.goals[0] && root.hi > q.depart) {
    root.g = q.depart + 1;
    root.waits = 1;
    root.stage = 1;
    if (root.stage > last) root.stage = last;
    advance(root);
  }
  push(root);

  while (!s.heap.empty()) {
    std::pop_heap(s.heap.begin(), s.heap.end(), std::greater<>{});
    const OpenEntry top = s.heap.back();
    s.heap.pop_back();
    const Node cur = s.nodes[top.node];
    if (best_slot(cur) < cur.g) continue;
    if (cur.stage == last && cur.v == q.goals[last] && cur.hi == kForever) {
      std::vector<int> chain;
      for (int i = top.node; i >= 0; i = s.nodes[i].parent) chain.push_back(i);
      std::reverse(chain.begin(), chain.end());
      Path path;
      const Node& r = s.nodes[chain.front()];
      for (int t = q.depart; t <= r.g; ++t) path.push_back(r.v);
      for (std::size_t c = 1; c < chain.size(); ++c) {
        const Node& n = s.nodes[chain[c]];
        const Node& p = s.nodes[chain[c - 1]];
        while (q.depart + static_cast<int>(path.size()) < n.g) path.push_back(p.v);
        path.push_back(n.v);
      }
      return path;
    }
    for (int u : map.neighbors(cur.v)) {
      const auto [b, e] = intervals(u);
      for (int id = b; id < e; ++id) {
        const Interval iv = s.ivs[id];
        if (cur.hi != kForever && iv.lo > cur.hi + 1) break;
        if (iv.hi != kForever && iv.hi < cur.g + 1) continue;
        int dep = std::max(cur.g, iv.lo - 1);
        while (dep <= cur.hi && (iv.hi == kForever || dep + 1 <= iv.hi) && table.swap_blocked(cur.v, u, dep)) ++dep;
        if (dep > cur.hi || (iv.hi != kForever && dep + 1 > iv.hi)) continue;
        const int arrival = dep + 1;
        if (arrival > q.max_time) continue;
        Node child{u, iv.lo, iv.hi, arrival, cur.waits + (dep - cur.g), cur.stage, top.node, id};
        advance(child);
        push(child);
      }
    }
  }
  return std::nullopt;
}

std::optional<Path> sipp_plan(const GridMap& map, const ReservationTable& table, Cell start, Cell goal, int depart,
                              int max_time) {
  const Layout& l = map.layout();
  return sipp_plan(map, table, SippQuery{l.index(start), {l.index(goal)}, depart, max_time});
}

}  // namespace layopt
