#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "grid.hpp"
#include "world.hpp"

namespace crowdmapf {

/// Equal-length action sequences for every agent, plus cost metadata.
///
/// Cost model: each agent pays 1 per timestep except while it waits on its own goal. This is
/// the sum-of-costs objective the planners minimise (a goal-waiting agent that later leaves
/// its goal pays only for the steps it actually spends moving or waiting off-goal).
struct JointPlan {
  std::vector<std::vector<Action>> actions;  // [agent][t]
  long sum_of_costs = 0;
  int makespan = 0;  // last timestep at which some agent arrives on its goal for good

  int horizon() const { return actions.empty() ? 0 : static_cast<int>(actions.front().size()); }
  int num_agents() const { return static_cast<int>(actions.size()); }

  friend bool operator==(const JointPlan&, const JointPlan&) = default;
};

struct SearchBudget {
  long max_expansions = 200'000;
  long timeout_ms = 0;  // wall-clock cap; 0 disables it so results stay reproducible

  friend bool operator==(const SearchBudget&, const SearchBudget&) = default;
};

enum class PlanStatus { Solved, Exhausted, Infeasible, Failed };

inline const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::Solved: return "solved";
    case PlanStatus::Exhausted: return "exhausted";
    case PlanStatus::Infeasible: return "infeasible";
    case PlanStatus::Failed: return "failed";
  }
  return "?";
}

struct PlanResult {
  PlanStatus status = PlanStatus::Failed;
  std::optional<JointPlan> plan;
  long expansions = 0;

  bool ok() const { return status == PlanStatus::Solved; }
};

/// Per-step cost of one agent under the planners' objective.
constexpr int agent_step_cost(Cell from, Cell to, Cell goal) {
  return (from == goal && to == goal) ? 0 : 1;
}

/// Builds a JointPlan (actions, sum-of-costs, makespan) from per-timestep joint positions.
inline JointPlan plan_from_positions(const WorldState& world,
                                     const std::vector<std::vector<Cell>>& configs) {
  const int n = world.num_agents();
  JointPlan plan;
  plan.actions.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < n; ++i) {
    auto ui = static_cast<std::size_t>(i);
    Cell goal = world.agents[ui].goal;
    int last_arrival = configs.front()[ui] == goal ? 0 : -1;
    for (std::size_t t = 0; t + 1 < configs.size(); ++t) {
      Cell from = configs[t][ui], to = configs[t + 1][ui];
      plan.actions[ui].push_back(action_between(from, to));
      plan.sum_of_costs += agent_step_cost(from, to, goal);
      if (to == goal && from != goal) last_arrival = static_cast<int>(t + 1);
      if (to != goal) last_arrival = -1;
    }
    plan.makespan = std::max(plan.makespan, std::max(last_arrival, 0));
  }
  return plan;
}

/// Replays a plan through `step`. Returns true when no collision occurs and every agent ends
/// on its goal.
inline bool verify_plan(const WorldState& world, const JointPlan& plan) {
  if (plan.num_agents() != world.num_agents()) return false;
  WorldState s = world;
  std::vector<Action> joint(static_cast<std::size_t>(world.num_agents()));
  for (int t = 0; t < plan.horizon(); ++t) {
    for (int i = 0; i < world.num_agents(); ++i)
      joint[static_cast<std::size_t>(i)] =
          plan.actions[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
    auto [next, events] = step(s, joint);
    if (events.collision_count() != 0) return false;
    s = std::move(next);
  }
  return s.all_on_goal();
}

/// The planned action of `agent_id` at time `t`; Stay once the plan has run out.
inline Action expert_action(const JointPlan& plan, int agent_id, int t) {
  if (agent_id < 0 || agent_id >= plan.num_agents())
    throw std::out_of_range("expert_action: unknown agent " + std::to_string(agent_id));
  if (t < 0) throw std::out_of_range("expert_action: negative time");
  const auto& seq = plan.actions[static_cast<std::size_t>(agent_id)];
  if (t >= static_cast<int>(seq.size())) return Action::Stay;
  return seq[static_cast<std::size_t>(t)];
}

// ---------------------------------------------------------------------------
// A* with operator decomposition over the joint state
// ---------------------------------------------------------------------------

inline constexpr int kMaxOdAgents = 4;

namespace detail {

class Deadline {
 public:
  explicit Deadline(long ms) : end_(std::chrono::steady_clock::now() + std::chrono::milliseconds(ms)) {}
  bool passed() const { return std::chrono::steady_clock::now() >= end_; }

 private:
  std::chrono::steady_clock::time_point end_;
};

/// Intermediate OD states are identified by the joint positions (new positions for agents
/// already assigned this timestep), the pre-move positions of the assigned agents, and the
/// index of the next agent to assign.
struct OdKey {
  std::uint64_t pos = 0;
  std::uint64_t prev = 0;  // low bits: previous cells of assigned agents; top byte: next agent

  friend bool operator==(const OdKey&, const OdKey&) = default;
};

struct OdKeyHash {
  std::size_t operator()(const OdKey& k) const noexcept {
    std::uint64_t h = k.pos * 0x9E3779B97F4A7C15ULL;
    h ^= k.prev + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

struct OdNode {
  std::array<std::uint16_t, kMaxOdAgents> pos{};
  std::array<std::uint16_t, kMaxOdAgents> prev{};
  int next_agent = 0;  // 0 means a full (standard) state
  int g = 0;
  int h = 0;
  int parent = -1;
};

struct OdOpenEntry {
  int f;
  int h;
  int id;
  bool operator>(const OdOpenEntry& o) const {
    if (f != o.f) return f > o.f;
    if (h != o.h) return h > o.h;
    return id > o.id;
  }
};

}  // namespace detail

/// Sum-of-costs optimal joint plan by A* with operator decomposition. Vertex and swap conflicts
/// are forbidden, following (moving into a cell vacated in the same step) is allowed, which is
/// exactly the set of joint moves `step` accepts without rejecting any agent.
inline PlanResult plan_od_astar(const WorldState& world, const SearchBudget& budget = {}) {
  const int n = world.num_agents();
  if (n < 1 || n > kMaxOdAgents)
    throw std::invalid_argument("plan_od_astar: supports 1.." + std::to_string(kMaxOdAgents) + " agents");
  const Grid& grid = world.grid;
  if (grid.cell_count() >= (1 << 14)) throw std::invalid_argument("plan_od_astar: grid too large");
  if (budget.max_expansions <= 0 || budget.timeout_ms < 0)
    throw std::invalid_argument("plan_od_astar: budget must be positive");

  std::vector<std::vector<int>> dist;
  std::vector<std::uint16_t> goal_idx;
  for (const auto& a : world.agents) {
    dist.push_back(bfs_distance_field(grid, a.goal));
    goal_idx.push_back(static_cast<std::uint16_t>(grid.index(a.goal)));
  }

  PlanResult result;
  for (int i = 0; i < n; ++i)
    if (dist[static_cast<std::size_t>(i)][grid.index(world.agents[static_cast<std::size_t>(i)].pos)] ==
        kUnreachable) {
      result.status = PlanStatus::Infeasible;
      return result;
    }

  // Neighbour table over cell indices: self first, then N, E, S, W.
  const int cells = grid.cell_count();
  std::vector<std::array<int, 5>> moves(static_cast<std::size_t>(cells));
  for (int idx = 0; idx < cells; ++idx) {
    Cell c = grid.cell_at(static_cast<std::size_t>(idx));
    auto& mv = moves[static_cast<std::size_t>(idx)];
    mv.fill(-1);
    if (!grid.is_free(c)) continue;
    mv[0] = idx;
    auto nbs = neighbors4(c);
    for (int k = 0; k < 4; ++k)
      if (grid.is_free(nbs[static_cast<std::size_t>(k)]))
        mv[static_cast<std::size_t>(k + 1)] = static_cast<int>(grid.index(nbs[static_cast<std::size_t>(k)]));
  }

  auto key_of = [n](const detail::OdNode& node) {
    detail::OdKey key;
    for (int i = 0; i < n; ++i) {
      key.pos |= static_cast<std::uint64_t>(node.pos[static_cast<std::size_t>(i)]) << (16 * i);
      if (i < node.next_agent)
        key.prev |= static_cast<std::uint64_t>(node.prev[static_cast<std::size_t>(i)]) << (14 * i);
    }
    key.prev |= static_cast<std::uint64_t>(node.next_agent) << 56;
    return key;
  };

  std::vector<detail::OdNode> nodes;
  std::unordered_map<detail::OdKey, int, detail::OdKeyHash> best;  // key -> node id with lowest g
  std::priority_queue<detail::OdOpenEntry, std::vector<detail::OdOpenEntry>, std::greater<>> open;

  detail::OdNode root;
  for (int i = 0; i < n; ++i) {
    auto ui = static_cast<std::size_t>(i);
    root.pos[ui] = static_cast<std::uint16_t>(grid.index(world.agents[ui].pos));
    root.h += dist[ui][root.pos[ui]];
  }
  nodes.push_back(root);
  best.emplace(key_of(root), 0);
  open.push({root.h, root.h, 0});

  detail::Deadline deadline(budget.timeout_ms);
  int goal_node = -1;
  while (!open.empty()) {
    auto entry = open.top();
    open.pop();
    const detail::OdNode cur = nodes[static_cast<std::size_t>(entry.id)];
    if (best.at(key_of(cur)) != entry.id) continue;  // superseded by a cheaper duplicate
    if (cur.next_agent == 0 && cur.h == 0) {
      goal_node = entry.id;
      break;
    }
    if (++result.expansions > budget.max_expansions ||
        (budget.timeout_ms > 0 && (result.expansions & 1023) == 0 && deadline.passed())) {
      result.status = PlanStatus::Exhausted;
      return result;
    }

    const int k = cur.next_agent;
    const auto uk = static_cast<std::size_t>(k);
    const int from = cur.pos[uk];
    for (int to : moves[static_cast<std::size_t>(from)]) {
      if (to < 0) continue;
      bool ok = true;
      for (int j = 0; j < k && ok; ++j) {
        auto uj = static_cast<std::size_t>(j);
        if (cur.pos[uj] == to) ok = false;                             // vertex
        if (cur.pos[uj] == from && cur.prev[uj] == to) ok = false;     // swap
      }
      if (!ok) continue;
      detail::OdNode child = cur;
      child.prev[uk] = static_cast<std::uint16_t>(from);
      child.pos[uk] = static_cast<std::uint16_t>(to);
      child.next_agent = (k + 1 == n) ? 0 : k + 1;
      child.g = cur.g + ((from == goal_idx[uk] && to == goal_idx[uk]) ? 0 : 1);
      child.h = cur.h - dist[uk][static_cast<std::size_t>(from)] + dist[uk][static_cast<std::size_t>(to)];
      child.parent = entry.id;
      if (child.next_agent == 0) child.prev.fill(0);
      auto key = key_of(child);
      auto it = best.find(key);
      if (it != best.end() && nodes[static_cast<std::size_t>(it->second)].g <= child.g) continue;
      int id = static_cast<int>(nodes.size());
      nodes.push_back(child);
      if (it != best.end())
        it->second = id;
      else
        best.emplace(key, id);
      open.push({child.g + child.h, child.h, id});
    }
  }

  if (goal_node < 0) {
    result.status = PlanStatus::Infeasible;
    return result;
  }

  std::vector<std::vector<Cell>> configs;
  for (int id = goal_node; id >= 0; id = nodes[static_cast<std::size_t>(id)].parent) {
    const auto& node = nodes[static_cast<std::size_t>(id)];
    if (node.next_agent != 0) continue;
    std::vector<Cell> config;
    for (int i = 0; i < n; ++i) config.push_back(grid.cell_at(node.pos[static_cast<std::size_t>(i)]));
    configs.push_back(std::move(config));
  }
  std::reverse(configs.begin(), configs.end());
  JointPlan plan = plan_from_positions(world, configs);
  if (plan.sum_of_costs != nodes[static_cast<std::size_t>(goal_node)].g)
    throw std::logic_error("plan_od_astar: reconstructed cost disagrees with search cost");
  result.status = PlanStatus::Solved;
  result.plan = std::move(plan);
  return result;
}

// ---------------------------------------------------------------------------
// Prioritized planning with a space-time reservation table
// ---------------------------------------------------------------------------

/// Cells and transitions claimed by already-planned agents.
class ReservationTable {
 public:
  explicit ReservationTable(int cell_count)
      : parked_from_(static_cast<std::size_t>(cell_count), kNever),
        last_use_(static_cast<std::size_t>(cell_count), -1) {}

  /// Reserves a path indexed by time; the final cell stays reserved forever.
  void reserve_path(const std::vector<int>& path) {
    for (std::size_t t = 0; t < path.size(); ++t) {
      vertex_.emplace(key(path[t], static_cast<int>(t)), 1);
      auto cell = static_cast<std::size_t>(path[t]);
      last_use_[cell] = std::max(last_use_[cell], static_cast<int>(t));
      if (t + 1 < path.size() && path[t] != path[t + 1])
        edge_.emplace(edge_key(path[t], path[t + 1], static_cast<int>(t)), 1);
    }
    auto goal = static_cast<std::size_t>(path.back());
    parked_from_[goal] = std::min(parked_from_[goal], static_cast<int>(path.size()) - 1);
  }

  bool vertex_free(int cell, int t) const {
    if (t >= parked_from_[static_cast<std::size_t>(cell)]) return false;
    return !vertex_.contains(key(cell, t));
  }
  /// Moving from `a` at t to `b` at t+1 must not swap with a reserved b -> a move.
  bool edge_free(int a, int b, int t) const { return a == b || !edge_.contains(edge_key(b, a, t)); }
  /// Can an agent park on `cell` from time t onward? (The vertex at t itself is checked on entry.)
  bool can_park(int cell, int t) const {
    auto c = static_cast<std::size_t>(cell);
    return parked_from_[c] == kNever && last_use_[c] <= t;
  }

 private:
  static constexpr int kNever = std::numeric_limits<int>::max();
  static std::uint64_t key(int cell, int t) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 32) | static_cast<std::uint32_t>(cell);
  }
  static std::uint64_t edge_key(int a, int b, int t) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 40) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 20) | static_cast<std::uint32_t>(b);
  }

  std::unordered_map<std::uint64_t, char> vertex_;
  std::unordered_map<std::uint64_t, char> edge_;
  std::vector<int> parked_from_;
  std::vector<int> last_use_;
};

/// Space-time A* for one agent against a reservation table. Returns the cell index per
/// timestep, ending when the agent can park on its goal; nullopt when no path within horizon.
inline std::optional<std::vector<int>> space_time_astar(const Grid& grid, Cell start, Cell goal,
                                                        const ReservationTable& table, int horizon) {
  const auto dist = bfs_distance_field(grid, goal);
  const int s = static_cast<int>(grid.index(start));
  const int g = static_cast<int>(grid.index(goal));
  if (dist[static_cast<std::size_t>(s)] == kUnreachable || !table.vertex_free(s, 0)) return std::nullopt;
  const int cells = grid.cell_count();
  const auto layer = static_cast<std::size_t>(cells);
  std::vector<int> parent(layer * static_cast<std::size_t>(horizon + 1), -2);

  struct Entry {
    int f, t, cell;
    bool operator>(const Entry& o) const {
      if (f != o.f) return f > o.f;
      if (t != o.t) return t < o.t;
      return cell > o.cell;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  parent[static_cast<std::size_t>(s)] = -1;
  open.push({dist[static_cast<std::size_t>(s)], 0, s});
  while (!open.empty()) {
    auto [f, t, cell] = open.top();
    open.pop();
    if (cell == g && table.can_park(g, t)) {
      std::vector<int> path(static_cast<std::size_t>(t + 1));
      int c = cell;
      for (int tt = t; tt >= 0; --tt) {
        path[static_cast<std::size_t>(tt)] = c;
        c = parent[static_cast<std::size_t>(tt) * layer + static_cast<std::size_t>(c)];
      }
      return path;
    }
    if (t == horizon) continue;
    Cell here = grid.cell_at(static_cast<std::size_t>(cell));
    std::array<Cell, 5> cands{};
    auto nbs = neighbors4(here);
    std::copy(nbs.begin(), nbs.end(), cands.begin());
    cands[4] = here;
    for (Cell nb : cands) {
      if (!grid.is_free(nb)) continue;
      int nc = static_cast<int>(grid.index(nb));
      auto slot = static_cast<std::size_t>(t + 1) * layer + static_cast<std::size_t>(nc);
      if (parent[slot] != -2) continue;
      if (!table.vertex_free(nc, t + 1) || !table.edge_free(cell, nc, t)) continue;
      parent[slot] = cell;
      open.push({t + 1 + dist[static_cast<std::size_t>(nc)], t + 1, nc});
    }
  }
  return std::nullopt;
}

/// Agents planned one at a time in a seeded random order; earlier paths are hard constraints.
/// Horizon is 4 * m timesteps.
inline PlanResult plan_prioritized(const WorldState& world, std::uint64_t order_seed) {
  const int n = world.num_agents();
  const Grid& grid = world.grid;
  const int horizon = 4 * grid.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(order_seed);
  std::shuffle(order.begin(), order.end(), rng);

  PlanResult result;
  ReservationTable table(grid.cell_count());
  std::vector<std::vector<int>> paths(static_cast<std::size_t>(n));
  for (int id : order) {
    const auto& a = world.agents[static_cast<std::size_t>(id)];
    auto path = space_time_astar(grid, a.pos, a.goal, table, horizon);
    if (!path) {
      result.status = PlanStatus::Failed;
      return result;
    }
    table.reserve_path(*path);
    paths[static_cast<std::size_t>(id)] = std::move(*path);
  }
  std::size_t horizon_used = 1;
  for (const auto& p : paths) horizon_used = std::max(horizon_used, p.size());
  std::vector<std::vector<Cell>> configs(horizon_used, std::vector<Cell>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    const auto& p = paths[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < horizon_used; ++t)
      configs[t][static_cast<std::size_t>(i)] = grid.cell_at(static_cast<std::size_t>(p[std::min(t, p.size() - 1)]));
  }
  result.status = PlanStatus::Solved;
  result.plan = plan_from_positions(world, configs);
  return result;
}

struct ExpertOptions {
  int od_agent_cap = kMaxOdAgents;  // OD A* runs when A <= cap, prioritized otherwise
  SearchBudget budget;
  std::uint64_t order_seed = 0;

  friend bool operator==(const ExpertOptions&, const ExpertOptions&) = default;
};

/// OD A* for small teams, prioritized planning as the fallback when the search is exhausted or
/// the team exceeds the cap.
inline PlanResult plan_expert(const WorldState& world, const ExpertOptions& opts = {}) {
  if (opts.od_agent_cap < 0 || opts.od_agent_cap > kMaxOdAgents)
    throw std::invalid_argument("plan_expert: od_agent_cap must lie in [0, 4]");
  if (world.num_agents() <= opts.od_agent_cap) {
    auto res = plan_od_astar(world, opts.budget);
    if (res.status != PlanStatus::Exhausted) return res;
  }
  return plan_prioritized(world, opts.order_seed);
}

}  // namespace crowdmapf
