#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "grid.hpp"

namespace crowdmapf {

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class Action : std::uint8_t { North = 0, East = 1, South = 2, West = 3, Stay = 4 };

inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::North, Action::East, Action::South, Action::West, Action::Stay};

constexpr int action_index(Action a) { return static_cast<int>(a); }

inline Action action_from_index(int i) {
  if (i < 0 || i >= kNumActions) throw std::out_of_range("action index " + std::to_string(i));
  return static_cast<Action>(i);
}

inline constexpr char action_char(Action a) {
  constexpr char kChars[] = {'N', 'E', 'S', 'W', '.'};
  return kChars[action_index(a)];
}

inline Action action_from_char(char c) {
  switch (c) {
    case 'N': return Action::North;
    case 'E': return Action::East;
    case 'S': return Action::South;
    case 'W': return Action::West;
    case '.': return Action::Stay;
    default: throw std::invalid_argument(std::string("unknown action code '") + c + "'");
  }
}

constexpr Cell apply_action(Cell c, Action a) {
  switch (a) {
    case Action::North: return {c.row - 1, c.col};
    case Action::East: return {c.row, c.col + 1};
    case Action::South: return {c.row + 1, c.col};
    case Action::West: return {c.row, c.col - 1};
    case Action::Stay: return c;
  }
  return c;
}

/// The action moving `from` onto the 4-adjacent (or identical) cell `to`.
inline Action action_between(Cell from, Cell to) {
  for (Action a : kAllActions)
    if (apply_action(from, a) == to) return a;
  throw std::invalid_argument("action_between: cells " + to_string(from) + " and " +
                              to_string(to) + " are not adjacent");
}

/// Small bitset over the five actions.
class ActionSet {
 public:
  constexpr ActionSet() = default;
  static constexpr ActionSet all() { return ActionSet(0x1F); }

  constexpr bool contains(Action a) const { return (bits_ >> action_index(a)) & 1U; }
  constexpr void insert(Action a) { bits_ = static_cast<std::uint8_t>(bits_ | (1U << action_index(a))); }
  constexpr void erase(Action a) { bits_ = static_cast<std::uint8_t>(bits_ & ~(1U << action_index(a))); }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  static constexpr ActionSet from_bits(std::uint8_t b) { return ActionSet(b & 0x1F); }

  friend constexpr bool operator==(ActionSet, ActionSet) = default;

 private:
  constexpr explicit ActionSet(std::uint8_t b) : bits_(b) {}
  std::uint8_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// World state
// ---------------------------------------------------------------------------

struct WorldSpec {
  int size = 10;                 // cells per side
  double obstacle_density = 0.0;
  int num_agents = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

inline constexpr double kMaxObstacleDensity = 0.6;

/// floor(d * m^2), guarded against representation error just below an integer.
inline int obstacle_target(const WorldSpec& spec) {
  double raw = spec.obstacle_density * static_cast<double>(spec.size) * spec.size;
  return static_cast<int>(std::floor(raw + 1e-9));
}

inline void validate(const WorldSpec& spec) {
  if (spec.size < 4) throw std::invalid_argument("WorldSpec: size must be >= 4");
  if (!(spec.obstacle_density >= 0.0 && spec.obstacle_density <= kMaxObstacleDensity))
    throw std::invalid_argument("WorldSpec: obstacle_density must lie in [0, 0.6]");
  if (spec.num_agents < 1) throw std::invalid_argument("WorldSpec: num_agents must be >= 1");
  int free_cells = spec.size * spec.size - obstacle_target(spec);
  if (spec.num_agents > free_cells)
    throw std::invalid_argument("WorldSpec: " + std::to_string(spec.num_agents) +
                                " agents exceed " + std::to_string(free_cells) + " free cells");
}

struct AgentState {
  int id = 0;
  Cell pos;
  Cell goal;
  bool on_goal = false;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct WorldState {
  Grid grid;
  std::vector<AgentState> agents;
  int t = 0;

  int num_agents() const { return static_cast<int>(agents.size()); }
  const AgentState& agent(int id) const {
    if (id < 0 || id >= num_agents())
      throw std::out_of_range("unknown agent id " + std::to_string(id));
    return agents[static_cast<std::size_t>(id)];
  }
  bool all_on_goal() const {
    return std::all_of(agents.begin(), agents.end(), [](const AgentState& a) { return a.on_goal; });
  }
  /// Index of the agent at `c`, or -1.
  int agent_at(Cell c) const {
    for (const auto& a : agents)
      if (a.pos == c) return a.id;
    return -1;
  }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Throws std::logic_error naming the first violated invariant.
inline void check_invariants(const WorldState& s) {
  const Grid& g = s.grid;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(g.cell_count()), 0);
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    if (a.id != static_cast<int>(i)) throw std::logic_error("agent ids not dense");
    if (!g.is_free(a.pos)) throw std::logic_error("agent " + std::to_string(a.id) + " off free cells");
    if (!g.is_free(a.goal)) throw std::logic_error("goal of agent " + std::to_string(a.id) + " not free");
    if (a.on_goal != (a.pos == a.goal)) throw std::logic_error("on_goal flag stale");
    auto idx = g.index(a.pos);
    if (seen[idx]) throw std::logic_error("two agents share " + to_string(a.pos));
    seen[idx] = 1;
  }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr int kPairResampleAttempts = 100;

/// Row-first then column-first L-shaped corridor from `a` to `b`, inclusive.
inline std::vector<Cell> straight_corridor(Cell a, Cell b) {
  std::vector<Cell> path{a};
  Cell cur = a;
  while (cur.row != b.row) {
    cur.row += (b.row > cur.row) ? 1 : -1;
    path.push_back(cur);
  }
  while (cur.col != b.col) {
    cur.col += (b.col > cur.col) ? 1 : -1;
    path.push_back(cur);
  }
  return path;
}

template <class Rng>
std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace detail

/// Builds a reproducible world: obstacles first, then start/goal pairs whose goal is
/// reachable from the start on the static map.
inline WorldState generate_world(const WorldSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  const int m = spec.size;
  WorldState state;
  state.grid = Grid(m);

  std::vector<std::size_t> order(static_cast<std::size_t>(m) * m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const int n_obstacles = obstacle_target(spec);
  for (int i = 0; i < n_obstacles; ++i)
    state.grid.set_obstacle(state.grid.cell_at(order[static_cast<std::size_t>(i)]), true);

  std::vector<Cell> free_cells;
  for (std::size_t idx = 0; idx < order.size(); ++idx) {
    Cell c = state.grid.cell_at(idx);
    if (!state.grid.is_obstacle(c)) free_cells.push_back(c);
  }

  // Starts are mutually distinct, goals are mutually distinct, and no agent starts on its goal
  // unless the agents fill every free cell and its own start is the only goal left.
  std::vector<std::uint8_t> start_taken(order.size(), 0), goal_taken(order.size(), 0);
  auto pick = [&](const std::vector<std::uint8_t>& taken, Cell avoid, bool use_avoid) -> Cell {
    std::vector<Cell> pool;
    for (Cell c : free_cells)
      if (!taken[state.grid.index(c)] && !(use_avoid && c == avoid)) pool.push_back(c);
    if (pool.empty()) {
      for (Cell c : free_cells)
        if (!taken[state.grid.index(c)]) pool.push_back(c);
    }
    return pool[detail::uniform_index(rng, pool.size())];
  };

  for (int id = 0; id < spec.num_agents; ++id) {
    Cell start{}, goal{};
    bool ok = false;
    for (int attempt = 0; attempt < detail::kPairResampleAttempts && !ok; ++attempt) {
      start = pick(start_taken, {}, false);
      goal = pick(goal_taken, start, true);
      ok = bfs_distance(state.grid, start, goal).has_value();
    }
    if (!ok) {
      for (Cell c : detail::straight_corridor(start, goal)) state.grid.set_obstacle(c, false);
      free_cells.clear();
      for (std::size_t idx = 0; idx < order.size(); ++idx) {
        Cell c = state.grid.cell_at(idx);
        if (!state.grid.is_obstacle(c)) free_cells.push_back(c);
      }
    }
    start_taken[state.grid.index(start)] = 1;
    goal_taken[state.grid.index(goal)] = 1;
    state.agents.push_back(AgentState{id, start, goal, start == goal});
  }
  state.t = 0;
  return state;
}

/// Maximum episode length: floor(alpha * m * (1 + d) + beta * A), with m the grid side.
inline int max_episode_length(const WorldSpec& spec, double alpha = 4.0, double beta = 5.0) {
  double raw = alpha * spec.size * (1.0 + spec.obstacle_density) + beta * spec.num_agents;
  return static_cast<int>(std::floor(raw + 1e-9));
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

/// Statically feasible actions: Stay plus every move onto an in-bounds free cell.
inline ActionSet valid_actions(const WorldState& state, int agent_id) {
  const AgentState& a = state.agent(agent_id);
  ActionSet set;
  set.insert(Action::Stay);
  for (Action act : {Action::North, Action::East, Action::South, Action::West})
    if (state.grid.is_free(apply_action(a.pos, act))) set.insert(act);
  return set;
}

struct AgentEvents {
  bool collided = false;
  bool moved = false;
  bool arrived = false;
  bool crowd_in = false;
  bool crowd_out = false;

  friend bool operator==(const AgentEvents&, const AgentEvents&) = default;
};

struct StepEvents {
  std::vector<AgentEvents> agents;
  int resolution_rounds = 0;  // fixed-point iterations used by conflict resolution

  int collision_count() const {
    int n = 0;
    for (const auto& e : agents) n += e.collided ? 1 : 0;
    return n;
  }
};

/// Simultaneous transition. Rejected moves leave the agent in place and flag a collision:
/// out of bounds, obstacle, a cell held by a stationary agent, a cell contested by several
/// movers (all contenders rejected) and swaps (both rejected). Rejections propagate until
/// a fixed point is reached.
inline std::pair<WorldState, StepEvents> step(const WorldState& state,
                                              std::span<const Action> joint_action) {
  const int n = state.num_agents();
  if (static_cast<int>(joint_action.size()) != n)
    throw std::invalid_argument("step: expected " + std::to_string(n) + " actions, got " +
                                std::to_string(joint_action.size()));
  const Grid& grid = state.grid;
  StepEvents events;
  events.agents.resize(static_cast<std::size_t>(n));

  std::vector<Cell> target(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> moving(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    auto ui = static_cast<std::size_t>(i);
    Cell from = state.agents[ui].pos;
    Action a = joint_action[ui];
    target[ui] = from;
    if (a == Action::Stay) continue;
    Cell to = apply_action(from, a);
    if (!grid.is_free(to)) {
      events.agents[ui].collided = true;
      continue;
    }
    target[ui] = to;
    moving[ui] = 1;
  }

  // Occupancy of current cells, used to find the agent a mover is walking into.
  std::vector<int> occupant(static_cast<std::size_t>(grid.cell_count()), -1);
  for (int i = 0; i < n; ++i) occupant[grid.index(state.agents[static_cast<std::size_t>(i)].pos)] = i;

  auto reject = [&](int i) {
    auto ui = static_cast<std::size_t>(i);
    moving[ui] = 0;
    target[ui] = state.agents[ui].pos;
    events.agents[ui].collided = true;
  };

  std::vector<int> claims(static_cast<std::size_t>(grid.cell_count()), 0);
  bool changed = true;
  while (changed) {
    changed = false;
    ++events.resolution_rounds;
    std::fill(claims.begin(), claims.end(), 0);
    for (int i = 0; i < n; ++i) ++claims[grid.index(target[static_cast<std::size_t>(i)])];

    std::vector<int> to_reject;
    for (int i = 0; i < n; ++i) {
      auto ui = static_cast<std::size_t>(i);
      if (!moving[ui]) continue;
      auto tidx = grid.index(target[ui]);
      if (claims[tidx] > 1) {  // vertex conflict, including a stationary holder
        to_reject.push_back(i);
        continue;
      }
      int j = occupant[tidx];
      if (j >= 0 && j != i) {
        auto uj = static_cast<std::size_t>(j);
        if (!moving[uj] || target[uj] == state.agents[ui].pos) to_reject.push_back(i);
      }
    }
    for (int i : to_reject) reject(i);
    changed = !to_reject.empty();
  }

  WorldState next = state;
  next.t = state.t + 1;
  for (int i = 0; i < n; ++i) {
    auto ui = static_cast<std::size_t>(i);
    auto& agent = next.agents[ui];
    bool was_on_goal = agent.on_goal;
    agent.pos = target[ui];
    agent.on_goal = agent.pos == agent.goal;
    auto& ev = events.agents[ui];
    ev.moved = moving[ui] != 0;
    ev.arrived = agent.on_goal && !was_on_goal;
  }
  return {std::move(next), std::move(events)};
}

// ---------------------------------------------------------------------------
// Observation
// ---------------------------------------------------------------------------

inline constexpr int kObsSide = 10;
inline constexpr int kObsChannels = 4;
inline constexpr int kObsAnchor = 4;  // agent sits at window index (4,4)
inline constexpr int kObsCells = kObsSide * kObsSide;

enum ObsChannel : int { kChanExtent = 0, kChanObstacles = 1, kChanAgents = 2, kChanGoals = 3 };

struct Observation {
  /// Channel-major binary maps: value(ch, r, c) = maps[ch * 100 + r * 10 + c].
  std::array<std::uint8_t, kObsChannels * kObsCells> maps{};
  std::array<double, 2> goal_vec{};  // (row, col) unit vector toward the goal

  std::uint8_t at(int ch, int r, int c) const {
    return maps[static_cast<std::size_t>(ch * kObsCells + r * kObsSide + c)];
  }
  std::uint8_t& at(int ch, int r, int c) {
    return maps[static_cast<std::size_t>(ch * kObsCells + r * kObsSide + c)];
  }

  friend bool operator==(const Observation&, const Observation&) = default;
};

inline Observation observe(const WorldState& state, int agent_id) {
  const AgentState& self = state.agent(agent_id);
  const Grid& grid = state.grid;
  Observation obs;
  const int r0 = self.pos.row - kObsAnchor;
  const int c0 = self.pos.col - kObsAnchor;

  for (int r = 0; r < kObsSide; ++r) {
    for (int c = 0; c < kObsSide; ++c) {
      Cell w{r0 + r, c0 + c};
      bool inside = grid.in_bounds(w);
      obs.at(kChanExtent, r, c) = inside ? 1 : 0;
      obs.at(kChanObstacles, r, c) = (!inside || grid.is_obstacle(w)) ? 1 : 0;
    }
  }
  for (const auto& other : state.agents) {
    if (other.id == agent_id) continue;
    int wr = other.pos.row - r0, wc = other.pos.col - c0;
    if (wr < 0 || wr >= kObsSide || wc < 0 || wc >= kObsSide) continue;
    obs.at(kChanAgents, wr, wc) = 1;
    int gr = std::clamp(other.goal.row - r0, 0, kObsSide - 1);
    int gc = std::clamp(other.goal.col - c0, 0, kObsSide - 1);
    obs.at(kChanGoals, gr, gc) = 1;
  }
  double dr = self.goal.row - self.pos.row;
  double dc = self.goal.col - self.pos.col;
  double norm = std::hypot(dr, dc);
  if (norm > 0.0) obs.goal_vec = {dr / norm, dc / norm};
  return obs;
}

// ---------------------------------------------------------------------------
// Termination
// ---------------------------------------------------------------------------

enum class EpisodeStatus { Running, Success, Timeout };

inline EpisodeStatus episode_status(const WorldState& state, int max_len) {
  if (max_len <= 0) throw std::invalid_argument("episode_status: L must be positive");
  if (state.all_on_goal()) return EpisodeStatus::Success;
  if (state.t >= max_len) return EpisodeStatus::Timeout;
  return EpisodeStatus::Running;
}

}  // namespace crowdmapf
