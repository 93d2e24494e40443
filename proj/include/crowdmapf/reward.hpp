#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"
#include "world.hpp"

namespace crowdmapf {

inline constexpr int kBlockingDetour = 10;

struct RewardConstants {
  double r_move = -0.3;
  double r_collision = -2.0;
  double r_idle_off_goal = -0.5;
  double r_idle_on_goal = 0.0;
  double r_team = 20.0;
  double r_crowd_out = 0.3;
  double r_crowd_in = -0.3;
  double r_blocking = -2.0;
  int blocking_detour = kBlockingDetour;  // path lengthening (steps) that counts as blocking

  friend bool operator==(const RewardConstants&, const RewardConstants&) = default;
};

inline constexpr double kZetaFloor = 0.7;
inline constexpr double kZetaCap = 0.95;

struct CrowdParams {
  int window = 5;
  double zeta = kZetaFloor;

  void validate() const {
    if (window < 3 || window % 2 == 0)
      throw std::invalid_argument("CrowdParams: window must be odd and >= 3");
    if (!(zeta > 0.0 && zeta <= 1.0)) throw std::invalid_argument("CrowdParams: zeta must lie in (0, 1]");
  }
};

/// Per-episode counts of each reward channel. The episode return is the dot product of
/// these counts with RewardConstants.
struct RewardBreakdown {
  long w_m = 0;             // moves
  long w_c = 0;             // collisions
  long w_s_penalized = 0;   // idle steps off goal
  long w_s_on_goal = 0;     // idle steps on goal, worth r_idle_on_goal (0 by default)
  long w_e = 0;             // team-bonus grants, 0 or A per episode
  long w_crowd_in = 0;
  long w_crowd_out = 0;
  long w_blocking = 0;

  RewardBreakdown& operator+=(const RewardBreakdown& o) {
    w_m += o.w_m;
    w_c += o.w_c;
    w_s_penalized += o.w_s_penalized;
    w_s_on_goal += o.w_s_on_goal;
    w_e += o.w_e;
    w_crowd_in += o.w_crowd_in;
    w_crowd_out += o.w_crowd_out;
    w_blocking += o.w_blocking;
    return *this;
  }

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

/// Agents (self included) inside the window x window box centred on the agent, divided by
/// the in-bounds free cells of that box.
inline double crowd_density(const WorldState& state, int agent_id, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("crowd_density: window must be odd");
  const AgentState& self = state.agent(agent_id);
  const Grid& grid = state.grid;
  const int half = window / 2;
  int free_cells = 0;
  for (int r = self.pos.row - half; r <= self.pos.row + half; ++r)
    for (int c = self.pos.col - half; c <= self.pos.col + half; ++c)
      if (grid.is_free({r, c})) ++free_cells;
  int agents = 0;
  for (const auto& a : state.agents)
    if (std::abs(a.pos.row - self.pos.row) <= half && std::abs(a.pos.col - self.pos.col) <= half)
      ++agents;
  return static_cast<double>(agents) / static_cast<double>(free_cells);
}

/// Crowding threshold: min(0.95, 0.7 + A / (m^2 (1 - d) - A)).
inline double zeta(int num_agents, int size, double density, double floor = kZetaFloor,
                   double cap = kZetaCap) {
  double denom = static_cast<double>(size) * size * (1.0 - density) - num_agents;
  if (!(denom > 0.0))
    throw std::domain_error("zeta: over-packed world (m^2(1-d) - A = " + std::to_string(denom) + ")");
  return std::min(cap, floor + static_cast<double>(num_agents) / denom);
}

inline double crowd_reward(double delta_before, double delta_after, double zeta_threshold,
                           const RewardConstants& k = {}) {
  if (delta_before < zeta_threshold && zeta_threshold <= delta_after) return k.r_crowd_in;
  if (delta_after < zeta_threshold && zeta_threshold <= delta_before) return k.r_crowd_out;
  return 0.0;
}

/// True when removing `agent_id` from the map shortens some other agent's shortest path to its
/// goal by at least `detour` steps (or the agent cuts it off entirely).
inline bool is_blocking(const WorldState& state, int agent_id, int detour = kBlockingDetour) {
  const AgentState& self = state.agent(agent_id);
  const std::array<Cell, 1> blocked{self.pos};
  for (const auto& other : state.agents) {
    if (other.id == agent_id) continue;
    auto free_route = bfs_distance(state.grid, other.pos, other.goal);
    if (!free_route) continue;
    auto with_agent = bfs_distance(state.grid, other.pos, other.goal, blocked);
    if (!with_agent || *with_agent - *free_route >= detour) return true;
  }
  return false;
}

struct StepReward {
  std::vector<double> per_agent;
  RewardBreakdown delta;
  bool team_bonus = false;
};

/// Rewards for one transition. Fills the crowd_in / crowd_out flags of `events`.
inline StepReward step_reward(const WorldState& before, std::span<const Action> actions,
                              StepEvents& events, const WorldState& after,
                              const RewardConstants& k, const CrowdParams& crowd) {
  const int n = before.num_agents();
  if (static_cast<int>(actions.size()) != n || static_cast<int>(events.agents.size()) != n ||
      after.num_agents() != n)
    throw std::invalid_argument("step_reward: inconsistent agent counts");
  StepReward out;
  out.per_agent.assign(static_cast<std::size_t>(n), 0.0);
  out.team_bonus = after.all_on_goal() && !before.all_on_goal();

  for (int i = 0; i < n; ++i) {
    auto ui = static_cast<std::size_t>(i);
    AgentEvents& ev = events.agents[ui];
    double r = 0.0;
    if (ev.collided) {
      r += k.r_collision;
      ++out.delta.w_c;
    } else if (ev.moved) {
      r += k.r_move;
      ++out.delta.w_m;
    } else if (after.agents[ui].on_goal) {
      r += k.r_idle_on_goal;
      ++out.delta.w_s_on_goal;
    } else {
      r += k.r_idle_off_goal;
      ++out.delta.w_s_penalized;
    }

    double d0 = crowd_density(before, i, crowd.window);
    double d1 = crowd_density(after, i, crowd.window);
    ev.crowd_in = d0 < crowd.zeta && crowd.zeta <= d1;
    ev.crowd_out = d1 < crowd.zeta && crowd.zeta <= d0;
    r += crowd_reward(d0, d1, crowd.zeta, k);
    if (ev.crowd_in) ++out.delta.w_crowd_in;
    if (ev.crowd_out) ++out.delta.w_crowd_out;

    if (!ev.moved && is_blocking(after, i, k.blocking_detour)) {
      r += k.r_blocking;
      ++out.delta.w_blocking;
    }
    if (out.team_bonus) {
      r += k.r_team;
      ++out.delta.w_e;
    }
    out.per_agent[ui] = r;
  }
  return out;
}

/// Dot product of reward constants with the episode's counts.
inline double episode_total(const RewardBreakdown& b, const RewardConstants& k) {
  return k.r_move * static_cast<double>(b.w_m) + k.r_collision * static_cast<double>(b.w_c) +
         k.r_idle_off_goal * static_cast<double>(b.w_s_penalized) +
         k.r_idle_on_goal * static_cast<double>(b.w_s_on_goal) +
         k.r_team * static_cast<double>(b.w_e) + k.r_crowd_in * static_cast<double>(b.w_crowd_in) +
         k.r_crowd_out * static_cast<double>(b.w_crowd_out) +
         k.r_blocking * static_cast<double>(b.w_blocking);
}

}  // namespace crowdmapf
