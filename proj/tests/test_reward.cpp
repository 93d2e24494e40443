#include <gtest/gtest.h>

#include <deque>
#include <random>

#include <crowdmapf/reward.hpp>

#include "fixtures.hpp"

using namespace crowdmapf;
using crowdmapf::testing::make_world;
using crowdmapf::testing::open_world;

namespace {

// 5 agents (self at the centre) and 13 free cells in the 5x5 window.
WorldState sparse_window() {
  return make_world({"#.#.#", ".....", "##.##", "#...#", "#.#.#"},
                    {{{2, 2}, {2, 2}}, {{0, 1}, {0, 1}}, {{1, 1}, {1, 1}}, {{3, 3}, {3, 3}}, {{4, 1}, {4, 1}}});
}

// Corner agent: the window clips to 3x3 with one obstacle, leaving 8 free cells holding 7 agents.
WorldState dense_corner() {
  return make_world({"...##", "..#..", "...##", ".....", "....."},
                    {{{0, 0}, {4, 4}}, {{0, 1}, {0, 1}}, {{0, 2}, {0, 2}}, {{1, 0}, {1, 0}},
                     {{1, 1}, {1, 1}}, {{2, 0}, {2, 0}}, {{2, 1}, {2, 1}}});
}

/// Plain BFS written independently of grid.hpp.
int bfs(const WorldState& w, Cell from, Cell to, const Cell* blocked) {
  const int m = w.grid.size();
  std::vector<int> dist(static_cast<std::size_t>(m * m), -1);
  auto free = [&](Cell c) {
    return c.row >= 0 && c.col >= 0 && c.row < m && c.col < m && !w.grid.is_obstacle(c) && !(blocked && c == *blocked);
  };
  if (!free(from) || !free(to)) return -1;
  std::deque<Cell> q{from};
  dist[static_cast<std::size_t>(from.row * m + from.col)] = 0;
  while (!q.empty()) {
    Cell c = q.front();
    q.pop_front();
    if (c == to) return dist[static_cast<std::size_t>(c.row * m + c.col)];
    for (Cell n : {Cell{c.row - 1, c.col}, Cell{c.row + 1, c.col}, Cell{c.row, c.col - 1}, Cell{c.row, c.col + 1}})
      if (free(n) && dist[static_cast<std::size_t>(n.row * m + n.col)] < 0) {
        dist[static_cast<std::size_t>(n.row * m + n.col)] = dist[static_cast<std::size_t>(c.row * m + c.col)] + 1;
        q.push_back(n);
      }
  }
  return -1;
}

bool blocking_oracle(const WorldState& w, int id, int detour) {
  for (const auto& o : w.agents) {
    if (o.id == id) continue;
    int open = bfs(w, o.pos, o.goal, nullptr);
    if (open < 0) continue;
    int closed = bfs(w, o.pos, o.goal, &w.agents[static_cast<std::size_t>(id)].pos);
    if (closed < 0 || closed - open >= detour) return true;
  }
  return false;
}

}  // namespace

// crowd_density ------------------------------------------------------------------

TEST(CrowdDensity, FigureFractions) {
  EXPECT_DOUBLE_EQ(crowd_density(sparse_window(), 0, 5), 5.0 / 13.0);
  EXPECT_NEAR(crowd_density(sparse_window(), 0, 5), 0.385, 5e-4);
  EXPECT_DOUBLE_EQ(crowd_density(dense_corner(), 0, 5), 7.0 / 8.0);
}

TEST(CrowdDensity, LoneAgentInOpenWindow) {
  EXPECT_DOUBLE_EQ(crowd_density(open_world(9, {{{4, 4}, {0, 0}}}), 0, 5), 1.0 / 25.0);
}

TEST(CrowdDensity, BoundedAndMonotoneInAgents) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 100; ++k) {
    WorldState w = generate_world({10, 0.2, 6, rng()});
    for (int i = 0; i < w.num_agents(); ++i) {
      double d = crowd_density(w, i, 5);
      EXPECT_GT(d, 0.0);
      EXPECT_LE(d, 1.0);
    }
    // Adding an agent on a free empty cell inside agent 0's window never lowers its density.
    const Cell c0 = w.agents[0].pos;
    for (int dr = -2; dr <= 2; ++dr)
      for (int dc = -2; dc <= 2; ++dc) {
        Cell c{c0.row + dr, c0.col + dc};
        if (!w.grid.is_free(c) || w.agent_at(c) >= 0) continue;
        WorldState more = w;
        more.agents.push_back(AgentState{more.num_agents(), c, c, true});
        EXPECT_GE(crowd_density(more, 0, 5), crowd_density(w, 0, 5));
      }
  }
}

// zeta ------------------------------------------------------------------------------

TEST(Zeta, SpotValues) {
  EXPECT_NEAR(zeta(8, 20, 0.0), 0.7 + 8.0 / 392.0, 1e-15);
  EXPECT_NEAR(zeta(8, 20, 0.0), 0.7204, 1e-4);
  EXPECT_EQ(zeta(64, 20, 0.3), 0.95);
  EXPECT_NEAR(zeta(0, 20, 0.0), 0.7, 1e-15);
}

TEST(Zeta, OverPackedWorldIsAnError) {
  EXPECT_THROW(zeta(100, 10, 0.0), std::domain_error);
  EXPECT_THROW(zeta(50, 10, 0.5), std::domain_error);
}

TEST(Zeta, MonotoneAndBoundedOnGrid) {
  for (int a = 1; a <= 100; ++a)
    for (int di = 0; di < 10; ++di) {
      const double d = 0.03 * di;
      const double z = zeta(a, 20, d);
      EXPECT_GE(z, 0.7);
      EXPECT_LE(z, 0.95);
      if (a > 1) EXPECT_GE(z, zeta(a - 1, 20, d));
      if (di > 0) EXPECT_GE(z, zeta(a, 20, 0.03 * (di - 1)));
    }
}

// crowd_reward ------------------------------------------------------------------------

TEST(CrowdReward, FigureScenarios) {
  EXPECT_EQ(crowd_reward(5.0 / 13.0, 7.0 / 8.0, 0.75), -0.3);
  EXPECT_EQ(crowd_reward(0.385, 0.875, 0.75), -0.3);
  EXPECT_EQ(crowd_reward(4.0 / 5.0, 4.0 / 8.0, 0.75), 0.3);
  EXPECT_EQ(crowd_reward(0.4, 0.6, 0.75), 0.0);
  EXPECT_EQ(crowd_reward(0.8, 0.9, 0.75), 0.0);
  EXPECT_EQ(crowd_reward(0.5, 0.75, 0.75), -0.3);  // reaching the threshold counts as crowded
}

TEST(CrowdReward, AntisymmetricAndClosedLoopsSumToZero) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    double a = u(rng), b = u(rng), z = 0.7 + 0.25 * u(rng);
    EXPECT_EQ(crowd_reward(a, b, z) + crowd_reward(b, a, z), 0.0);
    std::vector<double> path{a};
    for (int s = 0; s < 6; ++s) path.push_back(u(rng));
    path.push_back(a);
    double sum = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) sum += crowd_reward(path[i - 1], path[i], z);
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
}

// is_blocking ---------------------------------------------------------------------------

TEST(IsBlocking, SingleAgentNeverBlocks) { EXPECT_FALSE(is_blocking(open_world(6, {{{2, 2}, {4, 4}}}), 0)); }

TEST(IsBlocking, ParkedInCorridor) {
  std::vector<std::string> rows(14, std::string(14, '#'));
  rows[0] = std::string(14, '.');
  // Agent 0 sits mid-corridor; agent 1 must pass through it to reach the far end.
  WorldState w = make_world(rows, {{{0, 6}, {0, 6}}, {{0, 0}, {0, 13}}});
  EXPECT_TRUE(is_blocking(w, 0));
  EXPECT_FALSE(is_blocking(w, 1));
}

TEST(IsBlocking, DetourThreshold) {
  // Wall down column 6 with gaps at row 0 and row k; blocking the row-0 gap forces a 2k detour.
  auto build = [](int k) {
    std::vector<std::string> rows(12, std::string(12, '.'));
    for (int r = 1; r < 12; ++r)
      if (r != k) rows[static_cast<std::size_t>(r)][6] = '#';
    return make_world(rows, {{{0, 6}, {0, 6}}, {{0, 5}, {0, 7}}});
  };
  EXPECT_TRUE(is_blocking(build(5), 0));   // detour 10
  EXPECT_FALSE(is_blocking(build(4), 0));  // detour 8
  EXPECT_TRUE(is_blocking(build(4), 0, 8));
}

TEST(IsBlocking, OpenPlainNeighbourDoesNotBlock) {
  WorldState w = open_world(8, {{{3, 3}, {3, 3}}, {{3, 2}, {3, 6}}});
  EXPECT_FALSE(is_blocking(w, 0));
}

TEST(IsBlocking, MatchesIndependentOracle) {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 300; ++k) {
    WorldState w = generate_world({8, 0.05 * std::uniform_int_distribution<int>(0, 8)(rng),
                                   std::uniform_int_distribution<int>(1, 4)(rng), rng()});
    for (int i = 0; i < w.num_agents(); ++i)
      for (int detour : {2, 4, 10}) EXPECT_EQ(is_blocking(w, i, detour), blocking_oracle(w, i, detour));
  }
}

// step_reward -------------------------------------------------------------------------

namespace {

StepReward reward_of(const WorldState& w, std::vector<Action> a, CrowdParams crowd = {5, 0.75}) {
  auto [next, ev] = step(w, a);
  return step_reward(w, a, ev, next, RewardConstants{}, crowd);
}

}  // namespace

TEST(StepReward, MoveAndIdleTerms) {
  WorldState w = open_world(10, {{{2, 2}, {8, 8}}, {{7, 7}, {7, 7}}});
  StepReward r = reward_of(w, {Action::East, Action::Stay});
  EXPECT_DOUBLE_EQ(r.per_agent[0], -0.3);
  EXPECT_DOUBLE_EQ(r.per_agent[1], 0.0);  // idle on goal
  EXPECT_EQ(r.delta.w_m, 1);
  EXPECT_EQ(r.delta.w_s_on_goal, 1);
  StepReward idle = reward_of(w, {Action::Stay, Action::Stay});
  EXPECT_DOUBLE_EQ(idle.per_agent[0], -0.5);
  EXPECT_EQ(idle.delta.w_s_penalized, 1);
}

TEST(StepReward, CollisionWhileEnteringCrowd) {
  // Agent 0 bumps the boundary while three neighbours walk into its clipped 3x3 window:
  // density 4/9 -> 7/9 with zeta 0.75.
  WorldState w = open_world(5, {{{0, 0}, {4, 4}},
                                {{0, 1}, {0, 1}},
                                {{0, 2}, {0, 2}},
                                {{1, 0}, {1, 0}},
                                {{3, 0}, {2, 0}},
                                {{3, 1}, {2, 1}},
                                {{3, 2}, {2, 2}}});
  StepReward r = reward_of(w, {Action::North, Action::Stay, Action::Stay, Action::Stay, Action::North,
                               Action::North, Action::North});
  EXPECT_DOUBLE_EQ(r.per_agent[0], -2.3);
  EXPECT_EQ(r.delta.w_c, 1);
  EXPECT_EQ(r.delta.w_crowd_in, 1);  // the neighbours' own windows stay below the threshold
}

TEST(StepReward, TeamBonusOnCompletingStep) {
  WorldState w = open_world(6, {{{0, 0}, {0, 1}}, {{3, 3}, {3, 3}}});
  StepReward r = reward_of(w, {Action::East, Action::Stay});
  EXPECT_TRUE(r.team_bonus);
  EXPECT_DOUBLE_EQ(r.per_agent[0], -0.3 + 20.0);
  EXPECT_DOUBLE_EQ(r.per_agent[1], 20.0);
  EXPECT_EQ(r.delta.w_e, 2);
}

TEST(StepReward, StationaryBlockerIsPenalised) {
  std::vector<std::string> rows(14, std::string(14, '#'));
  rows[0] = std::string(14, '.');
  WorldState w = make_world(rows, {{{0, 6}, {0, 6}}, {{0, 0}, {0, 13}}});
  StepReward r = reward_of(w, {Action::Stay, Action::Stay});
  EXPECT_DOUBLE_EQ(r.per_agent[0], 0.0 - 2.0);
  EXPECT_EQ(r.delta.w_blocking, 1);
}

// episode_total --------------------------------------------------------------------------

TEST(EpisodeTotal, Fixtures) {
  RewardConstants k;
  EXPECT_EQ(episode_total(RewardBreakdown{}, k), 0.0);
  RewardBreakdown moves;
  moves.w_m = 10;
  EXPECT_NEAR(episode_total(moves, k), -3.0, 1e-12);
  RewardBreakdown team;
  team.w_e = 4;
  EXPECT_DOUBLE_EQ(episode_total(team, k), 80.0);
}

TEST(EpisodeTotal, EqualsAccumulatedStepRewardsOnRandomRollouts) {
  std::mt19937_64 rng(4);
  RewardConstants k;
  for (int ep = 0; ep < 60; ++ep) {
    WorldState w = generate_world({8, 0.1, std::uniform_int_distribution<int>(1, 6)(rng), rng()});
    CrowdParams crowd{5, zeta(w.num_agents(), 8, 0.1)};
    RewardBreakdown total;
    double sum = 0.0;
    for (int t = 0; t < 40; ++t) {
      std::vector<Action> a;
      for (int i = 0; i < w.num_agents(); ++i) a.push_back(action_from_index(std::uniform_int_distribution<int>(0, 4)(rng)));
      auto [next, ev] = step(w, a);
      StepReward r = step_reward(w, a, ev, next, k, crowd);
      for (double v : r.per_agent) sum += v;
      total += r.delta;
      for (std::size_t i = 0; i < ev.agents.size(); ++i) {
        EXPECT_FALSE(ev.agents[i].crowd_in && ev.agents[i].crowd_out);
      }
      w = std::move(next);
    }
    EXPECT_NEAR(episode_total(total, k), sum, 1e-9);
    EXPECT_TRUE(total.w_e == 0 || total.w_e % w.num_agents() == 0);
  }
}
