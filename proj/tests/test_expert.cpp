#include <gtest/gtest.h>

#include <random>

#include <crowdmapf/expert.hpp>
#include <crowdmapf/oracles.hpp>
#include <crowdmapf/world.hpp>

#include "fixtures.hpp"

using namespace crowdmapf;
using crowdmapf::testing::make_world;
using crowdmapf::testing::open_world;

TEST(Bfs, DistancesAroundWalls) {
  WorldState w = make_world({".#..", ".#..", "....", "...."}, {{{0, 0}, {0, 2}}});
  EXPECT_EQ(bfs_distance(w.grid, {0, 0}, {0, 2}), 6);
  EXPECT_EQ(bfs_distance(w.grid, {0, 0}, {0, 0}), 0);
  WorldState walled = make_world({".#..", "##..", "....", "...."}, {{{2, 2}, {3, 3}}});
  EXPECT_EQ(bfs_distance(walled.grid, {0, 0}, {3, 3}), std::nullopt);
  EXPECT_THROW((void)bfs_distance(w.grid, {0, 1}, {0, 0}), std::invalid_argument);
}

TEST(Bfs, BlockedCellsAreAvoided) {
  WorldState w = open_world(3, {{{0, 0}, {2, 2}}});
  std::vector<Cell> blocked{{1, 0}, {1, 1}};
  EXPECT_EQ(bfs_distance(w.grid, {0, 0}, {2, 0}, blocked), 6);
  std::vector<Cell> all{{1, 0}, {1, 1}, {1, 2}};
  EXPECT_EQ(bfs_distance(w.grid, {0, 0}, {2, 0}, all), std::nullopt);
}

TEST(OdAstar, SingleAgentCostIsBfsDistance) {
  WorldState w = make_world({"....", ".##.", "....", "#..."}, {{{0, 0}, {3, 3}}});
  auto res = plan_od_astar(w);
  ASSERT_TRUE(res.ok());
  EXPECT_EQ(res.plan->sum_of_costs, 6);
  EXPECT_EQ(res.plan->makespan, 6);
  EXPECT_TRUE(verify_plan(w, *res.plan));
}

TEST(OdAstar, HeadOnCorridorNeedsThePocket) {
  // Two agents swap ends of a corridor; the pocket at (1,2) is the only passing place.
  WorldState w = make_world({".....", "##.##", "#####", "#####", "#####"}, {{{0, 0}, {0, 4}}, {{0, 4}, {0, 0}}});
  auto res = plan_od_astar(w);
  ASSERT_TRUE(res.ok());
  EXPECT_TRUE(verify_plan(w, *res.plan));
  EXPECT_EQ(res.plan->sum_of_costs, oracle::brute_force_sum_of_costs(w));
}

TEST(OdAstar, CorridorWithoutPocketIsUnsolvable) {
  WorldState w = make_world({".....", "#####", "#####", "#####", "#####"}, {{{0, 0}, {0, 4}}, {{0, 4}, {0, 0}}});
  auto res = plan_od_astar(w, {20'000, 0});
  EXPECT_FALSE(res.ok());
  EXPECT_EQ(oracle::brute_force_sum_of_costs(w), oracle::kNoPath);
}

TEST(OdAstar, UnreachableGoalIsInfeasible) {
  WorldState w = make_world({".#..", "##..", "....", "...."}, {{{0, 0}, {3, 3}}});
  EXPECT_EQ(plan_od_astar(w).status, PlanStatus::Infeasible);
}

TEST(OdAstar, TinyBudgetIsExhausted) {
  WorldState w = open_world(8, {{{0, 0}, {7, 7}}, {{7, 7}, {0, 0}}, {{0, 7}, {7, 0}}});
  EXPECT_EQ(plan_od_astar(w, {5, 0}).status, PlanStatus::Exhausted);
  EXPECT_THROW(plan_od_astar(w, {0, 0}), std::invalid_argument);
}

TEST(OdAstar, MatchesBruteForceOnRandomSmallWorlds) {
  std::mt19937_64 rng(5);
  int solved = 0;
  for (int k = 0; k < 60; ++k) {
    WorldSpec spec{5, 0.15, 2 + static_cast<int>(rng() % 2), rng()};
    WorldState w = generate_world(spec);
    long oracle_cost = oracle::brute_force_sum_of_costs(w);
    auto res = plan_od_astar(w, {5'000'000, 0});
    if (oracle_cost == oracle::kNoPath) {
      EXPECT_FALSE(res.ok()) << "seed " << spec.seed;
      continue;
    }
    ASSERT_TRUE(res.ok()) << "seed " << spec.seed;
    EXPECT_EQ(res.plan->sum_of_costs, oracle_cost) << "seed " << spec.seed;
    EXPECT_TRUE(verify_plan(w, *res.plan)) << "seed " << spec.seed;
    ++solved;
  }
  EXPECT_GT(solved, 40);
}

TEST(Prioritized, EightAgentsReplayCollisionFree) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    WorldState w = generate_world({20, 0.1, 8, seed});
    auto res = plan_prioritized(w, seed);
    ASSERT_TRUE(res.ok()) << "seed " << seed;
    EXPECT_TRUE(verify_plan(w, *res.plan)) << "seed " << seed;
    long lower = 0;
    for (const auto& a : w.agents) lower += *bfs_distance(w.grid, a.pos, a.goal);
    EXPECT_GE(res.plan->sum_of_costs, lower);
  }
}

TEST(Prioritized, DeterministicForAFixedOrderSeed) {
  WorldState w = generate_world({16, 0.2, 12, 3});
  auto a = plan_prioritized(w, 9);
  auto b = plan_prioritized(w, 9);
  ASSERT_TRUE(a.ok());
  EXPECT_EQ(*a.plan, *b.plan);
}

TEST(Expert, UsesOdForSmallTeamsAndFallsBackOtherwise) {
  WorldState small = generate_world({6, 0.0, 3, 1});
  auto od = plan_expert(small);
  ASSERT_TRUE(od.ok());
  EXPECT_EQ(od.plan->sum_of_costs, oracle::brute_force_sum_of_costs(small));
  WorldState big = generate_world({20, 0.1, 16, 1});
  auto pp = plan_expert(big, {4, {}, 7});
  ASSERT_TRUE(pp.ok());
  EXPECT_TRUE(verify_plan(big, *pp.plan));
  EXPECT_THROW(plan_expert(small, {5, {}, 0}), std::invalid_argument);
}

TEST(Expert, ActionPastPlanEndIsStay) {
  WorldState w = open_world(4, {{{0, 0}, {0, 2}}});
  auto res = plan_expert(w);
  ASSERT_TRUE(res.ok());
  EXPECT_EQ(expert_action(*res.plan, 0, 0), Action::East);
  EXPECT_EQ(expert_action(*res.plan, 0, 100), Action::Stay);
  EXPECT_THROW((void)expert_action(*res.plan, 1, 0), std::out_of_range);
  EXPECT_THROW((void)expert_action(*res.plan, 0, -1), std::out_of_range);
}

TEST(Expert, WaitingOnGoalIsFree) {
  // Agent 0 already sits on its goal and need not move; only agent 1 pays.
  WorldState w = open_world(4, {{{3, 3}, {3, 3}}, {{0, 0}, {0, 3}}});
  auto res = plan_expert(w);
  ASSERT_TRUE(res.ok());
  EXPECT_EQ(res.plan->sum_of_costs, 3);
  EXPECT_EQ(res.plan->makespan, 3);
}
