#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include <crowdmapf/eval.hpp>
#include <crowdmapf/scenario.hpp>

#include "fixtures.hpp"

using namespace crowdmapf;

TEST(Scenario, RoundTripsBitExactly) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 50; ++k) {
    WorldSpec spec{std::uniform_int_distribution<int>(4, 30)(rng), std::uniform_real_distribution<double>(0.0, 0.4)(rng),
                   std::uniform_int_distribution<int>(1, 8)(rng), rng()};
    Scenario sc = make_scenario(spec);
    std::stringstream ss;
    write_scenario(ss, sc);
    Scenario back = read_scenario(ss);
    EXPECT_EQ(back, sc);
    EXPECT_EQ(back.spec.obstacle_density, spec.obstacle_density);  // shortest round-trip formatting
  }
}

TEST(Scenario, CommentsAndBlankLinesAreIgnored) {
  std::istringstream in(
      "# hand written\ncrowdmapf-scenario 1\n\nsize 4\nobstacle_density 0\nnum_agents 1\nseed 9\n"
      "obstacles 1\n1 1\n# agents follow\nagents 1\n0 0 3 3\n");
  Scenario sc = read_scenario(in);
  EXPECT_TRUE(sc.initial.grid.is_obstacle({1, 1}));
  EXPECT_EQ(sc.initial.agents[0].goal, (Cell{3, 3}));
}

TEST(Scenario, ErrorsCarryLineNumbers) {
  std::istringstream bad("crowdmapf-scenario 1\nsize 4\nobstacle_density x\n");
  EXPECT_THROW(read_scenario(bad), std::runtime_error);
  std::istringstream overlap(
      "crowdmapf-scenario 1\nsize 4\nobstacle_density 0\nnum_agents 2\nseed 0\nobstacles 0\nagents 2\n0 0 1 1\n0 0 2 2\n");
  try {
    read_scenario(overlap);
    FAIL() << "expected a parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
  std::istringstream wrong_magic("crowdmapf-replay 1\n");
  EXPECT_THROW(read_scenario(wrong_magic), std::runtime_error);
}

TEST(Replay, RoundTripAndReplayReproducesEpisode) {
  Scenario sc = make_scenario({8, 0.1, 3, 77});
  Replay replay{sc, {}};
  EpisodeRecord rec = run_episode(ExpertActor{}, sc.spec, sc.initial, 0, &replay.steps);
  ASSERT_TRUE(rec.success);
  std::stringstream ss;
  write_replay(ss, replay);
  Replay back = read_replay(ss);
  EXPECT_EQ(back, replay);
  WorldState w = back.scenario.initial;
  for (const auto& j : back.steps) w = step(w, j).first;
  EXPECT_TRUE(w.all_on_goal());
  EXPECT_EQ(w.t, rec.makespan);
}

TEST(Replay, RejectsWrongWidth) {
  std::istringstream in(
      "crowdmapf-scenario 1\nsize 4\nobstacle_density 0\nnum_agents 1\nseed 0\nobstacles 0\nagents 1\n0 0 1 1\n"
      "steps 1\nEE\n");
  EXPECT_THROW(read_replay(in), std::runtime_error);
}

TEST(Render, MarksObstaclesGoalsAndAgents) {
  WorldState w = crowdmapf::testing::make_world({"#...", "....", "....", "...."}, {{{1, 1}, {1, 1}}, {{2, 2}, {3, 3}}});
  std::string frame = render_ascii(w);
  EXPECT_EQ(frame, "#...\n.A..\n..b.\n...*\n");
}
