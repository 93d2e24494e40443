#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <crowdmapf/curriculum.hpp>
#include <crowdmapf/oracles.hpp>

using namespace crowdmapf;

TEST(LevelRanges, MatchArithmeticOracle) {
  for (int sigma = 0; sigma <= 20; ++sigma) {
    auto expect = oracle::level_table(sigma);
    auto got = level_ranges(sigma);
    EXPECT_NEAR(got.d_lo, expect.d_lo, 1e-12) << sigma;
    EXPECT_NEAR(got.d_hi, expect.d_hi, 1e-12) << sigma;
    EXPECT_EQ(got.s_lo, expect.s_lo) << sigma;
    EXPECT_EQ(got.s_hi, expect.s_hi) << sigma;
  }
  EXPECT_EQ(level_ranges(0), (LevelRanges{0.0, 0.1, 10, 40}));
  EXPECT_EQ(level_ranges(6).s_lo, 40);
  EXPECT_EQ(level_ranges(16).s_hi, 120);
  EXPECT_THROW(level_ranges(-1), std::invalid_argument);
}

TEST(Sampling, SpecsLieInsideTheLevelRanges) {
  std::mt19937_64 rng(3);
  for (int level : {0, 2, 5, 12}) {
    CurriculumConfig cfg;
    cfg.pin_level = level;
    auto s = make_curriculum(cfg);
    auto r = level_ranges(level);
    for (int k = 0; k < 500; ++k) {
      WorldSpec spec = sample_spec(s, rng);
      EXPECT_GE(spec.size, r.s_lo);
      EXPECT_LE(spec.size, r.s_hi);
      EXPECT_GE(spec.obstacle_density, r.d_lo);
      EXPECT_LE(spec.obstacle_density, r.d_hi);
      EXPECT_NE(std::find(cfg.agent_counts.begin(), cfg.agent_counts.end(), spec.num_agents), cfg.agent_counts.end());
    }
  }
}

TEST(Sampling, OverridesPinTheSpec) {
  CurriculumConfig cfg;
  cfg.pin_level = 0;
  cfg.fixed_size = 10;
  cfg.fixed_density = 0.1;
  cfg.fixed_agents = 4;
  auto s = make_curriculum(cfg);
  std::mt19937_64 rng(1);
  WorldSpec spec = sample_spec(s, rng);
  EXPECT_EQ(spec.size, 10);
  EXPECT_EQ(spec.obstacle_density, 0.1);
  EXPECT_EQ(spec.num_agents, 4);
}

TEST(Demo, FractionIsNearOneHalf) {
  std::mt19937_64 rng(8);
  int demos = 0;
  const int n = 10'000;
  for (int k = 0; k < n; ++k) demos += demo_mode(rng) ? 1 : 0;
  EXPECT_GE(demos / double(n), 0.47);
  EXPECT_LE(demos / double(n), 0.53);
  EXPECT_THROW(demo_mode(rng, 1.5), std::invalid_argument);
}

TEST(Plateau, FlatRewardLevelsUpAfterTheWindow) {
  CurriculumConfig cfg;
  cfg.initial_plateau_window = 10;
  auto s = make_curriculum(cfg);
  WorldSpec spec{10, 0.0, 1, 0};
  int advanced_at = -1;
  for (int k = 1; k <= 100 && advanced_at < 0; ++k)
    if (observe_episode(s, 1.0, true, spec)) advanced_at = k;
  // Episode 1 sets the best average; 10 non-improving episodes follow.
  EXPECT_EQ(advanced_at, 11);
  EXPECT_EQ(s.level, 1);
  EXPECT_EQ(s.plateau_window, 15);
  EXPECT_EQ(s.episodes_per_level, (std::vector<long>{11, 0}));
}

TEST(Plateau, WindowGrowsByCeilOneAndAHalf) {
  CurriculumConfig cfg;
  cfg.initial_plateau_window = 3;
  auto s = make_curriculum(cfg);
  WorldSpec spec{10, 0.0, 1, 0};
  std::vector<long> windows{s.plateau_window};
  for (int k = 0; k < 2000 && s.level < 6; ++k)
    if (observe_episode(s, 0.0, true, spec)) windows.push_back(s.plateau_window);
  ASSERT_EQ(windows.size(), 7u);
  for (std::size_t i = 1; i < windows.size(); ++i)
    EXPECT_EQ(windows[i], (3 * windows[i - 1] + 1) / 2) << i;
  EXPECT_EQ(windows.back(), oracle::plateau_window(3, 6));
}

TEST(Plateau, ImprovingRewardDefersLevelUp) {
  CurriculumConfig cfg;
  cfg.initial_plateau_window = 10;
  auto s = make_curriculum(cfg);
  WorldSpec spec{10, 0.0, 1, 0};
  for (int k = 0; k < 200; ++k) EXPECT_FALSE(observe_episode(s, 0.5 * k, true, spec)) << k;
  EXPECT_EQ(s.level, 0);
}

TEST(Plateau, EpisodeCapForcesLevelUp) {
  auto s = make_curriculum();
  WorldSpec spec{10, 0.0, 1, 0};
  long advanced_at = -1;
  for (long k = 1; k <= 50'000 && advanced_at < 0; ++k)
    if (observe_episode(s, static_cast<double>(k), true, spec)) advanced_at = k;
  EXPECT_EQ(advanced_at, 50'000);
  EXPECT_EQ(s.level, 1);
}

TEST(Plateau, PinnedLevelNeverAdvances) {
  CurriculumConfig cfg;
  cfg.pin_level = 0;
  cfg.initial_plateau_window = 2;
  auto s = make_curriculum(cfg);
  WorldSpec spec{10, 0.0, 1, 0};
  for (int k = 0; k < 100; ++k) EXPECT_FALSE(observe_episode(s, 0.0, true, spec));
  EXPECT_EQ(s.level, 0);
}

TEST(Boost, FailuresAreBufferedFifo) {
  CurriculumConfig cfg;
  cfg.boost_capacity = 3;
  cfg.pin_level = 0;
  auto s = make_curriculum(cfg);
  for (std::uint64_t seed = 0; seed < 5; ++seed) observe_episode(s, 0.0, false, WorldSpec{10, 0.0, 1, seed});
  observe_episode(s, 0.0, true, WorldSpec{10, 0.0, 1, 99});
  ASSERT_EQ(s.boost_buffer.size(), 3u);
  EXPECT_EQ(s.boost_buffer.front().seed, 2u);
  EXPECT_EQ(s.boost_buffer.back().seed, 4u);
}

TEST(Boost, BufferedSpecsAreReplayedAtTheBoostRate) {
  CurriculumConfig cfg;
  cfg.pin_level = 0;
  auto s = make_curriculum(cfg);
  const WorldSpec failed{33, 0.05, 2, 123456789};
  observe_episode(s, 0.0, false, failed);
  std::mt19937_64 rng(6);
  int replays = 0;
  const int n = 20'000;
  for (int k = 0; k < n; ++k) replays += sample_spec(s, rng) == failed ? 1 : 0;
  EXPECT_NEAR(replays / double(n), 0.25, 0.015);
}

TEST(Config, ValidationRejectsBadValues) {
  CurriculumConfig cfg;
  cfg.initial_plateau_window = 0;
  EXPECT_THROW(make_curriculum(cfg), std::invalid_argument);
  cfg = {};
  cfg.agent_counts.clear();
  EXPECT_THROW(make_curriculum(cfg), std::invalid_argument);
  cfg = {};
  cfg.boost_probability = 2;
  EXPECT_THROW(make_curriculum(cfg), std::invalid_argument);
}
