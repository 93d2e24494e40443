#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "world.hpp"

namespace crowdmapf {

struct LevelRanges {
  double d_lo = 0.0, d_hi = 0.0;
  int s_lo = 0, s_hi = 0;

  friend bool operator==(const LevelRanges&, const LevelRanges&) = default;
};

/// Sampling ranges at curriculum level sigma:
///   d = (min(0.05 sigma, 0.2), min(0.1 + 0.1 sigma, 0.6))
///   s = (min(10 + 5 sigma, 40), min(40 + 5 sigma, 120))
inline LevelRanges level_ranges(int sigma) {
  if (sigma < 0) throw std::invalid_argument("level_ranges: negative level");
  LevelRanges r;
  r.d_lo = std::min(0.05 * sigma, 0.2);
  r.d_hi = std::min(0.1 + 0.1 * sigma, 0.6);
  r.s_lo = std::min(10 + 5 * sigma, 40);
  r.s_hi = std::min(40 + 5 * sigma, 120);
  return r;
}

struct CurriculumConfig {
  int initial_plateau_window = 1000;     // n0
  double plateau_growth = 1.5;           // n <- ceil(1.5 n) on each level-up
  long max_episodes_per_level = 50'000;
  double improvement_tolerance = 0.01;
  int average_window = 100;
  std::size_t boost_capacity = 512;
  double boost_probability = 0.25;
  double demo_probability = 0.5;
  std::vector<int> agent_counts{1, 2, 4, 8};
  std::optional<int> pin_level;          // freeze sigma (no level-ups)
  std::optional<int> fixed_size;         // override sampled world size
  std::optional<double> fixed_density;   // override sampled obstacle density
  std::optional<int> fixed_agents;       // override sampled agent count

  void validate() const {
    if (initial_plateau_window < 1) throw std::invalid_argument("curriculum: n0 must be >= 1");
    if (plateau_growth < 1.0) throw std::invalid_argument("curriculum: growth must be >= 1");
    if (average_window < 1 || max_episodes_per_level < 1 || boost_capacity < 1)
      throw std::invalid_argument("curriculum: windows and capacities must be positive");
    if (boost_probability < 0 || boost_probability > 1 || demo_probability < 0 || demo_probability > 1)
      throw std::invalid_argument("curriculum: probabilities must lie in [0,1]");
    if (agent_counts.empty()) throw std::invalid_argument("curriculum: agent_counts is empty");
    if (pin_level && *pin_level < 0) throw std::invalid_argument("curriculum: pin_level must be >= 0");
  }

  friend bool operator==(const CurriculumConfig&, const CurriculumConfig&) = default;
};

struct CurriculumState {
  CurriculumConfig config;
  int level = 0;
  long plateau_window = 1000;
  long episodes_at_level = 0;
  std::optional<double> best_avg_reward;  // empty until the first episode at a level
  long episodes_since_improvement = 0;
  std::deque<WorldSpec> boost_buffer;     // FIFO, oldest evicted at capacity
  std::deque<double> recent_rewards;      // moving-average window
  std::vector<long> episodes_per_level;   // history, indexed by level

  friend bool operator==(const CurriculumState&, const CurriculumState&) = default;
};

inline CurriculumState make_curriculum(const CurriculumConfig& config = {}) {
  config.validate();
  CurriculumState s;
  s.config = config;
  s.level = config.pin_level.value_or(0);
  s.plateau_window = config.initial_plateau_window;
  s.episodes_per_level.assign(static_cast<std::size_t>(s.level) + 1, 0);
  return s;
}

/// Next environment: a buffered failure with probability boost_probability (when any exist),
/// otherwise a fresh draw from the current level's ranges.
template <class Rng>
WorldSpec sample_spec(const CurriculumState& state, Rng& rng) {
  const auto& cfg = state.config;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (!state.boost_buffer.empty() && u < cfg.boost_probability) {
    std::uniform_int_distribution<std::size_t> pick(0, state.boost_buffer.size() - 1);
    return state.boost_buffer[pick(rng)];
  }
  const LevelRanges r = level_ranges(state.level);
  WorldSpec spec;
  spec.size = std::uniform_int_distribution<int>(r.s_lo, r.s_hi)(rng);
  spec.obstacle_density = std::uniform_real_distribution<double>(r.d_lo, r.d_hi)(rng);
  if (spec.obstacle_density > r.d_hi) spec.obstacle_density = r.d_hi;
  std::uniform_int_distribution<std::size_t> pick_agents(0, cfg.agent_counts.size() - 1);
  spec.num_agents = cfg.agent_counts[pick_agents(rng)];
  spec.seed = rng();
  if (cfg.fixed_size) spec.size = *cfg.fixed_size;
  if (cfg.fixed_density) spec.obstacle_density = *cfg.fixed_density;
  if (cfg.fixed_agents) spec.num_agents = *cfg.fixed_agents;
  return spec;
}

/// Bernoulli draw deciding whether the next episode follows the expert.
template <class Rng>
bool demo_mode(Rng& rng, double demo_probability = 0.5) {
  if (demo_probability < 0.0 || demo_probability > 1.0)
    throw std::invalid_argument("demo_mode: probability outside [0,1]");
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < demo_probability;
}

/// Plateau detection and boosting. Returns true when the level advanced.
inline bool observe_episode(CurriculumState& s, double total_reward, bool success, const WorldSpec& spec) {
  const auto& cfg = s.config;
  s.recent_rewards.push_back(total_reward);
  if (static_cast<int>(s.recent_rewards.size()) > cfg.average_window) s.recent_rewards.pop_front();
  const double avg = std::accumulate(s.recent_rewards.begin(), s.recent_rewards.end(), 0.0) /
                     static_cast<double>(s.recent_rewards.size());

  ++s.episodes_at_level;
  ++s.episodes_per_level[static_cast<std::size_t>(s.level)];
  if (!s.best_avg_reward || avg > *s.best_avg_reward + cfg.improvement_tolerance) {
    s.best_avg_reward = avg;
    s.episodes_since_improvement = 0;
  } else {
    ++s.episodes_since_improvement;
  }

  if (!success) {
    s.boost_buffer.push_back(spec);
    while (s.boost_buffer.size() > cfg.boost_capacity) s.boost_buffer.pop_front();
  }

  bool advanced = false;
  if (!cfg.pin_level && (s.episodes_since_improvement >= s.plateau_window ||
                         s.episodes_at_level >= cfg.max_episodes_per_level)) {
    ++s.level;
    s.plateau_window = static_cast<long>(std::ceil(cfg.plateau_growth * static_cast<double>(s.plateau_window)));
    s.episodes_at_level = 0;
    s.episodes_since_improvement = 0;
    s.best_avg_reward.reset();
    s.recent_rewards.clear();
    s.episodes_per_level.push_back(0);
    advanced = true;
  }
  return advanced;
}

}  // namespace crowdmapf
