#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include "eval.hpp"
#include "grid.hpp"
#include "world.hpp"

// Independent reference implementations used by selfcheck and the test suite. They share no
// search or bookkeeping code with the production modules they check.

namespace crowdmapf::oracle {

inline constexpr long kNoPath = std::numeric_limits<long>::max();

/// Joint configuration space of A agents on a small grid, one cell index per agent.
class JointSpace {
 public:
  JointSpace(const Grid& grid, int agents) : grid_(grid), agents_(agents), cells_(grid.size() * grid.size()) {
    if (agents < 1 || agents > 4) throw std::invalid_argument("JointSpace: 1..4 agents");
    states_ = 1;
    for (int i = 0; i < agents; ++i) states_ *= cells_;
    if (states_ > 50'000'000) throw std::invalid_argument("JointSpace: too many joint states");
  }

  long states() const { return states_; }
  int agents() const { return agents_; }

  long encode(std::span<const int> cells) const {
    long k = 0;
    for (int i = agents_ - 1; i >= 0; --i) k = k * cells_ + cells[static_cast<std::size_t>(i)];
    return k;
  }
  void decode(long k, std::vector<int>& cells) const {
    cells.resize(static_cast<std::size_t>(agents_));
    for (int i = 0; i < agents_; ++i) {
      cells[static_cast<std::size_t>(i)] = static_cast<int>(k % cells_);
      k /= cells_;
    }
  }

  /// Calls f(next_key, cost) for every conflict-free joint move out of `from`:
  /// targets free and in bounds, no shared targets, no swaps. Cost 1 per agent, 0 for an
  /// agent that stays on its own goal.
  template <class F>
  void successors(std::span<const int> from, std::span<const int> goals, F&& f) const {
    std::vector<int> to(static_cast<std::size_t>(agents_));
    const int side = grid_.size();
    static constexpr int dr[5] = {-1, 0, 1, 0, 0};
    static constexpr int dc[5] = {0, 1, 0, -1, 0};
    long combos = 1;
    for (int i = 0; i < agents_; ++i) combos *= 5;
    for (long m = 0; m < combos; ++m) {
      long rest = m;
      bool ok = true;
      long cost = 0;
      for (int i = 0; i < agents_ && ok; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const int a = static_cast<int>(rest % 5);
        rest /= 5;
        const int r = from[ui] / side + dr[a], c = from[ui] % side + dc[a];
        if (r < 0 || c < 0 || r >= side || c >= side || grid_.is_obstacle({r, c})) ok = false;
        to[ui] = r * side + c;
        cost += (from[ui] == goals[ui] && to[ui] == goals[ui]) ? 0 : 1;
      }
      if (!ok) continue;
      for (int i = 0; i < agents_ && ok; ++i)
        for (int j = i + 1; j < agents_ && ok; ++j) {
          const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
          if (to[ui] == to[uj]) ok = false;
          if (to[ui] == from[uj] && to[uj] == from[ui]) ok = false;
        }
      if (ok) f(encode(to), cost);
    }
  }

 private:
  const Grid& grid_;
  int agents_;
  int cells_;
  long states_;
};

/// Optimal sum-of-costs by Dijkstra over joint configurations (kNoPath when unsolvable).
inline long brute_force_sum_of_costs(const WorldState& world) {
  const int n = world.num_agents();
  JointSpace space(world.grid, n);
  std::vector<int> start, goal;
  for (const auto& a : world.agents) {
    start.push_back(static_cast<int>(world.grid.index(a.pos)));
    goal.push_back(static_cast<int>(world.grid.index(a.goal)));
  }
  const long target = space.encode(goal);
  std::vector<long> dist(static_cast<std::size_t>(space.states()), kNoPath);
  using Item = std::pair<long, long>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  const long s = space.encode(start);
  dist[static_cast<std::size_t>(s)] = 0;
  open.push({0, s});
  std::vector<int> cur;
  while (!open.empty()) {
    auto [d, k] = open.top();
    open.pop();
    if (d != dist[static_cast<std::size_t>(k)]) continue;
    if (k == target) return d;
    space.decode(k, cur);
    space.successors(cur, goal, [&](long next, long cost) {
      long nd = d + cost;
      auto un = static_cast<std::size_t>(next);
      if (nd < dist[un]) {
        dist[un] = nd;
        open.push({nd, next});
      }
    });
  }
  return kNoPath;
}

/// Cost-to-go from every joint configuration to `goals`: Dijkstra from the goal configuration
/// over the inverted forward successor relation.
inline std::vector<long> cost_to_go(const Grid& grid, std::span<const int> goals) {
  const int n = static_cast<int>(goals.size());
  JointSpace space(grid, n);
  std::vector<std::vector<std::pair<long, long>>> preds(static_cast<std::size_t>(space.states()));
  std::vector<int> cur;
  for (long k = 0; k < space.states(); ++k) {
    space.decode(k, cur);
    bool valid = true;
    for (int i = 0; i < n && valid; ++i) {
      const int c = cur[static_cast<std::size_t>(i)];
      if (grid.is_obstacle(grid.cell_at(static_cast<std::size_t>(c)))) valid = false;
      for (int j = i + 1; j < n && valid; ++j)
        if (c == cur[static_cast<std::size_t>(j)]) valid = false;
    }
    if (!valid) continue;
    space.successors(cur, goals, [&](long next, long cost) { preds[static_cast<std::size_t>(next)].push_back({k, cost}); });
  }
  std::vector<long> dist(static_cast<std::size_t>(space.states()), kNoPath);
  using Item = std::pair<long, long>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  const long t = space.encode(goals);
  dist[static_cast<std::size_t>(t)] = 0;
  open.push({0, t});
  while (!open.empty()) {
    auto [d, k] = open.top();
    open.pop();
    if (d != dist[static_cast<std::size_t>(k)]) continue;
    for (auto [p, cost] : preds[static_cast<std::size_t>(k)]) {
      long nd = d + cost;
      if (nd < dist[static_cast<std::size_t>(p)]) {
        dist[static_cast<std::size_t>(p)] = nd;
        open.push({nd, p});
      }
    }
  }
  return dist;
}

/// Episode length and crowding threshold written out longhand.
inline int episode_length(int m, double d, int agents) {
  return static_cast<int>(std::floor(4.0 * m * (1.0 + d) + 5.0 * agents + 1e-9));
}

inline double zeta_value(int agents, int m, double d) {
  double free_cells = static_cast<double>(m * m) * (1.0 - d);
  double v = 0.7 + agents / (free_cells - agents);
  return v > 0.95 ? 0.95 : v;
}

struct Ranges {
  double d_lo, d_hi;
  int s_lo, s_hi;
};

inline Ranges level_table(int sigma) {
  Ranges r{};
  r.d_lo = 0.05 * sigma;
  if (r.d_lo > 0.2) r.d_lo = 0.2;
  r.d_hi = 0.1 + 0.1 * sigma;
  if (r.d_hi > 0.6) r.d_hi = 0.6;
  r.s_lo = 10 + 5 * sigma;
  if (r.s_lo > 40) r.s_lo = 40;
  r.s_hi = 40 + 5 * sigma;
  if (r.s_hi > 120) r.s_hi = 120;
  return r;
}

/// Plateau window after `levels` level-ups from n0, using integer ceil of 3n/2.
inline long plateau_window(long n0, int levels) {
  long n = n0;
  for (int i = 0; i < levels; ++i) n = (3 * n + 1) / 2;
  return n;
}

/// Straightforward accumulator for the five report metrics.
struct MetricsTally {
  int episodes = 0;
  int successes = 0;
  double makespan_sum = 0;
  double moves_sum = 0;
  double collisions = 0;

  void add(const EpisodeRecord& r) {
    ++episodes;
    collisions += r.collision_count;
    if (r.success) {
      ++successes;
      makespan_sum += r.makespan;
      for (int m : r.moves) moves_sum += m;
    }
  }
  double success_rate() const { return 100.0 * successes / episodes; }
  std::optional<double> makespan() const {
    return successes ? std::optional<double>(makespan_sum / successes) : std::nullopt;
  }
  std::optional<double> moves() const { return successes ? std::optional<double>(moves_sum / successes) : std::nullopt; }
  double collision_count() const { return collisions / episodes; }
  std::optional<double> collision_rate() const {
    auto m = makespan();
    return (m && *m > 0) ? std::optional<double>(collision_count() / *m) : std::nullopt;
  }
};

}  // namespace crowdmapf::oracle
