// Acceptance run: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <crowdmapf/crowdmapf.hpp>

using namespace crowdmapf;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      if (!pass) detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

int failures = 0;

void report(int n, const std::string& title, Verdict& v, double secs) {
  std::ostringstream line;
  line << (v.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << title << " (" << std::fixed;
  line.precision(1);
  line << secs << " s)";
  const std::string d = v.detail.str();
  if (!d.empty()) line << " " << d;
  std::cout << line.str() << std::endl;
  if (!v.pass) ++failures;
}

void run(int n, const std::string& title, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto t0 = Clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
  report(n, title, v, seconds_since(t0));
}

// ---------------------------------------------------------------------------

void crowd_fixtures(Verdict& v) {
  const double entering = crowd_reward(0.385, 0.875, 0.75);
  const double leaving = crowd_reward(0.8, 0.5, 0.75);
  v.require(entering == -0.3, "entering gave " + std::to_string(entering));
  v.require(leaving == 0.3, "leaving gave " + std::to_string(leaving));
  v.require(crowd_reward(5.0 / 13.0, 7.0 / 8.0, 0.75) == -0.3, "window fractions 5/13 -> 7/8");
  v.require(crowd_reward(0.5, 0.5, 0.75) == 0.0 && crowd_reward(0.8, 0.9, 0.75) == 0.0, "no-crossing cases");
  v.detail << "entering " << entering << ", leaving " << leaving;
}

void zeta_criterion(Verdict& v) {
  const double a = zeta(8, 20, 0.0), b = zeta(64, 20, 0.3);
  v.require(std::abs(a - 0.7204) <= 1e-4, "zeta(8,20,0) = " + std::to_string(a));
  v.require(b == 0.95, "zeta(64,20,0.3) = " + std::to_string(b));
  v.require(std::abs(a - oracle::zeta_value(8, 20, 0.0)) < 1e-12, "oracle disagreement");
  // 1000-point grid: non-decreasing in A and in d, and always within [floor, cap].
  long points = 0, violations = 0;
  const std::array<int, 10> agents{1, 2, 4, 8, 12, 16, 24, 32, 48, 64};
  const std::array<int, 10> sizes{12, 14, 16, 18, 20, 24, 28, 32, 36, 40};
  for (int m : sizes)
    for (int di = 0; di < 10; ++di) {
      const double d = 0.03 * di;
      double prev = 0.0;
      for (int a2 : agents) {
        if (a2 >= static_cast<int>(m * m * (1 - d))) {
          ++points;
          continue;
        }
        const double z = zeta(a2, m, d);
        ++points;
        if (z < prev - 1e-15 || z < 0.7 || z > 0.95) ++violations;
        if (di > 0 && z < zeta(a2, m, 0.03 * (di - 1)) - 1e-15) ++violations;
        prev = z;
      }
    }
  v.require(points == 1000, "grid size " + std::to_string(points));
  v.require(violations == 0, std::to_string(violations) + " monotonicity violations");
  v.detail << "zeta(8,20,0)=" << a << ", " << points << " grid points";
}

void episode_length_criterion(Verdict& v) {
  struct Case {
    int m;
    double d;
    int a, expect;
  };
  for (Case c : {Case{20, 0.0, 8, 120}, Case{20, 0.3, 64, 424}, Case{10, 0.0, 1, 45}}) {
    const int got = max_episode_length(WorldSpec{c.m, c.d, c.a, 0});
    v.require(got == c.expect && got == oracle::episode_length(c.m, c.d, c.a),
              "L(" + std::to_string(c.m) + "," + std::to_string(c.d) + "," + std::to_string(c.a) + ") = " +
                  std::to_string(got));
  }
  v.detail << "120, 424, 45";
}

void level_criterion(Verdict& v) {
  for (int s = 0; s <= 20; ++s) {
    auto r = level_ranges(s);
    auto o = oracle::level_table(s);
    v.require(r.d_lo == o.d_lo && r.d_hi == o.d_hi && r.s_lo == o.s_lo && r.s_hi == o.s_hi,
              "sigma " + std::to_string(s));
  }
  CurriculumConfig cfg;
  auto st = make_curriculum(cfg);
  std::vector<long> seen{st.plateau_window};
  while (st.level < 6)
    if (observe_episode(st, 0.0, true, WorldSpec{})) seen.push_back(st.plateau_window);
  for (std::size_t k = 0; k < seen.size(); ++k)
    v.require(seen[k] == oracle::plateau_window(1000, static_cast<int>(k)), "n at level " + std::to_string(k));
  v.detail << "n:";
  for (long n : seen) v.detail << " " << n;
}

void gradient_criterion(Verdict& v) {
  const auto t0 = Clock::now();
  GradcheckOptions o;  // 10 trajectories x 25 parameters
  auto res = gradient_check(analytic_gradient, o);
  const double secs = seconds_since(t0);
  v.require(res.passed, "max rel error " + std::to_string(res.max_rel_error) + " at " + res.worst);
  v.require(res.compared >= 250, "only " + std::to_string(res.compared) + " comparisons");
  v.require(secs < 60.0, "took " + std::to_string(secs) + " s");
  v.detail << res.compared << " parameters, max rel error " << res.max_rel_error;
}

// Dihedral images of a 4x4 obstacle bitmask; the pattern is canonical when it is the minimum.
int transform_cell(int idx, int t) {
  int r = idx / 4, c = idx % 4;
  for (int k = 0; k < (t & 3); ++k) {
    int nr = c, nc = 3 - r;
    r = nr;
    c = nc;
  }
  if (t & 4) c = 3 - c;
  return r * 4 + c;
}

bool canonical(unsigned mask) {
  for (int t = 1; t < 8; ++t) {
    unsigned img = 0;
    for (int i = 0; i < 16; ++i)
      if (mask >> i & 1U) img |= 1U << transform_cell(i, t);
    if (img < mask) return false;
  }
  return true;
}

void expert_criterion(Verdict& v) {
  const auto t0 = Clock::now();
  long patterns = 0, instances = 0, solvable = 0, mismatches = 0;
  std::string first;
  for (unsigned mask = 0; mask < (1U << 16); ++mask) {
    if (std::popcount(mask) > 3 || !canonical(mask)) continue;
    ++patterns;
    Grid grid(4);
    std::vector<int> free_cells;
    for (int i = 0; i < 16; ++i) {
      if (mask >> i & 1U)
        grid.set_obstacle(grid.cell_at(static_cast<std::size_t>(i)), true);
      else
        free_cells.push_back(i);
    }
    oracle::JointSpace space(grid, 2);
    for (int g0 : free_cells)
      for (int g1 : free_cells) {
        if (g0 == g1) continue;
        const std::array<int, 2> goals{g0, g1};
        const auto ctg = oracle::cost_to_go(grid, goals);
        for (int s0 : free_cells)
          for (int s1 : free_cells) {
            if (s0 == s1 || s0 == g0 || s1 == g1) continue;
            WorldState w;
            w.grid = grid;
            w.agents.push_back({0, grid.cell_at(static_cast<std::size_t>(s0)), grid.cell_at(static_cast<std::size_t>(g0)), false});
            w.agents.push_back({1, grid.cell_at(static_cast<std::size_t>(s1)), grid.cell_at(static_cast<std::size_t>(g1)), false});
            const std::array<int, 2> starts{s0, s1};
            const long expect = ctg[static_cast<std::size_t>(space.encode(starts))];
            auto res = plan_od_astar(w, SearchBudget{1'000'000, 0});
            ++instances;
            bool ok;
            if (expect == oracle::kNoPath) {
              ok = !res.ok();
            } else {
              ++solvable;
              ok = res.ok() && res.plan->sum_of_costs == expect && verify_plan(w, *res.plan);
            }
            if (!ok && mismatches++ == 0) {
              std::ostringstream ss;
              ss << "mask " << mask << " starts " << s0 << "," << s1 << " goals " << g0 << "," << g1 << " expect "
                 << expect;
              first = ss.str();
            }
          }
      }
  }
  const double enum_secs = seconds_since(t0);
  auto seeded = expert_vs_brute_force(200, 5, 2, 3, 2024);
  const double secs = seconds_since(t0);
  v.require(mismatches == 0, std::to_string(mismatches) + " 4x4 mismatches, first " + first);
  v.require(seeded.passed, std::to_string(seeded.mismatches) + " 5x5 mismatches, first " + seeded.first_failure);
  v.require(secs < 300.0, "took " + std::to_string(secs) + " s");
  v.detail << patterns << " canonical 4x4 patterns, " << instances << " instances (" << solvable << " solvable) in "
           << static_cast<int>(enum_secs) << " s; " << seeded.instances << " seeded 5x5";
}

void dynamics_criterion(Verdict& v) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  long steps = 0, violations = 0, collisions = 0;
  while (steps < 100'000) {
    WorldSpec spec{std::uniform_int_distribution<int>(4, 20)(rng), 0.1 * std::uniform_int_distribution<int>(0, 3)(rng),
                   0, rng()};
    const int cap = std::max(1, static_cast<int>(spec.size * spec.size * (1 - spec.obstacle_density)) / 4);
    spec.num_agents = std::uniform_int_distribution<int>(1, std::min(cap, 64))(rng);
    WorldState w = generate_world(spec);
    std::vector<Action> joint(static_cast<std::size_t>(spec.num_agents));
    for (int t = 0; t < 200 && steps < 100'000; ++t, ++steps) {
      for (auto& a : joint) a = action_from_index(std::uniform_int_distribution<int>(0, kNumActions - 1)(rng));
      auto [next, events] = step(w, joint);
      collisions += events.collision_count();
      try {
        check_invariants(next);
      } catch (const std::exception&) {
        ++violations;
      }
      w = std::move(next);
    }
  }
  long plans = 0, unplanned = 0, bad_replays = 0;
  for (int a : {2, 4, 8, 16, 32, 64})
    for (double d : {0.0, 0.1, 0.2, 0.3})
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        WorldState w = generate_world({20, d, a, seed});
        auto res = plan_expert(w, ExpertOptions{4, {}, seed});
        if (!res.ok()) {
          ++unplanned;
          continue;
        }
        ++plans;
        if (!verify_plan(w, *res.plan)) ++bad_replays;
      }
  const double secs = seconds_since(t0);
  v.require(violations == 0, std::to_string(violations) + " invariant violations");
  v.require(bad_replays == 0, std::to_string(bad_replays) + " plans replayed with collisions");
  v.require(plans > 0, "no expert plans");
  v.require(secs < 60.0, "took " + std::to_string(secs) + " s");
  v.detail << steps << " steps (" << collisions << " collisions rejected), " << plans << " expert plans replayed, "
           << unplanned << " worlds without a plan";
}

void metrics_criterion(Verdict& v) {
  auto res = metrics_oracle_check(50, 11);
  v.require(res.passed, res.detail);
  std::vector<EpisodeRecord> none(4);
  for (auto& r : none) {
    r.spec = {20, 0.1, 8, 0};
    r.makespan = 200;
    r.moves.assign(8, 3);
    r.collision_count = 2;
  }
  std::vector<MetricsRow> rows{compute_metrics(none)};
  const std::string csv = emit_report(rows, ReportFormat::Csv);
  v.require(csv.find("8,0.10,20,4,0.00,-,-,2.00,-") != std::string::npos, "dash row: " + csv);
  v.detail << res.detail << ", dash row ok";
}

TrainConfig pinned_config(int agents, double density, long episodes) {
  TrainConfig cfg;
  cfg.total_episodes = episodes;
  cfg.seed = 1;
  cfg.hyper.learning_rate = 1e-3;
  cfg.curriculum.pin_level = 0;
  cfg.curriculum.fixed_size = 10;
  cfg.curriculum.fixed_density = density;
  cfg.curriculum.fixed_agents = agents;
  return cfg;
}

void learning_criterion(Verdict& v) {
  const auto t0 = Clock::now();
  BenchmarkOptions held_out{{1}, {0.0}, 10, 100, 777, 1};

  auto single = train(pinned_config(1, 0.0, 20'000));
  auto single_params = std::make_shared<const PolicyParams>(single.params);
  const double single_rate = benchmark(PolicyActor{single_params, ActMode::Greedy}, held_out).rows[0].success_rate;
  const double single_secs = seconds_since(t0);

  auto team = train(pinned_config(4, 0.1, 50'000));
  auto team_params = std::make_shared<const PolicyParams>(team.params);
  BenchmarkOptions team_eval{{4}, {0.1}, 10, 100, 777, 1};
  const double team_rate = benchmark(PolicyActor{team_params, ActMode::Greedy}, team_eval).rows[0].success_rate;
  const double random_rate = benchmark(RandomActor{}, team_eval).rows[0].success_rate;
  const double secs = seconds_since(t0);

  v.require(single_rate >= 90.0, "single-agent greedy success " + std::to_string(single_rate) + "%");
  v.require(team_rate - random_rate >= 30.0, "4-agent margin " + std::to_string(team_rate - random_rate) + " points");
  v.require(secs <= 1800.0, "took " + std::to_string(secs) + " s");
  v.detail << "single agent " << single_rate << "% (" << static_cast<int>(single_secs) << " s); 4 agents " << team_rate
           << "% vs random " << random_rate << "%";
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism_criterion(Verdict& v) {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "crowdmapf-acceptance";
  fs::remove_all(root);
  TrainConfig cfg;
  cfg.workers = 1;
  cfg.seed = 42;
  cfg.total_episodes = 1000;
  std::array<std::string, 2> ckpts;
  std::array<std::string, 2> reports;
  for (int k = 0; k < 2; ++k) {
    TrainOptions opts;
    opts.out_dir = (root / ("run" + std::to_string(k))).string();
    auto res = train(cfg, opts);
    ckpts[static_cast<std::size_t>(k)] = file_bytes(res.manifest.final_checkpoint);
  }
  auto params = std::make_shared<const PolicyParams>(load_checkpoint((root / "run0" / "final.ckpt").string()).params);
  BenchmarkOptions grid{{8, 16}, {0.0, 0.2}, 20, 10, 0, 1};
  for (int k = 0; k < 2; ++k) {
    auto res = benchmark(PolicyActor{params, ActMode::Greedy}, grid);
    reports[static_cast<std::size_t>(k)] =
        emit_report(res.rows, ReportFormat::Csv) + emit_record_log(res.records);
  }
  fs::remove_all(root);
  const double secs = seconds_since(t0);
  v.require(!ckpts[0].empty() && ckpts[0] == ckpts[1], "checkpoints differ");
  v.require(reports[0] == reports[1], "eval reports differ");
  v.require(secs <= 300.0, "took " + std::to_string(secs) + " s");
  v.detail << "checkpoint " << ckpts[0].size() << " bytes identical, reports identical";
}

}  // namespace

int main() {
  run(1, "crowd reward fixtures", crowd_fixtures);
  run(2, "crowding threshold values and monotonicity", zeta_criterion);
  run(3, "episode length values", episode_length_criterion);
  run(4, "curriculum ranges and plateau growth", level_criterion);
  run(5, "gradients against finite differences", gradient_criterion);
  run(6, "expert optimality against exhaustive search", expert_criterion);
  run(7, "dynamics invariants and expert replays", dynamics_criterion);
  run(8, "metrics against an independent accumulator", metrics_criterion);
  run(9, "learning runs", learning_criterion);
  run(10, "reproducible training and evaluation", determinism_criterion);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
