#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "curriculum.hpp"
#include "eval.hpp"
#include "expert.hpp"
#include "oracles.hpp"
#include "policy.hpp"
#include "reward.hpp"
#include "world.hpp"

namespace crowdmapf {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelfcheckReport {
  std::vector<CheckResult> checks;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
  std::string text() const {
    std::ostringstream out;
    for (const auto& c : checks)
      out << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
    return out.str();
  }
};

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

using GradientFn = std::function<Gradients(const PolicyParams&, const Trajectory&, const Hyper&)>;

inline Gradients analytic_gradient(const PolicyParams& p, const Trajectory& t, const Hyper& h) {
  return backward(p, t, h);
}

/// Parameters with every block active: default initialisation plus enough head and bias noise
/// that all eight head outputs carry signal.
inline PolicyParams gradcheck_params(std::uint64_t seed) {
  PolicyParams p = init_params(seed);
  std::mt19937_64 rng(seed ^ 0xC0FFEEULL);
  std::normal_distribution<double> head(0.0, 0.3), bias(0.0, 0.05);
  for (double& v : p.block(net::kB_HeadW)) v += head(rng);
  for (auto b : {net::kB_Conv1B, net::kB_Conv2B, net::kB_DenseB, net::kB_HeadB})
    for (double& v : p.block(b)) v += bias(rng);
  return p;
}

/// Random trajectory of 2..6 steps drawn from random small worlds, with mixed demo flags.
inline Trajectory random_trajectory(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(2, 6), agents(1, 4);
  std::uniform_real_distribution<double> u(-1.0, 1.0), dens(0.0, 0.3);
  Trajectory t;
  const int steps = len(rng);
  for (int s = 0; s < steps; ++s) {
    WorldSpec spec{12, dens(rng), agents(rng), rng()};
    WorldState w = generate_world(spec);
    const int id = std::uniform_int_distribution<int>(0, w.num_agents() - 1)(rng);
    TrajectoryStep st;
    st.obs = observe(w, id);
    st.mask = valid_actions(w, id);
    std::vector<Action> options;
    for (Action a : kAllActions)
      if (st.mask.contains(a)) options.push_back(a);
    st.action = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    st.reward = u(rng);
    st.value = u(rng);
    st.blocking = u(rng) > 0.0;
    st.on_goal = u(rng) > 0.0;
    st.demo = u(rng) > 0.3;
    t.steps.push_back(st);
  }
  t.bootstrap = u(rng);
  return t;
}

struct GradcheckOptions {
  int trajectories = 10;
  int params_per_trajectory = 25;
  double h = 1e-5;
  double tolerance = 1e-4;
  double denominator_floor = 1e-4;  // relative error = |a - n| / max(|a|, |n|, floor)
  int max_redraws = 50;             // per parameter, when a perturbation straddles a kink
  std::uint64_t seed = 2024;
};

struct GradcheckResult {
  bool passed = true;
  int compared = 0;
  int skipped_kinks = 0;  // perturbations that changed a ReLU gate or max-pool winner
  double max_rel_error = 0.0;
  std::string worst;  // description of the worst parameter (block, index, values)
};

/// ReLU gates and max-pool winners over a whole trajectory. A central difference is only a
/// valid derivative estimate when both perturbed points share the unperturbed pattern.
inline std::vector<int> activation_pattern(const PolicyParams& p, const Trajectory& traj) {
  auto a = std::make_unique<net::Activations>();
  std::vector<int> pattern;
  for (const auto& s : traj.steps) {
    net::forward_pass(p, s.obs, *a);
    for (double v : net::flat(a->conv1)) pattern.push_back(v > 0.0);
    for (double v : net::flat(a->conv2)) pattern.push_back(v > 0.0);
    for (double v : a->hidden) pattern.push_back(v > 0.0);
    pattern.insert(pattern.end(), a->pool_arg.begin(), a->pool_arg.end());
  }
  return pattern;
}

/// Compares `grad_fn` against central finite differences of compute_losses(...).total. Every
/// block is sampled at least once per trajectory. Perturbations that cross a kink are redrawn
/// (from the same block for the per-block picks); the skip test looks only at the forward
/// pass, so it cannot hide an analytic error.
inline GradcheckResult gradient_check(const GradientFn& grad_fn, const GradcheckOptions& o = {}) {
  std::mt19937_64 rng(o.seed);
  const Hyper hyper;
  GradcheckResult res;
  for (int t = 0; t < o.trajectories; ++t) {
    PolicyParams p = gradcheck_params(rng());
    Trajectory traj = random_trajectory(rng);
    Gradients g = grad_fn(p, traj, hyper);
    const auto base = activation_pattern(p, traj);
    auto draw = [&](int block) {
      if (block < 0) return std::uniform_int_distribution<std::size_t>(0, net::kParamCount - 1)(rng);
      const auto& blk = net::kLayout[static_cast<std::size_t>(block)];
      return blk.offset + std::uniform_int_distribution<std::size_t>(0, blk.size - 1)(rng);
    };
    std::vector<int> slots;
    for (int b = 0; b < static_cast<int>(net::kLayout.size()); ++b) slots.push_back(b);
    while (static_cast<int>(slots.size()) < o.params_per_trajectory) slots.push_back(-1);
    for (int slot : slots) {
      for (int attempt = 0; attempt <= o.max_redraws; ++attempt) {
        const std::size_t i = draw(slot);
        PolicyParams plus = p, minus = p;
        plus[i] += o.h;
        minus[i] -= o.h;
        if (activation_pattern(plus, traj) != base || activation_pattern(minus, traj) != base) {
          ++res.skipped_kinks;
          continue;
        }
        const double numeric =
            (compute_losses(plus, traj, hyper).total - compute_losses(minus, traj, hyper).total) / (2.0 * o.h);
        const double analytic = g[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), o.denominator_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++res.compared;
        if (rel > res.max_rel_error || !std::isfinite(rel)) {
          res.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
          std::ostringstream ss;
          ss << "block " << net::block_of(i) << " index " << i << " analytic " << analytic << " numeric " << numeric;
          res.worst = ss.str();
        }
        break;
      }
    }
  }
  res.passed = res.max_rel_error <= o.tolerance && res.compared == o.trajectories * o.params_per_trajectory;
  return res;
}

// ---------------------------------------------------------------------------
// Expert vs brute force
// ---------------------------------------------------------------------------

struct ExpertCheckResult {
  bool passed = true;
  long instances = 0;
  long mismatches = 0;
  std::string first_failure;
};

/// OD A* sum-of-costs against exhaustive joint search on seeded m x m instances.
inline ExpertCheckResult expert_vs_brute_force(int instances, int size, int min_agents, int max_agents,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> agents(min_agents, max_agents);
  std::uniform_int_distribution<int> dens(0, 2);
  ExpertCheckResult res;
  for (int k = 0; k < instances; ++k) {
    WorldSpec spec{size, 0.1 * dens(rng), agents(rng), rng()};
    WorldState w = generate_world(spec);
    auto od = plan_od_astar(w, SearchBudget{5'000'000, 0});
    const long brute = oracle::brute_force_sum_of_costs(w);
    ++res.instances;
    bool ok = false;
    if (od.ok())
      ok = od.plan->sum_of_costs == brute && verify_plan(w, *od.plan);
    else
      ok = od.status == PlanStatus::Infeasible && brute == oracle::kNoPath;
    if (!ok) {
      ++res.mismatches;
      if (res.first_failure.empty()) {
        std::ostringstream ss;
        ss << "spec (m=" << spec.size << ", d=" << spec.obstacle_density << ", A=" << spec.num_agents
           << ", seed=" << spec.seed << ") od=" << (od.ok() ? std::to_string(od.plan->sum_of_costs) : to_string(od.status))
           << " brute=" << (brute == oracle::kNoPath ? std::string("none") : std::to_string(brute));
        res.first_failure = ss.str();
      }
    }
  }
  res.passed = res.mismatches == 0;
  return res;
}

// ---------------------------------------------------------------------------
// Metrics oracle
// ---------------------------------------------------------------------------

inline std::vector<EpisodeRecord> random_record_batch(std::mt19937_64& rng, double success_probability) {
  std::uniform_int_distribution<int> count(1, 120), agents(1, 16), span(1, 200), col(0, 5);
  std::bernoulli_distribution succ(success_probability);
  WorldSpec spec{20, 0.1, agents(rng), 0};
  const int n = count(rng);
  std::vector<EpisodeRecord> batch;
  for (int i = 0; i < n; ++i) {
    EpisodeRecord r;
    r.spec = spec;
    r.spec.seed = rng();
    r.success = succ(rng);
    r.makespan = span(rng);
    for (int a = 0; a < spec.num_agents; ++a)
      r.moves.push_back(std::uniform_int_distribution<int>(0, r.makespan)(rng));
    r.collision_count = col(rng);
    batch.push_back(r);
  }
  return batch;
}

inline bool close(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::abs(*a - *b) <= 1e-9 * std::max(1.0, std::abs(*b));
}

inline CheckResult metrics_oracle_check(int batches, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int b = 0; b < batches; ++b) {
    const double p = b % 10 == 0 ? 0.0 : (b % 10 == 1 ? 1.0 : 0.6);
    auto batch = random_record_batch(rng, p);
    oracle::MetricsTally tally;
    for (const auto& r : batch) tally.add(r);
    MetricsRow row = compute_metrics(batch);
    const bool ok = close(row.success_rate, tally.success_rate()) && close(row.mean_makespan, tally.makespan()) &&
                    close(row.mean_total_moves, tally.moves()) &&
                    close(row.mean_collision_count, tally.collision_count()) &&
                    close(row.collision_rate, tally.collision_rate());
    if (!ok) return {"metrics oracle", false, "batch " + std::to_string(b) + " differs"};
    std::vector<MetricsRow> rows{row};
    const std::string csv = emit_report(rows, ReportFormat::Csv);
    const bool dash = csv.find(",-,-,") != std::string::npos;
    if ((tally.successes == 0) != dash) return {"metrics oracle", false, "dash rendering wrong in batch " + std::to_string(b)};
  }
  return {"metrics oracle", true, std::to_string(batches) + " batches"};
}

// ---------------------------------------------------------------------------
// Arithmetic oracles
// ---------------------------------------------------------------------------

inline CheckResult episode_length_check() {
  struct Case {
    int m;
    double d;
    int a, expect;
  };
  for (Case c : {Case{20, 0.0, 8, 120}, Case{20, 0.3, 64, 424}, Case{10, 0.0, 1, 45}}) {
    const int got = max_episode_length(WorldSpec{c.m, c.d, c.a, 0});
    if (got != c.expect || got != oracle::episode_length(c.m, c.d, c.a))
      return {"episode length", false, "L(" + std::to_string(c.m) + ") = " + std::to_string(got)};
  }
  for (int m = 4; m <= 40; ++m)
    for (int di = 0; di <= 6; ++di)
      for (int a : {1, 2, 8, 64})
        if (max_episode_length(WorldSpec{m, 0.1 * di, a, 0}) != oracle::episode_length(m, 0.1 * di, a))
          return {"episode length", false, "grid mismatch at m=" + std::to_string(m)};
  return {"episode length", true, "L(20,0,8)=120 L(20,0.3,64)=424 L(10,0,1)=45"};
}

inline CheckResult zeta_check() {
  const double z1 = zeta(8, 20, 0.0), z2 = zeta(64, 20, 0.3);
  if (std::abs(z1 - 0.7204) > 1e-4 || z2 != 0.95)
    return {"zeta", false, "zeta(8,20,0)=" + std::to_string(z1) + " zeta(64,20,0.3)=" + std::to_string(z2)};
  for (int i = 0; i < 1000; ++i) {
    const int a = 1 + i % 100;
    const double d = 0.3 * (i / 100) / 10.0;
    if (std::abs(zeta(a, 20, d) - oracle::zeta_value(a, 20, d)) > 1e-12) return {"zeta", false, "oracle mismatch"};
    if (a > 1 && zeta(a, 20, d) < zeta(a - 1, 20, d)) return {"zeta", false, "not monotone in A"};
  }
  return {"zeta", true, "0.7204 / 0.95"};
}

inline CheckResult level_ranges_check() {
  for (int s = 0; s <= 20; ++s) {
    LevelRanges r = level_ranges(s);
    oracle::Ranges o = oracle::level_table(s);
    if (r.d_lo != o.d_lo || r.d_hi != o.d_hi || r.s_lo != o.s_lo || r.s_hi != o.s_hi)
      return {"level ranges", false, "sigma " + std::to_string(s)};
  }
  // Plateau window growth through real level-ups.
  CurriculumConfig cfg;
  cfg.initial_plateau_window = 3;
  CurriculumState st = make_curriculum(cfg);
  for (int level = 0; level < 8; ++level) {
    if (st.plateau_window != oracle::plateau_window(3, level))
      return {"level ranges", false, "plateau window at level " + std::to_string(level)};
    while (!observe_episode(st, 0.0, true, WorldSpec{})) {
    }
  }
  return {"level ranges", true, "sigma 0..20, n growth"};
}

inline CheckResult checkpoint_check() {
  Checkpoint ck;
  ck.params = gradcheck_params(7);
  ck.curriculum = make_curriculum();
  std::stringstream ss;
  write_checkpoint(ss, ck);
  return {"checkpoint round trip", read_checkpoint(ss) == ck, ""};
}

struct SelfcheckOptions {
  GradientFn grad_fn = analytic_gradient;
  int expert_instances = 60;
};

inline SelfcheckReport run_selfcheck(const SelfcheckOptions& o = {}) {
  SelfcheckReport rep;
  auto g = gradient_check(o.grad_fn);
  std::ostringstream gd;
  gd << g.compared << " parameters (" << g.skipped_kinks << " kink redraws), max rel error " << g.max_rel_error;
  if (!g.passed) gd << " at " << g.worst;
  rep.checks.push_back({"gradient finite differences", g.passed, gd.str()});

  auto e = expert_vs_brute_force(o.expert_instances, 5, 2, 3, 99);
  rep.checks.push_back({"expert vs brute force", e.passed,
                        std::to_string(e.instances) + " instances" + (e.passed ? "" : ", first: " + e.first_failure)});
  rep.checks.push_back(metrics_oracle_check(50, 11));
  rep.checks.push_back(episode_length_check());
  rep.checks.push_back(zeta_check());
  rep.checks.push_back(level_ranges_check());
  {
    const double in = crowd_reward(5.0 / 13.0, 7.0 / 8.0, 0.75), out = crowd_reward(0.8, 0.5, 0.75);
    rep.checks.push_back({"crowd reward", in == -0.3 && out == 0.3, ""});
  }
  rep.checks.push_back(checkpoint_check());
  return rep;
}

}  // namespace crowdmapf
