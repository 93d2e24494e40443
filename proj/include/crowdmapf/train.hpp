#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "curriculum.hpp"
#include "eval.hpp"
#include "expert.hpp"
#include "policy.hpp"
#include "reward.hpp"
#include "world.hpp"

namespace crowdmapf {

inline constexpr const char* kCodeVersion = "crowdmapf 0.1.0";

// ---------------------------------------------------------------------------
// Global parameter store
// ---------------------------------------------------------------------------

/// The only object shared between workers. Snapshots are immutable; updates are serialized.
class ParameterStore {
 public:
  explicit ParameterStore(PolicyParams initial) : params_(std::make_shared<const PolicyParams>(std::move(initial))) {}

  std::shared_ptr<const PolicyParams> snapshot() const {
    std::lock_guard lock(mu_);
    return params_;
  }

  /// Clip-and-step against the current global value, as one atomic unit. Returns the new version.
  long apply(const Gradients& grads, const Hyper& hyper) {
    std::lock_guard lock(mu_);
    params_ = std::make_shared<const PolicyParams>(apply_gradients(*params_, grads, hyper));
    return ++version_;
  }

  long version() const {
    std::lock_guard lock(mu_);
    return version_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const PolicyParams> params_;
  long version_ = 0;
};

// ---------------------------------------------------------------------------
// One training episode
// ---------------------------------------------------------------------------

struct EpisodeOutcome {
  WorldSpec spec;
  bool demo = false;
  bool success = false;
  int length = 0;
  int learner = 0;
  double mean_return = 0.0;  // mean per-agent episode return (curriculum signal)
  LossReport loss;
};

/// Rolls out one episode and returns the learner's trajectory. Every agent acts from `params`
/// (self-play) or from the expert plan in demonstration mode; one randomly chosen agent is the
/// learner whose steps are recorded.
template <class Rng>
Trajectory collect_episode(const PolicyParams& params, const WorldSpec& spec, bool demo, const TrainConfig& cfg,
                           Rng& rng, EpisodeOutcome& outcome, net::Activations& scratch) {
  WorldState world = generate_world(spec);
  const int n = world.num_agents();
  const int max_len = max_episode_length(spec, cfg.env.alpha, cfg.env.beta);
  const CrowdParams crowd{cfg.env.crowd_window,
                          zeta(n, spec.size, spec.obstacle_density, cfg.env.zeta_floor, cfg.env.zeta_cap)};
  const int learner = std::uniform_int_distribution<int>(0, n - 1)(rng);

  std::optional<JointPlan> plan;
  if (demo) {
    ExpertOptions opts = cfg.expert;
    opts.order_seed = rng();
    auto res = plan_expert(world, opts);
    if (res.ok()) plan = std::move(res.plan);
    else demo = false;  // no demonstration available: explore instead
  }

  outcome = {};
  outcome.spec = spec;
  outcome.demo = demo;
  outcome.learner = learner;

  Trajectory traj;
  std::vector<double> returns(static_cast<std::size_t>(n), 0.0);
  std::vector<Action> joint(static_cast<std::size_t>(n), Action::Stay);
  EpisodeStatus status = episode_status(world, max_len);
  while (status == EpisodeStatus::Running) {
    TrajectoryStep rec;
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (demo) {
        joint[ui] = expert_action(*plan, i, world.t);
        if (i == learner) {
          rec.obs = observe(world, i);
          rec.mask = valid_actions(world, i);
        }
        continue;
      }
      Observation obs = observe(world, i);
      ActionSet mask = valid_actions(world, i);
      ForwardOutput out = forward(params, obs, scratch);
      joint[ui] = act(out, mask, rng, ActMode::Sample);
      if (i == learner) {
        rec.obs = obs;
        rec.mask = mask;
        rec.value = out.value;
      }
    }
    const auto lu = static_cast<std::size_t>(learner);
    rec.action = joint[lu];
    rec.demo = demo;
    rec.on_goal = world.agents[lu].on_goal;
    rec.blocking = is_blocking(world, learner, cfg.reward.blocking_detour);

    auto [next, events] = step(world, joint);
    StepReward r = step_reward(world, joint, events, next, cfg.reward, crowd);
    for (std::size_t i = 0; i < returns.size(); ++i) returns[i] += r.per_agent[i];
    rec.reward = r.per_agent[lu];
    traj.steps.push_back(rec);
    world = std::move(next);
    status = episode_status(world, max_len);
  }
  traj.bootstrap = 0.0;
  if (status == EpisodeStatus::Timeout) traj.bootstrap = forward(params, observe(world, learner), scratch).value;

  outcome.success = status == EpisodeStatus::Success;
  outcome.length = world.t;
  double sum = 0.0;
  for (double v : returns) sum += v;
  outcome.mean_return = sum / n;
  return traj;
}

// ---------------------------------------------------------------------------
// Orchestrator
// ---------------------------------------------------------------------------

struct RunManifest {
  nlohmann::json config;
  std::string code_version = kCodeVersion;
  std::vector<long> episodes_per_level;
  long total_episodes = 0;
  long demo_episodes = 0;
  long successes = 0;
  std::string final_checkpoint;
  std::string final_metrics;  // pointer to an eval report, filled by the caller when one exists
  double wall_seconds = 0.0;
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"config", m.config},
          {"code_version", m.code_version},
          {"episodes_per_level", m.episodes_per_level},
          {"total_episodes", m.total_episodes},
          {"demo_episodes", m.demo_episodes},
          {"successes", m.successes},
          {"final_checkpoint", m.final_checkpoint},
          {"final_metrics", m.final_metrics},
          {"wall_seconds", m.wall_seconds}};
}

struct TrainProgress {
  long episode = 0;  // episodes completed
  long total = 0;
  int level = 0;
  double recent_success = 0.0;  // fraction over the last progress interval
  double recent_return = 0.0;
};

struct TrainOptions {
  std::string out_dir;                 // empty: keep everything in memory
  std::optional<Checkpoint> resume;    // continue a previous run (same config)
  std::function<void(const TrainProgress&)> on_progress;
  long progress_interval = 1000;
};

struct TrainResult {
  PolicyParams params;
  CurriculumState curriculum;
  RunManifest manifest;
  Checkpoint final_checkpoint;
};

namespace detail {

inline std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

inline void restore_rng(std::mt19937_64& rng, const std::string& state) {
  std::istringstream ss(state);
  ss >> rng;
  if (!ss) throw std::runtime_error("checkpoint: corrupt RNG state");
}

}  // namespace detail

/// A3C-style training: W workers pull snapshots, roll out, compute gradients and push them to
/// the shared store; the curriculum is owned here and accessed under one lock. W = 1 is
/// bit-deterministic for a fixed seed.
inline TrainResult train(const TrainConfig& cfg, const TrainOptions& opts = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  long done = 0, demos = 0, successes = 0;
  std::mt19937_64 sched_rng(detail::mix_seed(cfg.seed, 0x5C4ED));
  std::vector<std::mt19937_64> worker_rngs;
  for (int w = 0; w < cfg.workers; ++w)
    worker_rngs.emplace_back(detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(w) + 1));
  CurriculumState curriculum = make_curriculum(cfg.curriculum);
  PolicyParams initial = init_params(detail::mix_seed(cfg.seed, 0x1A17));

  if (opts.resume) {
    const Checkpoint& ck = *opts.resume;
    if (!ck.curriculum) throw std::runtime_error("resume: checkpoint carries no curriculum state");
    const auto& meta = ck.meta;
    // Only the episode budget may change between the original run and its continuation.
    auto saved = meta.at("config");
    auto now = to_json(cfg);
    saved.erase("total_episodes");
    now.erase("total_episodes");
    if (saved != now) throw std::runtime_error("resume: config differs from the checkpointed run");
    initial = ck.params;
    curriculum = *ck.curriculum;
    done = meta.at("episodes").get<long>();
    demos = meta.at("demo_episodes").get<long>();
    successes = meta.at("successes").get<long>();
    detail::restore_rng(sched_rng, meta.at("sched_rng").get<std::string>());
    auto states = meta.at("worker_rngs").get<std::vector<std::string>>();
    if (states.size() != worker_rngs.size()) throw std::runtime_error("resume: worker count differs");
    for (std::size_t w = 0; w < states.size(); ++w) detail::restore_rng(worker_rngs[w], states[w]);
  }

  ParameterStore store(std::move(initial));
  std::mutex mu;  // guards curriculum, counters, scheduler RNG, checkpoint writes
  long claimed = done;
  long window_success = 0, window_count = 0;
  double window_return = 0.0;
  std::exception_ptr failure;

  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  // Caller holds `mu`. Worker RNG states are exact only when W = 1 (or between episodes).
  auto make_checkpoint = [&]() {
    Checkpoint ck;
    ck.params = *store.snapshot();
    ck.curriculum = curriculum;
    std::vector<std::string> states;
    for (const auto& r : worker_rngs) states.push_back(detail::rng_state(r));
    ck.meta = {{"config", to_json(cfg)},    {"episodes", done},
               {"demo_episodes", demos},     {"successes", successes},
               {"sched_rng", detail::rng_state(sched_rng)}, {"worker_rngs", states},
               {"code_version", kCodeVersion}};
    return ck;
  };

  auto worker = [&](int w) {
    try {
      auto scratch = std::make_unique<net::Activations>();
      auto& rng = worker_rngs[static_cast<std::size_t>(w)];
      for (;;) {
        WorldSpec spec;
        bool demo = false;
        {
          std::lock_guard lock(mu);
          if (failure || claimed >= cfg.total_episodes) return;
          ++claimed;
          spec = sample_spec(curriculum, sched_rng);
          demo = demo_mode(sched_rng, cfg.curriculum.demo_probability);
        }
        auto params = store.snapshot();
        EpisodeOutcome outcome;
        Trajectory traj = collect_episode(*params, spec, demo, cfg, rng, outcome, *scratch);
        Gradients grads = backward(*params, traj, cfg.hyper, &outcome.loss);
        store.apply(grads, cfg.hyper);

        std::lock_guard lock(mu);
        observe_episode(curriculum, outcome.mean_return, outcome.success, outcome.spec);
        ++done;
        demos += outcome.demo ? 1 : 0;
        successes += outcome.success ? 1 : 0;
        ++window_count;
        window_success += outcome.success ? 1 : 0;
        window_return += outcome.mean_return;
        if (opts.on_progress && done % opts.progress_interval == 0) {
          opts.on_progress({done, cfg.total_episodes, curriculum.level,
                            static_cast<double>(window_success) / static_cast<double>(window_count),
                            window_return / static_cast<double>(window_count)});
          window_success = window_count = 0;
          window_return = 0.0;
        }
        if (!opts.out_dir.empty() && done % cfg.checkpoint_interval == 0)
          save_checkpoint((std::filesystem::path(opts.out_dir) / "checkpoint.ckpt").string(), make_checkpoint());
      }
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  };

  if (cfg.workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  TrainResult result;
  result.params = *store.snapshot();
  result.curriculum = curriculum;
  result.final_checkpoint = make_checkpoint();
  RunManifest& m = result.manifest;
  m.config = to_json(cfg);
  m.episodes_per_level = curriculum.episodes_per_level;
  m.total_episodes = done;
  m.demo_episodes = demos;
  m.successes = successes;
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!opts.out_dir.empty()) {
    const auto dir = std::filesystem::path(opts.out_dir);
    m.final_checkpoint = (dir / "final.ckpt").string();
    save_checkpoint(m.final_checkpoint, result.final_checkpoint);
    std::ofstream(dir / "manifest.json") << to_json(m).dump(2) << "\n";
  }
  return result;
}

}  // namespace crowdmapf
