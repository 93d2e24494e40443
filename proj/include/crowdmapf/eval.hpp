#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "expert.hpp"
#include "policy.hpp"
#include "world.hpp"

namespace crowdmapf {

// ---------------------------------------------------------------------------
// Actors
// ---------------------------------------------------------------------------

/// Learned policy; every agent runs the same parameters on its own observation.
struct PolicyActor {
  std::shared_ptr<const PolicyParams> params;
  ActMode mode = ActMode::Greedy;
};

/// Centralised expert plan executed open-loop.
struct ExpertActor {
  ExpertOptions options;
};

/// Uniformly random valid action per agent.
struct RandomActor {};

/// Every agent stays put.
struct StayActor {};

using ActorSpec = std::variant<PolicyActor, ExpertActor, RandomActor, StayActor>;

inline std::string actor_name(const ActorSpec& a) {
  struct {
    std::string operator()(const PolicyActor& p) const {
      return p.mode == ActMode::Greedy ? "policy-greedy" : "policy-sample";
    }
    std::string operator()(const ExpertActor&) const { return "expert"; }
    std::string operator()(const RandomActor&) const { return "random"; }
    std::string operator()(const StayActor&) const { return "stay"; }
  } visitor;
  return std::visit(visitor, a);
}

// ---------------------------------------------------------------------------
// Records and metrics
// ---------------------------------------------------------------------------

struct EpisodeRecord {
  WorldSpec spec;
  bool success = false;
  int makespan = 0;             // steps until the last arrival; L on timeout
  std::vector<int> moves;       // non-idle (successful) moves per agent
  int collision_count = 0;
  std::uint64_t seed = 0;       // actor seed (world seed lives in spec)

  long total_moves() const { return std::accumulate(moves.begin(), moves.end(), 0L); }

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct MetricsRow {
  int num_agents = 0;
  double density = 0.0;
  int size = 0;
  int episodes = 0;
  double success_rate = 0.0;            // percent
  std::optional<double> mean_makespan;  // successful episodes only
  std::optional<double> mean_total_moves;
  double mean_collision_count = 0.0;    // all episodes
  std::optional<double> collision_rate; // mean_collision_count / mean_makespan

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline MetricsRow compute_metrics(std::span<const EpisodeRecord> records) {
  if (records.empty()) throw std::invalid_argument("compute_metrics: no records");
  MetricsRow row;
  const WorldSpec& first = records.front().spec;
  row.num_agents = first.num_agents;
  row.density = first.obstacle_density;
  row.size = first.size;
  row.episodes = static_cast<int>(records.size());
  long successes = 0, makespan_sum = 0, moves_sum = 0, collisions = 0;
  for (const auto& r : records) {
    if (r.spec.num_agents != first.num_agents || r.spec.obstacle_density != first.obstacle_density ||
        r.spec.size != first.size)
      throw std::invalid_argument("compute_metrics: records mix configurations");
    collisions += r.collision_count;
    if (!r.success) continue;
    ++successes;
    makespan_sum += r.makespan;
    moves_sum += r.total_moves();
  }
  const auto n = static_cast<double>(records.size());
  row.success_rate = 100.0 * static_cast<double>(successes) / n;
  row.mean_collision_count = static_cast<double>(collisions) / n;
  if (successes > 0) {
    row.mean_makespan = static_cast<double>(makespan_sum) / static_cast<double>(successes);
    row.mean_total_moves = static_cast<double>(moves_sum) / static_cast<double>(successes);
    if (*row.mean_makespan > 0.0) row.collision_rate = row.mean_collision_count / *row.mean_makespan;
  }
  return row;
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

/// Per-episode driver that turns an ActorSpec into joint actions.
class ActorDriver {
 public:
  ActorDriver(const ActorSpec& spec, const WorldState& world, std::uint64_t seed)
      : spec_(spec), rng_(seed), scratch_(std::make_unique<net::Activations>()) {
    if (auto* e = std::get_if<ExpertActor>(&spec_)) {
      ExpertOptions opts = e->options;
      opts.order_seed = seed;
      auto res = plan_expert(world, opts);
      if (res.ok()) plan_ = std::move(res.plan);
    }
    if (auto* p = std::get_if<PolicyActor>(&spec_); p && !p->params)
      throw std::invalid_argument("PolicyActor without parameters");
  }

  std::vector<Action> joint_action(const WorldState& s) {
    const int n = s.num_agents();
    std::vector<Action> joint(static_cast<std::size_t>(n), Action::Stay);
    for (int i = 0; i < n; ++i) {
      auto ui = static_cast<std::size_t>(i);
      if (auto* p = std::get_if<PolicyActor>(&spec_)) {
        auto out = forward(*p->params, observe(s, i), *scratch_);
        joint[ui] = act(out, valid_actions(s, i), rng_, p->mode);
      } else if (std::holds_alternative<ExpertActor>(spec_)) {
        joint[ui] = plan_ ? expert_action(*plan_, i, s.t) : Action::Stay;
      } else if (std::holds_alternative<RandomActor>(spec_)) {
        ActionSet mask = valid_actions(s, i);
        std::vector<Action> options;
        for (Action a : kAllActions)
          if (mask.contains(a)) options.push_back(a);
        joint[ui] = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng_)];
      }
    }
    return joint;
  }

 private:
  ActorSpec spec_;
  std::mt19937_64 rng_;
  std::unique_ptr<net::Activations> scratch_;
  std::optional<JointPlan> plan_;
};

}  // namespace detail

/// Rolls out one episode from `world` until Success or Timeout at max_episode_length(spec).
/// `trace`, when given, receives every joint action (for replay files).
inline EpisodeRecord run_episode(const ActorSpec& actor, const WorldSpec& spec, WorldState world,
                                 std::uint64_t seed, std::vector<std::vector<Action>>* trace = nullptr) {
  check_invariants(world);
  const int max_len = max_episode_length(spec);
  detail::ActorDriver driver(actor, world, seed);
  EpisodeRecord rec;
  rec.spec = spec;
  rec.seed = seed;
  rec.moves.assign(static_cast<std::size_t>(spec.num_agents), 0);
  EpisodeStatus status = episode_status(world, max_len);
  while (status == EpisodeStatus::Running) {
    auto joint = driver.joint_action(world);
    auto [next, events] = step(world, joint);
    for (std::size_t i = 0; i < events.agents.size(); ++i) rec.moves[i] += events.agents[i].moved ? 1 : 0;
    rec.collision_count += events.collision_count();
    if (trace) trace->push_back(joint);
    world = std::move(next);
    status = episode_status(world, max_len);
  }
  rec.success = status == EpisodeStatus::Success;
  rec.makespan = rec.success ? world.t : max_len;
  return rec;
}

inline EpisodeRecord run_episode(const ActorSpec& actor, const WorldSpec& spec, std::uint64_t seed,
                                 std::vector<std::vector<Action>>* trace = nullptr) {
  return run_episode(actor, spec, generate_world(spec), seed, trace);
}

/// World seed and actor seed of environment `index` in configuration (A, d, m).
inline std::pair<std::uint64_t, std::uint64_t> benchmark_seeds(std::uint64_t base_seed, int agents,
                                                                double density, int size, int index) {
  std::uint64_t cfg = detail::mix_seed(static_cast<std::uint64_t>(agents),
                                       static_cast<std::uint64_t>(std::llround(density * 1e6)) ^
                                           (static_cast<std::uint64_t>(size) << 40));
  std::uint64_t env = detail::mix_seed(detail::mix_seed(base_seed, cfg), static_cast<std::uint64_t>(index));
  return {env, detail::splitmix64(env ^ 0xA5A5A5A5A5A5A5A5ULL)};
}

struct BenchmarkOptions {
  std::vector<int> agent_counts{8, 16, 32, 64};
  std::vector<double> densities{0.0, 0.1, 0.2, 0.3};
  int size = 20;
  int n_envs = 100;
  std::uint64_t base_seed = 0;
  int threads = 1;
};

struct BenchmarkResult {
  std::vector<MetricsRow> rows;
  std::vector<EpisodeRecord> records;  // ordered like rows, n_envs per row
};

/// One MetricsRow per (A, d), rows ordered by A then d. Results do not depend on `threads`.
inline BenchmarkResult benchmark(const ActorSpec& actor, const BenchmarkOptions& opts) {
  if (opts.n_envs < 1 || opts.threads < 1) throw std::invalid_argument("benchmark: n_envs and threads must be >= 1");
  auto agents = opts.agent_counts;
  auto densities = opts.densities;
  std::sort(agents.begin(), agents.end());
  agents.erase(std::unique(agents.begin(), agents.end()), agents.end());
  std::sort(densities.begin(), densities.end());
  densities.erase(std::unique(densities.begin(), densities.end()), densities.end());

  struct Job {
    WorldSpec spec;
    std::uint64_t actor_seed;
  };
  std::vector<Job> jobs;
  for (int a : agents)
    for (double d : densities)
      for (int i = 0; i < opts.n_envs; ++i) {
        auto [world_seed, actor_seed] = benchmark_seeds(opts.base_seed, a, d, opts.size, i);
        jobs.push_back({WorldSpec{opts.size, d, a, world_seed}, actor_seed});
      }

  BenchmarkResult result;
  result.records.resize(jobs.size());
  auto run_range = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t j = worker; j < jobs.size(); j += stride)
      result.records[j] = run_episode(actor, jobs[j].spec, jobs[j].actor_seed);
  };
  if (opts.threads == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < opts.threads; ++w)
      pool.emplace_back(run_range, static_cast<std::size_t>(w), static_cast<std::size_t>(opts.threads));
    for (auto& t : pool) t.join();
  }
  for (std::size_t start = 0; start < jobs.size(); start += static_cast<std::size_t>(opts.n_envs))
    result.rows.push_back(compute_metrics(
        std::span<const EpisodeRecord>(result.records).subspan(start, static_cast<std::size_t>(opts.n_envs))));
  return result;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class ReportFormat { Csv, Markdown };

namespace detail {

/// Half-up rounding to `decimals` places, rendered with exactly that many digits.
inline std::string fixed_half_up(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double rounded = std::floor(v * scale + 0.5 + 1e-9) / scale;
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(decimals) << rounded;
  return ss.str();
}

inline std::vector<std::string> report_cells(const MetricsRow& r) {
  auto opt = [](const std::optional<double>& v, int decimals) {
    return v ? fixed_half_up(*v, decimals) : std::string("-");
  };
  return {std::to_string(r.num_agents),
          fixed_half_up(r.density, 2),
          std::to_string(r.size),
          std::to_string(r.episodes),
          fixed_half_up(r.success_rate, 2),
          opt(r.mean_makespan, 0),
          opt(r.mean_total_moves, 0),
          fixed_half_up(r.mean_collision_count, 2),
          opt(r.collision_rate, 2)};
}

}  // namespace detail

inline const std::vector<std::string>& report_header() {
  static const std::vector<std::string> h{"agents",   "density",     "size",
                                          "episodes", "success_rate", "makespan",
                                          "total_moves", "collision_count", "collision_rate"};
  return h;
}

/// Success rate, collision count and collision rate with 2 decimals; makespan and total moves
/// as integers; all rounded half-up. Absent values render as "-".
inline std::string emit_report(std::span<const MetricsRow> rows, ReportFormat format) {
  if (rows.empty()) throw std::invalid_argument("emit_report: no rows");
  std::ostringstream out;
  const auto& header = report_header();
  auto join = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (format == ReportFormat::Csv) {
        line += (i ? "," : "") + cells[i];
      } else {
        line += "| " + cells[i] + " ";
      }
    }
    if (format == ReportFormat::Markdown) line += "|";
    return line;
  };
  out << join(header) << "\n";
  if (format == ReportFormat::Markdown) {
    std::vector<std::string> sep(header.size(), "---");
    out << join(sep) << "\n";
  }
  for (const auto& r : rows) out << join(detail::report_cells(r)) << "\n";
  return out.str();
}

inline nlohmann::json to_json(const EpisodeRecord& r) {
  return {{"agents", r.spec.num_agents}, {"density", r.spec.obstacle_density}, {"size", r.spec.size},
          {"world_seed", r.spec.seed},    {"seed", r.seed},                      {"success", r.success},
          {"makespan", r.makespan},       {"moves", r.moves},                    {"collisions", r.collision_count}};
}

inline EpisodeRecord record_from_json(const nlohmann::json& j) {
  EpisodeRecord r;
  r.spec.num_agents = j.at("agents").get<int>();
  r.spec.obstacle_density = j.at("density").get<double>();
  r.spec.size = j.at("size").get<int>();
  r.spec.seed = j.at("world_seed").get<std::uint64_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.success = j.at("success").get<bool>();
  r.makespan = j.at("makespan").get<int>();
  r.moves = j.at("moves").get<std::vector<int>>();
  r.collision_count = j.at("collisions").get<int>();
  return r;
}

/// One JSON object per line.
inline std::string emit_record_log(std::span<const EpisodeRecord> records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

}  // namespace crowdmapf
