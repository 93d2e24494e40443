#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curriculum.hpp"
#include "eval.hpp"
#include "expert.hpp"
#include "policy.hpp"
#include "reward.hpp"
#include "world.hpp"

namespace crowdmapf {

using nlohmann::json;

/// Episode-length coefficients and generator constants.
struct EnvConfig {
  double alpha = 4.0;  // L = floor(alpha * m * (1 + d) + beta * A)
  double beta = 5.0;
  int crowd_window = 5;
  double zeta_floor = kZetaFloor;
  double zeta_cap = kZetaCap;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

struct EvalConfig {
  std::vector<int> agent_counts{8, 16, 32, 64};
  std::vector<double> densities{0.0, 0.1, 0.2, 0.3};
  int size = 20;
  int n_envs = 100;
  std::uint64_t base_seed = 0;
  bool greedy = true;
  int threads = 1;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct TrainConfig {
  int workers = 1;
  long total_episodes = 20'000;
  long checkpoint_interval = 1'000;
  std::uint64_t seed = 0;
  Hyper hyper;
  CurriculumConfig curriculum;
  RewardConstants reward;
  EnvConfig env;
  ExpertOptions expert;
  EvalConfig eval;

  void validate() const {
    if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
    if (total_episodes < 1 || checkpoint_interval < 1)
      throw std::invalid_argument("config: episode counts and intervals must be positive");
    hyper.validate();
    curriculum.validate();
    if (env.crowd_window < 3 || env.crowd_window % 2 == 0)
      throw std::invalid_argument("config: env.crowd_window must be odd and >= 3");
    if (!(env.zeta_floor > 0.0 && env.zeta_floor <= env.zeta_cap && env.zeta_cap <= 1.0))
      throw std::invalid_argument("config: need 0 < zeta_floor <= zeta_cap <= 1");
    if (!(env.alpha > 0.0) || env.beta < 0.0) throw std::invalid_argument("config: alpha must be > 0, beta >= 0");
    if (reward.blocking_detour < 1) throw std::invalid_argument("config: reward.blocking_detour must be >= 1");
    if (expert.od_agent_cap < 0 || expert.od_agent_cap > kMaxOdAgents)
      throw std::invalid_argument("config: expert.od_agent_cap must lie in [0, 4]");
    if (expert.budget.max_expansions < 1 || expert.budget.timeout_ms < 0)
      throw std::invalid_argument("config: expert budget must be positive");
    if (eval.n_envs < 1 || eval.size < 4 || eval.threads < 1 || eval.agent_counts.empty() || eval.densities.empty())
      throw std::invalid_argument("config: invalid eval grid");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// ---------------------------------------------------------------------------
// JSON mapping. Every field is optional on input (defaults apply); unknown keys are errors.
// ---------------------------------------------------------------------------

namespace detail {

/// Reads fields from one JSON object and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: " + path_ + " must be an object");
  }
  ~StrictObject() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw std::invalid_argument("config: unknown key " + path_ + "." + key);
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for " + path_ + "." + key + ": " + e.what());
    }
  }
  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace detail

inline json to_json(const Hyper& h) {
  return {{"gamma", h.gamma},          {"entropy_weight", h.entropy_weight}, {"learning_rate", h.learning_rate},
          {"grad_clip", h.grad_clip},  {"w_value", h.w_value},               {"w_blocking", h.w_blocking},
          {"w_on_goal", h.w_on_goal},  {"w_bc", h.w_bc}};
}

inline void read_json(const json& j, Hyper& h, const std::string& path = "hyper") {
  detail::StrictObject o(j, path);
  o.get("gamma", h.gamma);
  o.get("entropy_weight", h.entropy_weight);
  o.get("learning_rate", h.learning_rate);
  o.get("grad_clip", h.grad_clip);
  o.get("w_value", h.w_value);
  o.get("w_blocking", h.w_blocking);
  o.get("w_on_goal", h.w_on_goal);
  o.get("w_bc", h.w_bc);
}

inline json to_json(const CurriculumConfig& c) {
  return {{"initial_plateau_window", c.initial_plateau_window},
          {"plateau_growth", c.plateau_growth},
          {"max_episodes_per_level", c.max_episodes_per_level},
          {"improvement_tolerance", c.improvement_tolerance},
          {"average_window", c.average_window},
          {"boost_capacity", c.boost_capacity},
          {"boost_probability", c.boost_probability},
          {"demo_probability", c.demo_probability},
          {"agent_counts", c.agent_counts},
          {"pin_level", detail::optional_json(c.pin_level)},
          {"fixed_size", detail::optional_json(c.fixed_size)},
          {"fixed_density", detail::optional_json(c.fixed_density)},
          {"fixed_agents", detail::optional_json(c.fixed_agents)}};
}

inline void read_json(const json& j, CurriculumConfig& c, const std::string& path = "curriculum") {
  detail::StrictObject o(j, path);
  o.get("initial_plateau_window", c.initial_plateau_window);
  o.get("plateau_growth", c.plateau_growth);
  o.get("max_episodes_per_level", c.max_episodes_per_level);
  o.get("improvement_tolerance", c.improvement_tolerance);
  o.get("average_window", c.average_window);
  o.get("boost_capacity", c.boost_capacity);
  o.get("boost_probability", c.boost_probability);
  o.get("demo_probability", c.demo_probability);
  o.get("agent_counts", c.agent_counts);
  o.get_optional("pin_level", c.pin_level);
  o.get_optional("fixed_size", c.fixed_size);
  o.get_optional("fixed_density", c.fixed_density);
  o.get_optional("fixed_agents", c.fixed_agents);
}

inline json to_json(const RewardConstants& k) {
  return {{"r_move", k.r_move},
          {"r_collision", k.r_collision},
          {"r_idle_off_goal", k.r_idle_off_goal},
          {"r_idle_on_goal", k.r_idle_on_goal},
          {"r_team", k.r_team},
          {"r_crowd_out", k.r_crowd_out},
          {"r_crowd_in", k.r_crowd_in},
          {"r_blocking", k.r_blocking},
          {"blocking_detour", k.blocking_detour}};
}

inline void read_json(const json& j, RewardConstants& k, const std::string& path = "reward") {
  detail::StrictObject o(j, path);
  o.get("r_move", k.r_move);
  o.get("r_collision", k.r_collision);
  o.get("r_idle_off_goal", k.r_idle_off_goal);
  o.get("r_idle_on_goal", k.r_idle_on_goal);
  o.get("r_team", k.r_team);
  o.get("r_crowd_out", k.r_crowd_out);
  o.get("r_crowd_in", k.r_crowd_in);
  o.get("r_blocking", k.r_blocking);
  o.get("blocking_detour", k.blocking_detour);
}

inline json to_json(const EnvConfig& e) {
  return {{"alpha", e.alpha},
          {"beta", e.beta},
          {"crowd_window", e.crowd_window},
          {"zeta_floor", e.zeta_floor},
          {"zeta_cap", e.zeta_cap}};
}

inline void read_json(const json& j, EnvConfig& e, const std::string& path = "env") {
  detail::StrictObject o(j, path);
  o.get("alpha", e.alpha);
  o.get("beta", e.beta);
  o.get("crowd_window", e.crowd_window);
  o.get("zeta_floor", e.zeta_floor);
  o.get("zeta_cap", e.zeta_cap);
}

inline json to_json(const ExpertOptions& x) {
  return {{"od_agent_cap", x.od_agent_cap},
          {"max_expansions", x.budget.max_expansions},
          {"timeout_ms", x.budget.timeout_ms}};
}

inline void read_json(const json& j, ExpertOptions& x, const std::string& path = "expert") {
  detail::StrictObject o(j, path);
  o.get("od_agent_cap", x.od_agent_cap);
  o.get("max_expansions", x.budget.max_expansions);
  o.get("timeout_ms", x.budget.timeout_ms);
}

inline json to_json(const EvalConfig& e) {
  return {{"agent_counts", e.agent_counts}, {"densities", e.densities}, {"size", e.size},
          {"n_envs", e.n_envs},             {"base_seed", e.base_seed}, {"greedy", e.greedy},
          {"threads", e.threads}};
}

inline void read_json(const json& j, EvalConfig& e, const std::string& path = "eval") {
  detail::StrictObject o(j, path);
  o.get("agent_counts", e.agent_counts);
  o.get("densities", e.densities);
  o.get("size", e.size);
  o.get("n_envs", e.n_envs);
  o.get("base_seed", e.base_seed);
  o.get("greedy", e.greedy);
  o.get("threads", e.threads);
}

inline json to_json(const TrainConfig& c) {
  return {{"workers", c.workers},
          {"total_episodes", c.total_episodes},
          {"checkpoint_interval", c.checkpoint_interval},
          {"seed", c.seed},
          {"hyper", to_json(c.hyper)},
          {"curriculum", to_json(c.curriculum)},
          {"reward", to_json(c.reward)},
          {"env", to_json(c.env)},
          {"expert", to_json(c.expert)},
          {"eval", to_json(c.eval)}};
}

inline TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  {
    detail::StrictObject o(j, "config");
    o.get("workers", c.workers);
    o.get("total_episodes", c.total_episodes);
    o.get("checkpoint_interval", c.checkpoint_interval);
    o.get("seed", c.seed);
    if (auto* h = o.child("hyper")) read_json(*h, c.hyper);
    if (auto* cu = o.child("curriculum")) read_json(*cu, c.curriculum);
    if (auto* r = o.child("reward")) read_json(*r, c.reward);
    if (auto* e = o.child("env")) read_json(*e, c.env);
    if (auto* x = o.child("expert")) read_json(*x, c.expert);
    if (auto* ev = o.child("eval")) read_json(*ev, c.eval);
  }
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

inline json to_json(const WorldSpec& s) {
  return {{"size", s.size}, {"obstacle_density", s.obstacle_density}, {"num_agents", s.num_agents}, {"seed", s.seed}};
}

inline WorldSpec spec_from_json(const json& j) {
  WorldSpec s;
  detail::StrictObject o(j, "spec");
  o.get("size", s.size);
  o.get("obstacle_density", s.obstacle_density);
  o.get("num_agents", s.num_agents);
  o.get("seed", s.seed);
  return s;
}

inline json to_json(const CurriculumState& s) {
  json boost = json::array(), recent = json::array();
  for (const auto& spec : s.boost_buffer) boost.push_back(to_json(spec));
  for (double r : s.recent_rewards) recent.push_back(r);
  return {{"config", to_json(s.config)},
          {"level", s.level},
          {"plateau_window", s.plateau_window},
          {"episodes_at_level", s.episodes_at_level},
          {"best_avg_reward", detail::optional_json(s.best_avg_reward)},
          {"episodes_since_improvement", s.episodes_since_improvement},
          {"boost_buffer", boost},
          {"recent_rewards", recent},
          {"episodes_per_level", s.episodes_per_level}};
}

inline CurriculumState curriculum_from_json(const json& j) {
  CurriculumState s;
  detail::StrictObject o(j, "curriculum_state");
  if (auto* c = o.child("config")) read_json(*c, s.config, "curriculum_state.config");
  o.get("level", s.level);
  o.get("plateau_window", s.plateau_window);
  o.get("episodes_at_level", s.episodes_at_level);
  o.get_optional("best_avg_reward", s.best_avg_reward);
  o.get("episodes_since_improvement", s.episodes_since_improvement);
  if (auto* b = o.child("boost_buffer"))
    for (const auto& e : *b) s.boost_buffer.push_back(spec_from_json(e));
  std::vector<double> recent;
  o.get("recent_rewards", recent);
  s.recent_rewards.assign(recent.begin(), recent.end());
  o.get("episodes_per_level", s.episodes_per_level);
  return s;
}

}  // namespace crowdmapf
