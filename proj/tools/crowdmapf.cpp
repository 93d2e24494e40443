#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <crowdmapf/crowdmapf.hpp>

namespace fs = std::filesystem;
using namespace crowdmapf;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_gen(int size, double density, int agents, std::uint64_t seed, int count, const std::string& out) {
  for (int i = 0; i < count; ++i) {
    WorldSpec spec{size, density, agents, seed + static_cast<std::uint64_t>(i)};
    std::ostringstream ss;
    write_scenario(ss, make_scenario(spec));
    if (out.empty()) {
      std::cout << ss.str();
    } else {
      fs::path p = fs::path(out) / ("scenario-" + std::to_string(spec.seed) + ".txt");
      write_file(p, ss.str());
      std::cerr << "wrote " << p.string() << "\n";
    }
  }
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<int> workers,
              std::optional<long> episodes, const std::string& out, const std::string& resume) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (workers) cfg.workers = *workers;
  if (episodes) cfg.total_episodes = *episodes;
  cfg.validate();
  TrainOptions opts;
  opts.out_dir = out;
  opts.progress_interval = std::max<long>(1, std::min<long>(1000, cfg.total_episodes / 10));
  opts.on_progress = [](const TrainProgress& p) {
    std::cerr << "episode " << p.episode << "/" << p.total << " level " << p.level << " success "
              << p.recent_success << " mean return " << p.recent_return << "\n";
  };
  if (!resume.empty()) opts.resume = load_checkpoint(resume);
  TrainResult res = train(cfg, opts);
  std::cerr << "trained " << res.manifest.total_episodes << " episodes in " << res.manifest.wall_seconds << " s\n";
  std::cout << res.manifest.final_checkpoint << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  bool expert = false;
  bool random = false;
  bool sample = false;
  std::string config;
  std::vector<int> agents;
  std::vector<double> densities;
  std::optional<int> size, envs, threads;
  std::optional<std::uint64_t> base_seed;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  EvalConfig ec = a.config.empty() ? EvalConfig{} : load_config(a.config).eval;
  if (!a.agents.empty()) ec.agent_counts = a.agents;
  if (!a.densities.empty()) ec.densities = a.densities;
  if (a.size) ec.size = *a.size;
  if (a.envs) ec.n_envs = *a.envs;
  if (a.threads) ec.threads = *a.threads;
  if (a.base_seed) ec.base_seed = *a.base_seed;
  if (a.sample) ec.greedy = false;

  ActorSpec actor = StayActor{};
  if (a.expert) {
    actor = ExpertActor{a.config.empty() ? ExpertOptions{} : load_config(a.config).expert};
  } else if (a.random) {
    actor = RandomActor{};
  } else {
    auto ck = load_checkpoint(a.checkpoint);
    actor = PolicyActor{std::make_shared<const PolicyParams>(ck.params), ec.greedy ? ActMode::Greedy : ActMode::Sample};
  }
  BenchmarkOptions b{ec.agent_counts, ec.densities, ec.size, ec.n_envs, ec.base_seed, ec.threads};
  BenchmarkResult res = benchmark(actor, b);
  const std::string md = emit_report(res.rows, ReportFormat::Markdown);
  std::cout << "actor: " << actor_name(actor) << "\n" << md;
  if (!a.out.empty()) {
    write_file(a.out + ".csv", emit_report(res.rows, ReportFormat::Csv));
    write_file(a.out + ".md", md);
    write_file(a.out + ".jsonl", emit_record_log(res.records));
    std::cerr << "wrote " << a.out << ".{csv,md,jsonl}\n";
  }
  return 0;
}

int cmd_record(const std::string& scenario_path, const std::string& checkpoint, bool expert, std::uint64_t seed,
               const std::string& out) {
  Scenario sc = load_scenario(scenario_path);
  ActorSpec actor = ExpertActor{};
  if (!expert) actor = PolicyActor{std::make_shared<const PolicyParams>(load_checkpoint(checkpoint).params)};
  Replay replay{sc, {}};
  EpisodeRecord rec = run_episode(actor, sc.spec, sc.initial, seed, &replay.steps);
  std::ostringstream ss;
  write_replay(ss, replay);
  if (out.empty()) std::cout << ss.str();
  else write_file(out, ss.str());
  std::cerr << (rec.success ? "success" : "timeout") << " after " << rec.makespan << " steps, "
            << rec.collision_count << " collisions\n";
  return 0;
}

int cmd_replay(const std::string& path, int delay_ms) {
  Replay replay = load_replay(path);
  WorldState w = replay.scenario.initial;
  std::cout << "t=0\n" << render_ascii(w) << "\n";
  for (const auto& joint : replay.steps) {
    auto [next, events] = step(w, joint);
    w = std::move(next);
    std::cout << "t=" << w.t << " collisions=" << events.collision_count() << "\n" << render_ascii(w) << "\n";
    if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
  }
  std::cout << (w.all_on_goal() ? "all agents on goal" : "not all agents on goal") << "\n";
  return 0;
}

int cmd_selfcheck() {
  SelfcheckReport rep = run_selfcheck();
  std::cout << rep.text();
  return rep.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowd-aware multi-agent path finding workbench"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "write generated scenario files");
  int g_size = 20, g_agents = 8, g_count = 1;
  double g_density = 0.0;
  std::uint64_t g_seed = 0;
  std::string g_out;
  gen->add_option("--size", g_size, "world side length")->capture_default_str();
  gen->add_option("--density", g_density, "obstacle density")->capture_default_str();
  gen->add_option("--agents", g_agents, "number of agents")->capture_default_str();
  gen->add_option("--seed", g_seed, "seed of the first scenario")->capture_default_str();
  gen->add_option("--count", g_count, "number of scenarios (consecutive seeds)")->capture_default_str();
  gen->add_option("--out", g_out, "output directory (stdout when omitted)");

  auto* tr = app.add_subcommand("train", "train a policy");
  std::string t_config, t_out = "run", t_resume;
  std::optional<std::uint64_t> t_seed;
  std::optional<int> t_workers;
  std::optional<long> t_episodes;
  tr->add_option("config", t_config, "JSON config file")->check(CLI::ExistingFile);
  tr->add_option("--seed", t_seed, "override config seed");
  tr->add_option("--workers", t_workers, "override worker count");
  tr->add_option("--episodes", t_episodes, "override total episodes");
  tr->add_option("--out", t_out, "run directory for checkpoints and manifest")->capture_default_str();
  tr->add_option("--resume", t_resume, "continue from a checkpoint of the same config")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "benchmark a checkpoint, the expert or a random policy");
  EvalArgs e;
  auto* ck_opt = ev->add_option("checkpoint", e.checkpoint, "policy checkpoint")->check(CLI::ExistingFile);
  auto* ex_opt = ev->add_flag("--expert", e.expert, "evaluate the expert planner");
  auto* rn_opt = ev->add_flag("--random", e.random, "evaluate a uniform random policy");
  ck_opt->excludes(ex_opt)->excludes(rn_opt);
  ex_opt->excludes(rn_opt);
  ev->add_flag("--sample", e.sample, "sample actions instead of greedy selection");
  ev->add_option("--config", e.config, "config file supplying the eval grid")->check(CLI::ExistingFile);
  ev->add_option("--agents", e.agents, "agent counts (overrides config)")->delimiter(',');
  ev->add_option("--densities", e.densities, "obstacle densities (overrides config)")->delimiter(',');
  ev->add_option("--size", e.size, "world side length");
  ev->add_option("--envs", e.envs, "environments per configuration");
  ev->add_option("--threads", e.threads, "parallel episodes");
  ev->add_option("--base-seed", e.base_seed, "seed from which all environment seeds derive");
  ev->add_option("--out", e.out, "write <out>.csv, <out>.md and <out>.jsonl");

  auto* rec = app.add_subcommand("record", "roll out a scenario and write a replay file");
  std::string r_scenario, r_checkpoint, r_out;
  bool r_expert = false;
  std::uint64_t r_seed = 0;
  rec->add_option("scenario", r_scenario, "scenario file")->required()->check(CLI::ExistingFile);
  auto* r_ck = rec->add_option("--checkpoint", r_checkpoint, "policy checkpoint")->check(CLI::ExistingFile);
  auto* r_ex = rec->add_flag("--expert", r_expert, "use the expert planner");
  r_ck->excludes(r_ex);
  rec->add_option("--seed", r_seed, "actor seed")->capture_default_str();
  rec->add_option("--out", r_out, "replay file (stdout when omitted)");

  auto* rp = app.add_subcommand("replay", "render a replay file frame by frame");
  std::string p_file;
  int p_delay = 0;
  rp->add_option("file", p_file, "replay file")->required()->check(CLI::ExistingFile);
  rp->add_option("--delay-ms", p_delay, "pause between frames")->capture_default_str();

  auto* sc = app.add_subcommand("selfcheck", "run built-in correctness checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(g_size, g_density, g_agents, g_seed, g_count, g_out);
    if (*tr) return cmd_train(t_config, t_seed, t_workers, t_episodes, t_out, t_resume);
    if (*ev) {
      if (e.checkpoint.empty() && !e.expert && !e.random) throw CLI::RequiredError("checkpoint, --expert or --random");
      return cmd_eval(e);
    }
    if (*rec) {
      if (r_checkpoint.empty() && !r_expert) throw CLI::RequiredError("--checkpoint or --expert");
      return cmd_record(r_scenario, r_checkpoint, r_expert, r_seed, r_out);
    }
    if (*rp) return cmd_replay(p_file, p_delay);
    if (*sc) return cmd_selfcheck();
  } catch (const CLI::Error& err) {
    return app.exit(err);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
