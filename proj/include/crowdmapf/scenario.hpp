#pragma once

// Plain-text scenario and replay files.
//
//   crowdmapf-scenario 1
//   size <m>
//   obstacle_density <d>          (shortest decimal that round-trips exactly)
//   num_agents <A>
//   seed <u64>
//   obstacles <k>
//   <row> <col>                   (k lines, row-major order)
//   agents <A>
//   <start_row> <start_col> <goal_row> <goal_col>   (A lines, by agent id)
//
// A replay file is the scenario followed by
//
//   steps <T>
//   <A action codes>              (T lines; N E S W for moves, '.' for Stay)
//
// Blank lines and lines starting with '#' are ignored.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "world.hpp"

namespace crowdmapf {

struct Scenario {
  WorldSpec spec;
  WorldState initial;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct Replay {
  Scenario scenario;
  std::vector<std::vector<Action>> steps;

  friend bool operator==(const Replay&, const Replay&) = default;
};

inline Scenario make_scenario(const WorldSpec& spec) { return {spec, generate_world(spec)}; }

namespace detail {

inline std::string shortest_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw std::runtime_error("scenario: bad real '" + tok + "'");
  return v;
}

/// Line reader that skips blanks and comments and reports line numbers in errors.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& out) {
    while (std::getline(in_, out)) {
      ++line_no_;
      auto first = out.find_first_not_of(" \t\r");
      if (first == std::string::npos || out[first] == '#') continue;
      auto last = out.find_last_not_of(" \t\r");
      out = out.substr(first, last - first + 1);
      return true;
    }
    return false;
  }

  std::string require() {
    std::string line;
    if (!next(line)) fail("unexpected end of file");
    return line;
  }

  /// Reads "<key> <value>" and returns the value token.
  std::string keyed(const std::string& key) {
    std::istringstream ss(require());
    std::string k, v, extra;
    ss >> k >> v;
    if (k != key || v.empty() || (ss >> extra)) fail("expected '" + key + " <value>'");
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("line " + std::to_string(line_no_) + ": " + msg);
  }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

inline long long parse_int(const LineReader& rd, const std::string& tok) {
  long long v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) rd.fail("bad integer '" + tok + "'");
  return v;
}

inline Scenario read_scenario_body(LineReader& rd) {
  Scenario sc;
  {
    std::istringstream ss(rd.require());
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != "crowdmapf-scenario" || version != 1) rd.fail("not a crowdmapf-scenario v1 file");
  }
  sc.spec.size = static_cast<int>(parse_int(rd, rd.keyed("size")));
  sc.spec.obstacle_density = parse_double(rd.keyed("obstacle_density"));
  sc.spec.num_agents = static_cast<int>(parse_int(rd, rd.keyed("num_agents")));
  {
    std::string tok = rd.keyed("seed");
    std::uint64_t seed = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), seed);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) rd.fail("bad seed '" + tok + "'");
    sc.spec.seed = seed;
  }
  if (sc.spec.size < 1) rd.fail("size must be positive");
  WorldState& w = sc.initial;
  w.grid = Grid(sc.spec.size);
  auto n_obstacles = parse_int(rd, rd.keyed("obstacles"));
  for (long long i = 0; i < n_obstacles; ++i) {
    std::istringstream ss(rd.require());
    Cell c;
    if (!(ss >> c.row >> c.col) || !w.grid.in_bounds(c)) rd.fail("bad obstacle cell");
    w.grid.set_obstacle(c, true);
  }
  auto n_agents = parse_int(rd, rd.keyed("agents"));
  if (n_agents != sc.spec.num_agents) rd.fail("agent list length differs from num_agents");
  for (long long i = 0; i < n_agents; ++i) {
    std::istringstream ss(rd.require());
    AgentState a;
    a.id = static_cast<int>(i);
    if (!(ss >> a.pos.row >> a.pos.col >> a.goal.row >> a.goal.col)) rd.fail("bad agent line");
    a.on_goal = a.pos == a.goal;
    w.agents.push_back(a);
  }
  try {
    check_invariants(w);
  } catch (const std::logic_error& e) {
    rd.fail(std::string("invalid scenario: ") + e.what());
  }
  return sc;
}

}  // namespace detail

inline void write_scenario(std::ostream& out, const Scenario& sc) {
  const Grid& g = sc.initial.grid;
  out << "crowdmapf-scenario 1\n";
  out << "size " << sc.spec.size << "\n";
  out << "obstacle_density " << detail::shortest_double(sc.spec.obstacle_density) << "\n";
  out << "num_agents " << sc.spec.num_agents << "\n";
  out << "seed " << sc.spec.seed << "\n";
  out << "obstacles " << g.obstacle_count() << "\n";
  for (int r = 0; r < g.size(); ++r)
    for (int c = 0; c < g.size(); ++c)
      if (g.is_obstacle({r, c})) out << r << " " << c << "\n";
  out << "agents " << sc.initial.agents.size() << "\n";
  for (const auto& a : sc.initial.agents)
    out << a.pos.row << " " << a.pos.col << " " << a.goal.row << " " << a.goal.col << "\n";
}

inline Scenario read_scenario(std::istream& in) {
  detail::LineReader rd(in);
  return detail::read_scenario_body(rd);
}

inline void write_replay(std::ostream& out, const Replay& replay) {
  write_scenario(out, replay.scenario);
  out << "steps " << replay.steps.size() << "\n";
  for (const auto& joint : replay.steps) {
    if (joint.size() != replay.scenario.initial.agents.size())
      throw std::invalid_argument("write_replay: joint action width mismatch");
    std::string line;
    for (Action a : joint) line.push_back(action_char(a));
    out << line << "\n";
  }
}

inline Replay read_replay(std::istream& in) {
  detail::LineReader rd(in);
  Replay replay;
  replay.scenario = detail::read_scenario_body(rd);
  auto n_steps = detail::parse_int(rd, rd.keyed("steps"));
  const auto width = replay.scenario.initial.agents.size();
  for (long long s = 0; s < n_steps; ++s) {
    std::string line = rd.require();
    if (line.size() != width) rd.fail("joint action must have one code per agent");
    std::vector<Action> joint;
    for (char ch : line) {
      try {
        joint.push_back(action_from_char(ch));
      } catch (const std::invalid_argument& e) {
        rd.fail(e.what());
      }
    }
    replay.steps.push_back(std::move(joint));
  }
  return replay;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario " + path);
  return read_scenario(in);
}

inline Replay load_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay " + path);
  return read_replay(in);
}

/// ASCII frame: '#' obstacle, '*' goal, agent letters lowercase off goal and uppercase on it.
inline std::string render_ascii(const WorldState& w) {
  const Grid& g = w.grid;
  std::string out;
  for (int r = 0; r < g.size(); ++r) {
    for (int c = 0; c < g.size(); ++c) {
      Cell cell{r, c};
      char ch = g.is_obstacle(cell) ? '#' : '.';
      for (const auto& a : w.agents)
        if (a.goal == cell) ch = '*';
      for (const auto& a : w.agents)
        if (a.pos == cell)
          ch = static_cast<char>(a.on_goal ? ('A' + a.id % 26) : ('a' + a.id % 26));
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace crowdmapf
