#pragma once

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <crowdmapf/world.hpp>

namespace crowdmapf::testing {

/// World from an ASCII map ('#' obstacle) plus explicit (start, goal) pairs.
inline WorldState make_world(const std::vector<std::string>& rows, std::initializer_list<std::pair<Cell, Cell>> agents) {
  WorldState w;
  w.grid = Grid(static_cast<int>(rows.size()));
  for (int r = 0; r < static_cast<int>(rows.size()); ++r)
    for (int c = 0; c < static_cast<int>(rows[static_cast<std::size_t>(r)].size()); ++c)
      if (rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] == '#') w.grid.set_obstacle({r, c}, true);
  int id = 0;
  for (auto [start, goal] : agents) w.agents.push_back(AgentState{id++, start, goal, start == goal});
  check_invariants(w);
  return w;
}

inline WorldState open_world(int size, std::initializer_list<std::pair<Cell, Cell>> agents) {
  return make_world(std::vector<std::string>(static_cast<std::size_t>(size), std::string(static_cast<std::size_t>(size), '.')),
                    agents);
}

}  // namespace crowdmapf::testing
