#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crowdmapf {

/// Grid coordinate. Row 0 is the northern edge, so North decreases `row`.
struct Cell {
  int row = 0;
  int col = 0;

  friend constexpr bool operator==(const Cell&, const Cell&) = default;
  friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

inline std::string to_string(Cell c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

/// Square occupancy map. `true` marks an obstacle.
class Grid {
 public:
  Grid() = default;
  explicit Grid(int size) : size_(size), cells_(static_cast<std::size_t>(size) * size, 0) {
    if (size < 1) throw std::invalid_argument("Grid: size must be positive");
  }

  int size() const { return size_; }
  int cell_count() const { return size_ * size_; }

  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < size_ && c.col >= 0 && c.col < size_;
  }
  bool is_obstacle(Cell c) const { return cells_[index(c)] != 0; }
  /// In bounds and not an obstacle.
  bool is_free(Cell c) const { return in_bounds(c) && cells_[index(c)] == 0; }

  void set_obstacle(Cell c, bool value) { cells_.at(index(c)) = value ? 1 : 0; }

  int obstacle_count() const {
    int n = 0;
    for (auto v : cells_) n += v;
    return n;
  }

  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(size_) +
           static_cast<std::size_t>(c.col);
  }
  Cell cell_at(std::size_t idx) const {
    return {static_cast<int>(idx / static_cast<std::size_t>(size_)),
            static_cast<int>(idx % static_cast<std::size_t>(size_))};
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int size_ = 0;
  std::vector<std::uint8_t> cells_;
};

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/// 4-connected neighbors in N, E, S, W order (unfiltered).
inline std::array<Cell, 4> neighbors4(Cell c) {
  return {Cell{c.row - 1, c.col}, Cell{c.row, c.col + 1}, Cell{c.row + 1, c.col},
          Cell{c.row, c.col - 1}};
}

/// BFS distances from `source` to every cell, `kUnreachable` where no path exists.
/// Cells listed in `blocked` are treated as obstacles (the source itself is never blocked).
inline std::vector<int> bfs_distance_field(const Grid& grid, Cell source,
                                           std::span<const Cell> blocked = {}) {
  std::vector<int> dist(static_cast<std::size_t>(grid.cell_count()), kUnreachable);
  if (!grid.is_free(source)) return dist;
  std::vector<std::uint8_t> closed(dist.size(), 0);
  for (Cell b : blocked)
    if (grid.in_bounds(b)) closed[grid.index(b)] = 1;
  std::queue<Cell> open;
  dist[grid.index(source)] = 0;
  closed[grid.index(source)] = 1;
  open.push(source);
  while (!open.empty()) {
    Cell cur = open.front();
    open.pop();
    int d = dist[grid.index(cur)];
    for (Cell nb : neighbors4(cur)) {
      if (!grid.is_free(nb)) continue;
      auto idx = grid.index(nb);
      if (closed[idx]) continue;
      closed[idx] = 1;
      dist[idx] = d + 1;
      open.push(nb);
    }
  }
  return dist;
}

/// Shortest 4-connected path length, or nullopt when `to` cannot be reached.
inline std::optional<int> bfs_distance(const Grid& grid, Cell from, Cell to,
                                       std::span<const Cell> blocked = {}) {
  if (!grid.is_free(from) || !grid.is_free(to))
    throw std::invalid_argument("bfs_distance: endpoints must be free cells");
  if (from == to) return 0;
  for (Cell b : blocked)
    if (b == to) return std::nullopt;
  auto field = bfs_distance_field(grid, from, blocked);
  int d = field[grid.index(to)];
  if (d == kUnreachable) return std::nullopt;
  return d;
}

}  // namespace crowdmapf
