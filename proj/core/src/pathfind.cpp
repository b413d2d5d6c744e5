#include "loong/pathfind.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace loong {

namespace {

struct NeighborOffset {
  Vec3i d;
  double cost;  // in cell units, scaled by resolution at use
};

const std::vector<NeighborOffset>& neighbors26() {
  static const std::vector<NeighborOffset> offsets = [] {
    std::vector<NeighborOffset> v;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          v.push_back({Vec3i(dx, dy, dz), std::sqrt(double(dx * dx + dy * dy + dz * dz))});
        }
    return v;
  }();
  return offsets;
}

// Cell offsets whose center distance is within the inflation radius.
std::vector<Vec3i> inflationOffsets(double inflation, double resolution) {
  std::vector<Vec3i> offsets;
  const int r = static_cast<int>(std::ceil(inflation / resolution));
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        if (resolution * std::sqrt(double(dx * dx + dy * dy + dz * dz)) <= inflation) {
          offsets.push_back(Vec3i(dx, dy, dz));
        }
      }
  return offsets;
}

struct HeapNode {
  double f;
  double h;
  std::size_t idx;

  bool operator>(const HeapNode& o) const {
    if (f != o.f) return f > o.f;
    if (h != o.h) return h > o.h;
    return idx > o.idx;
  }
};

}  // namespace

bool cellBlocked(const VoxelGrid& grid, const Vec3i& cell, double inflation) {
  static thread_local std::vector<Vec3i> offsets;
  static thread_local double cached_inflation = -1.0;
  static thread_local double cached_res = -1.0;
  if (cached_inflation != inflation || cached_res != grid.resolution()) {
    offsets = inflationOffsets(inflation, grid.resolution());
    cached_inflation = inflation;
    cached_res = grid.resolution();
  }
  for (const Vec3i& d : offsets) {
    if (grid.at(cell + d) == Voxel::kOccupied) return true;
  }
  return false;
}

std::optional<GridPath> astar(const VoxelGrid& grid, const Vec3& start, const Vec3& goal,
                              double inflation, PathfindScratch* scratch) {
  PathfindScratch local;
  PathfindScratch& ws = scratch ? *scratch : local;
  const std::size_t n = grid.size();
  if (ws.g.size() != n) {
    ws.g.assign(n, 0.0);
    ws.parent.assign(n, -1);
    ws.closed.assign(n, 0);
    ws.stamp.assign(n, 0);
    ws.current_stamp = 0;
  }
  ++ws.current_stamp;
  const uint32_t stamp = ws.current_stamp;

  auto clampCell = [&](Vec3i c) {
    for (int i = 0; i < 3; ++i) c(i) = std::clamp(c(i), 0, grid.dims()(i) - 1);
    return c;
  };
  const Vec3i goal_cell = clampCell(grid.worldToCell(goal));
  Vec3i start_cell = clampCell(grid.worldToCell(start));

  // Snap a start caught inside the inflation shell to the nearest free cell.
  if (cellBlocked(grid, start_cell, inflation)) {
    const int r = static_cast<int>(std::ceil(0.75 / grid.resolution()));
    double best_d = std::numeric_limits<double>::infinity();
    Vec3i best = start_cell;
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const Vec3i c = start_cell + Vec3i(dx, dy, dz);
          if (!grid.inside(c) || cellBlocked(grid, c, inflation)) continue;
          const double d = (grid.cellCenter(c) - start).norm();
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
    if (std::isinf(best_d)) return std::nullopt;
    start_cell = best;
  }

  const double res = grid.resolution();
  const Vec3 goal_center = grid.cellCenter(goal_cell);
  auto heuristic = [&](const Vec3i& c) { return (grid.cellCenter(c) - goal_center).norm(); };

  std::priority_queue<HeapNode, std::vector<HeapNode>, std::greater<HeapNode>> open;
  const std::size_t start_idx = grid.index(start_cell);
  ws.g[start_idx] = 0.0;
  ws.parent[start_idx] = -1;
  ws.closed[start_idx] = 0;
  ws.stamp[start_idx] = stamp;
  open.push({heuristic(start_cell), heuristic(start_cell), start_idx});

  auto cellOf = [&](std::size_t idx) {
    const int x = static_cast<int>(idx % grid.dims().x());
    const int y = static_cast<int>((idx / grid.dims().x()) % grid.dims().y());
    const int z = static_cast<int>(idx / (std::size_t(grid.dims().x()) * grid.dims().y()));
    return Vec3i(x, y, z);
  };

  std::size_t best_idx = start_idx;
  double best_h = heuristic(start_cell);
  bool reached = false;

  while (!open.empty()) {
    const HeapNode top = open.top();
    open.pop();
    const std::size_t idx = top.idx;
    if (ws.stamp[idx] == stamp && ws.closed[idx]) continue;
    ws.closed[idx] = 1;
    const Vec3i cell = cellOf(idx);
    const double h = top.h;
    if (h < best_h) {
      best_h = h;
      best_idx = idx;
    }
    if (idx == grid.index(goal_cell)) {
      reached = true;
      break;
    }
    for (const NeighborOffset& nb : neighbors26()) {
      const Vec3i nc = cell + nb.d;
      if (!grid.inside(nc)) continue;
      if (cellBlocked(grid, nc, inflation)) continue;
      const std::size_t nidx = grid.index(nc);
      if (ws.stamp[nidx] == stamp && ws.closed[nidx]) continue;
      const double ng = ws.g[idx] + nb.cost * res;
      if (ws.stamp[nidx] != stamp || ng < ws.g[nidx]) {
        ws.stamp[nidx] = stamp;
        ws.closed[nidx] = 0;
        ws.g[nidx] = ng;
        ws.parent[nidx] = static_cast<int>(idx);
        const double nh = heuristic(nc);
        open.push({ng + nh, nh, nidx});
      }
    }
  }

  const std::size_t end_idx = reached ? grid.index(goal_cell) : best_idx;
  GridPath path;
  path.cost = ws.g[end_idx];
  std::size_t idx = end_idx;
  while (true) {
    path.cells.push_back(grid.cellCenter(cellOf(idx)));
    if (ws.parent[idx] < 0) break;
    idx = static_cast<std::size_t>(ws.parent[idx]);
  }
  std::reverse(path.cells.begin(), path.cells.end());
  return path;
}

bool segmentFree(const VoxelGrid& grid, const Vec3& a, const Vec3& b, double inflation) {
  const double len = (b - a).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len / (grid.resolution() / 3.0))));
  for (int i = 0; i <= steps; ++i) {
    const Vec3 p = a + (b - a) * (double(i) / steps);
    if (cellBlocked(grid, grid.worldToCell(p), inflation)) return false;
  }
  return true;
}

ShortPath shorten(const GridPath& path, const VoxelGrid& grid, double inflation) {
  ShortPath out;
  if (path.cells.empty()) return out;
  out.vertices.push_back(path.cells.front());
  std::size_t i = 0;
  const std::size_t n = path.cells.size();
  while (i + 1 < n) {
    std::size_t next = i + 1;  // grid edges are traversable by construction
    for (std::size_t j = n - 1; j > i; --j) {
      if (segmentFree(grid, path.cells[i], path.cells[j], inflation)) {
        next = j;
        break;
      }
    }
    out.vertices.push_back(path.cells[next]);
    i = next;
  }
  return out;
}

}  // namespace loong
