#pragma once

#include <optional>
#include <vector>

#include "loong/world.hpp"

namespace loong {

// Ordered voxel-center positions, 26-connected, all non-OCCUPIED after inflation.
struct GridPath {
  std::vector<Vec3> cells;
  double cost = 0.0;
};

// Visibility-shortened path; every segment passes the inflated ray check.
struct ShortPath {
  std::vector<Vec3> vertices;

  double length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < vertices.size(); ++i) total += (vertices[i] - vertices[i - 1]).norm();
    return total;
  }
};

// Reusable search arrays; one instance per caller, sized lazily to the grid.
struct PathfindScratch {
  std::vector<double> g;
  std::vector<int> parent;
  std::vector<uint8_t> closed;
  std::vector<uint32_t> stamp;
  uint32_t current_stamp = 0;
};

// True if any OCCUPIED voxel center lies within `inflation` of the cell center.
// UNKNOWN voxels are traversable (optimistic frontier).
bool cellBlocked(const VoxelGrid& grid, const Vec3i& cell, double inflation);

// 26-connected A* with Euclidean costs and heuristic. When the goal is
// unreachable the path ends at the reachable cell nearest the goal. Start
// positions inside the inflation shell are snapped to the nearest free cell.
// Returns nullopt when no free cell is reachable from the start.
std::optional<GridPath> astar(const VoxelGrid& grid, const Vec3& start, const Vec3& goal,
                              double inflation, PathfindScratch* scratch = nullptr);

// Iteratively extends each segment to the furthest visible path point.
// Endpoints are preserved and total length never increases.
ShortPath shorten(const GridPath& path, const VoxelGrid& grid, double inflation);

// Sampled collision check of segment [a, b] against the inflated grid.
bool segmentFree(const VoxelGrid& grid, const Vec3& a, const Vec3& b, double inflation);

}  // namespace loong
