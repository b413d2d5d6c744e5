#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "loong/dynamics.hpp"
#include "loong/geometry.hpp"

namespace loong {

enum class Voxel : uint8_t { kUnknown = 0, kFree = 1, kOccupied = 2 };

// Tri-state occupancy grid. Knowledge is monotone: a voxel never goes
// OCCUPIED->FREE or FREE->UNKNOWN within a mission.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(const Vec3& origin, double resolution, const Vec3i& dims);

  static VoxelGrid coverBounds(const Aabb& bounds, double resolution);

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Vec3i& dims() const { return dims_; }
  std::size_t size() const { return occ_.size(); }

  bool inside(const Vec3i& c) const {
    return c.x() >= 0 && c.y() >= 0 && c.z() >= 0 && c.x() < dims_.x() && c.y() < dims_.y() &&
           c.z() < dims_.z();
  }
  std::size_t index(const Vec3i& c) const {
    return static_cast<std::size_t>((c.z() * dims_.y() + c.y()) * dims_.x() + c.x());
  }
  Vec3i worldToCell(const Vec3& p) const {
    return Vec3i(static_cast<int>(std::floor((p.x() - origin_.x()) / resolution_)),
                 static_cast<int>(std::floor((p.y() - origin_.y()) / resolution_)),
                 static_cast<int>(std::floor((p.z() - origin_.z()) / resolution_)));
  }
  Vec3 cellCenter(const Vec3i& c) const {
    return origin_ + resolution_ * (c.cast<double>() + Vec3(0.5, 0.5, 0.5));
  }

  Voxel at(const Vec3i& c) const { return inside(c) ? occ_[index(c)] : Voxel::kOccupied; }
  Voxel atPoint(const Vec3& p) const { return at(worldToCell(p)); }

  // Monotone setters; illegal downgrades are ignored.
  void markFree(const Vec3i& c);
  void markOccupied(const Vec3i& c);

  std::size_t knownCount() const { return known_count_; }

  // Occupied-voxel centers and frontier points (UNKNOWN voxels face-adjacent
  // to FREE) within an axis-aligned query box. Frontier points keep corridor
  // polytopes inside known free space.
  void collectObstaclePoints(const Aabb& box, std::vector<Vec3>* out,
                             bool include_frontier = true) const;

  bool isFrontier(const Vec3i& c) const { return inside(c) && frontier_[index(c)] != 0; }

 private:
  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 0.2;
  Vec3i dims_ = Vec3i::Zero();
  std::vector<Voxel> occ_;
  // UNKNOWN voxels face-adjacent to FREE, maintained incrementally so the
  // 100 Hz planner can collect corridor points with a flat region scan.
  std::vector<uint8_t> frontier_;
  std::size_t known_count_ = 0;
};

struct LidarConfig {
  double max_range = 30.0;                  // m
  double horizontal_fov = 2.0 * kPi;        // rad
  double vertical_fov = 59.0 * kPi / 180;   // rad, total span
  // Elevation of the FOV center: the modeled sensor sees -7..+52 deg.
  double vertical_tilt = 22.5 * kPi / 180;  // rad
  int rays_h = 180;
  int rays_v = 16;
  double rate = 10.0;  // Hz
};

struct Cylinder {
  Vec2 center = Vec2::Zero();  // xy, stands on the floor
  double radius = 0.3;
  double height = 2.0;
};

enum class ScenarioClass { kCorridor, kForest };

struct Scenario {
  Aabb bounds;
  std::vector<Cylinder> obstacles;
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  uint64_t seed = 0;

  // Distance from p to the nearest obstacle surface (negative inside).
  double obstacleDistance(const Vec3& p) const;
  bool pointFree(const Vec3& p, double clearance) const {
    return obstacleDistance(p) >= clearance;
  }
};

// Nearest intersection of a ray with the scenario geometry (cylinders and the
// bounding box walls). Returns distance along dir, or nullopt beyond max_range.
std::optional<double> raycastScene(const Scenario& scene, const Vec3& origin, const Vec3& dir,
                                   double max_range);

// FOV-limited spinning-LiDAR model: rays are emitted in the body frame and
// rotated by the current attitude.
std::vector<Vec3> castRays(const QuadState& pose, const LidarConfig& cfg, const Scenario& scene);

// Rasterizes one scan: voxels traversed before a hit become FREE, the hit
// voxel becomes OCCUPIED. Rays without a hit clear up to max_range.
void integrateScan(VoxelGrid* grid, const Vec3& sensor_origin, const std::vector<Vec3>& hits,
                   const LidarConfig& cfg, const std::vector<Vec3>& miss_endpoints = {});

// Full sense step: cast rays against the true scene and integrate both hit and
// miss rays into the grid.
void senseAndIntegrate(VoxelGrid* grid, const QuadState& pose, const LidarConfig& cfg,
                       const Scenario& scene);

struct ScenarioGenError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic under seed; obstacle count is round(density * region area).
// Start/goal clearance is enforced by re-drawing colliding cylinders.
Scenario generateScenario(ScenarioClass cls, double density, uint64_t seed);

std::string scenarioToJson(const Scenario& s);
Scenario scenarioFromJson(const std::string& text);
Scenario loadScenario(const std::string& path);
void saveScenario(const Scenario& s, const std::string& path);

// CSV dump (x,y,z per line) of all OCCUPIED voxel centers.
void dumpOccupiedCsv(const VoxelGrid& grid, const std::string& path);

}  // namespace loong
