#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "loong/geometry.hpp"
#include "loong/pathfind.hpp"

namespace loong {

// Convex free-space region {x : A x <= b} with unit row normals.
struct Polytope {
  MatX A;  // rows x 3
  VecX b;

  int rows() const { return static_cast<int>(A.rows()); }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return rows() == 0 || ((A * p - b).array() <= tol).all();
  }
  // Largest signed distance outside any face (negative strictly inside).
  double maxViolation(const Vec3& p) const {
    return rows() == 0 ? -std::numeric_limits<double>::infinity() : (A * p - b).maxCoeff();
  }
  void addRow(const Vec3& unit_normal, double offset);

  static Polytope fromAabb(const Aabb& box);
};

std::string polytopeToJson(const Polytope& p);

// Ordered overlapping polytopes with overlap-center waypoints:
// waypoints[i] lies in polys[i] and polys[i+1].
struct Corridor {
  std::vector<Polytope> polys;
  std::vector<Vec3> waypoints;
};

struct ChebyshevResult {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;  // max-min slack; 0 means degenerate contact
};

// Chebyshev center of the stacked half-space system, lexicographically
// smallest among optima. nullopt when the system is empty.
std::optional<ChebyshevResult> chebyshevCenter(const Polytope& poly);
std::optional<ChebyshevResult> intersectionCenter(const Polytope& a, const Polytope& b);

enum class CorridorStatus { kOk, kSeedInCollision, kBrokenChain };

struct InflateOptions {
  double robot_radius = 0.15;
  int max_planes = 30;       // separating planes beyond the bounding faces
  double roi_scale = 1.5;    // seed bounding box expansion for decompose
  double roi_min_half = 3.0; // m, minimum ROI half extent
};

struct InflateResult {
  CorridorStatus status = CorridorStatus::kOk;
  Polytope poly;
};

// Iterative separating-hyperplane inflation around a line seed. The result
// contains the whole seed, and every input point ends up at least
// robot_radius outside some face. Bounds faces are part of the polytope.
InflateResult inflatePolytope(const Vec3& seed_a, const Vec3& seed_b,
                              const std::vector<Vec3>& points, const Aabb& bounds,
                              const InflateOptions& opts = {});

// Scaled seed bounding box used to localize both obstacle points and the
// polytope itself, clipped to the scenario bounds.
Aabb seedRoi(const Vec3& seed_a, const Vec3& seed_b, const Aabb& bounds,
             const InflateOptions& opts);

struct DecomposeResult {
  CorridorStatus status = CorridorStatus::kOk;
  Corridor corridor;
  int failed_segment = -1;
};

// One polytope per path segment, each built against the obstacle points
// inside a scaled segment bounding box and clipped to that box. Waypoints are
// the Chebyshev centers of consecutive intersections.
DecomposeResult decompose(const ShortPath& short_path, const std::vector<Vec3>& points,
                          const Aabb& bounds, const InflateOptions& opts = {});

// Provider variant for callers that can enumerate obstacle points per query
// box (avoids materializing the full cloud every cycle).
using ObstaclePointProvider = std::function<void(const Aabb&, std::vector<Vec3>*)>;
DecomposeResult decompose(const ShortPath& short_path, const ObstaclePointProvider& provider,
                          const Aabb& bounds, const InflateOptions& opts = {});

}  // namespace loong
