#pragma once

#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "loong/corridor.hpp"
#include "loong/pathfind.hpp"
#include "loong/polytraj.hpp"
#include "loong/world.hpp"

// Independent reference implementations used to freeze expected values.
// Nothing here shares code with the paths under test.
namespace loong::oracles {

// Dense assembly + PartialPivLU of the minimum-jerk system (one axis).
// Returns the 6M coefficient vector for the requested axis.
VecX denseMinJerkAxis(const std::vector<Vec3>& interior, const std::vector<double>& durations,
                      const BoundaryState& sigma_o, const BoundaryState& sigma_f, int axis);

// Plain Dijkstra over the same 26-connected inflated grid.
double dijkstraCost(const VoxelGrid& grid, const Vec3& start, const Vec3& goal, double inflation);

// Chebyshev center by exhaustive enumeration of 4-subsets of active planes.
std::optional<ChebyshevResult> chebyshevByEnumeration(const MatX& A, const VecX& b);

// Voxels visited by a ray, by brute-force fine marching (res/64 steps).
std::vector<Vec3i> rayCellsByMarching(const VoxelGrid& grid, const Vec3& a, const Vec3& b);

// Analytic feasibility of the classic rest-to-rest quintic over distance d
// along x: thrust hypot(5.7735 d/T^2, g) and bodyrate g*|j|/c^2 by fine scan.
bool quinticRestToRestFeasible(double distance, double total_time, double f_cap_with_margin,
                               double omega_cap);

// Smallest feasible T for the rest-to-rest quintic by bisection (oracle for
// the minimum-time allocator on single segments).
double quinticMinTimeBisection(double distance, double f_cap_with_margin, double omega_cap);

// Central finite difference of a scalar function.
double centralDiff(const std::function<double(double)>& f, double x0, double h);

}  // namespace loong::oracles
