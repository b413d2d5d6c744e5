#include "loong/corridor.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "loong/linprog.hpp"

namespace loong {

void Polytope::addRow(const Vec3& unit_normal, double offset) {
  A.conservativeResize(rows() + 1, 3);
  b.conservativeResize(rows());
  A.row(rows() - 1) = unit_normal.transpose();
  b(rows() - 1) = offset;
}

Polytope Polytope::fromAabb(const Aabb& box) {
  Polytope p;
  p.A = MatX::Zero(6, 3);
  p.b = VecX::Zero(6);
  for (int i = 0; i < 3; ++i) {
    p.A(2 * i, i) = 1.0;
    p.b(2 * i) = box.max(i);
    p.A(2 * i + 1, i) = -1.0;
    p.b(2 * i + 1) = -box.min(i);
  }
  return p;
}

std::string polytopeToJson(const Polytope& p) {
  nlohmann::json j;
  j["A"] = nlohmann::json::array();
  j["b"] = nlohmann::json::array();
  for (int i = 0; i < p.rows(); ++i) {
    j["A"].push_back({p.A(i, 0), p.A(i, 1), p.A(i, 2)});
    j["b"].push_back(p.b(i));
  }
  return j.dump();
}

namespace {

// max r s.t. A x + r <= b, then lexicographic minimization of x among optima.
std::optional<ChebyshevResult> chebyshevOfRows(const MatX& A, const VecX& b) {
  const int m = static_cast<int>(A.rows());
  if (m == 0) return std::nullopt;
  MatX lp_A(m, 4);
  lp_A.leftCols<3>() = A;
  lp_A.col(3).setOnes();
  VecX lp_b = b;

  VecX c = VecX::Zero(4);
  c(3) = -1.0;  // max r
  LpResult r0 = solveLp(c, lp_A, lp_b);
  if (r0.status != LpStatus::kOptimal) return std::nullopt;
  double radius = r0.x(3);
  if (radius < -1e-9) return std::nullopt;  // empty intersection

  // Pin r and minimize x lexicographically for a deterministic optimizer.
  MatX A_fix = lp_A;
  VecX b_fix = lp_b;
  auto appendRow = [&](const Eigen::RowVector4d& row, double rhs) {
    A_fix.conservativeResize(A_fix.rows() + 1, 4);
    b_fix.conservativeResize(b_fix.size() + 1);
    A_fix.row(A_fix.rows() - 1) = row;
    b_fix(b_fix.size() - 1) = rhs;
  };
  appendRow(Eigen::RowVector4d(0, 0, 0, -1), -radius + 1e-9);

  VecX x_sol = r0.x;
  for (int axis = 0; axis < 3; ++axis) {
    VecX ca = VecX::Zero(4);
    ca(axis) = 1.0;
    LpResult ra = solveLp(ca, A_fix, b_fix);
    if (ra.status != LpStatus::kOptimal) break;
    x_sol = ra.x;
    Eigen::RowVector4d row = Eigen::RowVector4d::Zero();
    row(axis) = 1.0;
    appendRow(row, ra.x(axis) + 1e-9);
  }

  ChebyshevResult out;
  out.center = x_sol.head<3>();
  out.radius = std::max(0.0, radius);
  return out;
}

}  // namespace

std::optional<ChebyshevResult> chebyshevCenter(const Polytope& poly) {
  return chebyshevOfRows(poly.A, poly.b);
}

std::optional<ChebyshevResult> intersectionCenter(const Polytope& a, const Polytope& b) {
  MatX A(a.rows() + b.rows(), 3);
  VecX off(a.rows() + b.rows());
  A << a.A, b.A;
  off << a.b, b.b;
  return chebyshevOfRows(A, off);
}

InflateResult inflatePolytope(const Vec3& seed_a, const Vec3& seed_b,
                              const std::vector<Vec3>& points, const Aabb& bounds,
                              const InflateOptions& opts) {
  InflateResult result;
  Polytope poly = Polytope::fromAabb(bounds);

  // Points still lacking a separating face with robot_radius margin.
  std::vector<int> active;
  active.reserve(points.size());
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    if (poly.maxViolation(points[i]) < opts.robot_radius - 1e-9) active.push_back(i);
  }

  int added = 0;
  while (!active.empty()) {
    // Nearest remaining point to the seed segment.
    int pick = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const int i : active) {
      const double d = (points[i] - closestPointOnSegment(seed_a, seed_b, points[i])).norm();
      if (d < best_d) {
        best_d = d;
        pick = i;
      }
    }
    if (best_d < opts.robot_radius) {
      result.status = CorridorStatus::kSeedInCollision;
      result.poly = poly;
      return result;
    }
    const Vec3& obs = points[pick];
    const Vec3 anchor = closestPointOnSegment(seed_a, seed_b, obs);
    const Vec3 normal = (obs - anchor) / best_d;
    // Tangent plane shifted robot_radius toward the seed: the projection
    // property of `anchor` keeps the whole segment on the feasible side.
    poly.addRow(normal, normal.dot(obs) - opts.robot_radius);
    ++added;

    std::vector<int> next;
    next.reserve(active.size());
    for (const int i : active) {
      if (poly.maxViolation(points[i]) < opts.robot_radius - 1e-9) next.push_back(i);
    }
    active.swap(next);

    // The plane cap is a size target, not a safety budget: keep separating
    // until every point clears, even past the cap.
    if (added > opts.max_planes && added > 4 * opts.max_planes) break;
  }

  result.poly = std::move(poly);
  return result;
}

namespace {

Aabb segmentRoi(const Vec3& a, const Vec3& b, const InflateOptions& opts) {
  Aabb roi;
  const Vec3 lo = a.cwiseMin(b);
  const Vec3 hi = a.cwiseMax(b);
  const Vec3 center = 0.5 * (lo + hi);
  Vec3 half = 0.5 * (hi - lo) * opts.roi_scale;
  half = half.cwiseMax(Vec3::Constant(opts.roi_min_half));
  roi.min = center - half;
  roi.max = center + half;
  return roi;
}

Aabb intersectAabb(const Aabb& x, const Aabb& y) {
  Aabb out;
  out.min = x.min.cwiseMax(y.min);
  out.max = x.max.cwiseMin(y.max);
  return out;
}

}  // namespace

Aabb seedRoi(const Vec3& seed_a, const Vec3& seed_b, const Aabb& bounds,
             const InflateOptions& opts) {
  return intersectAabb(segmentRoi(seed_a, seed_b, opts), bounds);
}

DecomposeResult decompose(const ShortPath& short_path, const std::vector<Vec3>& points,
                          const Aabb& bounds, const InflateOptions& opts) {
  ObstaclePointProvider provider = [&points](const Aabb& box, std::vector<Vec3>* out) {
    for (const Vec3& p : points) {
      if (box.contains(p)) out->push_back(p);
    }
  };
  return decompose(short_path, provider, bounds, opts);
}

DecomposeResult decompose(const ShortPath& short_path, const ObstaclePointProvider& provider,
                          const Aabb& bounds, const InflateOptions& opts) {
  DecomposeResult result;
  const auto& v = short_path.vertices;
  if (v.size() < 2) {
    if (v.size() == 1) {
      const Aabb roi = intersectAabb(segmentRoi(v[0], v[0], opts), bounds);
      std::vector<Vec3> local;
      provider(roi, &local);
      InflateResult inf = inflatePolytope(v[0], v[0], local, roi, opts);
      result.status = inf.status;
      if (inf.status == CorridorStatus::kOk) result.corridor.polys.push_back(inf.poly);
    }
    return result;
  }

  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const Aabb roi = intersectAabb(segmentRoi(v[i], v[i + 1], opts), bounds);
    std::vector<Vec3> local;
    provider(roi, &local);
    InflateResult inf = inflatePolytope(v[i], v[i + 1], local, roi, opts);
    if (inf.status != CorridorStatus::kOk) {
      result.status = inf.status;
      result.failed_segment = static_cast<int>(i);
      return result;
    }
    result.corridor.polys.push_back(std::move(inf.poly));
  }

  for (std::size_t i = 0; i + 1 < result.corridor.polys.size(); ++i) {
    auto center = intersectionCenter(result.corridor.polys[i], result.corridor.polys[i + 1]);
    if (!center) {
      result.status = CorridorStatus::kBrokenChain;
      result.failed_segment = static_cast<int>(i);
      return result;
    }
    result.corridor.waypoints.push_back(center->center);
  }
  return result;
}

}  // namespace loong
