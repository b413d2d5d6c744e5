#include "loong/world.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace loong {

using json = nlohmann::json;

namespace {
const Vec3i kFaceOffsets[6] = {Vec3i(1, 0, 0),  Vec3i(-1, 0, 0), Vec3i(0, 1, 0),
                               Vec3i(0, -1, 0), Vec3i(0, 0, 1),  Vec3i(0, 0, -1)};
}

VoxelGrid::VoxelGrid(const Vec3& origin, double resolution, const Vec3i& dims)
    : origin_(origin), resolution_(resolution), dims_(dims) {
  const std::size_t n = static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  occ_.assign(n, Voxel::kUnknown);
  frontier_.assign(n, 0);
}

VoxelGrid VoxelGrid::coverBounds(const Aabb& bounds, double resolution) {
  const Vec3 extent = bounds.extent();
  Vec3i dims;
  for (int i = 0; i < 3; ++i) dims(i) = std::max(1, static_cast<int>(std::ceil(extent(i) / resolution)));
  return VoxelGrid(bounds.min, resolution, dims);
}

void VoxelGrid::markFree(const Vec3i& c) {
  if (!inside(c)) return;
  const std::size_t idx = index(c);
  Voxel& v = occ_[idx];
  if (v == Voxel::kUnknown) {
    v = Voxel::kFree;
    frontier_[idx] = 0;
    ++known_count_;
    for (const Vec3i& d : kFaceOffsets) {
      const Vec3i nb = c + d;
      if (inside(nb) && occ_[index(nb)] == Voxel::kUnknown) frontier_[index(nb)] = 1;
    }
  }
}

void VoxelGrid::markOccupied(const Vec3i& c) {
  if (!inside(c)) return;
  const std::size_t idx = index(c);
  Voxel& v = occ_[idx];
  if (v == Voxel::kUnknown) ++known_count_;
  if (v != Voxel::kOccupied) v = Voxel::kOccupied;
  frontier_[idx] = 0;
}

void VoxelGrid::collectObstaclePoints(const Aabb& box, std::vector<Vec3>* out,
                                      bool include_frontier) const {
  Vec3i lo = worldToCell(box.min);
  Vec3i hi = worldToCell(box.max);
  for (int i = 0; i < 3; ++i) {
    lo(i) = std::clamp(lo(i), 0, dims_(i) - 1);
    hi(i) = std::clamp(hi(i), 0, dims_(i) - 1);
  }
  for (int z = lo.z(); z <= hi.z(); ++z)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int x = lo.x(); x <= hi.x(); ++x) {
        const Vec3i c(x, y, z);
        const std::size_t idx = index(c);
        if (occ_[idx] == Voxel::kOccupied ||
            (include_frontier && occ_[idx] == Voxel::kUnknown && frontier_[idx] != 0)) {
          out->push_back(cellCenter(c));
        }
      }
}

double Scenario::obstacleDistance(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Cylinder& c : obstacles) {
    const double dxy = (Vec2(p.x(), p.y()) - c.center).norm() - c.radius;
    const double dz = p.z() - c.height;  // above the top when positive
    double d;
    if (dz <= 0.0) {
      d = dxy;
    } else if (dxy <= 0.0) {
      d = dz;
    } else {
      d = std::hypot(dxy, dz);
    }
    best = std::min(best, d);
  }
  return best;
}

namespace {

// Distance to the exit face of the bounding box for a ray starting inside.
double rayExitAabb(const Aabb& box, const Vec3& o, const Vec3& d) {
  double t_exit = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d(i)) < 1e-12) continue;
    const double bound = d(i) > 0 ? box.max(i) : box.min(i);
    t_exit = std::min(t_exit, (bound - o(i)) / d(i));
  }
  return t_exit;
}

std::optional<double> rayCylinder(const Cylinder& c, const Vec3& o, const Vec3& d) {
  const Vec2 oc(o.x() - c.center.x(), o.y() - c.center.y());
  const Vec2 dxy(d.x(), d.y());
  const double a = dxy.squaredNorm();
  double best = std::numeric_limits<double>::infinity();

  if (a > 1e-12) {
    const double b = 2.0 * oc.dot(dxy);
    const double cc = oc.squaredNorm() - c.radius * c.radius;
    const double disc = b * b - 4 * a * cc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (const double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (t <= 1e-9) continue;
        const double z = o.z() + t * d.z();
        if (z >= 0.0 && z <= c.height) {
          best = std::min(best, t);
          break;  // roots are ordered
        }
      }
    }
  }
  // Top cap.
  if (std::abs(d.z()) > 1e-12) {
    const double t = (c.height - o.z()) / d.z();
    if (t > 1e-9) {
      const Vec2 hit = oc + t * dxy;
      if (hit.squaredNorm() <= c.radius * c.radius) best = std::min(best, t);
    }
  }
  if (std::isinf(best)) return std::nullopt;
  return best;
}

}  // namespace

std::optional<double> raycastScene(const Scenario& scene, const Vec3& origin, const Vec3& dir,
                                   double max_range) {
  double best = rayExitAabb(scene.bounds, origin, dir);
  for (const Cylinder& c : scene.obstacles) {
    if (auto t = rayCylinder(c, origin, dir)) best = std::min(best, *t);
  }
  if (best > max_range) return std::nullopt;
  return best;
}

std::vector<Vec3> castRays(const QuadState& pose, const LidarConfig& cfg, const Scenario& scene) {
  std::vector<Vec3> hits;
  hits.reserve(static_cast<std::size_t>(cfg.rays_h) * cfg.rays_v);
  const Mat3 rot = quat::rotationMatrix(pose.q);
  for (int i = 0; i < cfg.rays_h; ++i) {
    const double az = -0.5 * cfg.horizontal_fov +
                      cfg.horizontal_fov * (i + 0.5) / cfg.rays_h;
    for (int j = 0; j < cfg.rays_v; ++j) {
      const double el =
          cfg.vertical_tilt - 0.5 * cfg.vertical_fov + cfg.vertical_fov * (j + 0.5) / cfg.rays_v;
      const Vec3 dir_body(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const Vec3 dir = rot * dir_body;
      if (auto t = raycastScene(scene, pose.p, dir, cfg.max_range)) {
        hits.push_back(pose.p + *t * dir);
      }
    }
  }
  return hits;
}

namespace {

// Amanatides-Woo traversal from origin toward end; calls visit(cell) for
// every voxel strictly before the terminal one, then returns the terminal cell.
template <typename Fn>
Vec3i ddaTraverse(const VoxelGrid& grid, const Vec3& origin, const Vec3& end, Fn&& visit) {
  const double res = grid.resolution();
  const Vec3i start_cell = grid.worldToCell(origin);
  const Vec3i end_cell = grid.worldToCell(end);
  Vec3i cell = start_cell;
  const Vec3 dir = end - origin;
  const double len = dir.norm();
  if (len < 1e-12) return end_cell;
  const Vec3 d = dir / len;

  Vec3i step;
  Vec3 t_max, t_delta;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d(i)) < 1e-12) {
      step(i) = 0;
      t_max(i) = std::numeric_limits<double>::infinity();
      t_delta(i) = std::numeric_limits<double>::infinity();
    } else {
      step(i) = d(i) > 0 ? 1 : -1;
      const double cell_bound =
          grid.origin()(i) + (cell(i) + (step(i) > 0 ? 1 : 0)) * res;
      t_max(i) = (cell_bound - origin(i)) / d(i);
      t_delta(i) = res / std::abs(d(i));
    }
  }

  int guard = 4 * (grid.dims().x() + grid.dims().y() + grid.dims().z());
  while (cell != end_cell && guard-- > 0) {
    visit(cell);
    int axis = 0;
    if (t_max(1) < t_max(axis)) axis = 1;
    if (t_max(2) < t_max(axis)) axis = 2;
    cell(axis) += step(axis);
    t_max(axis) += t_delta(axis);
  }
  return cell;
}

}  // namespace

void integrateScan(VoxelGrid* grid, const Vec3& sensor_origin, const std::vector<Vec3>& hits,
                   const LidarConfig& cfg, const std::vector<Vec3>& miss_endpoints) {
  (void)cfg;
  for (const Vec3& hit : hits) {
    const Vec3i terminal =
        ddaTraverse(*grid, sensor_origin, hit, [grid](const Vec3i& c) { grid->markFree(c); });
    grid->markOccupied(terminal);
  }
  for (const Vec3& end : miss_endpoints) {
    const Vec3i last =
        ddaTraverse(*grid, sensor_origin, end, [grid](const Vec3i& c) { grid->markFree(c); });
    grid->markFree(last);
  }
}

void senseAndIntegrate(VoxelGrid* grid, const QuadState& pose, const LidarConfig& cfg,
                       const Scenario& scene) {
  std::vector<Vec3> hits;
  std::vector<Vec3> misses;
  const Mat3 rot = quat::rotationMatrix(pose.q);
  for (int i = 0; i < cfg.rays_h; ++i) {
    const double az = -0.5 * cfg.horizontal_fov + cfg.horizontal_fov * (i + 0.5) / cfg.rays_h;
    for (int j = 0; j < cfg.rays_v; ++j) {
      const double el =
          cfg.vertical_tilt - 0.5 * cfg.vertical_fov + cfg.vertical_fov * (j + 0.5) / cfg.rays_v;
      const Vec3 dir_body(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const Vec3 dir = rot * dir_body;
      if (auto t = raycastScene(scene, pose.p, dir, cfg.max_range)) {
        hits.push_back(pose.p + *t * dir);
      } else {
        misses.push_back(pose.p + cfg.max_range * dir);
      }
    }
  }
  integrateScan(grid, pose.p, hits, cfg, misses);
}

namespace {

struct ScenarioLayout {
  Aabb bounds;
  Aabb region;  // where cylinders are placed
  Vec3 start;
  Vec3 goal;
};

ScenarioLayout layoutFor(ScenarioClass cls) {
  ScenarioLayout l;
  if (cls == ScenarioClass::kForest) {
    l.bounds = {Vec3(0, -7, 0), Vec3(24, 7, 4)};
    l.region = {Vec3(6, -5, 0), Vec3(16, 5, 0)};
    l.start = Vec3(1.5, 0, 1.2);
    l.goal = Vec3(22.0, 0, 1.2);
  } else {
    l.bounds = {Vec3(0, -7.5, 0), Vec3(60, 7.5, 4.5)};
    l.region = {Vec3(8, -6.5, 0), Vec3(52, 6.5, 0)};
    l.start = Vec3(2.0, 0, 1.2);
    l.goal = Vec3(56.0, 0, 1.2);
  }
  return l;
}

}  // namespace

Scenario generateScenario(ScenarioClass cls, double density, uint64_t seed) {
  if (density < 0.0) throw ScenarioGenError("density must be >= 0");
  const ScenarioLayout layout = layoutFor(cls);
  Scenario s;
  s.bounds = layout.bounds;
  s.start = layout.start;
  s.goal = layout.goal;
  s.seed = seed;

  const double area =
      (layout.region.max.x() - layout.region.min.x()) * (layout.region.max.y() - layout.region.min.y());
  const int count = static_cast<int>(std::llround(density * area));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(layout.region.min.x(), layout.region.max.x());
  std::uniform_real_distribution<double> uy(layout.region.min.y(), layout.region.max.y());
  std::uniform_real_distribution<double> ur(0.2, 0.6);
  std::uniform_real_distribution<double> uh(0.8, 3.0);

  const double keepout = 1.2;  // start/goal clearance beyond the cylinder radius
  for (int i = 0; i < count; ++i) {
    Cylinder c;
    c.radius = ur(rng);
    c.height = uh(rng);
    bool placed = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      c.center = Vec2(ux(rng), uy(rng));
      const double d_start = (c.center - Vec2(s.start.x(), s.start.y())).norm();
      const double d_goal = (c.center - Vec2(s.goal.x(), s.goal.y())).norm();
      if (d_start >= c.radius + keepout && d_goal >= c.radius + keepout) {
        placed = true;
        break;
      }
    }
    if (!placed) throw ScenarioGenError("could not place obstacle with start/goal clearance");
    s.obstacles.push_back(c);
  }
  return s;
}

std::string scenarioToJson(const Scenario& s) {
  json j;
  j["bounds"] = {{"min", {s.bounds.min.x(), s.bounds.min.y(), s.bounds.min.z()}},
                 {"max", {s.bounds.max.x(), s.bounds.max.y(), s.bounds.max.z()}}};
  json cyls = json::array();
  for (const Cylinder& c : s.obstacles) {
    cyls.push_back({{"center", {c.center.x(), c.center.y()}},
                    {"radius", c.radius},
                    {"height", c.height}});
  }
  j["cylinders"] = cyls;
  j["start"] = {s.start.x(), s.start.y(), s.start.z()};
  j["goal"] = {s.goal.x(), s.goal.y(), s.goal.z()};
  j["seed"] = s.seed;
  return j.dump(2);
}

Scenario scenarioFromJson(const std::string& text) {
  const json j = json::parse(text);
  Scenario s;
  for (int i = 0; i < 3; ++i) {
    s.bounds.min(i) = j.at("bounds").at("min").at(i).get<double>();
    s.bounds.max(i) = j.at("bounds").at("max").at(i).get<double>();
    s.start(i) = j.at("start").at(i).get<double>();
    s.goal(i) = j.at("goal").at(i).get<double>();
  }
  for (const auto& jc : j.at("cylinders")) {
    Cylinder c;
    c.center = Vec2(jc.at("center").at(0).get<double>(), jc.at("center").at(1).get<double>());
    c.radius = jc.at("radius").get<double>();
    c.height = jc.at("height").get<double>();
    s.obstacles.push_back(c);
  }
  s.seed = j.value("seed", 0ULL);
  return s;
}

Scenario loadScenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenarioFromJson(ss.str());
}

void saveScenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path);
  out << scenarioToJson(s) << "\n";
}

void dumpOccupiedCsv(const VoxelGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write point cloud file: " + path);
  for (int z = 0; z < grid.dims().z(); ++z)
    for (int y = 0; y < grid.dims().y(); ++y)
      for (int x = 0; x < grid.dims().x(); ++x) {
        const Vec3i c(x, y, z);
        if (grid.at(c) == Voxel::kOccupied) {
          const Vec3 p = grid.cellCenter(c);
          out << p.x() << "," << p.y() << "," << p.z() << "\n";
        }
      }
}

}  // namespace loong
