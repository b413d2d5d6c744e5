#include "loong/pilot.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include <cstdlib>

namespace loong {

using json = nlohmann::json;

std::string CycleTelemetry::toJsonLine() const {
  json j;
  j["t"] = t;
  j["x0"] = {{"p", {x0.x.p.x(), x0.x.p.y(), x0.x.p.z()}},
             {"q", {x0.x.q(0), x0.x.q(1), x0.x.q(2), x0.x.q(3)}},
             {"v", {x0.x.v.x(), x0.x.v.y(), x0.x.v.z()}},
             {"w", {x0.x.w.x(), x0.x.w.y(), x0.x.w.z()}},
             {"f", {x0.f(0), x0.f(1), x0.f(2), x0.f(3)}}};
  j["theta"] = x0.theta;
  j["v_theta"] = x0.v_theta;
  j["cost"] = cost;
  j["sfc_slack_max"] = sfc_slack_max;
  j["kkt_residual"] = kkt_residual;
  j["solve_time"] = solve_time;
  j["executed_input"] = {{"df", {executed.df(0), executed.df(1), executed.df(2), executed.df(3)}},
                         {"dv_theta", executed.dv_theta}};
  j["fallback"] = fallback;
  j["reuse_violation"] = reuse_violation;
  if (!note.empty()) j["note"] = note;
  return j.dump();
}

Pilot::Pilot(const Config& cfg, const Scenario& scenario)
    : cfg_(cfg),
      scenario_(scenario),
      grid_(VoxelGrid::coverBounds(scenario.bounds, cfg.resolution)),
      solver_(cfg.quad, cfg.mpcc) {
  mission_.goal = scenario.goal;
  f_cmd_ = Vec4::Constant(cfg_.quad.hoverThrustPerRotor());
  seedFreeBubble(scenario.start, cfg_.start_free_radius);
}

void Pilot::sense(const QuadState& pose) {
  senseAndIntegrate(&grid_, pose, cfg_.lidar, scenario_);
}

void Pilot::seedFreeBubble(const Vec3& center, double radius) {
  const Vec3i lo = grid_.worldToCell(center - Vec3::Constant(radius));
  const Vec3i hi = grid_.worldToCell(center + Vec3::Constant(radius));
  for (int z = lo.z(); z <= hi.z(); ++z)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int x = lo.x(); x <= hi.x(); ++x) {
        const Vec3i c(x, y, z);
        if (grid_.inside(c) && (grid_.cellCenter(c) - center).norm() <= radius) grid_.markFree(c);
      }
}

std::vector<double> Pilot::heuristicTimes(const std::vector<Vec3>& rel, const Vec3& v) const {
  // Trapezoid-style guess; callers grow it until the flat check passes.
  const double a_eff = std::max(
      1.0, cfg_.flat_limits.thrust_margin * cfg_.flat_limits.f_max_mass_norm - 9.81);
  std::vector<double> T(rel.size());
  Vec3 prev = Vec3::Zero();
  const double v0 = v.norm();
  for (std::size_t i = 0; i < rel.size(); ++i) {
    const double d = (rel[i] - prev).norm();
    const double t_acc = 2.0 * std::sqrt(std::max(d, 0.05) / a_eff);
    const double t_vel = d / std::max(1.0, v0);
    T[i] = std::max(0.08, i == 0 ? std::min(t_acc, t_vel) : t_acc);
    prev = rel[i];
  }
  return T;
}

std::vector<double> Pilot::allocateTimes(const std::vector<Vec3>& rel, const Vec3& v, const Vec3& a,
                                         bool* used_heuristic) {
  if (model_ && static_cast<int>(rel.size()) <= model_->m_max) {
    *used_heuristic = false;
    return infer(*model_, v, a, rel);
  }
  *used_heuristic = true;
  return heuristicTimes(rel, v);
}

RotorInput Pilot::execute(const AugmentedInput& input, double v_cap) {
  const double dt_c = 1.0 / cfg_.replan_rate;
  for (int i = 0; i < 4; ++i) {
    f_cmd_(i) = std::clamp(f_cmd_(i) + dt_c * input.df(i), cfg_.mpcc.f_min, cfg_.mpcc.f_max);
  }
  mission_.prev_theta += dt_c * v_theta_;
  v_theta_ = std::clamp(v_theta_ + dt_c * input.dv_theta, 0.0, v_cap);
  RotorInput cmd;
  cmd.f = f_cmd_;
  return cmd;
}

RotorInput Pilot::executeShiftedPrevious(CycleTelemetry* tel) {
  tel->fallback = true;
  ++mission_.qp_failures;
  if (mission_.qp_failures >= 3) mission_.phase = MissionPhase::kFailed;
  if (mission_.prev_solution && !mission_.prev_solution->inputs.empty()) {
    MpccSolution shifted = shiftSolution(*mission_.prev_solution);
    mission_.prev_solution = shifted;
    tel->executed = shifted.inputs.front();
    return execute(shifted.inputs.front(), last_v_cap_ > 0 ? last_v_cap_ : cfg_.mpcc.v_theta_max);
  }
  // Nothing to reuse: hold the current thrust.
  AugmentedInput zero;
  tel->executed = zero;
  return execute(zero, cfg_.mpcc.v_theta_max);
}

RotorInput Pilot::brakeCycle(const QuadState& plant, const Vec3& a_est, CycleTelemetry* tel) {
  tel->fallback = true;
  (void)a_est;
  if (!mission_.prev_ref || !mission_.prev_sfc) {
    return executeShiftedPrevious(tel);
  }
  // Degenerate MPCC call: progress reward off, progress speed wound down,
  // previous reference and corridor (both known safe) kept.
  MpccConfig saved = solver_.config();
  solver_.config().mu = 0.0;
  solver_.config().v_theta_max = std::max(0.5, v_theta_);

  AugmentedState x0;
  x0.x = plant;
  x0.f = f_cmd_;
  x0.theta = mission_.prev_ref->nearestTheta(plant.p, mission_.prev_theta - 2.0,
                                             mission_.prev_theta + 2.0);
  x0.v_theta = std::min(v_theta_, solver_.config().v_theta_max);
  tel->x0 = x0;

  MpccSolution warm;
  const MpccSolution* warm_ptr = nullptr;
  if (mission_.prev_solution) {
    warm = shiftSolution(*mission_.prev_solution);
    warm_ptr = &warm;
  }
  MpccSolution sol = solver_.solve(x0, *mission_.prev_ref, *mission_.prev_sfc, warm_ptr);
  const double v_cap = solver_.config().v_theta_max;
  solver_.config() = saved;

  tel->solve_time = sol.solve_time;
  if (!sol.ok()) {
    return executeShiftedPrevious(tel);
  }
  mission_.qp_failures = 0;
  mission_.prev_solution = sol;
  mission_.prev_theta = x0.theta;
  tel->cost = sol.cost;
  tel->sfc_slack_max = sol.sfc_slack_max;
  tel->kkt_residual = sol.kkt_residual;
  tel->executed = sol.inputs.front();
  last_v_cap_ = v_cap;
  return execute(sol.inputs.front(), v_cap);
}

RotorInput Pilot::planCycle(const QuadState& plant) {
  const auto t_begin = std::chrono::steady_clock::now();
  CycleTelemetry tel;
  tel.t = mission_.clock;
  mission_.clock += 1.0 / cfg_.replan_rate;

  const Vec3 p_c = plant.p;

  // Flatness-consistent acceleration estimate from the current command.
  RotorInput current;
  current.f = f_cmd_;
  const Vec3 a_est = stateDerivative(plant, current, cfg_.quad).dv;

  tel.x0.x = plant;
  tel.x0.f = f_cmd_;
  tel.x0.theta = mission_.prev_theta;
  tel.x0.v_theta = v_theta_;

  auto finish = [&](const RotorInput& cmd) {
    tel.cycle_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    telemetry_ = tel;
    return cmd;
  };

  // Trajectory reuse: plan from the G-th state of the previous horizon.
  bool reuse = cfg_.trajectory_reuse && mission_.prev_solution.has_value() &&
               mission_.prev_sfc.has_value();
  Vec3 p_g = p_c;
  if (reuse) {
    const int g = std::min<int>(cfg_.mpcc.safe_horizon,
                                static_cast<int>(mission_.prev_solution->states.size()) - 1);
    p_g = mission_.prev_solution->states[g].x.p;
    const double tol = 1e-3;
    if (mission_.prev_sfc->maxViolation(p_c) > tol || mission_.prev_sfc->maxViolation(p_g) > tol) {
      tel.reuse_violation = true;
      reuse = false;
      p_g = p_c;
    }
  }

  // The controller corridor treats UNKNOWN as non-free (frontier points
  // included); the waypoint chain follows the optimistic A* path and only
  // separates from observed obstacles.
  ObstaclePointProvider sfc_provider = [this](const Aabb& box, std::vector<Vec3>* out) {
    grid_.collectObstaclePoints(box, out, true);
  };
  ObstaclePointProvider chain_provider = [this](const Aabb& box, std::vector<Vec3>* out) {
    grid_.collectObstaclePoints(box, out, false);
  };

  // Local SFC for the controller, seeded by p_c..p_G (a point on the first
  // cycle). Both endpoints are inside the previous polytope when reusing.
  Polytope local_sfc;
  {
    const Aabb roi = seedRoi(p_c, p_g, scenario_.bounds, cfg_.corridor);
    std::vector<Vec3> pts;
    sfc_provider(roi, &pts);
    const InflateResult inf = inflatePolytope(p_c, p_g, pts, roi, cfg_.corridor);
    if (inf.status != CorridorStatus::kOk) {
      tel.note = "local_sfc_seed";
      return finish(brakeCycle(plant, a_est, &tel));
    }
    local_sfc = inf.poly;
  }

  const auto path = astar(grid_, p_g, mission_.goal, cfg_.inflation(), &scratch_);
  if (!path || path->cells.empty()) {
    tel.note = "astar";
    return finish(brakeCycle(plant, a_est, &tel));
  }
  const ShortPath sp = shorten(*path, grid_, cfg_.inflation());

  // Waypoint chain seeds: the shortened path from p_G.
  std::vector<Vec3> chain;
  chain.push_back(p_g);
  for (std::size_t i = 1; i < sp.vertices.size(); ++i) chain.push_back(sp.vertices[i]);
  if (static_cast<int>(chain.size()) > cfg_.m_max + 1) chain.resize(cfg_.m_max + 1);
  if ((chain.back() - mission_.goal).norm() <= cfg_.resolution) chain.back() = mission_.goal;

  ShortPath seeds;
  seeds.vertices = chain;
  const DecomposeResult dec = decompose(seeds, chain_provider, scenario_.bounds, cfg_.corridor);
  if (dec.status != CorridorStatus::kOk) {
    tel.note = dec.status == CorridorStatus::kBrokenChain ? "broken_chain" : "chain_seed";
    return finish(brakeCycle(plant, a_est, &tel));
  }
  corridor_ = dec.corridor;

  // Waypoints: overlap centers by default, raw path corners in the ablation.
  std::vector<Vec3> waypoints;
  if (cfg_.intersection_waypoints) {
    waypoints = corridor_.waypoints;
  } else {
    waypoints.assign(chain.begin() + 1, chain.end() - (chain.size() > 1 ? 1 : 0));
  }
  if (chain.size() > 1 || (chain.back() - p_c).norm() > 1e-3) waypoints.push_back(chain.back());

  // Collapse clustered waypoints; the final (goal-side) one survives unless
  // it coincides with its predecessor.
  std::vector<Vec3> wps;
  Vec3 prev_wp = p_c;
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    const bool last = i + 1 == waypoints.size();
    const double d = (waypoints[i] - prev_wp).norm();
    if (d < (last ? 1e-3 : 0.25)) continue;
    wps.push_back(waypoints[i]);
    prev_wp = waypoints[i];
  }
  if (static_cast<int>(wps.size()) > cfg_.m_max) wps.resize(cfg_.m_max);

  if (wps.empty()) {
    // Already at the goal cell: regulate in place along a stub reference.
    tel.note = "no_waypoints";
    return finish(brakeCycle(plant, a_est, &tel));
  }

  std::vector<Vec3> rel(wps.size());
  for (std::size_t i = 0; i < wps.size(); ++i) rel[i] = wps[i] - p_c;
  std::vector<double> alloc = allocateTimes(rel, plant.v, a_est, &tel.used_heuristic_alloc);

  BoundaryState sigma_o;
  sigma_o.p = p_c;
  sigma_o.v = plant.v;
  sigma_o.a = a_est;
  BoundaryState sigma_f;
  sigma_f.p = wps.back();

  std::vector<Vec3> interior(wps.begin(), wps.end() - 1);
  PiecewisePolynomial traj;
  try {
    traj = solveCoeffs(interior, alloc, sigma_o, sigma_f);
    // Sanity-check the learned allocation with relaxed limits; fall back to
    // the heuristic (grown until feasible) when it is badly off.
    FlatLimits relaxed = cfg_.flat_limits;
    relaxed.f_max_mass_norm *= 1.15;
    relaxed.omega_max *= 1.15;
    if (!flatCheck(traj, cfg_.quad, relaxed, 0.02).feasible) {
      alloc = heuristicTimes(rel, plant.v);
      tel.used_heuristic_alloc = true;
      for (int grow = 0; grow < 6; ++grow) {
        traj = solveCoeffs(interior, alloc, sigma_o, sigma_f);
        if (flatCheck(traj, cfg_.quad, relaxed, 0.02).feasible) break;
        for (double& t : alloc) t *= 1.3;
      }
    }
  } catch (const PolytrajError&) {
    tel.note = "polytraj";
    return finish(brakeCycle(plant, a_est, &tel));
  }

  const auto ref = ReferencePath::build(traj);
  if (!ref) {
    tel.note = "degenerate_ref";
    return finish(brakeCycle(plant, a_est, &tel));
  }

  const double theta0 = ref->nearestTheta(p_c, 0.0, 2.0);
  const double remaining = std::max(0.0, ref->length() - theta0);

  // Progress-speed governor: stay stoppable before the path end and before
  // the reference leaves the certified local corridor.
  double sfc_free = remaining;
  const double lookahead = std::min(remaining, 15.0);
  for (double d = 0.2; d <= lookahead; d += 0.2) {
    if (local_sfc.maxViolation(ref->lookup(theta0 + d).pos) > -0.02) {
      sfc_free = d;
      break;
    }
  }
  const double v_cap = std::min(
      {cfg_.mpcc.v_theta_max, std::sqrt(2.0 * cfg_.brake_decel * remaining) + 0.3,
       std::sqrt(2.0 * cfg_.brake_decel * sfc_free) + 0.3});

  MpccConfig saved = solver_.config();
  solver_.config().v_theta_max = v_cap;

  AugmentedState x0;
  x0.x = plant;
  x0.f = f_cmd_;
  x0.theta = theta0;
  x0.v_theta = std::min(v_theta_, v_cap);
  tel.x0 = x0;

  if (std::getenv("LOONG_PILOT_DEBUG")) {
    std::printf("t=%.2f pc=(%.2f %.2f %.2f) pg=(%.2f %.2f %.2f) wps:", mission_.clock, p_c.x(),
                p_c.y(), p_c.z(), p_g.x(), p_g.y(), p_g.z());
    for (const Vec3& w : wps) std::printf(" (%.1f %.1f %.1f)", w.x(), w.y(), w.z());
    std::printf(" | T:");
    for (double tt : alloc) std::printf(" %.2f", tt);
    std::printf(" | len=%.1f th0=%.2f vcap=%.1f sfc_free=%.1f heur=%d\n", ref->length(), theta0,
                v_cap, sfc_free, int(tel.used_heuristic_alloc));
  }

  MpccSolution warm;
  const MpccSolution* warm_ptr = nullptr;
  if (mission_.prev_solution) {
    warm = shiftSolution(*mission_.prev_solution);
    warm_ptr = &warm;
  }
  MpccSolution sol = solver_.solve(x0, *ref, local_sfc, warm_ptr);
  solver_.config() = saved;

  tel.solve_time = sol.solve_time;
  if (!sol.ok()) {
    tel.note = sol.status == MpccSolution::Status::kQpFailure ? "qp_failure" : "x0_outside_sfc";
    return finish(executeShiftedPrevious(&tel));
  }

  mission_.qp_failures = 0;
  mission_.prev_solution = sol;
  mission_.prev_sfc = local_sfc;
  mission_.prev_ref = *ref;
  mission_.prev_theta = theta0;
  last_v_cap_ = v_cap;

  tel.cost = sol.cost;
  tel.sfc_slack_max = sol.sfc_slack_max;
  tel.kkt_residual = sol.kkt_residual;
  tel.executed = sol.inputs.front();
  return finish(execute(sol.inputs.front(), v_cap));
}

std::string MissionResult::toJson(bool include_timing) const {
  json j;
  j["success"] = success;
  j["collision"] = collision;
  j["phase"] = phase == MissionPhase::kGoalReached ? "GOAL_REACHED"
               : phase == MissionPhase::kFailed    ? "FAILED"
                                                   : "FLYING";
  j["flight_time"] = flight_time;
  j["avg_speed"] = avg_speed;
  j["max_speed"] = max_speed;
  j["cycles"] = cycles;
  j["sfc_violations"] = sfc_violations;
  j["qp_failures"] = qp_failures;
  j["fallback_cycles"] = fallback_cycles;
  j["seed"] = seed;
  if (include_timing) {
    j["mean_cycle_ms"] = mean_cycle_ms;
    j["p99_cycle_ms"] = p99_cycle_ms;
  }
  return j.dump(2);
}

MissionResult runMission(const Config& cfg, const Scenario& scenario, const MlpModel* model,
                         const std::string& telemetry_path) {
  Pilot pilot(cfg, scenario);
  if (model) pilot.setModel(*model);

  std::ofstream telemetry;
  if (!telemetry_path.empty()) {
    telemetry.open(telemetry_path);
    if (!telemetry) throw std::runtime_error("cannot write telemetry: " + telemetry_path);
  }

  QuadState plant;
  plant.p = scenario.start;

  MissionResult result;
  result.seed = scenario.seed;

  const double dt_c = 1.0 / cfg.replan_rate;
  const int plant_steps = std::max(1, static_cast<int>(std::llround(dt_c / cfg.plant_dt)));
  const int cycles_per_scan =
      std::max(1, static_cast<int>(std::llround(cfg.replan_rate / cfg.lidar.rate)));

  std::vector<double> cycle_times;
  double speed_sum = 0.0;
  RotorInput cmd;
  cmd.f = Vec4::Constant(cfg.quad.hoverThrustPerRotor());

  const int max_cycles = static_cast<int>(cfg.mission_timeout / dt_c);
  for (int cycle = 0; cycle < max_cycles; ++cycle) {
    if (cycle % cycles_per_scan == 0) pilot.sense(plant);

    cmd = pilot.planCycle(plant);
    const CycleTelemetry& tel = pilot.lastTelemetry();
    cycle_times.push_back(tel.cycle_seconds * 1e3);
    if (tel.fallback) ++result.fallback_cycles;
    if (telemetry) telemetry << tel.toJsonLine() << "\n";

    if (pilot.mission().phase == MissionPhase::kFailed) break;

    for (int s = 0; s < plant_steps; ++s) {
      plant = integrateRk4(plant, cmd, cfg.quad, cfg.plant_dt);
      if (scenario.obstacleDistance(plant.p) < cfg.robot_radius ||
          !scenario.bounds.contains(plant.p, -cfg.robot_radius)) {
        result.collision = true;
        pilot.mission().phase = MissionPhase::kFailed;
        break;
      }
    }

    // Safety-chain audit: the executed state stays in the constraining SFC.
    if (!tel.fallback && pilot.lastSfc().has_value()) {
      if (pilot.lastSfc()->maxViolation(plant.p) > 1e-2) ++result.sfc_violations;
    }

    const double speed = plant.v.norm();
    speed_sum += speed;
    result.max_speed = std::max(result.max_speed, speed);
    ++result.cycles;

    if (result.collision || pilot.mission().phase == MissionPhase::kFailed) break;

    if ((plant.p - scenario.goal).norm() <= cfg.goal_tolerance &&
        plant.v.norm() <= cfg.goal_speed_tolerance) {
      pilot.mission().phase = MissionPhase::kGoalReached;
      break;
    }
  }

  result.phase = pilot.mission().phase;
  if (result.phase == MissionPhase::kFlying) result.phase = MissionPhase::kFailed;  // timeout
  result.success = result.phase == MissionPhase::kGoalReached && !result.collision;
  result.flight_time = result.cycles * dt_c;
  result.avg_speed = result.cycles > 0 ? speed_sum / result.cycles : 0.0;
  result.qp_failures = pilot.mission().qp_failures;
  if (!cycle_times.empty()) {
    double sum = 0.0;
    for (double v : cycle_times) sum += v;
    result.mean_cycle_ms = sum / cycle_times.size();
    std::vector<double> sorted = cycle_times;
    std::sort(sorted.begin(), sorted.end());
    result.p99_cycle_ms = sorted[static_cast<std::size_t>(0.99 * (sorted.size() - 1))];
  }
  return result;
}

}  // namespace loong
