#include <doctest.h>

#include <random>

#include "loong/config.hpp"
#include "loong/mpcc.hpp"
#include "oracles.hpp"

using namespace loong;
using namespace loong::mpcc_dim;

namespace {

StateVec randomState(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  StateVec x;
  for (int i = 0; i < kState; ++i) x(i) = g(rng);
  x.segment<4>(kQ).normalize();
  x.segment<4>(kF) = Vec4::Constant(4.0) + 0.5 * x.segment<4>(kF).cwiseAbs();
  x(kVTheta) = std::abs(x(kVTheta));
  return x;
}

AugmentedState hoverState(const QuadParams& params, const Vec3& p) {
  AugmentedState s;
  s.x.p = p;
  s.f = Vec4::Constant(params.hoverThrustPerRotor());
  return s;
}

PiecewisePolynomial straightLineTraj(const Vec3& a, const Vec3& b, double duration) {
  return solveCoeffs({}, {duration}, BoundaryState{a, Vec3::Zero(), Vec3::Zero()},
                     BoundaryState{b, Vec3::Zero(), Vec3::Zero()});
}

}  // namespace

TEST_CASE("pack/unpack round trip") {
  std::mt19937_64 rng(3);
  const StateVec x = randomState(rng);
  CHECK((packState(unpackState(x)) - x).norm() == doctest::Approx(0.0));
}

TEST_CASE("mpcc step holds hover equilibrium") {
  QuadParams params;
  AugmentedState hover = hoverState(params, Vec3(1, 2, 3));
  const StateVec next = mpccStep(packState(hover), InputVec::Zero(), params, 0.03);
  CHECK((next - packState(hover)).norm() < 1e-12);
}

TEST_CASE("step jacobians match central finite differences") {
  QuadParams params;
  std::mt19937_64 rng(11);
  const double dt = 0.03;
  for (int trial = 0; trial < 5; ++trial) {
    const StateVec x = randomState(rng);
    InputVec u;
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < kInput; ++i) u(i) = 10 * g(rng);

    StateMat a;
    StateInputMat b;
    mpccStepJacobians(x, u, params, dt, &a, &b);

    const double h = 1e-6;
    StateMat a_fd;
    for (int j = 0; j < kState; ++j) {
      StateVec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      a_fd.col(j) = (mpccStep(xp, u, params, dt) - mpccStep(xm, u, params, dt)) / (2 * h);
    }
    StateInputMat b_fd;
    for (int j = 0; j < kInput; ++j) {
      InputVec up = u, um = u;
      up(j) += h;
      um(j) -= h;
      b_fd.col(j) = (mpccStep(x, up, params, dt) - mpccStep(x, um, params, dt)) / (2 * h);
    }
    const double scale_a = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double scale_b = std::max(1.0, b.cwiseAbs().maxCoeff());
    CHECK((a - a_fd).cwiseAbs().maxCoeff() / scale_a < 1e-5);
    CHECK((b - b_fd).cwiseAbs().maxCoeff() / scale_b < 1e-5);
  }
}

TEST_CASE("reference path from straight trajectory") {
  const PiecewisePolynomial traj = straightLineTraj(Vec3::Zero(), Vec3(10, 0, 0), 4.0);
  const auto ref = ReferencePath::build(traj);
  REQUIRE(ref.has_value());
  CHECK(ref->length() == doctest::Approx(10.0).epsilon(1e-3));
  // Constant tangent along the line, exact start lookup.
  CHECK((ref->lookup(0.0).pos - Vec3::Zero()).norm() < 1e-12);
  for (double th : {0.5, 3.3, 7.7, 9.9}) {
    CHECK((ref->lookup(th).tangent - Vec3(1, 0, 0)).norm() < 1e-6);
  }
  // Spacing invariant.
  for (std::size_t i = 1; i < ref->samples(); ++i) {
    CHECK(ref->sampleTheta(i) - ref->sampleTheta(i - 1) <= 0.05 + 1e-9);
    CHECK(ref->sampleTheta(i) > ref->sampleTheta(i - 1));
    CHECK(ref->sampleTangent(i).norm() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("reference path length matches fine polyline arc length") {
  // Half-circle of radius 1 interpolated through dense waypoints.
  std::vector<Vec3> interior;
  const int m = 8;
  for (int i = 1; i < m; ++i) {
    const double a = kPi * i / m;
    interior.push_back(Vec3(std::sin(a), 1.0 - std::cos(a), 0));
  }
  std::vector<double> durations(m, 0.8);
  const PiecewisePolynomial traj =
      solveCoeffs(interior, durations, BoundaryState{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()},
                  BoundaryState{Vec3(0, 2, 0), Vec3::Zero(), Vec3::Zero()});
  const auto ref = ReferencePath::build(traj);
  REQUIRE(ref.has_value());

  double oracle_len = 0.0;
  Vec3 prev = traj.position(0.0);
  for (int i = 1; i <= 2000000; ++i) {
    const Vec3 p = traj.position(traj.totalTime() * i / 2000000.0);
    oracle_len += (p - prev).norm();
    prev = p;
  }
  CHECK(std::abs(ref->length() - oracle_len) / oracle_len < 1e-3);
  CHECK(std::abs(ref->length() - kPi) / kPi < 0.01);
}

TEST_CASE("contour and lag errors") {
  const auto ref = ReferencePath::fromPolyline({Vec3::Zero(), Vec3(20, 0, 0)});

  SUBCASE("on-path point has zero errors") {
    const ContourErrors e = contourLagErrors(Vec3(5, 0, 0), 5.0, ref);
    CHECK(std::abs(e.lag) < 1e-9);
    CHECK(e.contour.norm() < 1e-9);
  }
  SUBCASE("axis-aligned decomposition") {
    const double theta = 3.0;
    const ContourErrors e = contourLagErrors(Vec3(theta + 0.2, 0.1, 0), theta, ref);
    CHECK(e.lag == doctest::Approx(0.2));
    CHECK(e.contour.norm() == doctest::Approx(0.1));
  }
  SUBCASE("pythagoras holds for random samples") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const Vec3 p(20 * u(rng), 4 * u(rng) - 2, 4 * u(rng) - 2);
      const double theta = 20 * u(rng);
      const ContourErrors e = contourLagErrors(p, theta, ref);
      const double direct = (p - ref.lookup(theta).pos).squaredNorm();
      CHECK(e.lag * e.lag + e.contour.squaredNorm() == doctest::Approx(direct).epsilon(1e-9));
    }
  }
}

namespace {

struct ClosedLoop {
  QuadParams params;
  MpccConfig cfg;
  MpccSolver solver;
  AugmentedState state;
  MpccSolution prev;
  bool has_prev = false;

  ClosedLoop(const MpccConfig& c, const AugmentedState& x0)
      : params(), cfg(c), solver(params, c), state(x0) {}

  int failures = 0;

  // One control period: solve, execute the first input through the plant.
  // A failed inner QP falls back to the shifted previous plan, like the
  // flight loop does.
  MpccSolution step(const ReferencePath& ref, const Polytope& sfc, double dt_ctrl) {
    MpccSolution warm;
    const MpccSolution* warm_ptr = nullptr;
    if (has_prev) {
      warm = shiftSolution(prev);
      warm_ptr = &warm;
    }
    MpccSolution sol = solver.solve(state, ref, sfc, warm_ptr);
    if (!sol.ok() && has_prev) {
      ++failures;
      sol = warm;
      sol.status = MpccSolution::Status::kOk;
    }
    REQUIRE(sol.ok());
    prev = sol;
    has_prev = true;

    const AugmentedInput& u = sol.inputs.front();
    RotorInput cmd;
    for (int i = 0; i < 4; ++i) {
      state.f(i) = std::clamp(state.f(i) + dt_ctrl * u.df(i), cfg.f_min, cfg.f_max);
    }
    cmd.f = state.f;
    const int plant_steps = std::max(1, static_cast<int>(std::llround(dt_ctrl / 0.001)));
    for (int s = 0; s < plant_steps; ++s) state.x = integrateRk4(state.x, cmd, params, 0.001);
    state.theta = ref.nearestTheta(state.x.p, state.theta - 2.0, state.theta + 2.0);
    state.v_theta = std::clamp(state.v_theta + dt_ctrl * u.dv_theta, 0.0, cfg.v_theta_max);
    return sol;
  }
};

Polytope bigBox() {
  Aabb box;
  box.min = Vec3(-100, -100, -100);
  box.max = Vec3(100, 100, 100);
  return Polytope::fromAabb(box);
}

}  // namespace

TEST_CASE("closed-loop hover regulation converges") {
  MpccConfig cfg;
  cfg.v_theta_max = 2.0;
  QuadParams params;
  AugmentedState x0 = hoverState(params, Vec3(0, 0, 1.0));
  const auto ref = ReferencePath::fromPolyline({Vec3(0, 0, 1.0), Vec3(0, 0, 1.5)});

  ClosedLoop loop(cfg, x0);
  const Polytope sfc = bigBox();
  for (int i = 0; i < 300; ++i) loop.step(ref, sfc, 0.01);
  CHECK((loop.state.x.p - Vec3(0, 0, 1.5)).norm() < 0.05);
  CHECK(loop.state.x.v.norm() < 0.2);
}

TEST_CASE("slab-constrained horizon obeys the safe-horizon split") {
  MpccConfig cfg;
  cfg.v_theta_max = 3.0;
  QuadParams params;
  const Vec3 start(0, 0, 1.0);

  // Long reference drifting out through the slab ceiling: within the test
  // window the constraint binds on the safe horizon while the horizon tail
  // is free to chase the reference outside.
  const auto ref = ReferencePath::fromPolyline({start, start + Vec3(20, 0, 1.6)});
  Polytope slab;
  slab.A = MatX::Zero(2, 3);
  slab.b = VecX::Zero(2);
  slab.A(0, 2) = 1.0;
  slab.b(0) = start.z() + 0.5;
  slab.A(1, 2) = -1.0;
  slab.b(1) = -(start.z() - 0.5);

  ClosedLoop loop(cfg, hoverState(params, start));
  double worst_slack = 0.0;
  int tail_exits = 0;
  for (int i = 0; i < 300; ++i) {
    const int failures_before = loop.failures;
    const MpccSolution sol = loop.step(ref, slab, 0.01);
    if (loop.failures != failures_before) continue;  // fallback cycle
    // Safe-horizon audit: steps 1..G stay in the slab within 1e-3.
    for (int k = 1; k <= cfg.safe_horizon; ++k) {
      worst_slack = std::max(worst_slack, slab.maxViolation(sol.states[k].x.p));
    }
    for (int k = cfg.safe_horizon + 1; k <= cfg.horizon; ++k) {
      if (slab.maxViolation(sol.states[k].x.p) > 0.05) ++tail_exits;
    }
    // Box bounds hold exactly on every returned solution.
    for (int k = 0; k <= cfg.horizon; ++k) {
      for (int r = 0; r < 4; ++r) {
        CHECK(sol.states[k].f(r) >= cfg.f_min);
        CHECK(sol.states[k].f(r) <= cfg.f_max);
      }
      CHECK(sol.states[k].v_theta >= 0.0);
      CHECK(sol.states[k].v_theta <= cfg.v_theta_max);
      if (k > 0) CHECK(sol.states[k].theta >= sol.states[k - 1].theta);
    }
    for (int k = 0; k < cfg.horizon; ++k) {
      for (int r = 0; r < 4; ++r) {
        CHECK(sol.inputs[k].df(r) >= cfg.df_min);
        CHECK(sol.inputs[k].df(r) <= cfg.df_max);
      }
      CHECK(sol.inputs[k].dv_theta >= cfg.dv_min);
      CHECK(sol.inputs[k].dv_theta <= cfg.dv_max);
    }
    // Bodyrate bound (slacked hard constraint) within the slack scale.
    for (int k = 1; k <= cfg.horizon; ++k) {
      for (int r = 0; r < 3; ++r) {
        CHECK(std::abs(sol.states[k].x.w(r)) <= cfg.omega_max(r) + 0.02);
      }
    }
  }
  CHECK(worst_slack <= 1e-3);
  CHECK(tail_exits > 0);            // the split is not vacuous
  CHECK(loop.failures <= 300 / 5);  // fallbacks stay exceptional
}

TEST_CASE("sprint along a minimum-jerk reference saturates progress speed") {
  MpccConfig cfg;
  cfg.v_theta_max = 15.0;
  QuadParams params;
  const Vec3 start(0, 0, 2.0);

  // Production-style reference: near time-optimal rest-to-rest polynomial.
  FlatLimits limits;
  const BoundaryState o{start, Vec3::Zero(), Vec3::Zero()};
  const BoundaryState f{start + Vec3(60, 0, 0), Vec3::Zero(), Vec3::Zero()};
  const MinTimeResult expert = minTimeAllocate({}, o, f, limits, params);
  REQUIRE(expert.converged);
  const PiecewisePolynomial traj = solveCoeffs({}, expert.durations, o, f);
  const auto ref = ReferencePath::build(traj);
  REQUIRE(ref.has_value());

  ClosedLoop loop(cfg, hoverState(params, start));
  const Polytope sfc = bigBox();
  int saturated_vtheta = 0;
  int near_max_thrust = 0;
  double peak_speed = 0.0;
  for (int i = 0; i < 500; ++i) {
    loop.step(*ref, sfc, 0.01);
    peak_speed = std::max(peak_speed, loop.state.x.v.norm());
    if (loop.state.v_theta >= cfg.v_theta_max - 1e-9) ++saturated_vtheta;
    if (loop.state.f.sum() >= 0.90 * 4 * cfg.f_max) ++near_max_thrust;
  }
  CHECK(saturated_vtheta > 100);
  CHECK(near_max_thrust > 20);
  CHECK(peak_speed > 12.0);
  CHECK(loop.failures < 25);
}

TEST_CASE("repeated warm-started solves are non-increasing in cost") {
  MpccConfig cfg;
  QuadParams params;
  const Vec3 start(0, 0, 1.0);
  const auto ref = ReferencePath::fromPolyline({start, start + Vec3(20, 0, 0)});
  const Polytope sfc = bigBox();
  MpccSolver solver(params, cfg);

  AugmentedState x0 = hoverState(params, start);
  MpccSolution sol = solver.solve(x0, *std::optional(ref), sfc, nullptr);
  REQUIRE(sol.ok());
  double last = sol.cost;
  for (int i = 0; i < 6; ++i) {
    sol = solver.solve(x0, ref, sfc, &sol);
    REQUIRE(sol.ok());
    CHECK(sol.cost <= last + 1e-9);
    last = sol.cost;
  }
}

TEST_CASE("solver failure paths") {
  MpccConfig cfg;
  QuadParams params;
  const auto ref = ReferencePath::fromPolyline({Vec3(0, 0, 1), Vec3(5, 0, 1)});

  SUBCASE("x0 outside the corridor beyond tolerance") {
    Polytope tiny;
    tiny.A = MatX::Zero(1, 3);
    tiny.b = VecX::Zero(1);
    tiny.A(0, 2) = 1.0;
    tiny.b(0) = 0.2;  // z <= 0.2, start at z=1
    MpccSolver solver(params, cfg);
    const MpccSolution sol = solver.solve(hoverState(params, Vec3(0, 0, 1)), ref, tiny, nullptr);
    CHECK(sol.status == MpccSolution::Status::kInfeasibleStart);
  }
  SUBCASE("qp iteration starvation reports failure") {
    MpccConfig starved = cfg;
    starved.qp_max_iterations = 0;
    MpccSolver solver(params, starved);
    const MpccSolution sol = solver.solve(hoverState(params, Vec3(0, 0, 1)), ref, bigBox(), nullptr);
    CHECK(sol.status == MpccSolution::Status::kQpFailure);
  }
}

TEST_CASE("dynamics defect of returned solutions is zero") {
  MpccConfig cfg;
  QuadParams params;
  const Vec3 start(0, 0, 1.0);
  const auto ref = ReferencePath::fromPolyline({start, start + Vec3(15, 0, 0)});
  MpccSolver solver(params, cfg);
  const MpccSolution sol = solver.solve(hoverState(params, start), ref, bigBox(), nullptr);
  REQUIRE(sol.ok());
  for (int k = 0; k < cfg.horizon; ++k) {
    InputVec u;
    u.segment<4>(0) = sol.inputs[k].df;
    u(4) = sol.inputs[k].dv_theta;
    const StateVec expect = mpccStep(packState(sol.states[k]), u, params, cfg.dt);
    CHECK((packState(sol.states[k + 1]) - expect).cwiseAbs().maxCoeff() <= 1e-6);
  }
}
