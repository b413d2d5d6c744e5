#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "loong/dynamics.hpp"
#include "loong/geometry.hpp"

namespace loong {

struct PolytrajError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// M segments of degree-5 polynomials over local time, four flat outputs
// (x, y, z, yaw). Yaw is held at zero throughout.
class PiecewisePolynomial {
 public:
  PiecewisePolynomial() = default;

  int segments() const { return static_cast<int>(times_.size()); }
  const std::vector<double>& times() const { return times_; }
  double totalTime() const { return total_; }

  // Flat output derivative of the given order at absolute time t (clamped).
  Vec4 eval(double t, int order) const;
  Vec3 position(double t) const { return eval(t, 0).head<3>(); }

  // Coefficient access for tests: segment s, axis a, monomial power k.
  double coeff(int s, int axis, int k) const { return coeffs_[s](k, axis); }

  static PiecewisePolynomial fromCoeffs(std::vector<Eigen::Matrix<double, 6, 4>> coeffs,
                                        std::vector<double> times);

 private:
  std::vector<Eigen::Matrix<double, 6, 4>> coeffs_;
  std::vector<double> times_;
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

struct BoundaryState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
};

// Minimum-jerk solve through the interior waypoints with fixed boundary
// pos/vel/acc: the banded linear system in the segment coefficients, O(M).
// Throws PolytrajError on non-positive or degenerate durations.
PiecewisePolynomial solveCoeffs(const std::vector<Vec3>& interior_waypoints,
                                const std::vector<double>& durations, const BoundaryState& sigma_o,
                                const BoundaryState& sigma_f);

struct FlatLimits {
  double f_max_mass_norm = 33.0;  // m/s^2, collective thrust / mass
  double omega_max = 10.0;        // rad/s, xy bodyrate magnitude
  double thrust_margin = 0.9;     // applied to f_max in the check (drag slack)
};

struct FlatSample {
  double t = 0.0;
  Vec3 pos = Vec3::Zero();
  Vec3 vel = Vec3::Zero();
  Vec3 acc = Vec3::Zero();
  Vec3 jerk = Vec3::Zero();
  double thrust_mass_norm = 0.0;
  double bodyrate_mag = 0.0;
};

struct FeasibilityReport {
  bool feasible = true;
  double max_thrust = 0.0;
  double max_bodyrate = 0.0;
  double first_violation = -1.0;  // s, -1 when feasible
};

FlatSample flatSample(const PiecewisePolynomial& traj, const QuadParams& params, double t);

// Samples thrust c(t) = |a + g e3| and bodyrate |j_perp| / c against the
// limits. Report type; never throws.
FeasibilityReport flatCheck(const PiecewisePolynomial& traj, const QuadParams& params,
                            const FlatLimits& limits, double dt_sample);

struct MinTimeResult {
  std::vector<double> durations;
  bool converged = true;  // false: trapezoidal fallback with safety factor
};

// Two-layer minimum-time allocation: trapezoidal initial guess, coordinate
// bisection to the per-segment feasibility boundary, then a uniform-scale
// polish. The result is feasible and locally minimal (a 2% uniform shrink or
// a 5% single-segment shrink is infeasible).
MinTimeResult minTimeAllocate(const std::vector<Vec3>& interior_waypoints, const BoundaryState& o,
                              const BoundaryState& f, const FlatLimits& limits,
                              const QuadParams& params);

// CSV rows (t, pos, vel, acc, thrust_mass_norm, bodyrate_mag) at `rate` Hz.
void dumpTrajectoryCsv(const PiecewisePolynomial& traj, const QuadParams& params,
                       const std::string& path, double rate = 100.0);

}  // namespace loong
