#pragma once

#include <optional>
#include <vector>

#include "loong/corridor.hpp"
#include "loong/dynamics.hpp"
#include "loong/geometry.hpp"
#include "loong/polytraj.hpp"

namespace loong {

// Augmented state: rigid body + rotor thrusts + progress (theta, v_theta).
struct AugmentedState {
  QuadState x;
  Vec4 f = Vec4::Zero();   // N
  double theta = 0.0;      // m
  double v_theta = 0.0;    // m/s
};

struct AugmentedInput {
  Vec4 df = Vec4::Zero();  // N/s
  double dv_theta = 0.0;   // m/s^2
};

namespace mpcc_dim {
constexpr int kState = 19;  // p(3) q(4) v(3) w(3) f(4) theta v_theta
constexpr int kInput = 5;   // df(4) dv_theta
constexpr int kP = 0, kQ = 3, kV = 7, kW = 10, kF = 13, kTheta = 17, kVTheta = 18;
}  // namespace mpcc_dim

using StateVec = Eigen::Matrix<double, mpcc_dim::kState, 1>;
using InputVec = Eigen::Matrix<double, mpcc_dim::kInput, 1>;
using StateMat = Eigen::Matrix<double, mpcc_dim::kState, mpcc_dim::kState>;
using StateInputMat = Eigen::Matrix<double, mpcc_dim::kState, mpcc_dim::kInput>;

StateVec packState(const AugmentedState& s);
AugmentedState unpackState(const StateVec& v);

// One explicit-Euler step of the augmented model; the quaternion is
// renormalized after the update.
StateVec mpccStep(const StateVec& x, const InputVec& u, const QuadParams& params, double dt);

// Analytic Jacobians of mpccStep (match central finite differences).
void mpccStepJacobians(const StateVec& x, const InputVec& u, const QuadParams& params, double dt,
                       StateMat* a, StateInputMat* b);

// Arc-length parameterized lookup table over a flat trajectory.
class ReferencePath {
 public:
  struct Lookup {
    Vec3 pos;
    Vec3 tangent;   // unit
    Vec3 dtangent;  // d tangent / d theta
  };

  // nullopt when the trajectory is shorter than 0.01 m (hold-position mode).
  static std::optional<ReferencePath> build(const PiecewisePolynomial& traj,
                                            double max_spacing = 0.05);
  static ReferencePath fromPolyline(const std::vector<Vec3>& pts);

  double length() const { return theta_.empty() ? 0.0 : theta_.back(); }
  Lookup lookup(double theta) const;  // theta clamped to [0, length]

  // Arc length of the table point nearest to p within [lo, hi].
  double nearestTheta(const Vec3& p, double lo, double hi) const;

  std::size_t samples() const { return theta_.size(); }
  double sampleTheta(std::size_t i) const { return theta_[i]; }
  const Vec3& samplePos(std::size_t i) const { return pos_[i]; }
  const Vec3& sampleTangent(std::size_t i) const { return tan_[i]; }

 private:
  std::vector<double> theta_;
  std::vector<Vec3> pos_;
  std::vector<Vec3> tan_;
};

struct ContourErrors {
  double lag = 0.0;  // tangential, signed
  Vec3 contour = Vec3::Zero();
};

ContourErrors contourLagErrors(const Vec3& p, double theta, const ReferencePath& ref);

struct MpccConfig {
  int horizon = 20;       // N
  int safe_horizon = 10;  // G, SFC rows on steps 1..G
  double dt = 0.03;       // s

  double q_l = 2500.0;
  double q_c = 30000.0;
  Vec3 q_omega = Vec3(5.0, 5.0, 5.0);
  double r_df = 1e-4;
  double r_dv = 5e-3;
  double mu = 500.0;

  Vec3 omega_max = Vec3(10.0, 10.0, 0.3);  // rad/s
  double f_min = 0.1;                      // N per rotor
  double f_max = 12.7875;                  // N per rotor (33 m/s^2 * 1.55 kg / 4)
  double v_theta_max = 25.0;               // m/s
  double df_min = -400.0, df_max = 400.0;  // N/s
  double dv_min = -40.0, dv_max = 30.0;    // m/s^2

  double rho_sfc = 1e5;       // quadratic slack penalty on SFC rows
  double rho_sfc_l1 = 5e6;    // exact (L1) slack penalty on SFC rows
  double rho_omega = 1e5;     // quadratic slack penalty on bodyrate bounds
  double rho_omega_l1 = 2e3;  // exact (L1) slack penalty on bodyrate bounds
  double sfc_margin = 0.1;    // m, linearization activation band
  double sfc_tighten = 0.02;  // m, internal constraint tightening
  double omega_margin = 0.5;  // rad/s

  int gn_iterations = 2;
  int qp_max_iterations = 250;
  double qp_tolerance = 1e-10;
  double levenberg = 1e-3;
  double x0_sfc_tolerance = 0.05;  // m

  void setCollectiveThrustLimit(double mass_norm_limit, double mass) {
    f_max = mass_norm_limit * mass / 4.0;
  }
};

struct MpccSolution {
  enum class Status { kOk, kQpFailure, kInfeasibleStart };
  Status status = Status::kOk;
  std::vector<AugmentedState> states;  // horizon + 1, rollout of inputs
  std::vector<AugmentedInput> inputs;  // horizon
  double cost = 0.0;                   // merit: objective + constraint penalties
  double sfc_slack_max = 0.0;          // m, max violation over steps 1..G
  double kkt_residual = 0.0;
  double solve_time = 0.0;  // s

  bool ok() const { return status == Status::kOk; }
};

// Condensed Gauss-Newton SQP (real-time-iteration style) over the inputs,
// with a primal projected-Newton QP on the input box. SFC and bodyrate
// bounds enter as quadratic slack penalties; thrust and progress-speed boxes
// are enforced exactly by the rollout clamp.
class MpccSolver {
 public:
  MpccSolver(const QuadParams& params, const MpccConfig& cfg);

  MpccConfig& config() { return cfg_; }
  const MpccConfig& config() const { return cfg_; }

  // `warm` is used as-is (callers shift it across cycles). With identical
  // arguments the returned cost is non-increasing across repeated calls.
  MpccSolution solve(const AugmentedState& x0, const ReferencePath& ref, const Polytope& sfc,
                     const MpccSolution* warm = nullptr);

 private:
  struct Workspace;

  double merit(const std::vector<StateVec>& xs, const std::vector<InputVec>& us,
               const ReferencePath& ref, const Polytope& sfc) const;
  void rolloutClamped(const StateVec& x0, std::vector<InputVec>* us,
                      std::vector<StateVec>* xs) const;
  InputVec clampInputBox(const InputVec& u) const;

  QuadParams params_;
  MpccConfig cfg_;
  // ADMM dual state carried across solves (same-shape QPs at 100 Hz).
  VecX qp_warm_u_;
  double qp_warm_rho_ = 0.0;
};

// Shift a solution by one step for the next cycle (duplicate terminal input).
MpccSolution shiftSolution(const MpccSolution& sol);

}  // namespace loong
