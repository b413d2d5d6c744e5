#pragma once

#include "loong/geometry.hpp"

namespace loong {

// Rigid-body state. Quaternion is body->world, kept unit norm by the
// integrator. Bodyrates w are expressed in the body frame.
struct QuadState {
  Vec3 p = Vec3::Zero();
  Vec4 q = quat::identity();
  Vec3 v = Vec3::Zero();
  Vec3 w = Vec3::Zero();
};

// Per-rotor thrusts [N]. Rotor order matches the X-configuration mixer below.
struct RotorInput {
  Vec4 f = Vec4::Zero();
};

struct QuadParams {
  double mass = 1.55;                       // kg
  Vec3 inertia = Vec3(0.050, 0.053, 0.062); // kg m^2, diagonal
  double arm_length = 0.1125;               // m
  double torque_const = 0.02;               // yaw moment per unit thrust
  Vec3 drag = Vec3(0.3, 0.3, 0.5);          // 1/s, diagonal body-frame drag
  Vec3 gravity = Vec3(0, 0, -9.81);         // m/s^2

  double hoverThrustPerRotor() const { return mass * gravity.norm() / 4.0; }
};

struct Wrench {
  Vec3 force;   // collective thrust in body frame, [0, 0, sum(f)]
  Vec3 torque;  // body torques
};

struct StateDerivative {
  Vec3 dp;
  Vec4 dq;
  Vec3 dv;
  Vec3 dw;
};

// X-configuration mixing with l/sqrt(2) lever arms. Linear in f.
Wrench rotorToWrench(const RotorInput& f, const QuadParams& params);

// 3x4 matrix mapping rotor thrusts to body torque (constant).
Eigen::Matrix<double, 3, 4> torqueMixingMatrix(const QuadParams& params);

// Full dynamics: translational drag is rotated into the world frame
// (-R D R^T v), rotational dynamics include the gyroscopic term.
StateDerivative stateDerivative(const QuadState& x, const RotorInput& f, const QuadParams& params);

// Classical RK4 step with zero-order-held rotor input; quaternion is
// renormalized after the combined update.
QuadState integrateRk4(const QuadState& x, const RotorInput& f, const QuadParams& params, double dt);

}  // namespace loong
