#include "loong/dynamics.hpp"

namespace loong {

Wrench rotorToWrench(const RotorInput& input, const QuadParams& params) {
  const Vec4& f = input.f;
  Wrench w;
  w.force = Vec3(0, 0, f.sum());
  w.torque = torqueMixingMatrix(params) * f;
  return w;
}

Eigen::Matrix<double, 3, 4> torqueMixingMatrix(const QuadParams& params) {
  const double a = params.arm_length / std::sqrt(2.0);
  const double c = params.torque_const;
  Eigen::Matrix<double, 3, 4> m;
  m << a, a, -a, -a,
      -a, a, a, -a,
       c, -c, c, -c;
  return m;
}

StateDerivative stateDerivative(const QuadState& x, const RotorInput& f, const QuadParams& params) {
  const Wrench wrench = rotorToWrench(f, params);
  const Mat3 rot = quat::rotationMatrix(x.q);

  StateDerivative d;
  d.dp = x.v;
  d.dq = 0.5 * quat::multiply(x.q, Vec4(0, x.w.x(), x.w.y(), x.w.z()));
  d.dv = params.gravity + rot * wrench.force / params.mass -
         rot * params.drag.asDiagonal() * rot.transpose() * x.v;
  const Vec3 inertia_w = params.inertia.cwiseProduct(x.w);
  d.dw = (wrench.torque - x.w.cross(inertia_w)).cwiseQuotient(params.inertia);
  return d;
}

namespace {

QuadState applyScaled(const QuadState& x, const StateDerivative& d, double s) {
  QuadState out;
  out.p = x.p + s * d.dp;
  out.q = x.q + s * d.dq;
  out.v = x.v + s * d.dv;
  out.w = x.w + s * d.dw;
  return out;
}

}  // namespace

QuadState integrateRk4(const QuadState& x, const RotorInput& f, const QuadParams& params, double dt) {
  const StateDerivative k1 = stateDerivative(x, f, params);
  const StateDerivative k2 = stateDerivative(applyScaled(x, k1, 0.5 * dt), f, params);
  const StateDerivative k3 = stateDerivative(applyScaled(x, k2, 0.5 * dt), f, params);
  const StateDerivative k4 = stateDerivative(applyScaled(x, k3, dt), f, params);

  QuadState out;
  out.p = x.p + dt / 6.0 * (k1.dp + 2 * k2.dp + 2 * k3.dp + k4.dp);
  out.q = x.q + dt / 6.0 * (k1.dq + 2 * k2.dq + 2 * k3.dq + k4.dq);
  out.v = x.v + dt / 6.0 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv);
  out.w = x.w + dt / 6.0 * (k1.dw + 2 * k2.dw + 2 * k3.dw + k4.dw);
  out.q = quat::normalized(out.q);
  return out;
}

}  // namespace loong
