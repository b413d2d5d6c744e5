#include "loong/mpcc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace loong {

using namespace mpcc_dim;

StateVec packState(const AugmentedState& s) {
  StateVec v;
  v.segment<3>(kP) = s.x.p;
  v.segment<4>(kQ) = s.x.q;
  v.segment<3>(kV) = s.x.v;
  v.segment<3>(kW) = s.x.w;
  v.segment<4>(kF) = s.f;
  v(kTheta) = s.theta;
  v(kVTheta) = s.v_theta;
  return v;
}

AugmentedState unpackState(const StateVec& v) {
  AugmentedState s;
  s.x.p = v.segment<3>(kP);
  s.x.q = v.segment<4>(kQ);
  s.x.v = v.segment<3>(kV);
  s.x.w = v.segment<3>(kW);
  s.f = v.segment<4>(kF);
  s.theta = v(kTheta);
  s.v_theta = v(kVTheta);
  return s;
}

StateVec mpccStep(const StateVec& x, const InputVec& u, const QuadParams& params, double dt) {
  const Vec3 p = x.segment<3>(kP);
  const Vec4 q = x.segment<4>(kQ);
  const Vec3 v = x.segment<3>(kV);
  const Vec3 w = x.segment<3>(kW);
  const Vec4 f = x.segment<4>(kF);

  const Mat3 rot = quat::rotationMatrix(q);
  const Vec3 thrust_acc = rot * Vec3(0, 0, f.sum()) / params.mass;
  const Vec3 drag_acc = rot * params.drag.asDiagonal() * rot.transpose() * v;
  const Vec3 torque = torqueMixingMatrix(params) * f;
  const Vec3 dw = (torque - w.cross(params.inertia.cwiseProduct(w))).cwiseQuotient(params.inertia);

  StateVec out;
  out.segment<3>(kP) = p + dt * v;
  const Vec4 q_raw = q + dt * 0.5 * quat::multiply(q, Vec4(0, w.x(), w.y(), w.z()));
  out.segment<4>(kQ) = q_raw / q_raw.norm();
  out.segment<3>(kV) = v + dt * (params.gravity + thrust_acc - drag_acc);
  out.segment<3>(kW) = w + dt * dw;
  out.segment<4>(kF) = f + dt * u.segment<4>(0);
  out(kTheta) = x(kTheta) + dt * x(kVTheta);
  out(kVTheta) = x(kVTheta) + dt * u(4);
  return out;
}

namespace {

// Jacobian of R(q) D R(q)^T v with respect to q (3x4) and v (3x3).
void dragJacobians(const Vec4& q, const Vec3& drag, const Vec3& v, Eigen::Matrix<double, 3, 4>* jq,
                   Mat3* jv) {
  const Mat3 rot = quat::rotationMatrix(q);
  const Vec4 qc = quat::conjugate(q);
  const Vec3 body_v = quat::rotationMatrix(qc) * v;
  const Vec3 damped = drag.cwiseProduct(body_v);

  Eigen::Matrix<double, 3, 4> d_bodyv_dq = quat::rotateJacobianQ(qc, v);
  d_bodyv_dq.col(1) *= -1.0;
  d_bodyv_dq.col(2) *= -1.0;
  d_bodyv_dq.col(3) *= -1.0;

  *jq = quat::rotateJacobianQ(q, damped) + rot * drag.asDiagonal() * d_bodyv_dq;
  *jv = rot * drag.asDiagonal() * rot.transpose();
}

}  // namespace

void mpccStepJacobians(const StateVec& x, const InputVec& u, const QuadParams& params, double dt,
                       StateMat* a_out, StateInputMat* b_out) {
  (void)u;
  const Vec4 q = x.segment<4>(kQ);
  const Vec3 v = x.segment<3>(kV);
  const Vec3 w = x.segment<3>(kW);
  const Vec4 f = x.segment<4>(kF);

  StateMat& A = *a_out;
  StateInputMat& B = *b_out;
  A.setIdentity();
  B.setZero();

  // Position.
  A.block<3, 3>(kP, kV) = dt * Mat3::Identity();

  // Quaternion: Euler update then renormalization.
  const Vec4 omega_quat(0, w.x(), w.y(), w.z());
  const Vec4 q_raw = q + dt * 0.5 * quat::multiply(q, omega_quat);
  const double n = q_raw.norm();
  const Vec4 q_hat = q_raw / n;
  const Mat4 norm_jac = (Mat4::Identity() - q_hat * q_hat.transpose()) / n;
  const Mat4 dqraw_dq = Mat4::Identity() + dt * 0.5 * quat::rightMat(omega_quat);
  Eigen::Matrix<double, 4, 3> dqraw_dw = dt * 0.5 * quat::leftMat(q).rightCols<3>();
  A.block<4, 4>(kQ, kQ) = norm_jac * dqraw_dq;
  A.block<4, 3>(kQ, kW) = norm_jac * dqraw_dw;

  // Velocity.
  const Mat3 rot = quat::rotationMatrix(q);
  const Vec3 force(0, 0, f.sum());
  Eigen::Matrix<double, 3, 4> drag_jq;
  Mat3 drag_jv;
  dragJacobians(q, params.drag, v, &drag_jq, &drag_jv);
  A.block<3, 4>(kV, kQ) = dt * (quat::rotateJacobianQ(q, force) / params.mass - drag_jq);
  A.block<3, 3>(kV, kV) = Mat3::Identity() - dt * drag_jv;
  const Vec3 thrust_col = rot.col(2) / params.mass;
  for (int i = 0; i < 4; ++i) A.block<3, 1>(kV, kF + i) = dt * thrust_col;

  // Bodyrates.
  const Vec3 iw = params.inertia.cwiseProduct(w);
  const Mat3 dgyro = skew(iw) - skew(w) * params.inertia.asDiagonal();
  A.block<3, 3>(kW, kW) =
      Mat3::Identity() + dt * params.inertia.cwiseInverse().asDiagonal() * dgyro;
  A.block<3, 4>(kW, kF) =
      dt * params.inertia.cwiseInverse().asDiagonal() * torqueMixingMatrix(params);

  // Progress chain.
  A(kTheta, kVTheta) = dt;
  B.block<4, 4>(kF, 0) = dt * Eigen::Matrix4d::Identity();
  B(kVTheta, 4) = dt;
}

std::optional<ReferencePath> ReferencePath::build(const PiecewisePolynomial& traj,
                                                  double max_spacing) {
  if (traj.segments() == 0 || traj.totalTime() <= 0.0) return std::nullopt;

  double v_max = 0.0;
  for (int i = 0; i <= 256; ++i) {
    const double t = traj.totalTime() * i / 256.0;
    v_max = std::max(v_max, traj.eval(t, 1).head<3>().norm());
  }
  const double dt = std::clamp(0.6 * max_spacing / std::max(1.5 * v_max, 0.25), 1e-5, 0.005);
  const double trigger = 0.35 * max_spacing;

  ReferencePath ref;
  Vec3 prev = traj.position(0.0);
  double arc = 0.0;
  double since_emit = 0.0;

  auto tangentAt = [&](double t, const Vec3& fallback) {
    const Vec3 vel = traj.eval(t, 1).head<3>();
    if (vel.norm() > 0.05) return Vec3(vel.normalized());
    return fallback;
  };

  ref.theta_.push_back(0.0);
  ref.pos_.push_back(prev);
  ref.tan_.push_back(Vec3::Zero());  // fixed after the walk

  for (double t = dt;; t += dt) {
    const bool last = t >= traj.totalTime();
    const double tc = std::min(t, traj.totalTime());
    const Vec3 p = traj.position(tc);
    const double step = (p - prev).norm();
    arc += step;
    since_emit += step;
    prev = p;
    if (since_emit >= trigger || last) {
      if (since_emit > 1e-9 || ref.theta_.size() == 1) {
        if (arc > ref.theta_.back() + 1e-9) {
          ref.theta_.push_back(arc);
          ref.pos_.push_back(p);
          ref.tan_.push_back(tangentAt(tc, Vec3::Zero()));
          since_emit = 0.0;
        }
      }
    }
    if (last) break;
  }

  if (ref.theta_.back() < 0.01 || ref.theta_.size() < 2) return std::nullopt;

  // Chord fallbacks for near-rest samples (endpoints of rest-to-rest paths).
  for (std::size_t i = 0; i < ref.tan_.size(); ++i) {
    if (ref.tan_[i].norm() > 0.5) continue;
    const Vec3 chord = i + 1 < ref.pos_.size() ? Vec3(ref.pos_[i + 1] - ref.pos_[i])
                                               : Vec3(ref.pos_[i] - ref.pos_[i - 1]);
    ref.tan_[i] = chord.norm() > 1e-12 ? Vec3(chord.normalized()) : Vec3(1, 0, 0);
  }
  return ref;
}

ReferencePath ReferencePath::fromPolyline(const std::vector<Vec3>& pts) {
  ReferencePath ref;
  if (pts.empty()) return ref;
  ref.theta_.push_back(0.0);
  ref.pos_.push_back(pts[0]);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec3 seg = pts[i] - pts[i - 1];
    const double len = seg.norm();
    if (len < 1e-9) continue;
    const Vec3 dir = seg / len;
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / 0.05)));
    for (int k = 1; k <= pieces; ++k) {
      ref.theta_.push_back(ref.theta_.back() + len / pieces);
      ref.pos_.push_back(pts[i - 1] + dir * (len * k / pieces));
      ref.tan_.push_back(dir);
    }
  }
  ref.tan_.insert(ref.tan_.begin(), ref.tan_.empty() ? Vec3(1, 0, 0) : ref.tan_.front());
  return ref;
}

ReferencePath::Lookup ReferencePath::lookup(double theta) const {
  Lookup out;
  if (theta_.empty()) {
    out.pos = Vec3::Zero();
    out.tangent = Vec3(1, 0, 0);
    out.dtangent = Vec3::Zero();
    return out;
  }
  if (theta_.size() == 1) {
    out.pos = pos_[0];
    out.tangent = tan_.empty() ? Vec3(1, 0, 0) : tan_[0];
    out.dtangent = Vec3::Zero();
    return out;
  }
  const double th = std::clamp(theta, theta_.front(), theta_.back());
  auto it = std::upper_bound(theta_.begin(), theta_.end(), th);
  std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - theta_.begin() - 1, 0));
  if (i + 1 >= theta_.size()) i = theta_.size() - 2;
  const double dth = theta_[i + 1] - theta_[i];
  const double frac = dth > 1e-12 ? (th - theta_[i]) / dth : 0.0;
  out.pos = (1 - frac) * pos_[i] + frac * pos_[i + 1];
  Vec3 tan = (1 - frac) * tan_[i] + frac * tan_[i + 1];
  const double tn = tan.norm();
  out.tangent = tn > 1e-9 ? Vec3(tan / tn) : tan_[i];
  out.dtangent = dth > 1e-12 ? Vec3((tan_[i + 1] - tan_[i]) / dth) : Vec3::Zero();
  return out;
}

double ReferencePath::nearestTheta(const Vec3& p, double lo, double hi) const {
  if (theta_.empty()) return 0.0;
  const double clo = std::clamp(lo, theta_.front(), theta_.back());
  const double chi = std::clamp(hi, theta_.front(), theta_.back());
  auto first = std::lower_bound(theta_.begin(), theta_.end(), clo);
  auto last = std::upper_bound(theta_.begin(), theta_.end(), chi);
  std::size_t best = static_cast<std::size_t>(first - theta_.begin());
  if (best >= theta_.size()) best = theta_.size() - 1;
  double best_d = (pos_[best] - p).squaredNorm();
  for (auto it = first; it != last; ++it) {
    const std::size_t i = static_cast<std::size_t>(it - theta_.begin());
    const double d = (pos_[i] - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  // Refine onto the adjacent chords.
  double theta = theta_[best];
  double dist = std::sqrt(best_d);
  for (const std::size_t i : {best > 0 ? best - 1 : best, best}) {
    if (i + 1 >= pos_.size()) continue;
    const Vec3 a = pos_[i], b = pos_[i + 1];
    const Vec3 ab = b - a;
    const double l2 = ab.squaredNorm();
    if (l2 < 1e-18) continue;
    const double t = std::clamp(ab.dot(p - a) / l2, 0.0, 1.0);
    const Vec3 proj = a + t * ab;
    const double d = (proj - p).norm();
    if (d < dist) {
      dist = d;
      theta = theta_[i] + t * (theta_[i + 1] - theta_[i]);
    }
  }
  return theta;
}

ContourErrors contourLagErrors(const Vec3& p, double theta, const ReferencePath& ref) {
  const ReferencePath::Lookup look = ref.lookup(theta);
  const Vec3 d = p - look.pos;
  ContourErrors e;
  e.lag = look.tangent.dot(d);
  e.contour = d - e.lag * look.tangent;
  return e;
}

namespace {

struct BoxQpResult {
  VecX x;
  double kkt = 0.0;
  bool ok = false;
  int iterations = 0;
};

struct BoxQpWarm {
  VecX u;            // scaled dual, carried across solves
  double rho = 0.0;
};

double qpObjective(const MatX& h, const VecX& g, const VecX& x) {
  return 0.5 * x.dot(h * x) + g.dot(x);
}

double boxKkt(const MatX& h, const VecX& g, const VecX& lo, const VecX& hi, const VecX& x) {
  const VecX grad = h * x + g;
  double kkt = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    const bool at_lo = x(i) <= lo(i) + 1e-12;
    const bool at_hi = x(i) >= hi(i) - 1e-12;
    if (!((at_lo && grad(i) > 0.0) || (at_hi && grad(i) < 0.0)))
      kkt = std::max(kkt, std::abs(grad(i)));
  }
  return kkt;
}

// Operator-splitting box QP (scaled ADMM with a cached Cholesky factor),
// followed by an exact free-set polish. The returned point is a projection
// onto the box, so bounds hold exactly.
BoxQpResult solveBoxQp(const MatX& h, const VecX& g, const VecX& lo, const VecX& hi, int max_iter,
                       double tol, BoxQpWarm* warm = nullptr) {
  const int n = static_cast<int>(g.size());
  BoxQpResult res;
  res.x = VecX::Zero(n).cwiseMax(lo).cwiseMin(hi);
  if (max_iter <= 0) return res;

  const double scale = 1.0 + g.cwiseAbs().maxCoeff();
  const double tol_eff = std::max(tol, 1e-7 * scale);
  const double f_start = qpObjective(h, g, res.x);

  // Penalty between the spectrum floor (regularized diagonal) and the
  // Gershgorin upper bound; rebalanced adaptively below.
  const double lam_lo = std::max(h.diagonal().minCoeff(), 1e-8);
  const double lam_hi = std::max(h.cwiseAbs().rowwise().sum().maxCoeff(), lam_lo);
  double rho = std::sqrt(lam_lo * lam_hi);
  VecX u = VecX::Zero(n);
  if (warm && warm->u.size() == n && !std::getenv("LOONG_QP_NO_WARM")) {
    // The dual carries the active-set pressure between consecutive QPs and
    // removes most of the splitting transient.
    u = warm->u;
    if (warm->rho > 0.0) rho = warm->rho;
  }
  Eigen::LLT<MatX> llt(h + rho * MatX::Identity(n, n));

  VecX x = res.x, z = res.x;
  VecX z_best = z;
  double f_z_best = qpObjective(h, g, z);
  int refactors = 0;
  int last_improve = 0;
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    x = llt.solve(rho * (z - u) - g);
    const VecX z_old = z;
    z = (x + u).cwiseMax(lo).cwiseMin(hi);
    u += x - z;
    const double prim = (x - z).cwiseAbs().maxCoeff();
    const double dual = (z - z_old).cwiseAbs().maxCoeff();
    {
      const double f_z = qpObjective(h, g, z);
      if (f_z < f_z_best - 1e-10 * (1.0 + std::abs(f_z_best))) {
        f_z_best = f_z;
        z_best = z;
        last_improve = iter;
      }
    }
    if (prim < 1e-8 * (1.0 + z.cwiseAbs().maxCoeff()) && dual < 1e-8 * (1.0 + z.cwiseAbs().maxCoeff()))
      break;
    // Plateau exit, once an improving feasible iterate exists.
    if (f_z_best < f_start && iter - last_improve > 40) break;
    if ((iter + 1) % 50 == 0 && refactors < 4) {
      // Rebalance the penalty when the residuals drift apart. The scaled
      // dual variable is rescaled with rho.
      const double ratio = std::sqrt(std::max(prim, 1e-16) / std::max(dual, 1e-16));
      const double rho_new = std::clamp(rho * ratio, 0.2 * rho, 5.0 * rho);
      if (std::abs(std::log10(rho_new / rho)) > 0.3) {
        u *= rho / rho_new;
        rho = rho_new;
        llt.compute(h + rho * MatX::Identity(n, n));
        ++refactors;
      }
    }
  }
  z = z_best;
  if (warm) {
    warm->u = u;
    warm->rho = rho;
  }

  // Exact polish on the active set identified by the splitting.
  VecX best = z;
  double f_best = f_z_best;
  {
    const VecX grad = h * z + g;
    std::vector<int> free_idx;
    free_idx.reserve(n);
    for (int i = 0; i < n; ++i) {
      const bool at_lo = z(i) <= lo(i) + 1e-9;
      const bool at_hi = z(i) >= hi(i) - 1e-9;
      if (!((at_lo && grad(i) >= 0.0) || (at_hi && grad(i) <= 0.0))) free_idx.push_back(i);
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf > 0) {
      MatX hff(nf, nf);
      VecX rhs(nf);
      VecX snapped = z;
      for (int i = 0; i < n; ++i) {
        if (z(i) <= lo(i) + 1e-9) snapped(i) = lo(i);
        if (z(i) >= hi(i) - 1e-9) snapped(i) = hi(i);
      }
      for (int r = 0; r < nf; ++r) {
        rhs(r) = -g(free_idx[r]);
        for (int c = 0; c < nf; ++c) hff(r, c) = h(free_idx[r], free_idx[c]);
      }
      // Move the bound contribution to the right-hand side.
      for (int r = 0; r < nf; ++r) {
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += h(free_idx[r], i) * snapped(i);
        for (int c = 0; c < nf; ++c) dot -= h(free_idx[r], free_idx[c]) * snapped(free_idx[c]);
        rhs(r) -= dot;
      }
      Eigen::LLT<MatX> pol(hff);
      if (pol.info() == Eigen::Success) {
        const VecX xf = pol.solve(rhs);
        VecX candidate = snapped;
        for (int r = 0; r < nf; ++r) candidate(free_idx[r]) = xf(r);
        candidate = candidate.cwiseMax(lo).cwiseMin(hi);
        const double f_cand = qpObjective(h, g, candidate);
        if (f_cand < f_best) {
          f_best = f_cand;
          best = candidate;
        }
      }
    }
  }

  if (f_best <= f_start + 1e-12 && best.allFinite()) {
    // Any feasible descent step is usable; the SQP merit check guards the
    // outer iteration quality. kkt is reported honestly.
    res.x = best;
    res.kkt = boxKkt(h, g, lo, hi, best);
    res.ok = true;
  } else {
    // No descent: the starting point is a valid answer only when it already
    // satisfies the box KKT conditions.
    res.kkt = boxKkt(h, g, lo, hi, res.x);
    res.ok = res.kkt < 1e-2 * scale;
  }
  (void)tol_eff;
  return res;
}

}  // namespace

MpccSolver::MpccSolver(const QuadParams& params, const MpccConfig& cfg)
    : params_(params), cfg_(cfg) {}

InputVec MpccSolver::clampInputBox(const InputVec& u) const {
  InputVec out;
  for (int i = 0; i < 4; ++i) out(i) = std::clamp(u(i), cfg_.df_min, cfg_.df_max);
  out(4) = std::clamp(u(4), cfg_.dv_min, cfg_.dv_max);
  return out;
}

void MpccSolver::rolloutClamped(const StateVec& x0, std::vector<InputVec>* us,
                                std::vector<StateVec>* xs) const {
  const int n = cfg_.horizon;
  xs->resize(n + 1);
  (*xs)[0] = x0;
  for (int k = 0; k < n; ++k) {
    InputVec u = clampInputBox((*us)[k]);
    StateVec& xk = (*xs)[k];
    // Thrust and progress-speed boxes are enforced exactly through the rates.
    for (int i = 0; i < 4; ++i) {
      const double fn = xk(kF + i) + cfg_.dt * u(i);
      if (fn > cfg_.f_max) u(i) = (cfg_.f_max - xk(kF + i)) / cfg_.dt;
      if (fn < cfg_.f_min) u(i) = (cfg_.f_min - xk(kF + i)) / cfg_.dt;
    }
    const double vn = xk(kVTheta) + cfg_.dt * u(4);
    if (vn > cfg_.v_theta_max) u(4) = (cfg_.v_theta_max - xk(kVTheta)) / cfg_.dt;
    if (vn < 0.0) u(4) = -xk(kVTheta) / cfg_.dt;
    (*us)[k] = u;

    StateVec next = mpccStep(xk, u, params_, cfg_.dt);
    for (int i = 0; i < 4; ++i) next(kF + i) = std::clamp(next(kF + i), cfg_.f_min, cfg_.f_max);
    next(kVTheta) = std::clamp(next(kVTheta), 0.0, cfg_.v_theta_max);
    (*xs)[k + 1] = next;
  }
}

double MpccSolver::merit(const std::vector<StateVec>& xs, const std::vector<InputVec>& us,
                         const ReferencePath& ref, const Polytope& sfc) const {
  double cost = 0.0;
  const int n = cfg_.horizon;
  for (int k = 1; k <= n; ++k) {
    const StateVec& x = xs[k];
    const ContourErrors e = contourLagErrors(x.segment<3>(kP), x(kTheta), ref);
    cost += cfg_.q_l * e.lag * e.lag + cfg_.q_c * e.contour.squaredNorm();
    const Vec3 w = x.segment<3>(kW);
    cost += w.dot(cfg_.q_omega.cwiseProduct(w));
    cost -= cfg_.mu * x(kVTheta);
    for (int i = 0; i < 3; ++i) {
      const double over = std::abs(w(i)) - cfg_.omega_max(i);
      if (over > 0.0)
        cost += cfg_.rho_omega * over * over + cfg_.rho_omega_l1 * over;
    }
    if (k <= cfg_.safe_horizon && sfc.rows() > 0) {
      const VecX viol =
          sfc.A * x.segment<3>(kP) - sfc.b + VecX::Constant(sfc.rows(), cfg_.sfc_tighten);
      for (int r = 0; r < viol.size(); ++r) {
        if (viol(r) > 0.0)
          cost += cfg_.rho_sfc * viol(r) * viol(r) + cfg_.rho_sfc_l1 * viol(r);
      }
    }
  }
  for (int k = 0; k < n; ++k) {
    cost += cfg_.r_df * us[k].segment<4>(0).squaredNorm() + cfg_.r_dv * us[k](4) * us[k](4);
  }
  return cost;
}

MpccSolution MpccSolver::solve(const AugmentedState& x0, const ReferencePath& ref,
                               const Polytope& sfc, const MpccSolution* warm) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n = cfg_.horizon;
  const int nu = n * kInput;

  MpccSolution sol;
  sol.states.resize(n + 1);
  sol.inputs.resize(n);

  StateVec x0v = packState(x0);
  for (int i = 0; i < 4; ++i) x0v(kF + i) = std::clamp(x0v(kF + i), cfg_.f_min, cfg_.f_max);
  x0v(kVTheta) = std::clamp(x0v(kVTheta), 0.0, cfg_.v_theta_max);

  if (sfc.rows() > 0 && sfc.maxViolation(x0v.segment<3>(kP)) > cfg_.x0_sfc_tolerance) {
    sol.status = MpccSolution::Status::kInfeasibleStart;
    sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sol;
  }

  std::vector<InputVec> us(n, InputVec::Zero());
  if (warm && static_cast<int>(warm->inputs.size()) == n) {
    for (int k = 0; k < n; ++k) {
      us[k].segment<4>(0) = warm->inputs[k].df;
      us[k](4) = warm->inputs[k].dv_theta;
    }
  }

  std::vector<StateVec> xs;
  rolloutClamped(x0v, &us, &xs);
  double current_merit = merit(xs, us, ref, sfc);

  std::vector<StateMat> a_mats(n);
  std::vector<StateInputMat> b_mats(n);
  std::vector<MatX> sens(n + 1, MatX::Zero(kState, nu));
  MatX hess(nu, nu);
  VecX grad(nu), lo(nu), hi(nu);
  bool qp_failed = false;
  bool any_accepted = false;
  double kkt = 0.0;

  const double sq_l = std::sqrt(cfg_.q_l);
  const double sq_c = std::sqrt(cfg_.q_c);
  const Vec3 sq_w = cfg_.q_omega.cwiseSqrt();
  const double s_rho_sfc = std::sqrt(cfg_.rho_sfc);
  const double s_rho_om = std::sqrt(cfg_.rho_omega);

  for (int it = 0; it < cfg_.gn_iterations; ++it) {
    // Linearize along the rollout.
    for (int k = 0; k < n; ++k) mpccStepJacobians(xs[k], us[k], params_, cfg_.dt, &a_mats[k], &b_mats[k]);
    sens[0].setZero();
    for (int k = 0; k < n; ++k) {
      sens[k + 1].setZero();
      if (k > 0) {
        sens[k + 1].leftCols(k * kInput).noalias() =
            a_mats[k] * sens[k].leftCols(k * kInput);
      }
      sens[k + 1].middleCols(k * kInput, kInput) = b_mats[k];
    }

    hess.setZero();
    grad.setZero();

    for (int k = 1; k <= n; ++k) {
      const StateVec& x = xs[k];
      const int ncols = std::min(nu, k * kInput);
      const auto sk = sens[k].leftCols(ncols);

      // Stage residual rows: lag, contour(3), bodyrate(3), penalties.
      const ReferencePath::Lookup look = ref.lookup(x(kTheta));
      const Vec3 d = x.segment<3>(kP) - look.pos;
      const double e_l = look.tangent.dot(d);
      const Vec3 e_c = d - e_l * look.tangent;

      std::vector<Eigen::Matrix<double, 1, kState>> c_rows;
      std::vector<double> r_vals;
      c_rows.reserve(16);
      r_vals.reserve(16);

      Eigen::Matrix<double, 1, kState> row;
      // Lag.
      row.setZero();
      row.segment<3>(kP) = sq_l * look.tangent.transpose();
      row(kTheta) = sq_l * (look.dtangent.dot(d) - 1.0);
      c_rows.push_back(row);
      r_vals.push_back(sq_l * e_l);
      // Contour.
      const Mat3 proj = Mat3::Identity() - look.tangent * look.tangent.transpose();
      const Vec3 dec_dth = -(look.dtangent.dot(d)) * look.tangent - e_l * look.dtangent;
      for (int i = 0; i < 3; ++i) {
        row.setZero();
        row.segment<3>(kP) = sq_c * proj.row(i);
        row(kTheta) = sq_c * dec_dth(i);
        c_rows.push_back(row);
        r_vals.push_back(sq_c * e_c(i));
      }
      // Bodyrate quadratic penalty.
      for (int i = 0; i < 3; ++i) {
        row.setZero();
        row(kW + i) = sq_w(i);
        c_rows.push_back(row);
        r_vals.push_back(sq_w(i) * x(kW + i));
      }
      // Bodyrate bound slack rows, active within the margin band. The
      // linear (exact-penalty) component enters through the gradient.
      Eigen::Matrix<double, 1, kState> l1_row = Eigen::Matrix<double, 1, kState>::Zero();
      bool l1_any = false;
      for (int i = 0; i < 3; ++i) {
        const double band = std::min(cfg_.omega_margin, 0.5 * cfg_.omega_max(i));
        for (const double sgn : {1.0, -1.0}) {
          const double s = sgn * x(kW + i) - cfg_.omega_max(i);
          if (s > -band) {
            row.setZero();
            row(kW + i) = s_rho_om * sgn;
            c_rows.push_back(row);
            r_vals.push_back(s_rho_om * std::max(0.0, s));
          }
          if (s > 0.0) {
            l1_row(kW + i) += cfg_.rho_omega_l1 * sgn;
            l1_any = true;
          }
        }
      }
      // SFC slack rows on the safe horizon (internally tightened).
      if (k <= cfg_.safe_horizon && sfc.rows() > 0) {
        const VecX viol =
            sfc.A * x.segment<3>(kP) - sfc.b + VecX::Constant(sfc.rows(), cfg_.sfc_tighten);
        for (int r = 0; r < viol.size(); ++r) {
          if (viol(r) > -cfg_.sfc_margin) {
            row.setZero();
            row.segment<3>(kP) = s_rho_sfc * sfc.A.row(r);
            c_rows.push_back(row);
            r_vals.push_back(s_rho_sfc * std::max(0.0, viol(r)));
          }
          if (viol(r) > 0.0) {
            l1_row.segment<3>(kP) += cfg_.rho_sfc_l1 * sfc.A.row(r);
            l1_any = true;
          }
        }
      }
      if (l1_any) {
        grad.head(ncols).noalias() += (l1_row * sk).transpose();
      }
      MatX c_mat(static_cast<int>(c_rows.size()), kState);
      VecX r_vec(static_cast<int>(c_rows.size()));
      for (std::size_t r = 0; r < c_rows.size(); ++r) {
        c_mat.row(static_cast<int>(r)) = c_rows[r];
        r_vec(static_cast<int>(r)) = r_vals[r];
      }
      MatX jk(c_mat.rows(), ncols);
      jk.noalias() = c_mat * sk;
      hess.topLeftCorner(ncols, ncols)
          .selfadjointView<Eigen::Lower>()
          .rankUpdate(jk.transpose(), 1.0);
      grad.head(ncols).noalias() += jk.transpose() * r_vec;

      // Linear progress reward -mu * v_theta_k.
      grad.head(ncols).noalias() -= cfg_.mu * sk.row(kVTheta).transpose();
    }

    // Input effort terms, plus box bounds that also encode the one-step
    // thrust and progress-speed boxes at the linearization point (the same
    // limits the rollout clamp enforces).
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < 4; ++i) {
        const int col = k * kInput + i;
        hess(col, col) += cfg_.r_df;
        grad(col) += cfg_.r_df * us[k](i);
        const double f_here = xs[k](kF + i);
        lo(col) = std::max(cfg_.df_min, (cfg_.f_min - f_here) / cfg_.dt) - us[k](i);
        hi(col) = std::min(cfg_.df_max, (cfg_.f_max - f_here) / cfg_.dt) - us[k](i);
      }
      const int col = k * kInput + 4;
      hess(col, col) += cfg_.r_dv;
      grad(col) += cfg_.r_dv * us[k](4);
      const double v_here = xs[k](kVTheta);
      lo(col) = std::max(cfg_.dv_min, -v_here / cfg_.dt) - us[k](4);
      hi(col) = std::min(cfg_.dv_max, (cfg_.v_theta_max - v_here) / cfg_.dt) - us[k](4);
    }
    hess.diagonal().array() += cfg_.levenberg;
    hess.triangularView<Eigen::StrictlyUpper>() = hess.transpose();

    if (std::getenv("LOONG_QP_DUMP")) {
      FILE* fp = std::fopen("/tmp/qp_dump.txt", "w");
      const int nn = static_cast<int>(grad.size());
      std::fprintf(fp, "%d\n", nn);
      for (int r = 0; r < nn; ++r)
        for (int c = 0; c < nn; ++c) std::fprintf(fp, "%.17g\n", hess(r, c));
      for (int r = 0; r < nn; ++r) std::fprintf(fp, "%.17g\n", grad(r));
      for (int r = 0; r < nn; ++r) std::fprintf(fp, "%.17g\n", lo(r));
      for (int r = 0; r < nn; ++r) std::fprintf(fp, "%.17g\n", hi(r));
      std::fclose(fp);
      std::exit(7);
    }
    BoxQpWarm qp_warm{qp_warm_u_, qp_warm_rho_};
    const BoxQpResult qp =
        solveBoxQp(hess, grad, lo, hi, cfg_.qp_max_iterations, cfg_.qp_tolerance, &qp_warm);
    qp_warm_u_ = qp_warm.u;
    qp_warm_rho_ = qp_warm.rho;
    kkt = qp.kkt;
    if (std::getenv("LOONG_QP_DEBUG"))
      std::printf("solve it=%d qp.ok=%d qp.iters=%d kkt=%.3e gnorm=%.3e\n", it, int(qp.ok),
                  qp.iterations, qp.kkt, grad.cwiseAbs().maxCoeff());
    if (cfg_.qp_max_iterations <= 0 || !qp.ok) {
      if (std::getenv("LOONG_QP_DUMP_FAIL")) {
        FILE* fp = std::fopen("/tmp/qp_fail.txt", "w");
        const int nn = static_cast<int>(grad.size());
        std::fprintf(fp, "%d\n", nn);
        for (int r = 0; r < nn; ++r)
          for (int c = 0; c < nn; ++c) std::fprintf(fp, "%.17g\n", hess(r, c));
        for (int r = 0; r < nn; ++r) std::fprintf(fp, "%.17g\n", grad(r));
        for (int r = 0; r < nn; ++r) std::fprintf(fp, "%.17g\n", lo(r));
        for (int r = 0; r < nn; ++r) std::fprintf(fp, "%.17g\n", hi(r));
        std::fclose(fp);
        std::exit(7);
      }
      qp_failed = true;
      break;
    }

    // Merit backtracking on the clamped nonlinear rollout.
    bool accepted = false;
    for (double alpha : {1.0, 0.5, 0.25, 0.125, 0.0625}) {
      std::vector<InputVec> trial = us;
      for (int k = 0; k < n; ++k) trial[k] += alpha * qp.x.segment<kInput>(k * kInput);
      std::vector<StateVec> xs_try;
      rolloutClamped(x0v, &trial, &xs_try);
      const double m = merit(xs_try, trial, ref, sfc);
      if (std::isfinite(m) && m < current_merit - 1e-12) {
        us = std::move(trial);
        xs = std::move(xs_try);
        current_merit = m;
        accepted = true;
        any_accepted = true;
        break;
      }
    }
    if (!accepted) break;  // converged at the current iterate
  }

  // A failed inner QP voids the solve only when no improving step was taken;
  // a later-iteration failure just ends refinement early.
  if (qp_failed && !any_accepted) {
    sol.status = MpccSolution::Status::kQpFailure;
  }
  for (int k = 0; k <= n; ++k) sol.states[k] = unpackState(xs[k]);
  for (int k = 0; k < n; ++k) {
    sol.inputs[k].df = us[k].segment<4>(0);
    sol.inputs[k].dv_theta = us[k](4);
  }
  sol.cost = current_merit;
  sol.kkt_residual = kkt;
  double slack = 0.0;
  if (sfc.rows() > 0) {
    for (int k = 1; k <= std::min(n, cfg_.safe_horizon); ++k) {
      slack = std::max(slack, sfc.maxViolation(sol.states[k].x.p));
    }
  }
  sol.sfc_slack_max = std::max(0.0, slack);
  sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

MpccSolution shiftSolution(const MpccSolution& sol) {
  MpccSolution out = sol;
  if (sol.inputs.size() < 2) return out;
  for (std::size_t k = 0; k + 1 < sol.inputs.size(); ++k) out.inputs[k] = sol.inputs[k + 1];
  out.inputs.back() = sol.inputs.back();
  for (std::size_t k = 0; k + 1 < sol.states.size(); ++k) out.states[k] = sol.states[k + 1];
  return out;
}

}  // namespace loong
