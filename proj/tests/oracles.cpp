#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace loong::oracles {

namespace {

Eigen::Matrix<double, 6, 1> monomialRow(double tau, int order) {
  Eigen::Matrix<double, 6, 1> row = Eigen::Matrix<double, 6, 1>::Zero();
  for (int k = order; k < 6; ++k) {
    double f = 1.0;
    for (int d = 0; d < order; ++d) f *= (k - d);
    row(k) = f * std::pow(tau, k - order);
  }
  return row;
}

}  // namespace

VecX denseMinJerkAxis(const std::vector<Vec3>& interior, const std::vector<double>& durations,
                      const BoundaryState& sigma_o, const BoundaryState& sigma_f, int axis) {
  const int m = static_cast<int>(durations.size());
  const int n = 6 * m;
  MatX mat = MatX::Zero(n, n);
  VecX rhs = VecX::Zero(n);

  auto put = [&](int row, int seg, double tau, int order, double sign) {
    mat.row(row).segment(6 * seg, 6) += sign * monomialRow(tau, order).transpose();
  };
  auto boundary = [&](const BoundaryState& b, int order) {
    return order == 0 ? b.p(axis) : order == 1 ? b.v(axis) : b.a(axis);
  };

  for (int d = 0; d < 3; ++d) {
    put(d, 0, 0.0, d, 1.0);
    rhs(d) = boundary(sigma_o, d);
  }
  for (int i = 1; i < m; ++i) {
    const int r0 = 3 + 6 * (i - 1);
    put(r0 + 0, i - 1, durations[i - 1], 0, 1.0);
    rhs(r0 + 0) = interior[i - 1](axis);
    put(r0 + 1, i, 0.0, 0, 1.0);
    rhs(r0 + 1) = interior[i - 1](axis);
    for (int d = 1; d <= 4; ++d) {
      put(r0 + 1 + d, i - 1, durations[i - 1], d, 1.0);
      put(r0 + 1 + d, i, 0.0, d, -1.0);
    }
  }
  for (int d = 0; d < 3; ++d) {
    put(n - 3 + d, m - 1, durations[m - 1], d, 1.0);
    rhs(n - 3 + d) = boundary(sigma_f, d);
  }
  return mat.partialPivLu().solve(rhs);
}

double dijkstraCost(const VoxelGrid& grid, const Vec3& start, const Vec3& goal, double inflation) {
  const Vec3i start_cell = grid.worldToCell(start);
  const Vec3i goal_cell = grid.worldToCell(goal);
  const std::size_t n = grid.size();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());

  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;
  dist[grid.index(start_cell)] = 0.0;
  pq.push({0.0, grid.index(start_cell)});

  auto cellOf = [&](std::size_t idx) {
    const int x = static_cast<int>(idx % grid.dims().x());
    const int y = static_cast<int>((idx / grid.dims().x()) % grid.dims().y());
    const int z = static_cast<int>(idx / (std::size_t(grid.dims().x()) * grid.dims().y()));
    return Vec3i(x, y, z);
  };

  while (!pq.empty()) {
    const auto [d, idx] = pq.top();
    pq.pop();
    if (d > dist[idx]) continue;
    if (idx == grid.index(goal_cell)) return d;
    const Vec3i c = cellOf(idx);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const Vec3i nc = c + Vec3i(dx, dy, dz);
          if (!grid.inside(nc) || cellBlocked(grid, nc, inflation)) continue;
          const double step = grid.resolution() * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          const std::size_t nidx = grid.index(nc);
          if (dist[idx] + step < dist[nidx]) {
            dist[nidx] = dist[idx] + step;
            pq.push({dist[nidx], nidx});
          }
        }
  }
  return dist[grid.index(goal_cell)];
}

std::optional<ChebyshevResult> chebyshevByEnumeration(const MatX& A, const VecX& b) {
  // LP: max r subject to A x + r <= b over (x, r).
  const int m = static_cast<int>(A.rows());
  MatX rows(m, 4);
  rows.leftCols<3>() = A;
  rows.col(3).setOnes();

  std::optional<ChebyshevResult> best;
  std::vector<int> pick(4);
  std::function<void(int, int)> rec = [&](int from, int k) {
    if (k == 4) {
      Mat4 sys;
      Vec4 rhs;
      for (int i = 0; i < 4; ++i) {
        sys.row(i) = rows.row(pick[i]);
        rhs(i) = b(pick[i]);
      }
      const Eigen::FullPivLU<Mat4> lu(sys);
      if (!lu.isInvertible()) return;
      const Vec4 v = lu.solve(rhs);
      if (((rows * v).array() > b.array() + 1e-7).any()) return;  // infeasible vertex
      if (!best || v(3) > best->radius + 1e-12) {
        best = ChebyshevResult{v.head<3>(), v(3)};
      }
      return;
    }
    for (int i = from; i < m; ++i) {
      pick[k] = i;
      rec(i + 1, k + 1);
    }
  };
  rec(0, 0);
  if (best && best->radius < -1e-9) return std::nullopt;
  return best;
}

std::vector<Vec3i> rayCellsByMarching(const VoxelGrid& grid, const Vec3& a, const Vec3& b) {
  std::vector<Vec3i> cells;
  const double len = (b - a).norm();
  const int steps = std::max(2, static_cast<int>(std::ceil(len / (grid.resolution() / 64.0))));
  for (int i = 0; i <= steps; ++i) {
    const Vec3i c = grid.worldToCell(a + (b - a) * (double(i) / steps));
    if (cells.empty() || cells.back() != c) cells.push_back(c);
  }
  return cells;
}

bool quinticRestToRestFeasible(double distance, double total_time, double f_cap_with_margin,
                               double omega_cap) {
  const double g = 9.81;
  for (int i = 0; i <= 4000; ++i) {
    const double tau = double(i) / 4000.0;
    const double acc = distance / (total_time * total_time) *
                       (60 * tau - 180 * tau * tau + 120 * tau * tau * tau);
    const double jerk = distance / (total_time * total_time * total_time) *
                        (60 - 360 * tau + 360 * tau * tau);
    const double c = std::hypot(acc, g);
    if (c > f_cap_with_margin) return false;
    const double omega = g * std::abs(jerk) / (c * c);
    if (omega > omega_cap) return false;
  }
  return true;
}

double quinticMinTimeBisection(double distance, double f_cap_with_margin, double omega_cap) {
  double lo = 1e-3, hi = 1.0;
  while (!quinticRestToRestFeasible(distance, hi, f_cap_with_margin, omega_cap)) hi *= 2.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (quinticRestToRestFeasible(distance, mid, f_cap_with_margin, omega_cap)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double centralDiff(const std::function<double(double)>& f, double x0, double h) {
  return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

}  // namespace loong::oracles
