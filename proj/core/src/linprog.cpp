#include "loong/linprog.hpp"

#include <vector>

namespace loong {

namespace {

constexpr double kEps = 1e-11;

// Tableau simplex over rows [A | b] with basis tracking. Bland's rule keeps
// the pivot sequence deterministic and cycle-free. Only columns < num_cols
// may enter; the right-hand side lives at rhs_col.
bool runSimplex(MatX& tab, std::vector<int>& basis, int num_cols, int rhs_col) {
  const int m = static_cast<int>(tab.rows()) - 1;
  const int obj = m;
  while (true) {
    int enter = -1;
    for (int j = 0; j < num_cols; ++j) {
      if (tab(obj, j) < -kEps) {
        enter = j;
        break;
      }
    }
    if (enter < 0) return true;  // optimal

    int leave = -1;
    double best_ratio = 0.0;
    for (int i = 0; i < m; ++i) {
      if (tab(i, enter) > kEps) {
        const double ratio = tab(i, rhs_col) / tab(i, enter);
        if (leave < 0 || ratio < best_ratio - kEps ||
            (ratio < best_ratio + kEps && basis[i] < basis[leave])) {
          leave = i;
          best_ratio = ratio;
        }
      }
    }
    if (leave < 0) return false;  // unbounded

    const double piv = tab(leave, enter);
    tab.row(leave) /= piv;
    for (int i = 0; i <= m; ++i) {
      if (i == leave) continue;
      const double factor = tab(i, enter);
      if (factor != 0.0) tab.row(i) -= factor * tab.row(leave);
    }
    basis[leave] = enter;
  }
}

}  // namespace

LpResult solveLp(const VecX& c, const MatX& A, const VecX& b) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  // Standard form: x = xp - xn, slack s >= 0: [A -A I](xp;xn;s) = b.
  const int nv = 2 * n + m;

  // Normalize rows to b >= 0 by sign flip, then phase 1 with artificials.
  MatX eq(m, nv);
  VecX rhs(m);
  for (int i = 0; i < m; ++i) {
    double sign = b(i) < 0 ? -1.0 : 1.0;
    eq.row(i).segment(0, n) = sign * A.row(i);
    eq.row(i).segment(n, n) = -sign * A.row(i);
    eq.row(i).segment(2 * n, m).setZero();
    eq(i, 2 * n + i) = sign;
    rhs(i) = sign * b(i);
  }

  const int total = nv + m;  // + artificials
  MatX tab = MatX::Zero(m + 1, total + 1);
  tab.block(0, 0, m, nv) = eq;
  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) {
    tab(i, nv + i) = 1.0;
    basis[i] = nv + i;
    tab(i, total) = rhs(i);
  }
  // Phase-1 objective: minimize sum of artificials.
  for (int i = 0; i < m; ++i) tab.row(m) -= tab.row(i);
  tab(m, total) = -rhs.sum();
  for (int j = nv; j < total; ++j) tab(m, j) = 0.0;

  LpResult result;
  if (!runSimplex(tab, basis, total, total)) {
    result.status = LpStatus::kUnbounded;  // cannot happen in phase 1
    return result;
  }
  if (-tab(m, total) > 1e-7) {
    result.status = LpStatus::kInfeasible;
    return result;
  }
  // Drive remaining artificials out of the basis where possible.
  for (int i = 0; i < m; ++i) {
    if (basis[i] >= nv) {
      int enter = -1;
      for (int j = 0; j < nv; ++j) {
        if (std::abs(tab(i, j)) > 1e-9) {
          enter = j;
          break;
        }
      }
      if (enter >= 0) {
        const double piv = tab(i, enter);
        tab.row(i) /= piv;
        for (int r = 0; r <= m; ++r) {
          if (r == i) continue;
          const double f = tab(r, enter);
          if (f != 0.0) tab.row(r) -= f * tab.row(i);
        }
        basis[i] = enter;
      }
    }
  }

  // Phase 2: restore the true objective over (xp, xn).
  tab.row(m).setZero();
  for (int j = 0; j < n; ++j) {
    tab(m, j) = c(j);
    tab(m, n + j) = -c(j);
  }
  for (int i = 0; i < m; ++i) {
    if (basis[i] < nv && std::abs(tab(m, basis[i])) > 0.0) {
      tab.row(m) -= tab(m, basis[i]) * tab.row(i);
    }
  }
  // Forbid re-entering artificial columns.
  if (!runSimplex(tab, basis, nv, total)) {
    result.status = LpStatus::kUnbounded;
    return result;
  }

  VecX sol = VecX::Zero(nv);
  for (int i = 0; i < m; ++i) {
    if (basis[i] < nv) sol(basis[i]) = tab(i, total);
  }
  result.x = sol.segment(0, n) - sol.segment(n, n);
  result.objective = c.dot(result.x);
  result.status = LpStatus::kOptimal;
  return result;
}

}  // namespace loong
