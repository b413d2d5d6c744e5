#pragma once

#include "loong/geometry.hpp"

namespace loong {

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  VecX x;
  double objective = 0.0;
};

// Dense two-phase tableau simplex with Bland's rule (deterministic, finite).
// Solves min c'x subject to A x <= b with free variables. Intended for the
// small corridor LPs (tens of rows, a handful of variables).
LpResult solveLp(const VecX& c, const MatX& A, const VecX& b);

}  // namespace loong
