#pragma once

#include <vector>

#include "loong/geometry.hpp"

namespace loong {

// LU factorization of a banded matrix with partial pivoting, LAPACK-style
// band storage with kl fill rows. Factor/solve cost is linear in n for a
// fixed bandwidth.
class BandedMatrix {
 public:
  BandedMatrix(int n, int kl, int ku);

  int size() const { return n_; }

  // Valid for i - j in [-ku, kl]; other entries are structurally zero.
  void set(int i, int j, double v);
  void add(int i, int j, double v);
  double get(int i, int j) const;

  // Returns false when a zero pivot is met (singular system).
  bool factorize();

  // Solves in place for each column of rhs. Requires factorize() == true.
  void solve(MatX* rhs) const;

  MatX toDense() const;

 private:
  double& at(int i, int j);
  double atc(int i, int j) const;

  int n_, kl_, ku_;
  MatX store_;  // (2kl + ku + 1) x n
  std::vector<int> ipiv_;
  bool factorized_ = false;
};

}  // namespace loong
