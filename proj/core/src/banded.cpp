#include "loong/banded.hpp"

#include <cassert>
#include <cmath>

namespace loong {

BandedMatrix::BandedMatrix(int n, int kl, int ku) : n_(n), kl_(kl), ku_(ku) {
  store_ = MatX::Zero(2 * kl + ku + 1, n);
  ipiv_.resize(n);
}

double& BandedMatrix::at(int i, int j) {
  // Row swaps fill the upper triangle up to ku + kl superdiagonals.
  assert(i - j <= kl_ && j - i <= ku_ + kl_);
  return store_(kl_ + ku_ + i - j, j);
}

double BandedMatrix::atc(int i, int j) const {
  if (i - j > kl_ || j - i > ku_ + kl_) return 0.0;
  return store_(kl_ + ku_ + i - j, j);
}

void BandedMatrix::set(int i, int j, double v) { at(i, j) = v; }
void BandedMatrix::add(int i, int j, double v) { at(i, j) += v; }
double BandedMatrix::get(int i, int j) const { return atc(i, j); }

bool BandedMatrix::factorize() {
  for (int j = 0; j < n_; ++j) {
    const int km = std::min(kl_, n_ - 1 - j);
    // Partial pivot within the column band.
    int p = 0;
    double best = std::abs(at(j, j));
    for (int i = 1; i <= km; ++i) {
      const double v = std::abs(at(j + i, j));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    ipiv_[j] = j + p;
    if (best < 1e-300) return false;
    if (p != 0) {
      const int last_col = std::min(n_ - 1, j + ku_ + kl_);
      for (int c = j; c <= last_col; ++c) {
        std::swap(at(j, c), at(j + p, c));
      }
    }
    const double piv = at(j, j);
    for (int i = 1; i <= km; ++i) at(j + i, j) /= piv;
    const int last_col = std::min(n_ - 1, j + ku_ + kl_);
    for (int c = j + 1; c <= last_col; ++c) {
      const double ujc = at(j, c);
      if (ujc == 0.0) continue;
      for (int i = 1; i <= km; ++i) at(j + i, c) -= at(j + i, j) * ujc;
    }
  }
  factorized_ = true;
  return true;
}

void BandedMatrix::solve(MatX* rhs) const {
  assert(factorized_);
  MatX& x = *rhs;
  // Forward: apply pivots and L (unit lower, multipliers stored in band).
  for (int j = 0; j < n_; ++j) {
    if (ipiv_[j] != j) x.row(j).swap(x.row(ipiv_[j]));
    const int km = std::min(kl_, n_ - 1 - j);
    for (int i = 1; i <= km; ++i) {
      x.row(j + i) -= atc(j + i, j) * x.row(j);
    }
  }
  // Backward: U x = y.
  for (int j = n_ - 1; j >= 0; --j) {
    x.row(j) /= atc(j, j);
    const int first = std::max(0, j - ku_ - kl_);
    for (int i = first; i < j; ++i) {
      const double u = atc(i, j);
      if (u != 0.0) x.row(i) -= u * x.row(j);
    }
  }
  (void)x;
}

MatX BandedMatrix::toDense() const {
  MatX d = MatX::Zero(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) d(i, j) = atc(i, j);
  return d;
}

}  // namespace loong
