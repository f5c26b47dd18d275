#pragma once

#include <cmath>

#include "gpssm/types.hpp"

namespace gpssm {

// In-place rank-one update of a lower-triangular Cholesky factor:
// L L^T += x x^T. x is consumed as workspace.
template <typename Scalar>
void chol_rank1_update(
    Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> L,
    Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> x) {
  const Index n = L.rows();
  for (Index k = 0; k < n; ++k) {
    const Scalar lkk = L(k, k);
    const Scalar xk = x(k);
    const Scalar r = std::hypot(lkk, xk);
    const Scalar c = r / lkk;
    const Scalar s = xk / lkk;
    L(k, k) = r;
    const Index m = n - k - 1;
    if (m > 0) {
      auto col = L.col(k).tail(m);
      auto xt = x.tail(m);
      col = (col + s * xt) / c;
      xt = c * xt - s * col;
    }
  }
}

// In-place rank-one downdate: L L^T -= x x^T. Returns false if the result
// would not be positive definite (caller refactorizes).
template <typename Scalar>
[[nodiscard]] bool chol_rank1_downdate(
    Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> L,
    Eigen::Ref<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> x) {
  const Index n = L.rows();
  for (Index k = 0; k < n; ++k) {
    const Scalar lkk = L(k, k);
    const Scalar xk = x(k);
    const Scalar r2 = lkk * lkk - xk * xk;
    if (!(r2 > Scalar(0))) return false;
    const Scalar r = std::sqrt(r2);
    const Scalar c = r / lkk;
    const Scalar s = xk / lkk;
    L(k, k) = r;
    const Index m = n - k - 1;
    if (m > 0) {
      auto col = L.col(k).tail(m);
      auto xt = x.tail(m);
      col = (col - s * xt) / c;
      xt = c * xt - s * col;
    }
  }
  return true;
}

}  // namespace gpssm
