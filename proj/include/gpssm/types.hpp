#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace gpssm {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecI = Eigen::VectorXi;

constexpr double kLog2Pi = 1.8378770664093454836;

inline double gaussian_logpdf(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

inline double logsumexp(const Eigen::Ref<const Vec>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace gpssm
