#pragma once

#include <string>

#include "gpssm/types.hpp"

namespace gpssm {

// Squared-exponential ARD covariance, one independent scalar GP per output
// dimension. All hyperparameters are stored in log space.
class CovFunction {
 public:
  // log_lengthscales: n_out x n_in, log_signal_variance: n_out
  CovFunction(Mat log_lengthscales, Vec log_signal_variance);

  Index output_dim() const { return log_sf2_.size(); }
  Index input_dim() const { return log_ls_.cols(); }

  double signal_variance(Index d) const { return sf2_[d]; }
  double lengthscale(Index d, Index i) const { return std::exp(log_ls_(d, i)); }

  // Diagonal jitter added to Gram matrices before factorization.
  double jitter(Index d) const { return 1e-8 * sf2_[d]; }

  double operator()(Index d, const Eigen::Ref<const Vec>& a,
                    const Eigen::Ref<const Vec>& b) const;

  // k_d(p_i, z) for every row p_i of pts.
  Vec column(Index d, const Eigen::Ref<const Mat>& pts,
             const Eigen::Ref<const Vec>& z) const;

  // Gram matrix over the rows of pts, no jitter.
  Mat gram(Index d, const Eigen::Ref<const Mat>& pts) const;

  const Mat& log_lengthscales() const { return log_ls_; }
  const Vec& log_signal_variance() const { return log_sf2_; }

 private:
  Mat log_ls_;
  Mat inv_ls2_;  // 1 / lengthscale^2, precomputed
  Vec log_sf2_;
  Vec sf2_;
};

// Diagonal n_x x n_x covariance block between two GP inputs, returned as the
// vector of diagonal entries.
Vec cov_eval(const CovFunction& k, const Eigen::Ref<const Vec>& zi,
             const Eigen::Ref<const Vec>& zj);

// Transition mean function m(x, u) -> R^{n_x}.
class MeanFunction {
 public:
  enum class Kind { kZero, kIdentity, kParametric, kAffine };

  static MeanFunction zero(Index n_x);
  static MeanFunction identity(Index n_x);
  // a*x + b*x/(1+x^2) + c*u, scalar state and input
  static MeanFunction parametric(double a, double b, double c);
  // alpha*x + beta*u + gamma, scalar state and input
  static MeanFunction affine(double alpha, double beta, double gamma);

  Vec eval(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& u) const;

  Kind kind() const { return kind_; }
  const Vec& params() const { return params_; }
  Index state_dim() const { return n_x_; }

 private:
  MeanFunction(Kind kind, Index n_x, Vec params)
      : kind_(kind), n_x_(n_x), params_(std::move(params)) {}
  Kind kind_;
  Index n_x_;
  Vec params_;
};

inline Vec mean_eval(const MeanFunction& m, const Eigen::Ref<const Vec>& x,
                     const Eigen::Ref<const Vec>& u) {
  return m.eval(x, u);
}

}  // namespace gpssm
