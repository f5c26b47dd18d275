#pragma once

#include <string>
#include <vector>

#include "gpssm/kernels.hpp"
#include "gpssm/types.hpp"

namespace gpssm {

// Gaussian prior on a log-space hyperparameter (i.e. log-normal on the
// natural value). log_sd <= 0 marks the coordinate as held fixed.
struct LogNormalPrior {
  double log_mean = 0.0;
  double log_sd = 1.0;

  bool fixed() const { return log_sd <= 0.0; }
  double logpdf(double logv) const {
    return fixed() ? 0.0 : gaussian_logpdf(logv, log_mean, log_sd * log_sd);
  }
  double median_log() const { return log_mean; }
};

// Flat vector of log-transformed hyperparameters with a fixed layout:
// for each state dimension d: [log lengthscales(d, 0..n_in-1), log sf2(d)],
// then log q(0..n_x-1), then log r.
class HyperVector {
 public:
  HyperVector(Index n_x, Index n_in);
  static HyperVector pack(const CovFunction& cov,
                          const Eigen::Ref<const Vec>& q_diag, double r);

  CovFunction cov() const;
  Vec q_diag() const;
  double obs_noise() const { return std::exp(v_[obs_noise_index()]); }

  Index size() const { return v_.size(); }
  double operator[](Index i) const { return v_[i]; }
  double& operator[](Index i) { return v_[i]; }
  const Vec& values() const { return v_; }
  Vec& values() { return v_; }

  Index state_dim() const { return nx_; }
  Index gp_input_dim() const { return nin_; }

  Index lengthscale_index(Index d, Index i) const { return d * (nin_ + 1) + i; }
  Index signal_variance_index(Index d) const { return d * (nin_ + 1) + nin_; }
  Index process_noise_index(Index d) const { return nx_ * (nin_ + 1) + d; }
  Index obs_noise_index() const { return nx_ * (nin_ + 1) + nx_; }

  // State dimension a coordinate feeds into; n_x for the observation noise.
  Index dim_of(Index coord) const;

  std::string name(Index i) const;
  std::vector<std::string> names() const;

  bool all_finite() const { return v_.allFinite(); }

 private:
  Index nx_, nin_;
  Vec v_;
};

// One prior per hyperparameter coordinate, aligned with HyperVector's layout.
struct PriorSet {
  std::vector<LogNormalPrior> coords;

  double logpdf(const HyperVector& h) const {
    double lp = 0.0;
    for (Index i = 0; i < h.size(); ++i) lp += coords[i].logpdf(h[i]);
    return lp;
  }
};

}  // namespace gpssm
