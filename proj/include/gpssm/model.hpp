#pragma once

#include <functional>
#include <string>

#include "gpssm/hyper.hpp"
#include "gpssm/kernels.hpp"
#include "gpssm/types.hpp"

namespace gpssm {

// Observation map y = h(x) + e, e ~ N(0, r I). The functional form and its
// coefficient are known; the noise variance r is a sampled hyperparameter.
class MeasurementModel {
 public:
  enum class Kind { kQuadraticGaussian, kLinearGaussian };

  MeasurementModel(Kind kind, double coeff, double noise_var);

  Vec predict(const Eigen::Ref<const Vec>& x) const;
  double loglik(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Vec>& x) const {
    return loglik(y, x, noise_var_);
  }
  double loglik(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Vec>& x,
                double r) const;

  Kind kind() const { return kind_; }
  double coeff() const { return coeff_; }
  double noise_var() const { return noise_var_; }
  void set_noise_var(double r);

 private:
  Kind kind_;
  double coeff_;
  double noise_var_;
};

// Diagonal Gaussian initial-state distribution.
struct InitialState {
  Vec mean;
  Vec var;  // entries >= 0; zero variance pins the coordinate

  double logpdf(const Eigen::Ref<const Vec>& x) const {
    double lp = 0.0;
    for (Index d = 0; d < mean.size(); ++d)
      if (var[d] > 0.0) lp += gaussian_logpdf(x[d], mean[d], var[d]);
    return lp;
  }
};

struct GpSsmModel {
  Index state_dim = 1;
  Index input_dim = 0;
  Index obs_dim = 1;
  MeanFunction mean_fn = MeanFunction::identity(1);
  CovFunction cov_fn = CovFunction(Mat::Zero(1, 1), Vec::Zero(1));
  Vec process_noise = Vec::Ones(1);  // diag(Q)
  MeasurementModel measurement{MeasurementModel::Kind::kLinearGaussian, 1.0, 1.0};
  InitialState initial_state{Vec::Zero(1), Vec::Ones(1)};
  PriorSet hyper_priors;

  Index gp_input_dim() const { return state_dim + input_dim; }

  HyperVector hyper() const;
  void set_hyper(const HyperVector& h);

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Time series generated from (or observed on) one model. inputs/obs/states
// carry T+1 rows; transitions use input rows 0..T-1. states and latent_f are
// optional (empty when absent); latent_f holds the noise-free transition
// values f(x_t, u_t).
struct Dataset {
  Mat inputs;    // (T+1) x n_u
  Mat obs;       // (T+1) x n_y
  Mat states;    // (T+1) x n_x or empty
  Mat latent_f;  // (T+1) x n_x or empty

  Index horizon() const { return obs.rows() - 1; }
  bool has_states() const { return states.size() > 0; }
  bool has_latent() const { return latent_f.size() > 0; }
  void validate() const;
};

// Forward simulation with the mean function as the (known, fixed) transition.
// Deterministic given seed. Throws std::runtime_error on state overflow.
Dataset simulate(const GpSsmModel& model, Index T, std::uint64_t seed,
                 const std::function<Vec(Index)>& input_law = {});

// Exact Gaussian log-density of y given x under the configured observation
// map with noise variance r.
double measurement_loglik(const GpSsmModel& model, const Eigen::Ref<const Vec>& y,
                          const Eigen::Ref<const Vec>& x, double r);

}  // namespace gpssm
