#pragma once

#include <memory>
#include <vector>

#include "gpssm/kernels.hpp"
#include "gpssm/rng.hpp"
#include "gpssm/types.hpp"

namespace gpssm {

// Kernel, mean function and process noise for one hyperparameter setting.
// Shared read-only by every factor built under that setting.
struct TransitionPrior {
  CovFunction cov;
  MeanFunction mean;
  Vec q_diag;

  Index state_dim() const { return q_diag.size(); }
  Index gp_input_dim() const { return cov.input_dim(); }
};

struct PredictiveMoments {
  Vec mu;
  Vec var;  // diagonal covariance under independent output dimensions
};

// A state-trajectory prefix together with the maintained Cholesky factor of
// its kernel-plus-noise matrix, one scalar factor per state dimension.
// Entry j pairs the GP input z_j = (x_j, u_j) with the target x_{j+1}.
//
// The factor supports O(t^2) growth, O((t-j) t) in-place replacement of a
// single input/target pair via rank-one updates and downdates on the
// trailing block, and O(1)-amortized reads of the one-step conditionals it
// stores, which is what keeps a full conditioned sweep at O(T^3).
class TrajectoryFactor {
 public:
  TrajectoryFactor(std::shared_ptr<const TransitionPrior> prior, Index capacity);

  // Batch construction via a dense factorization of the full kernel matrix.
  static TrajectoryFactor build(std::shared_ptr<const TransitionPrior> prior,
                                const Eigen::Ref<const Mat>& points,
                                const Eigen::Ref<const Mat>& targets);

  Index size() const { return size_; }
  Index capacity() const { return points_.rows(); }

  // Append one (input, target) transition. O(t^2).
  void extend(const Eigen::Ref<const Vec>& point, const Eigen::Ref<const Vec>& target);

  // Replace entry j's input and target; equals a from-scratch factorization
  // of the modified point set. Never O(t^3) unless a downdate loses positive
  // definiteness, in which case the dimension is refactorized (counted).
  void replace_point(Index j, const Eigen::Ref<const Vec>& point,
                     const Eigen::Ref<const Vec>& target);

  // Change entry j's target only.
  void set_target(Index j, const Eigen::Ref<const Vec>& target);

  // GP predictive for the next state at an arbitrary query input. O(t^2).
  PredictiveMoments one_step_predictive(const Eigen::Ref<const Vec>& query) const;

  // Predictive at stored input j, conditioned on entries 0..j-1 only. O(t).
  PredictiveMoments predictive_at(Index j) const;

  // Log-density of all stored transitions under the marginalized prior.
  double log_joint_prior() const;

  // Log-density of entries [from, size) conditioned on entries [0, from).
  double log_density_tail(Index from) const;

  const Mat& points() const { return points_; }
  const Mat& targets() const { return targets_; }
  const TransitionPrior& prior() const { return *prior_; }

  // Lower-triangular factor for one state dimension (top-left size x size).
  const Mat& factor(Index d) const { return dims_[d].L; }

  int refactor_count() const { return refactors_; }

 private:
  struct DimState {
    Mat L;      // capacity x capacity, lower triangle of leading size x size valid
    Vec resid;  // target - mean, per entry
    Vec c;      // L^{-1} resid, maintained lazily from solve_from_
  };

  double noisy_diag(Index d, const Eigen::Ref<const Vec>& z) const;
  void refresh_solve() const;
  void rebuild_dim(Index d);

  std::shared_ptr<const TransitionPrior> prior_;
  Mat points_;   // capacity x n_in
  Mat targets_;  // capacity x n_x
  Mat means_;    // capacity x n_x
  mutable std::vector<DimState> dims_;  // c refreshed lazily
  Index size_ = 0;
  mutable Index solve_from_ = 0;  // c entries below this index are valid
  int refactors_ = 0;
};

// Draw x_{1:T} sequentially from the marginalized trajectory prior given x_0
// and the input sequence (rows 0..T-1 used). Returns (T+1) x n_x states.
Mat sample_trajectory_from_prior(const std::shared_ptr<const TransitionPrior>& prior,
                                 const Eigen::Ref<const Vec>& x0,
                                 const Eigen::Ref<const Mat>& inputs, Index T,
                                 Rng& rng);

}  // namespace gpssm
