#pragma once

#include <memory>
#include <vector>

#include "gpssm/trajectory_factor.hpp"
#include "gpssm/types.hpp"

namespace gpssm {

enum class InducingStrategy { kGrid, kSubsample, kKmeans };

InducingStrategy inducing_strategy_from_string(const std::string& s);
std::string to_string(InducingStrategy s);

// Pick M inducing inputs from the rows of candidates. Deterministic given
// seed. Grid placement factorizes M across axes so the largest axis spacing
// is minimized; subsample draws without replacement; kmeans runs Lloyd
// iterations from a distance-weighted seeding.
Mat select_inducing(const Eigen::Ref<const Mat>& candidates, Index m,
                    InducingStrategy strategy, std::uint64_t seed);

// Inducing inputs with the per-dimension Cholesky factor of K_UU (+ jitter).
// Immutable, shared read-only across particles.
class InducingSet {
 public:
  InducingSet(std::shared_ptr<const TransitionPrior> prior, Mat inputs);

  Index count() const { return inputs_.rows(); }
  const Mat& inputs() const { return inputs_; }
  const TransitionPrior& prior() const { return *prior_; }
  const std::shared_ptr<const TransitionPrior>& prior_ptr() const { return prior_; }

  // k_d(U, z)
  Vec kvec(Index d, const Eigen::Ref<const Vec>& z) const;
  const Mat& kuu_factor(Index d) const { return luu_[d]; }
  double logdet_kuu(Index d) const { return logdet_[d]; }

 private:
  std::shared_ptr<const TransitionPrior> prior_;
  Mat inputs_;
  std::vector<Mat> luu_;
  Vec logdet_;
};

// Sparse-prior covariance between trajectory entries i and j (Eq. of the
// low-rank-plus-diagonal construction): the low-rank part everywhere, plus
// the exact diagonal restored when the entries coincide.
Vec fic_cov(const InducingSet& u, const Eigen::Ref<const Vec>& zi,
            const Eigen::Ref<const Vec>& zj, bool same_index);

// Running low-rank factorization state for a trajectory under the sparse
// prior: per state dimension the Cholesky factor of
// K_UU + sum_j a_j a_j^T / lambda_j, the information vector sum_j a_j r_j /
// lambda_j, and scalar accumulators, all updated in O(M^2) per entry.
// Entry caches (a_j, lambda_j, r_j) make replacement a downdate + update.
class FicState {
 public:
  FicState(std::shared_ptr<const InducingSet> inducing, Index capacity);

  static FicState build(std::shared_ptr<const InducingSet> inducing,
                        const Eigen::Ref<const Mat>& points,
                        const Eigen::Ref<const Mat>& targets);

  Index size() const { return size_; }
  Index capacity() const { return points_.rows(); }

  void extend(const Eigen::Ref<const Vec>& point, const Eigen::Ref<const Vec>& target);
  void replace_point(Index j, const Eigen::Ref<const Vec>& point,
                     const Eigen::Ref<const Vec>& target);
  void set_target(Index j, const Eigen::Ref<const Vec>& target);

  // Predictive moments at a query input, O(M^2); never forms a t x t matrix.
  PredictiveMoments one_step_predictive(const Eigen::Ref<const Vec>& query) const;

  // Log-density of all stored transitions under the sparse prior.
  double log_joint_prior() const;

  const Mat& points() const { return points_; }
  const Mat& targets() const { return targets_; }
  const InducingSet& inducing() const { return *u_; }

  int refactor_count() const { return refactors_; }

 private:
  struct DimState {
    Mat R;        // M x M lower factor of K_UU(+jit) + sum a a^T / lambda
    Vec b;        // sum a r / lambda
    Mat a_cache;  // M x capacity
    Vec lambda;   // capacity
    Vec resid;    // capacity
    double sum_log_lambda = 0.0;
    double sum_r2_over_lambda = 0.0;
  };

  void remove_entry(Index d, Index j);
  void add_entry(Index d, Index j, const Eigen::Ref<const Vec>& point, double resid);
  void rebuild_dim(Index d);

  std::shared_ptr<const InducingSet> u_;
  Mat points_;
  Mat targets_;
  Mat means_;
  std::vector<DimState> dims_;
  Index size_ = 0;
  int refactors_ = 0;
};

}  // namespace gpssm
