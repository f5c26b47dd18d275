#pragma once

#include <vector>

#include "gpssm/model.hpp"
#include "gpssm/pgas.hpp"
#include "gpssm/types.hpp"

namespace gpssm {

// Equally weighted Gaussian mixture over chain samples approximating the
// predictive distribution of the transition value at a test input.
struct MixturePredictive {
  Mat means;  // L x n_x
  Mat vars;   // L x n_x, diagonal components

  Index components() const { return means.rows(); }
  double weight() const { return 1.0 / double(components()); }

  // Law-of-total-variance moments.
  Vec mean() const;
  Vec variance() const;

  double logpdf(const Eigen::Ref<const Vec>& f) const;
};

// Precomputes one GP-regression conditioning per retained chain sample:
// the sample's trajectory states are the inputs, its shifted states the
// targets, its process noise the likelihood variance.
class MixturePredictor {
 public:
  // Uses chain samples with iteration > burn_in. add_process_noise=true
  // targets the next state rather than the noise-free transition value.
  MixturePredictor(const std::vector<ChainSample>& chain, Index burn_in,
                   const GpSsmModel& model, const Dataset& train,
                   bool add_process_noise = false);

  Index components() const { return static_cast<Index>(samples_.size()); }
  Index skipped() const { return skipped_; }

  MixturePredictive at(const Eigen::Ref<const Vec>& x_star,
                       const Eigen::Ref<const Vec>& u_star) const;

  // Component means only; O(T) per component instead of O(T^2).
  Mat component_means(const Eigen::Ref<const Vec>& x_star,
                      const Eigen::Ref<const Vec>& u_star) const;

 private:
  struct SampleFit {
    Mat pts;                 // T x (n_x + n_u)
    std::vector<Mat> chol;   // per dim: T x T lower factor of K + q I (+jitter)
    std::vector<Vec> alpha;  // per dim: (K + q I)^{-1} resid
    CovFunction cov;
    MeanFunction mean;
    Vec q_diag;
  };
  std::vector<SampleFit> samples_;
  Index skipped_ = 0;
  bool add_q_ = false;
};

MixturePredictive predictive_mixture(const std::vector<ChainSample>& chain,
                                     Index burn_in, const GpSsmModel& model,
                                     const Dataset& train,
                                     const Eigen::Ref<const Vec>& x_star,
                                     const Eigen::Ref<const Vec>& u_star);

// Random sub-sampling without replacement, order preserved. keep >= chain
// size returns the chain unchanged.
std::vector<ChainSample> thin_chain(const std::vector<ChainSample>& chain, Index keep,
                                    std::uint64_t seed);

// Joint draw of the noise-free transition values at one sample's own T
// trajectory inputs, from the Gaussian posterior given the realized
// transitions. Returns T x n_x.
Mat sample_latent_f(const ChainSample& sample, const GpSsmModel& model,
                    const Dataset& train, Rng& rng);

// Root-mean-square error of the mixture mean against the test set's
// noise-free transition values.
double rmse_prediction(const std::vector<ChainSample>& chain, Index burn_in,
                       const GpSsmModel& model, const Dataset& train,
                       const Dataset& test);

// RMSE of the per-time posterior-mean state estimate against ground truth.
double rmse_smoothing(const std::vector<ChainSample>& chain, Index burn_in,
                      const Eigen::Ref<const Mat>& truth_states);

}  // namespace gpssm
