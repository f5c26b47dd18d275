#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "gpssm/model.hpp"
#include "gpssm/smc.hpp"
#include "gpssm/types.hpp"

namespace gpssm {

struct SliceOptions {
  double width = 1.0;     // initial bracket width in log space
  int max_step_outs = 50;
};

// One univariate slice-sampling move with linear step-out; leaves the target
// invariant. If stepping out exceeds the expansion budget the current value
// is kept and *warnings is bumped.
double slice_sample_once(double x0, const std::function<double(double)>& logf,
                         Rng& rng, const SliceOptions& opts, int* warnings = nullptr);

struct PgasConfig {
  Index n_particles = 20;
  Index n_iterations = 50;
  Index burn_in = 10;
  std::uint64_t seed = 0;

  enum class PriorKind { kDense, kFic };
  PriorKind prior = PriorKind::kDense;
  Index fic_m = 40;
  InducingStrategy fic_strategy = InducingStrategy::kGrid;

  SliceOptions slice;
  bool sample_hyperparameters = true;

  // Optional warm-start: unrecorded sampler iterations at a larger particle
  // count, run before the chain proper. A small N holds the posterior mode
  // but cannot repair a sign-incoherent initial trajectory on multimodal
  // smoothing problems; a brief large-N phase can.
  Index warm_start_iterations = 0;
  Index warm_start_particles = 0;

  void validate() const;
};

// One iterate of the outer Gibbs chain.
struct ChainSample {
  Index iteration = 0;
  HyperVector theta{1, 1};
  Mat trajectory;  // (T+1) x n_x
  double log_joint = 0.0;
};

// Slice-sampling scan over the trajectory-prior hyperparameters (kernel and
// process noise) given a fixed trajectory. Returns the updated vector.
HyperVector sample_theta_x(const GpSsmModel& model, const Eigen::Ref<const Mat>& traj,
                           const Eigen::Ref<const Mat>& inputs, HyperVector theta,
                           const SliceOptions& opts, Rng& rng,
                           PgasConfig::PriorKind kind, const Mat* inducing_inputs,
                           int* warnings = nullptr);

// Slice-sampling move on the observation-noise coordinate given trajectory
// and observations.
HyperVector sample_theta_y(const GpSsmModel& model, const Eigen::Ref<const Mat>& traj,
                           const Eigen::Ref<const Mat>& obs, HyperVector theta,
                           const SliceOptions& opts, Rng& rng, int* warnings = nullptr);

// Alternates hyperparameter draws with conditioned sweeps (trajectory
// draws); deterministic given config.seed. on_sample is invoked for every
// iterate as soon as it is complete so partial chains can be persisted.
std::vector<ChainSample> run_pgas(
    const GpSsmModel& model, const Dataset& data, const PgasConfig& config,
    const std::function<void(const ChainSample&)>& on_sample = {},
    const std::optional<ChainSample>& resume_from = std::nullopt);

struct ChainDiagnostics {
  std::vector<std::string> theta_names;
  Vec theta_mean;
  Vec theta_sd;
  Mat theta_autocorr;  // lags x coords, lag 1..max_lag
  Vec update_rate;     // per time index: fraction of iterations x_t changed
  Vec log_joint_trace;
};

ChainDiagnostics chain_diagnostics(const std::vector<ChainSample>& chain,
                                   Index max_lag = 10);

// log p(x, y | theta) up to constants: initial-state, trajectory-prior and
// measurement terms.
double chain_log_joint(const GpSsmModel& model, const Dataset& data,
                       const Eigen::Ref<const Mat>& traj, double traj_log_prior);

}  // namespace gpssm
