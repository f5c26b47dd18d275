#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gpssm/model.hpp"
#include "gpssm/rng.hpp"
#include "gpssm/sparse_fic.hpp"
#include "gpssm/trajectory_factor.hpp"
#include "gpssm/types.hpp"

namespace gpssm {

// Normalize log weights with max-subtraction. Throws std::runtime_error when
// every weight is zero or non-finite (total degeneracy), naming `where`.
Vec normalized_weights_from_log(const Eigen::Ref<const Vec>& logw,
                                const std::string& where);

// Multinomial ancestor draws P(a = j) = w_j for n_draws particles.
VecI resample_ancestors(const Eigen::Ref<const Vec>& weights, Index n_draws, Rng& rng);

struct AncestorDraw {
  Index index;
  Vec weights;  // normalized ancestor-sampling weights
};

// Ancestor-sampling weights for the conditioned particle: combines the
// previous weights with the log-density of the reference suffix under each
// particle's trajectory prefix. Non-finite entries are zeroed (logged);
// all-zero aborts.
Vec ancestor_weights(const Eigen::Ref<const Vec>& log_weights_prev,
                     const Eigen::Ref<const Vec>& suffix_logdens);
AncestorDraw ancestor_sample(const Eigen::Ref<const Vec>& log_weights_prev,
                             const Eigen::Ref<const Vec>& suffix_logdens, Rng& rng);

// Draw from a diagonal Gaussian.
Vec sample_gaussian(const PredictiveMoments& pm, Rng& rng);

// Weighted particle trajectories with ancestor bookkeeping for one sweep.
struct ParticleSystem {
  Index n_particles = 0;
  Index horizon = 0;
  std::vector<Mat> trajectories;  // N of (T+1) x n_x, ancestor-spliced
  Vec weights;                    // final-step normalized weights
  Vec log_weights;                // final-step unnormalized log weights
  Eigen::MatrixXi ancestors;      // (T+1) x N, row 0 is identity
  std::vector<Mat> step_states;   // per step: N x n_x states proposed at t
  Mat reference;                  // (T+1) x n_x, empty for an unconditioned run
  bool has_reference() const { return reference.size() > 0; }
};

struct SweepResult {
  ParticleSystem system;
  Mat sampled_trajectory;    // (T+1) x n_x
  double sampled_log_prior;  // log p(x_{1:T} | x_0, theta) of the draw
  Index sampled_index;
};

namespace detail {

inline Vec make_gp_input(const Eigen::Ref<const Vec>& x,
                         const Eigen::Ref<const Mat>& inputs, Index t) {
  Vec z(x.size() + inputs.cols());
  z.head(x.size()) = x;
  z.tail(inputs.cols()) = inputs.row(t).transpose();
  return z;
}

}  // namespace detail

// ---- Per-particle sweep state, marginalized dense prior ----
//
// Holds the Cholesky factor over the concatenated trajectory
// {x_{0:t} own, reference suffix}. Proposal moments and the reference-suffix
// density are read directly from the maintained factor.
class DenseSweepState {
 public:
  DenseSweepState(TrajectoryFactor factor, const Mat* inputs, Index n_x)
      : factor_(std::move(factor)), inputs_(inputs), n_x_(n_x) {}

  void set_initial(const Eigen::Ref<const Vec>& x0) {
    factor_.replace_point(0, detail::make_gp_input(x0, *inputs_, 0),
                          factor_.targets().row(0).transpose());
  }
  PredictiveMoments predict_step(Index t) const { return factor_.predictive_at(t - 1); }
  double suffix_logdens(Index t, const Eigen::Ref<const Vec>&) const {
    return factor_.log_density_tail(t - 1);
  }
  void apply_transition(Index t, const Eigen::Ref<const Vec>& x_t) {
    factor_.set_target(t - 1, x_t);
    if (t < factor_.size())
      factor_.replace_point(t, detail::make_gp_input(x_t, *inputs_, t),
                            factor_.targets().row(t).transpose());
  }
  // The adopted factor already represents the reference path from entry t-1 on.
  void apply_reference_transition(Index, const Eigen::Ref<const Vec>&) {}
  double own_path_log_prior() const { return factor_.log_joint_prior(); }
  const TrajectoryFactor& factor() const { return factor_; }

 private:
  TrajectoryFactor factor_;
  const Mat* inputs_;
  Index n_x_;
};

class DenseGrowState {
 public:
  explicit DenseGrowState(TrajectoryFactor factor) : factor_(std::move(factor)) {}
  PredictiveMoments predict(const Eigen::Ref<const Vec>& z) const {
    return factor_.one_step_predictive(z);
  }
  void absorb(const Eigen::Ref<const Vec>& z, const Eigen::Ref<const Vec>& x) {
    factor_.extend(z, x);
  }
  double own_path_log_prior() const { return factor_.log_joint_prior(); }

 private:
  TrajectoryFactor factor_;
};

struct DenseSweepFactory {
  std::shared_ptr<const TransitionPrior> prior;

  using State = DenseSweepState;
  using GrowState = DenseGrowState;

  State make_reference_state(const Eigen::Ref<const Mat>& reference,
                             const Mat& inputs) const {
    const Index T = reference.rows() - 1;
    const Index n_x = prior->state_dim();
    Mat pts(T, prior->gp_input_dim());
    Mat tg(T, n_x);
    for (Index t = 0; t < T; ++t) {
      pts.row(t) = detail::make_gp_input(reference.row(t).transpose(), inputs, t).transpose();
      tg.row(t) = reference.row(t + 1);
    }
    return State(TrajectoryFactor::build(prior, pts, tg), &inputs, n_x);
  }
  GrowState make_grow_state(Index capacity) const {
    return GrowState(TrajectoryFactor(prior, capacity));
  }
};

// ---- Per-particle sweep state, sparse (low-rank) prior ----
//
// Keeps two accumulator states: one over the full concatenated trajectory
// and one over the particle's own prefix. The suffix density is their
// difference; every per-step operation is O(M^2).
class FicSweepState {
 public:
  FicSweepState(FicState full, FicState prefix, const Mat* inputs, Index n_x)
      : full_(std::move(full)), prefix_(std::move(prefix)), inputs_(inputs), n_x_(n_x) {}

  void set_initial(const Eigen::Ref<const Vec>& x0) {
    full_.replace_point(0, detail::make_gp_input(x0, *inputs_, 0),
                        full_.targets().row(0).transpose());
  }
  PredictiveMoments predict_step(Index t) const {
    return prefix_.one_step_predictive(full_.points().row(t - 1).transpose());
  }
  double suffix_logdens(Index t, const Eigen::Ref<const Vec>&) const {
    (void)t;
    return full_.log_joint_prior() - prefix_.log_joint_prior();
  }
  void apply_transition(Index t, const Eigen::Ref<const Vec>& x_t) {
    const Vec z_prev = full_.points().row(t - 1).transpose();
    full_.set_target(t - 1, x_t);
    if (t < full_.size())
      full_.replace_point(t, detail::make_gp_input(x_t, *inputs_, t),
                          full_.targets().row(t).transpose());
    prefix_.extend(z_prev, x_t);
  }
  void apply_reference_transition(Index t, const Eigen::Ref<const Vec>& x_t) {
    prefix_.extend(full_.points().row(t - 1).transpose(), x_t);
  }
  double own_path_log_prior() const { return full_.log_joint_prior(); }

 private:
  FicState full_;
  FicState prefix_;
  const Mat* inputs_;
  Index n_x_;
};

class FicGrowState {
 public:
  explicit FicGrowState(FicState state) : state_(std::move(state)) {}
  PredictiveMoments predict(const Eigen::Ref<const Vec>& z) const {
    return state_.one_step_predictive(z);
  }
  void absorb(const Eigen::Ref<const Vec>& z, const Eigen::Ref<const Vec>& x) {
    state_.extend(z, x);
  }
  double own_path_log_prior() const { return state_.log_joint_prior(); }

 private:
  FicState state_;
};

struct FicSweepFactory {
  std::shared_ptr<const InducingSet> inducing;

  using State = FicSweepState;
  using GrowState = FicGrowState;

  State make_reference_state(const Eigen::Ref<const Mat>& reference,
                             const Mat& inputs) const {
    const auto& prior = inducing->prior();
    const Index T = reference.rows() - 1;
    const Index n_x = prior.state_dim();
    Mat pts(T, prior.gp_input_dim());
    Mat tg(T, n_x);
    for (Index t = 0; t < T; ++t) {
      pts.row(t) = detail::make_gp_input(reference.row(t).transpose(), inputs, t).transpose();
      tg.row(t) = reference.row(t + 1);
    }
    FicState full = FicState::build(inducing, pts, tg);
    FicState prefix(inducing, T);
    return State(std::move(full), std::move(prefix), &inputs, n_x);
  }
  GrowState make_grow_state(Index capacity) const {
    return GrowState(FicState(inducing, capacity));
  }
};

// ---- Per-particle sweep state, fixed parametric transition ----
//
// Markovian special case: the transition is the mean function with process
// noise. The reference-suffix density reduces to the single next-step term
// (the remainder is common across particles and cancels on normalization).
class ParametricSweepState {
 public:
  ParametricSweepState(const MeanFunction* mean, const Vec* q, const Mat* inputs)
      : mean_(mean), q_(q), inputs_(inputs) {}

  void set_initial(const Eigen::Ref<const Vec>& x0) { x_prev_ = x0; }
  PredictiveMoments predict_step(Index t) const {
    PredictiveMoments pm;
    pm.mu = mean_->eval(x_prev_, inputs_->row(t - 1).transpose());
    pm.var = *q_;
    return pm;
  }
  double suffix_logdens(Index t, const Eigen::Ref<const Vec>& ref_next) const {
    const PredictiveMoments pm = predict_step(t);
    double lp = 0.0;
    for (Index d = 0; d < ref_next.size(); ++d)
      lp += gaussian_logpdf(ref_next[d], pm.mu[d], pm.var[d]);
    return lp;
  }
  void apply_transition(Index t, const Eigen::Ref<const Vec>& x_t) {
    const PredictiveMoments pm = predict_step(t);
    for (Index d = 0; d < x_t.size(); ++d)
      cum_log_prior_ += gaussian_logpdf(x_t[d], pm.mu[d], pm.var[d]);
    x_prev_ = x_t;
  }
  void apply_reference_transition(Index t, const Eigen::Ref<const Vec>& x_t) {
    apply_transition(t, x_t);
  }
  double own_path_log_prior() const { return cum_log_prior_; }

 private:
  const MeanFunction* mean_;
  const Vec* q_;
  const Mat* inputs_;
  Vec x_prev_;
  double cum_log_prior_ = 0.0;
};

class ParametricGrowState {
 public:
  ParametricGrowState(const MeanFunction* mean, const Vec* q) : mean_(mean), q_(q) {}
  PredictiveMoments predict(const Eigen::Ref<const Vec>& z) const {
    const Index n_x = q_->size();
    PredictiveMoments pm;
    pm.mu = mean_->eval(z.head(n_x), z.tail(z.size() - n_x));
    pm.var = *q_;
    return pm;
  }
  void absorb(const Eigen::Ref<const Vec>& z, const Eigen::Ref<const Vec>& x) {
    const PredictiveMoments pm = predict(z);
    for (Index d = 0; d < x.size(); ++d)
      cum_log_prior_ += gaussian_logpdf(x[d], pm.mu[d], pm.var[d]);
  }
  double own_path_log_prior() const { return cum_log_prior_; }

 private:
  const MeanFunction* mean_;
  const Vec* q_;
  double cum_log_prior_ = 0.0;
};

struct ParametricSweepFactory {
  const MeanFunction* mean;
  const Vec* q;

  using State = ParametricSweepState;
  using GrowState = ParametricGrowState;

  State make_reference_state(const Eigen::Ref<const Mat>& reference,
                             const Mat& inputs) const {
    State s(mean, q, &inputs);
    s.set_initial(reference.row(0).transpose());
    return s;
  }
  GrowState make_grow_state(Index) const { return GrowState(mean, q); }
};

// ---- Conditional particle filter with ancestor sampling ----
//
// One Markov-kernel application targeting the smoothing distribution under
// the factory's trajectory prior, conditioned on `reference`. Particle N is
// pinned to the reference; its ancestry is resampled from the suffix-density
// weights. Deterministic given the rng key.
template <class Factory>
SweepResult cpf_as_sweep(const Factory& factory, const MeasurementModel& meas,
                         const InitialState& init, const Dataset& data,
                         const Eigen::Ref<const Mat>& reference, Index n_particles,
                         Rng& rng) {
  using State = typename Factory::State;
  const Index T = data.horizon();
  const Index n_x = init.mean.size();
  const Index N = n_particles;
  if (N < 2) throw std::invalid_argument("cpf_as_sweep: need at least 2 particles");
  if (reference.rows() != T + 1 || reference.cols() != n_x)
    throw std::invalid_argument("cpf_as_sweep: reference shape mismatch");

  ParticleSystem sys;
  sys.n_particles = N;
  sys.horizon = T;
  sys.reference = reference;
  sys.ancestors = Eigen::MatrixXi(T + 1, N);
  sys.step_states.assign(T + 1, Mat(N, n_x));

  const State ref_state = factory.make_reference_state(reference, data.inputs);

  std::vector<State> states;
  states.reserve(N);
  std::vector<Mat> traj(N, Mat(T + 1, n_x));

  for (Index i = 0; i < N; ++i) {
    states.push_back(ref_state);
    Rng ps = rng.substream(0, i);
    Vec x0(n_x);
    if (i == N - 1) {
      x0 = reference.row(0).transpose();
    } else {
      for (Index d = 0; d < n_x; ++d)
        x0[d] = init.mean[d] + std::sqrt(init.var[d]) * ps.normal();
      states[i].set_initial(x0);
    }
    traj[i].row(0) = x0.transpose();
    sys.ancestors(0, i) = static_cast<int>(i);
    sys.step_states[0].row(i) = x0.transpose();
  }

  Vec logw(N);
  for (Index i = 0; i < N; ++i)
    logw[i] = meas.loglik(data.obs.row(0).transpose(), traj[i].row(0).transpose());
  Vec weights = normalized_weights_from_log(logw, "reweight at t=0");

  std::vector<State> next_states;
  std::vector<Mat> next_traj(N);
  for (Index t = 1; t <= T; ++t) {
    std::vector<Rng> streams;
    streams.reserve(N);
    for (Index i = 0; i < N; ++i) streams.push_back(rng.substream(t, i));

    VecI anc(N);
    for (Index i = 0; i + 1 < N; ++i) anc[i] = static_cast<int>(streams[i].categorical(weights));

    Vec suffix(N);
    const Vec ref_next = reference.row(t).transpose();
    for (Index i = 0; i < N; ++i) suffix[i] = states[i].suffix_logdens(t, ref_next);
    const AncestorDraw ad =
        ancestor_sample(weights.array().log(), suffix, streams[N - 1]);
    anc[N - 1] = static_cast<int>(ad.index);

    VecI remaining = VecI::Zero(N);
    for (Index i = 0; i < N; ++i) remaining[anc[i]] += 1;

    next_states.clear();
    next_states.reserve(N);
    for (Index i = 0; i < N; ++i) {
      const Index a = anc[i];
      remaining[a] -= 1;
      if (remaining[a] == 0)
        next_states.push_back(std::move(states[a]));
      else
        next_states.push_back(states[a]);
      next_traj[i] = traj[a];

      Vec x_t(n_x);
      if (i == N - 1) {
        x_t = ref_next;
        next_states[i].apply_reference_transition(t, x_t);
      } else {
        const PredictiveMoments pm = next_states[i].predict_step(t);
        x_t = sample_gaussian(pm, streams[i]);
        next_states[i].apply_transition(t, x_t);
      }
      next_traj[i].row(t) = x_t.transpose();
      sys.step_states[t].row(i) = x_t.transpose();
    }
    sys.ancestors.row(t) = anc.transpose();
    states.swap(next_states);
    traj.swap(next_traj);

    for (Index i = 0; i < N; ++i)
      logw[i] = meas.loglik(data.obs.row(t).transpose(), traj[i].row(t).transpose());
    weights = normalized_weights_from_log(logw, "reweight at t=" + std::to_string(t));
  }

  sys.trajectories = traj;
  sys.weights = weights;
  sys.log_weights = logw;

  Rng fs = rng.substream(T + 1, 0);
  const Index k = fs.categorical(weights);

  SweepResult out;
  out.sampled_trajectory = traj[k];
  out.sampled_log_prior = states[k].own_path_log_prior();
  out.sampled_index = k;
  out.system = std::move(sys);
  return out;
}

// Standard (unconditioned) particle filter with the one-step predictive as
// proposal; used to initialize the outer sampler. N >= 1.
template <class Factory>
SweepResult bootstrap_pf(const Factory& factory, const MeasurementModel& meas,
                         const InitialState& init, const Dataset& data,
                         Index n_particles, Rng& rng) {
  using GrowState = typename Factory::GrowState;
  const Index T = data.horizon();
  const Index n_x = init.mean.size();
  const Index N = n_particles;
  if (N < 1) throw std::invalid_argument("bootstrap_pf: need at least 1 particle");

  ParticleSystem sys;
  sys.n_particles = N;
  sys.horizon = T;
  sys.ancestors = Eigen::MatrixXi(T + 1, N);
  sys.step_states.assign(T + 1, Mat(N, n_x));

  std::vector<GrowState> states;
  states.reserve(N);
  std::vector<Mat> traj(N, Mat(T + 1, n_x));
  for (Index i = 0; i < N; ++i) {
    states.push_back(factory.make_grow_state(T));
    Rng ps = rng.substream(0, i);
    Vec x0(n_x);
    for (Index d = 0; d < n_x; ++d)
      x0[d] = init.mean[d] + std::sqrt(init.var[d]) * ps.normal();
    traj[i].row(0) = x0.transpose();
    sys.ancestors(0, i) = static_cast<int>(i);
    sys.step_states[0].row(i) = x0.transpose();
  }

  Vec logw(N);
  for (Index i = 0; i < N; ++i)
    logw[i] = meas.loglik(data.obs.row(0).transpose(), traj[i].row(0).transpose());
  Vec weights = normalized_weights_from_log(logw, "reweight at t=0");

  std::vector<GrowState> next_states;
  std::vector<Mat> next_traj(N);
  for (Index t = 1; t <= T; ++t) {
    std::vector<Rng> streams;
    streams.reserve(N);
    for (Index i = 0; i < N; ++i) streams.push_back(rng.substream(t, i));

    VecI anc(N);
    for (Index i = 0; i < N; ++i) anc[i] = static_cast<int>(streams[i].categorical(weights));

    VecI remaining = VecI::Zero(N);
    for (Index i = 0; i < N; ++i) remaining[anc[i]] += 1;

    next_states.clear();
    next_states.reserve(N);
    for (Index i = 0; i < N; ++i) {
      const Index a = anc[i];
      remaining[a] -= 1;
      if (remaining[a] == 0)
        next_states.push_back(std::move(states[a]));
      else
        next_states.push_back(states[a]);
      next_traj[i] = traj[a];

      const Vec z = detail::make_gp_input(next_traj[i].row(t - 1).transpose(),
                                          data.inputs, t - 1);
      const PredictiveMoments pm = next_states[i].predict(z);
      const Vec x_t = sample_gaussian(pm, streams[i]);
      next_states[i].absorb(z, x_t);
      next_traj[i].row(t) = x_t.transpose();
      sys.step_states[t].row(i) = x_t.transpose();
    }
    sys.ancestors.row(t) = anc.transpose();
    states.swap(next_states);
    traj.swap(next_traj);

    for (Index i = 0; i < N; ++i)
      logw[i] = meas.loglik(data.obs.row(t).transpose(), traj[i].row(t).transpose());
    weights = normalized_weights_from_log(logw, "reweight at t=" + std::to_string(t));
  }

  sys.trajectories = traj;
  sys.weights = weights;
  sys.log_weights = logw;

  Rng fs = rng.substream(T + 1, 0);
  const Index k = fs.categorical(weights);

  SweepResult out;
  out.sampled_trajectory = traj[k];
  out.sampled_log_prior = states[k].own_path_log_prior();
  out.sampled_index = k;
  out.system = std::move(sys);
  return out;
}

}  // namespace gpssm
