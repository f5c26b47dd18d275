#include "gpssm/pgas.hpp"

#include <iostream>
#include <limits>
#include <stdexcept>

#include "gpssm/cholesky.hpp"

namespace gpssm {

double slice_sample_once(double x0, const std::function<double(double)>& logf,
                         Rng& rng, const SliceOptions& opts, int* warnings) {
  const double f0 = logf(x0);
  if (!std::isfinite(f0))
    throw std::runtime_error("slice sampler: non-finite target at current point");
  const double log_y = f0 + std::log(rng.uniform_pos());

  const double u = rng.uniform();
  double lo = x0 - opts.width * u;
  double hi = lo + opts.width;
  int expansions = 0;
  while (logf(lo) > log_y) {
    lo -= opts.width;
    if (++expansions > opts.max_step_outs) {
      if (warnings) ++*warnings;
      std::cerr << "gpssm: slice step-out exceeded " << opts.max_step_outs
                << " expansions, keeping current value\n";
      return x0;
    }
  }
  while (logf(hi) > log_y) {
    hi += opts.width;
    if (++expansions > opts.max_step_outs) {
      if (warnings) ++*warnings;
      std::cerr << "gpssm: slice step-out exceeded " << opts.max_step_outs
                << " expansions, keeping current value\n";
      return x0;
    }
  }

  while (true) {
    const double x1 = lo + rng.uniform() * (hi - lo);
    if (logf(x1) > log_y) return x1;
    if (x1 < x0)
      lo = x1;
    else
      hi = x1;
    if (!(hi - lo > 0.0)) return x0;  // interval collapsed to the current point
  }
}

void PgasConfig::validate() const {
  if (n_particles < 2) throw std::invalid_argument("pgas: n_particles must be >= 2");
  if (n_iterations < 1) throw std::invalid_argument("pgas: n_iterations must be >= 1");
  if (burn_in < 0 || burn_in >= n_iterations)
    throw std::invalid_argument("pgas: burn_in must be < n_iterations");
  if (prior == PriorKind::kFic && fic_m < 1)
    throw std::invalid_argument("pgas: fic_m must be >= 1");
  if (slice.width <= 0.0) throw std::invalid_argument("pgas: slice width must be > 0");
  if (warm_start_iterations < 0 || warm_start_particles < 0)
    throw std::invalid_argument("pgas: warm-start settings must be nonnegative");
  if (warm_start_iterations > 0 && warm_start_particles < 2)
    throw std::invalid_argument("pgas: warm_start_particles must be >= 2 when warming up");
}

namespace {

// GP regression view of a trajectory: rows 0..T-1 of (x_t, u_t) as inputs,
// x_{1:T} as targets.
void trajectory_regression(const Eigen::Ref<const Mat>& traj,
                           const Eigen::Ref<const Mat>& inputs, Mat& pts, Mat& tg) {
  const Index T = traj.rows() - 1;
  const Index n_x = traj.cols();
  const Index n_u = inputs.cols();
  pts.resize(T, n_x + n_u);
  tg.resize(T, n_x);
  pts.leftCols(n_x) = traj.topRows(T);
  pts.rightCols(n_u) = inputs.topRows(T);
  tg = traj.bottomRows(T);
}

// Log-density of one state dimension's targets under the dense marginalized
// prior, built from scratch for a candidate hyperparameter setting.
double dense_dim_logdens(const CovFunction& cov, const MeanFunction& mean,
                         double q_d, Index d, const Eigen::Ref<const Mat>& pts,
                         const Eigen::Ref<const Mat>& tg) {
  const Index n = pts.rows();
  const Index n_x = tg.cols();
  Mat k = cov.gram(d, pts);
  k.diagonal().array() += q_d + cov.jitter(d);
  Eigen::LLT<Mat> llt(k);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  Vec resid(n);
  for (Index j = 0; j < n; ++j)
    resid[j] = tg(j, d) - mean.eval(pts.row(j).head(n_x).transpose(),
                                    pts.row(j).tail(pts.cols() - n_x).transpose())[d];
  const Vec c = llt.matrixL().solve(resid);
  const double logdet = llt.matrixLLT().diagonal().array().log().sum() * 2.0;
  return -0.5 * (double(n) * kLog2Pi + logdet + c.squaredNorm());
}

double fic_dim_logdens(const CovFunction& cov, const MeanFunction& mean, double q_d,
                       Index d, const Eigen::Ref<const Mat>& pts,
                       const Eigen::Ref<const Mat>& tg, const Mat& u_inputs) {
  const Index n = pts.rows();
  const Index n_x = tg.cols();
  const Index m = u_inputs.rows();
  Mat kuu = cov.gram(d, u_inputs);
  kuu.diagonal().array() += cov.jitter(d);
  Eigen::LLT<Mat> llt(kuu);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Mat luu = llt.matrixL();
  const double logdet_kuu = 2.0 * luu.diagonal().array().log().sum();

  Mat r = luu;  // running factor of K_UU + sum a a^T / lambda
  Vec b = Vec::Zero(m);
  double sum_log_lambda = 0.0, sum_r2 = 0.0;
  for (Index j = 0; j < n; ++j) {
    const Vec z = pts.row(j).transpose();
    const Vec a = cov.column(d, u_inputs, z);
    const Vec w = luu.triangularView<Eigen::Lower>().solve(a);
    double lambda = cov(d, z, z) - w.squaredNorm();
    lambda = std::max(lambda, 0.0) + q_d;
    const double resid =
        tg(j, d) - mean.eval(z.head(n_x), z.tail(z.size() - n_x))[d];
    sum_log_lambda += std::log(lambda);
    sum_r2 += resid * resid / lambda;
    b.noalias() += a * (resid / lambda);
    Vec x = a / std::sqrt(lambda);
    chol_rank1_update<double>(r, x);
  }
  const double logdet_r = 2.0 * r.diagonal().array().log().sum();
  const Vec zb = r.triangularView<Eigen::Lower>().solve(b);
  return -0.5 * (double(n) * kLog2Pi + sum_log_lambda + logdet_r - logdet_kuu +
                 sum_r2 - zb.squaredNorm());
}

}  // namespace

HyperVector sample_theta_x(const GpSsmModel& model, const Eigen::Ref<const Mat>& traj,
                           const Eigen::Ref<const Mat>& inputs, HyperVector theta,
                           const SliceOptions& opts, Rng& rng,
                           PgasConfig::PriorKind kind, const Mat* inducing_inputs,
                           int* warnings) {
  Mat pts, tg;
  trajectory_regression(traj, inputs, pts, tg);
  if (kind == PgasConfig::PriorKind::kFic && inducing_inputs == nullptr)
    throw std::invalid_argument("sample_theta_x: sparse prior needs inducing inputs");

  const Index r_coord = theta.obs_noise_index();
  for (Index coord = 0; coord < theta.size(); ++coord) {
    if (coord == r_coord) continue;
    const LogNormalPrior& prior = model.hyper_priors.coords[coord];
    if (prior.fixed()) continue;
    const Index d = theta.dim_of(coord);
    auto logf = [&](double v) {
      HyperVector cand = theta;
      cand[coord] = v;
      const CovFunction cov = cand.cov();
      const double q_d = cand.q_diag()[d];
      const double ld =
          kind == PgasConfig::PriorKind::kDense
              ? dense_dim_logdens(cov, model.mean_fn, q_d, d, pts, tg)
              : fic_dim_logdens(cov, model.mean_fn, q_d, d, pts, tg, *inducing_inputs);
      return ld + prior.logpdf(v);
    };
    theta[coord] = slice_sample_once(theta[coord], logf, rng, opts, warnings);
  }
  return theta;
}

HyperVector sample_theta_y(const GpSsmModel& model, const Eigen::Ref<const Mat>& traj,
                           const Eigen::Ref<const Mat>& obs, HyperVector theta,
                           const SliceOptions& opts, Rng& rng, int* warnings) {
  const Index coord = theta.obs_noise_index();
  const LogNormalPrior& prior = model.hyper_priors.coords[coord];
  if (prior.fixed()) return theta;
  auto logf = [&](double v) {
    const double r = std::exp(v);
    double lp = prior.logpdf(v);
    for (Index t = 0; t < obs.rows(); ++t)
      lp += model.measurement.loglik(obs.row(t).transpose(), traj.row(t).transpose(), r);
    return lp;
  };
  theta[coord] = slice_sample_once(theta[coord], logf, rng, opts, warnings);
  return theta;
}

double chain_log_joint(const GpSsmModel& model, const Dataset& data,
                       const Eigen::Ref<const Mat>& traj, double traj_log_prior) {
  double lp = traj_log_prior + model.initial_state.logpdf(traj.row(0).transpose());
  for (Index t = 0; t <= data.horizon(); ++t)
    lp += model.measurement.loglik(data.obs.row(t).transpose(), traj.row(t).transpose());
  return lp;
}

std::vector<ChainSample> run_pgas(const GpSsmModel& model, const Dataset& data,
                                  const PgasConfig& config,
                                  const std::function<void(const ChainSample&)>& on_sample,
                                  const std::optional<ChainSample>& resume_from) {
  model.validate();
  data.validate();
  config.validate();
  if (data.horizon() < 1) throw std::invalid_argument("run_pgas: dataset too short");

  Rng root(config.seed);
  GpSsmModel work = model;

  HyperVector theta = model.hyper();
  Mat x;
  Index start = 0;
  if (resume_from) {
    theta = resume_from->theta;
    x = resume_from->trajectory;
    start = resume_from->iteration;
  } else {
    // Arbitrary start: prior medians plus one unconditioned filter pass
    // (always under the dense prior; the choice only affects burn-in).
    for (Index i = 0; i < theta.size(); ++i)
      theta[i] = model.hyper_priors.coords[i].median_log();
    work.set_hyper(theta);
    Rng init_rng = root.substream(0, 900001);
    auto prior = std::make_shared<const TransitionPrior>(
        TransitionPrior{work.cov_fn, work.mean_fn, work.process_noise});
    DenseSweepFactory fac{prior};
    const Index n_boot = std::max(config.n_particles, config.warm_start_particles);
    x = bootstrap_pf(fac, work.measurement, work.initial_state, data, n_boot, init_rng)
            .sampled_trajectory;
  }

  std::vector<ChainSample> chain;
  chain.reserve(static_cast<std::size_t>(config.n_iterations - start));
  int warnings = 0;

  // One Gibbs iteration: hyperparameter scan, then a conditioned sweep.
  // Substream phases keep warm-start draws disjoint from the chain proper.
  const auto gibbs_iteration = [&](std::uint64_t key, std::uint64_t phase,
                                   Index n_particles) -> SweepResult {
    // Under the sparse prior the inducing inputs are re-selected once per
    // iteration from the current reference trajectory and shared between the
    // hyperparameter targets and the sweep.
    Mat u_inputs;
    const Mat* u_ptr = nullptr;
    if (config.prior == PgasConfig::PriorKind::kFic) {
      Mat pts, tg;
      trajectory_regression(x, data.inputs, pts, tg);
      u_inputs = select_inducing(pts, std::min<Index>(config.fic_m, pts.rows()),
                                 config.fic_strategy, mix64(config.seed ^ key ^ phase));
      u_ptr = &u_inputs;
    }

    if (config.sample_hyperparameters) {
      Rng rng_x = root.substream(key, phase);
      Rng rng_y = root.substream(key, phase + 1);
      theta = sample_theta_x(model, x, data.inputs, theta, config.slice, rng_x,
                             config.prior, u_ptr, &warnings);
      theta = sample_theta_y(model, x, data.obs, theta, config.slice, rng_y, &warnings);
    }
    work.set_hyper(theta);

    Rng rng_sweep = root.substream(key, phase + 2);
    SweepResult res;
    auto prior = std::make_shared<const TransitionPrior>(
        TransitionPrior{work.cov_fn, work.mean_fn, work.process_noise});
    if (config.prior == PgasConfig::PriorKind::kDense) {
      DenseSweepFactory fac{prior};
      res = cpf_as_sweep(fac, work.measurement, work.initial_state, data, x,
                         n_particles, rng_sweep);
    } else {
      auto ind = std::make_shared<const InducingSet>(prior, u_inputs);
      FicSweepFactory fac{ind};
      res = cpf_as_sweep(fac, work.measurement, work.initial_state, data, x,
                         n_particles, rng_sweep);
    }
    x = res.sampled_trajectory;
    return res;
  };

  if (!resume_from && config.warm_start_iterations > 0) {
    for (Index w = 0; w < config.warm_start_iterations; ++w) {
      try {
        gibbs_iteration(static_cast<std::uint64_t>(w) + 1, 11,
                        config.warm_start_particles);
      } catch (const std::exception& e) {
        throw std::runtime_error("pgas warm-start iteration " + std::to_string(w + 1) +
                                 " failed: " + e.what());
      }
    }
  }

  for (Index it = start; it < config.n_iterations; ++it) {
    const std::uint64_t key = static_cast<std::uint64_t>(it) + 1;
    SweepResult res;
    try {
      res = gibbs_iteration(key, 1, config.n_particles);
    } catch (const std::exception& e) {
      throw std::runtime_error("pgas iteration " + std::to_string(it + 1) +
                               " failed: " + e.what());
    }

    ChainSample s;
    s.iteration = it + 1;
    s.theta = theta;
    s.trajectory = x;
    s.log_joint = chain_log_joint(work, data, x, res.sampled_log_prior);
    if (!std::isfinite(s.log_joint))
      throw std::runtime_error("pgas iteration " + std::to_string(it + 1) +
                               ": non-finite log joint");
    chain.push_back(s);
    if (on_sample) on_sample(chain.back());
  }
  return chain;
}

ChainDiagnostics chain_diagnostics(const std::vector<ChainSample>& chain, Index max_lag) {
  if (chain.empty()) throw std::invalid_argument("chain_diagnostics: empty chain");
  const Index L = static_cast<Index>(chain.size());
  const Index P = chain.front().theta.size();
  const Index T1 = chain.front().trajectory.rows();

  ChainDiagnostics d;
  d.theta_names = chain.front().theta.names();
  Mat th(L, P);
  for (Index l = 0; l < L; ++l) th.row(l) = chain[l].theta.values().transpose();
  d.theta_mean = th.colwise().mean().transpose();
  d.theta_sd = Vec::Zero(P);
  if (L > 1)
    d.theta_sd = ((th.rowwise() - d.theta_mean.transpose()).colwise().squaredNorm() /
                  double(L - 1))
                     .array()
                     .sqrt()
                     .transpose();

  const Index lags = std::max<Index>(std::min<Index>(max_lag, L - 1), 0);
  d.theta_autocorr = Mat::Zero(lags, P);
  for (Index p = 0; p < P; ++p) {
    const Vec col = th.col(p).array() - d.theta_mean[p];
    const double denom = col.squaredNorm();
    for (Index k = 1; k <= lags; ++k)
      d.theta_autocorr(k - 1, p) =
          denom > 0.0 ? col.head(L - k).dot(col.tail(L - k)) / denom : 0.0;
  }

  d.update_rate = Vec::Zero(T1);
  for (Index l = 1; l < L; ++l)
    for (Index t = 0; t < T1; ++t)
      if ((chain[l].trajectory.row(t) - chain[l - 1].trajectory.row(t))
              .cwiseAbs()
              .maxCoeff() > 0.0)
        d.update_rate[t] += 1.0;
  if (L > 1) d.update_rate /= double(L - 1);

  d.log_joint_trace = Vec(L);
  for (Index l = 0; l < L; ++l) d.log_joint_trace[l] = chain[l].log_joint;
  return d;
}

}  // namespace gpssm
