#include "gpssm/predict.hpp"

#include <iostream>
#include <numeric>
#include <stdexcept>

namespace gpssm {

Vec MixturePredictive::mean() const { return means.colwise().mean().transpose(); }

Vec MixturePredictive::variance() const {
  const Vec m = mean();
  const Vec within = vars.colwise().mean().transpose();
  const Vec spread =
      (means.rowwise() - m.transpose()).colwise().squaredNorm().transpose() /
      double(components());
  return within + spread;
}

double MixturePredictive::logpdf(const Eigen::Ref<const Vec>& f) const {
  Vec comp(components());
  for (Index l = 0; l < components(); ++l) {
    double lp = 0.0;
    for (Index d = 0; d < f.size(); ++d)
      lp += gaussian_logpdf(f[d], means(l, d), vars(l, d));
    comp[l] = lp;
  }
  return logsumexp(comp) - std::log(double(components()));
}

MixturePredictor::MixturePredictor(const std::vector<ChainSample>& chain, Index burn_in,
                                   const GpSsmModel& model, const Dataset& train,
                                   bool add_process_noise)
    : add_q_(add_process_noise) {
  const Index T = train.horizon();
  const Index n_x = model.state_dim;
  const Index n_u = model.input_dim;
  for (const ChainSample& s : chain) {
    if (s.iteration <= burn_in) continue;
    SampleFit fit{Mat(), {}, {}, s.theta.cov(), model.mean_fn, s.theta.q_diag()};
    fit.pts.resize(T, n_x + n_u);
    fit.pts.leftCols(n_x) = s.trajectory.topRows(T);
    fit.pts.rightCols(n_u) = train.inputs.topRows(T);
    bool ok = true;
    for (Index d = 0; d < n_x; ++d) {
      Mat k = fit.cov.gram(d, fit.pts);
      k.diagonal().array() += fit.q_diag[d] + fit.cov.jitter(d);
      Eigen::LLT<Mat> llt(k);
      if (llt.info() != Eigen::Success) {
        std::cerr << "gpssm: predictive component skipped, factorization failed at"
                     " iteration " << s.iteration << "\n";
        ok = false;
        break;
      }
      Vec resid(T);
      for (Index j = 0; j < T; ++j)
        resid[j] = s.trajectory(j + 1, d) -
                   fit.mean.eval(fit.pts.row(j).head(n_x).transpose(),
                                 fit.pts.row(j).tail(n_u).transpose())[d];
      fit.chol.push_back(llt.matrixL());
      fit.alpha.push_back(llt.solve(resid));
    }
    if (ok)
      samples_.push_back(std::move(fit));
    else
      ++skipped_;
  }
  if (samples_.empty())
    throw std::invalid_argument("MixturePredictor: no usable post-burn-in samples");
}

MixturePredictive MixturePredictor::at(const Eigen::Ref<const Vec>& x_star,
                                       const Eigen::Ref<const Vec>& u_star) const {
  const Index L = components();
  const Index n_x = samples_.front().q_diag.size();
  MixturePredictive out;
  out.means.resize(L, n_x);
  out.vars.resize(L, n_x);
  Vec z(x_star.size() + u_star.size());
  z << x_star, u_star;
  for (Index l = 0; l < L; ++l) {
    const SampleFit& fit = samples_[l];
    const Vec m = fit.mean.eval(x_star, u_star);
    for (Index d = 0; d < n_x; ++d) {
      const Vec kv = fit.cov.column(d, fit.pts, z);
      const Vec w = fit.chol[d].triangularView<Eigen::Lower>().solve(kv);
      out.means(l, d) = m[d] + kv.dot(fit.alpha[d]);
      double var = fit.cov(d, z, z) - w.squaredNorm();
      var = std::max(var, 0.0);
      if (add_q_) var += fit.q_diag[d];
      out.vars(l, d) = var;
    }
  }
  return out;
}

Mat MixturePredictor::component_means(const Eigen::Ref<const Vec>& x_star,
                                      const Eigen::Ref<const Vec>& u_star) const {
  const Index L = components();
  const Index n_x = samples_.front().q_diag.size();
  Mat means(L, n_x);
  Vec z(x_star.size() + u_star.size());
  z << x_star, u_star;
  for (Index l = 0; l < L; ++l) {
    const SampleFit& fit = samples_[l];
    const Vec m = fit.mean.eval(x_star, u_star);
    for (Index d = 0; d < n_x; ++d) {
      const Vec kv = fit.cov.column(d, fit.pts, z);
      means(l, d) = m[d] + kv.dot(fit.alpha[d]);
    }
  }
  return means;
}

MixturePredictive predictive_mixture(const std::vector<ChainSample>& chain,
                                     Index burn_in, const GpSsmModel& model,
                                     const Dataset& train,
                                     const Eigen::Ref<const Vec>& x_star,
                                     const Eigen::Ref<const Vec>& u_star) {
  return MixturePredictor(chain, burn_in, model, train).at(x_star, u_star);
}

std::vector<ChainSample> thin_chain(const std::vector<ChainSample>& chain, Index keep,
                                    std::uint64_t seed) {
  const Index L = static_cast<Index>(chain.size());
  if (keep < 1) throw std::invalid_argument("thin_chain: keep must be >= 1");
  if (keep >= L) return chain;
  std::vector<Index> idx(L);
  std::iota(idx.begin(), idx.end(), Index(0));
  Rng rng(seed);
  for (Index i = 0; i < keep; ++i) {
    const Index j = i + static_cast<Index>(rng.uniform() * double(L - i));
    std::swap(idx[i], idx[std::min(j, L - 1)]);
  }
  std::sort(idx.begin(), idx.begin() + keep);
  std::vector<ChainSample> out;
  out.reserve(keep);
  for (Index i = 0; i < keep; ++i) out.push_back(chain[idx[i]]);
  return out;
}

Mat sample_latent_f(const ChainSample& sample, const GpSsmModel& model,
                    const Dataset& train, Rng& rng) {
  const Index T = train.horizon();
  const Index n_x = model.state_dim;
  const Index n_u = model.input_dim;
  const CovFunction cov = sample.theta.cov();
  const Vec q = sample.theta.q_diag();

  Mat pts(T, n_x + n_u);
  pts.leftCols(n_x) = sample.trajectory.topRows(T);
  pts.rightCols(n_u) = train.inputs.topRows(T);

  Mat f(T, n_x);
  for (Index d = 0; d < n_x; ++d) {
    Mat kxx = cov.gram(d, pts);
    Mat ktilde = kxx;
    ktilde.diagonal().array() += q[d] + cov.jitter(d);
    Eigen::LLT<Mat> llt(ktilde);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("sample_latent_f: factorization failed");
    Vec resid(T);
    for (Index j = 0; j < T; ++j)
      resid[j] = sample.trajectory(j + 1, d) -
                 model.mean_fn.eval(pts.row(j).head(n_x).transpose(),
                                    pts.row(j).tail(n_u).transpose())[d];
    Vec mean_post(T);
    for (Index j = 0; j < T; ++j)
      mean_post[j] = model.mean_fn.eval(pts.row(j).head(n_x).transpose(),
                                        pts.row(j).tail(n_u).transpose())[d];
    mean_post += kxx * llt.solve(resid);
    Mat cov_post = kxx - kxx * llt.solve(kxx);
    cov_post.diagonal().array() += cov.jitter(d) + 1e-12 * cov.signal_variance(d);
    Eigen::LLT<Mat> post_llt(cov_post);
    if (post_llt.info() != Eigen::Success)
      throw std::runtime_error("sample_latent_f: posterior factorization failed");
    f.col(d) = mean_post + Mat(post_llt.matrixL()) * rng.normal_vec(T);
  }
  return f;
}

double rmse_prediction(const std::vector<ChainSample>& chain, Index burn_in,
                       const GpSsmModel& model, const Dataset& train,
                       const Dataset& test) {
  if (!test.has_states() || !test.has_latent())
    throw std::invalid_argument("rmse_prediction: test set needs states and latent values");
  const MixturePredictor pred(chain, burn_in, model, train);
  const Index n = test.latent_f.rows();
  double se = 0.0;
  Index count = 0;
  for (Index t = 0; t < n; ++t) {
    const Mat means = pred.component_means(test.states.row(t).transpose(),
                                           test.inputs.row(t).transpose());
    const Vec mix_mean = means.colwise().mean().transpose();
    se += (mix_mean - test.latent_f.row(t).transpose()).squaredNorm();
    count += mix_mean.size();
  }
  return std::sqrt(se / double(count));
}

double rmse_smoothing(const std::vector<ChainSample>& chain, Index burn_in,
                      const Eigen::Ref<const Mat>& truth_states) {
  Mat mean = Mat::Zero(truth_states.rows(), truth_states.cols());
  Index n = 0;
  for (const ChainSample& s : chain) {
    if (s.iteration <= burn_in) continue;
    mean += s.trajectory;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("rmse_smoothing: no post-burn-in samples");
  mean /= double(n);
  return std::sqrt((mean - truth_states).squaredNorm() / double(truth_states.size()));
}

}  // namespace gpssm
