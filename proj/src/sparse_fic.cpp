#include "gpssm/sparse_fic.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "gpssm/cholesky.hpp"
#include "gpssm/rng.hpp"

namespace gpssm {

InducingStrategy inducing_strategy_from_string(const std::string& s) {
  if (s == "grid") return InducingStrategy::kGrid;
  if (s == "subsample") return InducingStrategy::kSubsample;
  if (s == "kmeans") return InducingStrategy::kKmeans;
  throw std::invalid_argument("inducing strategy must be grid, subsample or kmeans: " + s);
}

std::string to_string(InducingStrategy s) {
  switch (s) {
    case InducingStrategy::kGrid: return "grid";
    case InducingStrategy::kSubsample: return "subsample";
    case InducingStrategy::kKmeans: return "kmeans";
  }
  return "?";
}

namespace {

std::vector<Index> prime_factors(Index m) {
  std::vector<Index> f;
  Index v = m;
  for (Index p = 2; p * p <= v; ++p)
    while (v % p == 0) {
      f.push_back(p);
      v /= p;
    }
  if (v > 1) f.push_back(v);
  std::sort(f.rbegin(), f.rend());
  return f;
}

Mat grid_inducing(const Eigen::Ref<const Mat>& candidates, Index m) {
  const Index dim = candidates.cols();
  Vec lo = candidates.colwise().minCoeff();
  Vec hi = candidates.colwise().maxCoeff();
  Vec range = hi - lo;
  std::vector<Index> counts(dim, 1);
  auto spacing = [&](Index ax) {
    if (range[ax] <= 0.0) return 0.0;
    return counts[ax] > 1 ? range[ax] / double(counts[ax] - 1) : 2.0 * range[ax];
  };
  for (Index f : prime_factors(m)) {
    Index best = 0;
    for (Index ax = 1; ax < dim; ++ax)
      if (spacing(ax) > spacing(best)) best = ax;
    counts[best] *= f;
  }
  Mat out(m, dim);
  for (Index i = 0; i < m; ++i) {
    Index rem = i;
    for (Index ax = 0; ax < dim; ++ax) {
      const Index k = rem % counts[ax];
      rem /= counts[ax];
      out(i, ax) = counts[ax] > 1
                       ? lo[ax] + range[ax] * double(k) / double(counts[ax] - 1)
                       : 0.5 * (lo[ax] + hi[ax]);
    }
  }
  return out;
}

Mat subsample_inducing(const Eigen::Ref<const Mat>& candidates, Index m,
                       std::uint64_t seed) {
  const Index n = candidates.rows();
  if (m > n) throw std::invalid_argument("select_inducing: m exceeds candidate count");
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index(0));
  Rng rng(seed);
  for (Index i = 0; i < m; ++i) {
    const Index j = i + static_cast<Index>(rng.uniform() * double(n - i));
    std::swap(idx[i], idx[std::min(j, n - 1)]);
  }
  std::sort(idx.begin(), idx.begin() + m);
  Mat out(m, candidates.cols());
  for (Index i = 0; i < m; ++i) out.row(i) = candidates.row(idx[i]);
  return out;
}

Mat kmeans_inducing(const Eigen::Ref<const Mat>& candidates, Index m,
                    std::uint64_t seed) {
  const Index n = candidates.rows();
  const Index dim = candidates.cols();
  if (m > n) throw std::invalid_argument("select_inducing: m exceeds candidate count");
  const Mat spread = candidates.rowwise() - candidates.colwise().mean();
  if (spread.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("select_inducing: all candidates identical");
  Rng rng(seed);
  Mat centers(m, dim);
  // distance-weighted seeding
  centers.row(0) = candidates.row(static_cast<Index>(rng.uniform() * double(n)));
  Vec d2 = (candidates.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < m; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total, acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.uniform() * double(n));
    }
    centers.row(c) = candidates.row(pick);
    d2 = d2.cwiseMin((candidates.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  std::vector<Index> assign(n, 0);
  for (int iter = 0; iter < 25; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double bd = (candidates.row(i) - centers.row(0)).squaredNorm();
      for (Index c = 1; c < m; ++c) {
        const double dd = (candidates.row(i) - centers.row(c)).squaredNorm();
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    Mat sums = Mat::Zero(m, dim);
    VecI counts = VecI::Zero(m);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += candidates.row(i);
      counts[assign[i]] += 1;
    }
    for (Index c = 0; c < m; ++c)
      if (counts[c] > 0) centers.row(c) = sums.row(c) / double(counts[c]);
    if (!changed) break;
  }
  return centers;
}

}  // namespace

Mat select_inducing(const Eigen::Ref<const Mat>& candidates, Index m,
                    InducingStrategy strategy, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("select_inducing: m must be >= 1");
  if (candidates.rows() < 1) throw std::invalid_argument("select_inducing: no candidates");
  switch (strategy) {
    case InducingStrategy::kGrid: return grid_inducing(candidates, m);
    case InducingStrategy::kSubsample: return subsample_inducing(candidates, m, seed);
    case InducingStrategy::kKmeans: return kmeans_inducing(candidates, m, seed);
  }
  throw std::logic_error("select_inducing: unknown strategy");
}

InducingSet::InducingSet(std::shared_ptr<const TransitionPrior> prior, Mat inputs)
    : prior_(std::move(prior)), inputs_(std::move(inputs)) {
  if (inputs_.rows() < 1) throw std::invalid_argument("InducingSet: need at least one input");
  if (!inputs_.allFinite()) throw std::invalid_argument("InducingSet: non-finite inputs");
  if (inputs_.cols() != prior_->gp_input_dim())
    throw std::invalid_argument("InducingSet: input dimension mismatch");
  const Index n_x = prior_->state_dim();
  luu_.resize(n_x);
  logdet_ = Vec(n_x);
  for (Index d = 0; d < n_x; ++d) {
    Mat kuu = prior_->cov.gram(d, inputs_);
    kuu.diagonal().array() += prior_->cov.jitter(d);
    Eigen::LLT<Mat> llt(kuu);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("InducingSet: K_UU not positive definite");
    luu_[d] = llt.matrixL();
    logdet_[d] = 2.0 * luu_[d].diagonal().array().log().sum();
  }
}

Vec InducingSet::kvec(Index d, const Eigen::Ref<const Vec>& z) const {
  return prior_->cov.column(d, inputs_, z);
}

Vec fic_cov(const InducingSet& u, const Eigen::Ref<const Vec>& zi,
            const Eigen::Ref<const Vec>& zj, bool same_index) {
  const TransitionPrior& prior = u.prior();
  const Index n_x = prior.state_dim();
  Vec out(n_x);
  for (Index d = 0; d < n_x; ++d) {
    const Vec wi = u.kuu_factor(d).triangularView<Eigen::Lower>().solve(u.kvec(d, zi));
    const Vec wj = u.kuu_factor(d).triangularView<Eigen::Lower>().solve(u.kvec(d, zj));
    const double qff = wi.dot(wj);
    out[d] = same_index ? prior.cov(d, zi, zj) : qff;
  }
  return out;
}

FicState::FicState(std::shared_ptr<const InducingSet> inducing, Index capacity)
    : u_(std::move(inducing)) {
  const TransitionPrior& prior = u_->prior();
  const Index n_x = prior.state_dim();
  const Index m = u_->count();
  points_ = Mat::Zero(capacity, prior.gp_input_dim());
  targets_ = Mat::Zero(capacity, n_x);
  means_ = Mat::Zero(capacity, n_x);
  dims_.resize(n_x);
  for (Index d = 0; d < n_x; ++d) {
    auto& st = dims_[d];
    st.R = u_->kuu_factor(d);
    st.b = Vec::Zero(m);
    st.a_cache = Mat::Zero(m, capacity);
    st.lambda = Vec::Zero(capacity);
    st.resid = Vec::Zero(capacity);
  }
}

FicState FicState::build(std::shared_ptr<const InducingSet> inducing,
                         const Eigen::Ref<const Mat>& points,
                         const Eigen::Ref<const Mat>& targets) {
  FicState f(std::move(inducing), points.rows());
  for (Index j = 0; j < points.rows(); ++j)
    f.extend(points.row(j).transpose(), targets.row(j).transpose());
  return f;
}

void FicState::add_entry(Index d, Index j, const Eigen::Ref<const Vec>& point,
                         double resid) {
  const TransitionPrior& prior = u_->prior();
  auto& st = dims_[d];
  Vec a = u_->kvec(d, point);
  const Vec w = u_->kuu_factor(d).triangularView<Eigen::Lower>().solve(a);
  double lambda = prior.cov(d, point, point) - w.squaredNorm();
  lambda = std::max(lambda, 0.0) + prior.q_diag[d];
  st.a_cache.col(j) = a;
  st.lambda[j] = lambda;
  st.resid[j] = resid;
  st.sum_log_lambda += std::log(lambda);
  st.sum_r2_over_lambda += resid * resid / lambda;
  st.b.noalias() += a * (resid / lambda);
  Vec x = a / std::sqrt(lambda);
  chol_rank1_update<double>(st.R, x);
}

void FicState::remove_entry(Index d, Index j) {
  auto& st = dims_[d];
  const double lambda = st.lambda[j];
  const double resid = st.resid[j];
  st.sum_log_lambda -= std::log(lambda);
  st.sum_r2_over_lambda -= resid * resid / lambda;
  st.b.noalias() -= st.a_cache.col(j) * (resid / lambda);
  Vec x = st.a_cache.col(j) / std::sqrt(lambda);
  if (!chol_rank1_downdate<double>(st.R, x)) {
    std::cerr << "gpssm: sparse-state downdate lost positive definiteness, refactorizing dim "
              << d << "\n";
    st.lambda[j] = 0.0;  // mark removed before rebuild
    rebuild_dim(d);
  }
}

void FicState::rebuild_dim(Index d) {
  auto& st = dims_[d];
  Mat p = u_->kuu_factor(d) * u_->kuu_factor(d).transpose();
  for (Index j = 0; j < size_; ++j) {
    if (st.lambda[j] <= 0.0) continue;
    p.noalias() += st.a_cache.col(j) * st.a_cache.col(j).transpose() / st.lambda[j];
  }
  Eigen::LLT<Mat> llt(p);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("FicState: information matrix not positive definite");
  st.R = llt.matrixL();
  ++refactors_;
}

void FicState::extend(const Eigen::Ref<const Vec>& point,
                      const Eigen::Ref<const Vec>& target) {
  const TransitionPrior& prior = u_->prior();
  if (point.size() != prior.gp_input_dim() || target.size() != prior.state_dim())
    throw std::invalid_argument("FicState: dimension mismatch in extend");
  if (size_ == capacity()) throw std::length_error("FicState: capacity exhausted");
  const Index n = size_;
  const Index n_x = prior.state_dim();
  const Index n_u = point.size() - n_x;
  points_.row(n) = point.transpose();
  targets_.row(n) = target.transpose();
  means_.row(n) = prior.mean.eval(point.head(n_x), point.tail(n_u)).transpose();
  for (Index d = 0; d < n_x; ++d)
    add_entry(d, n, point, target[d] - means_(n, d));
  ++size_;
}

void FicState::set_target(Index j, const Eigen::Ref<const Vec>& target) {
  if (j < 0 || j >= size_) throw std::invalid_argument("FicState: index out of range");
  targets_.row(j) = target.transpose();
  for (Index d = 0; d < u_->prior().state_dim(); ++d) {
    auto& st = dims_[d];
    const double r_new = target[d] - means_(j, d);
    const double r_old = st.resid[j];
    const double lambda = st.lambda[j];
    st.sum_r2_over_lambda += (r_new * r_new - r_old * r_old) / lambda;
    st.b.noalias() += st.a_cache.col(j) * ((r_new - r_old) / lambda);
    st.resid[j] = r_new;
  }
}

void FicState::replace_point(Index j, const Eigen::Ref<const Vec>& point,
                             const Eigen::Ref<const Vec>& target) {
  const TransitionPrior& prior = u_->prior();
  if (j < 0 || j >= size_) throw std::invalid_argument("FicState: index out of range");
  const Index n_x = prior.state_dim();
  const Index n_u = point.size() - n_x;
  for (Index d = 0; d < n_x; ++d) remove_entry(d, j);
  points_.row(j) = point.transpose();
  targets_.row(j) = target.transpose();
  means_.row(j) = prior.mean.eval(point.head(n_x), point.tail(n_u)).transpose();
  for (Index d = 0; d < n_x; ++d)
    add_entry(d, j, point, target[d] - means_(j, d));
}

PredictiveMoments FicState::one_step_predictive(const Eigen::Ref<const Vec>& query) const {
  const TransitionPrior& prior = u_->prior();
  if (query.size() != prior.gp_input_dim())
    throw std::invalid_argument("FicState: query dimension mismatch");
  const Index n_x = prior.state_dim();
  const Index n_u = query.size() - n_x;
  PredictiveMoments out;
  out.mu = prior.mean.eval(query.head(n_x), query.tail(n_u));
  out.var = Vec(n_x);
  for (Index d = 0; d < n_x; ++d) {
    const auto& st = dims_[d];
    const Vec a = u_->kvec(d, query);
    const Vec wu = u_->kuu_factor(d).triangularView<Eigen::Lower>().solve(a);
    const Vec wr = st.R.triangularView<Eigen::Lower>().solve(a);
    const Vec zb = st.R.triangularView<Eigen::Lower>().solve(st.b);
    out.mu[d] += wr.dot(zb);
    double var = prior.cov(d, query, query) + prior.q_diag[d] - wu.squaredNorm() +
                 wr.squaredNorm();
    out.var[d] = std::max(var, 0.0);
  }
  return out;
}

double FicState::log_joint_prior() const {
  double lp = 0.0;
  const Index n = size_;
  for (Index d = 0; d < u_->prior().state_dim(); ++d) {
    const auto& st = dims_[d];
    const double logdet_r = 2.0 * st.R.diagonal().array().log().sum();
    const Vec z = st.R.triangularView<Eigen::Lower>().solve(st.b);
    lp += -0.5 * (double(n) * kLog2Pi + st.sum_log_lambda + logdet_r -
                  u_->logdet_kuu(d) + st.sum_r2_over_lambda - z.squaredNorm());
  }
  return lp;
}

}  // namespace gpssm
