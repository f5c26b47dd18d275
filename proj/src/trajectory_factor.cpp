#include "gpssm/trajectory_factor.hpp"

#include <iostream>
#include <stdexcept>

#include "gpssm/cholesky.hpp"

namespace gpssm {

TrajectoryFactor::TrajectoryFactor(std::shared_ptr<const TransitionPrior> prior,
                                   Index capacity)
    : prior_(std::move(prior)) {
  const Index n_x = prior_->state_dim();
  points_ = Mat::Zero(capacity, prior_->gp_input_dim());
  targets_ = Mat::Zero(capacity, n_x);
  means_ = Mat::Zero(capacity, n_x);
  dims_.resize(n_x);
  for (auto& d : dims_) {
    d.L = Mat::Zero(capacity, capacity);
    d.resid = Vec::Zero(capacity);
    d.c = Vec::Zero(capacity);
  }
}

TrajectoryFactor TrajectoryFactor::build(std::shared_ptr<const TransitionPrior> prior,
                                         const Eigen::Ref<const Mat>& points,
                                         const Eigen::Ref<const Mat>& targets) {
  const Index n = points.rows();
  TrajectoryFactor f(std::move(prior), n);
  f.points_.topRows(n) = points;
  f.targets_.topRows(n) = targets;
  f.size_ = n;
  const Index n_x = f.prior_->state_dim();
  const Index n_u = points.cols() - n_x;
  for (Index j = 0; j < n; ++j)
    f.means_.row(j) = f.prior_->mean
                          .eval(points.row(j).head(n_x).transpose(),
                                points.row(j).tail(n_u).transpose())
                          .transpose();
  for (Index d = 0; d < n_x; ++d) f.rebuild_dim(d);
  f.refactors_ = 0;
  f.solve_from_ = 0;
  for (Index d = 0; d < n_x; ++d) {
    auto& st = f.dims_[d];
    st.resid.head(n) = f.targets_.col(d).head(n) - f.means_.col(d).head(n);
    st.c.head(n) = st.L.topLeftCorner(n, n)
                       .triangularView<Eigen::Lower>()
                       .solve(st.resid.head(n));
  }
  f.solve_from_ = n;
  return f;
}

double TrajectoryFactor::noisy_diag(Index d, const Eigen::Ref<const Vec>& z) const {
  return prior_->cov(d, z, z) + prior_->q_diag[d] + prior_->cov.jitter(d);
}

void TrajectoryFactor::rebuild_dim(Index d) {
  const Index n = size_;
  auto& st = dims_[d];
  Mat k = prior_->cov.gram(d, points_.topRows(n));
  k.diagonal().array() += prior_->q_diag[d] + prior_->cov.jitter(d);
  Eigen::LLT<Mat> llt(k);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("TrajectoryFactor: kernel matrix not positive definite");
  st.L.topLeftCorner(n, n) = llt.matrixL();
  ++refactors_;
  solve_from_ = 0;
}

void TrajectoryFactor::refresh_solve() const {
  const Index n = size_;
  if (solve_from_ >= n) return;
  const Index f = solve_from_;
  for (Index d = 0; d < prior_->state_dim(); ++d) {
    auto& st = dims_[d];
    Vec tail = st.resid.segment(f, n - f);
    for (Index k = 0; k < f; ++k)
      tail -= st.c[k] * st.L.col(k).segment(f, n - f);
    for (Index k = 0; k < n - f; ++k) {
      tail[k] /= st.L(f + k, f + k);
      const Index m = n - f - k - 1;
      if (m > 0) tail.tail(m) -= tail[k] * st.L.col(f + k).segment(f + k + 1, m);
    }
    st.c.segment(f, n - f) = tail;
  }
  solve_from_ = n;
}

void TrajectoryFactor::extend(const Eigen::Ref<const Vec>& point,
                              const Eigen::Ref<const Vec>& target) {
  if (point.size() != prior_->gp_input_dim() || target.size() != prior_->state_dim())
    throw std::invalid_argument("TrajectoryFactor: dimension mismatch in extend");
  if (size_ == capacity())
    throw std::length_error("TrajectoryFactor: capacity exhausted");
  refresh_solve();
  const Index n = size_;
  const Index n_x = prior_->state_dim();
  const Index n_u = point.size() - n_x;
  points_.row(n) = point.transpose();
  targets_.row(n) = target.transpose();
  means_.row(n) =
      prior_->mean.eval(point.head(n_x), point.tail(n_u)).transpose();
  for (Index d = 0; d < n_x; ++d) {
    auto& st = dims_[d];
    if (n > 0) {
      Vec kv = prior_->cov.column(d, points_.topRows(n), point);
      st.L.row(n).head(n) = st.L.topLeftCorner(n, n)
                                .triangularView<Eigen::Lower>()
                                .solve(kv)
                                .transpose();
    }
    const double s = noisy_diag(d, point) - st.L.row(n).head(n).squaredNorm();
    if (!(s > 0.0))
      throw std::runtime_error("TrajectoryFactor: nonpositive pivot in extend");
    st.L(n, n) = std::sqrt(s);
    st.resid[n] = target[d] - means_(n, d);
    st.c[n] = (st.resid[n] - st.L.row(n).head(n).dot(st.c.head(n))) / st.L(n, n);
  }
  ++size_;
  solve_from_ = size_;
}

void TrajectoryFactor::set_target(Index j, const Eigen::Ref<const Vec>& target) {
  if (j < 0 || j >= size_) throw std::invalid_argument("TrajectoryFactor: index out of range");
  targets_.row(j) = target.transpose();
  for (Index d = 0; d < prior_->state_dim(); ++d)
    dims_[d].resid[j] = target[d] - means_(j, d);
  solve_from_ = std::min(solve_from_, j);
}

void TrajectoryFactor::replace_point(Index j, const Eigen::Ref<const Vec>& point,
                                     const Eigen::Ref<const Vec>& target) {
  if (j < 0 || j >= size_) throw std::invalid_argument("TrajectoryFactor: index out of range");
  if (point.size() != prior_->gp_input_dim() || target.size() != prior_->state_dim())
    throw std::invalid_argument("TrajectoryFactor: dimension mismatch in replace_point");
  const Index n = size_;
  const Index n_x = prior_->state_dim();
  const Index n_u = point.size() - n_x;
  points_.row(j) = point.transpose();
  means_.row(j) =
      prior_->mean.eval(point.head(n_x), point.tail(n_u)).transpose();
  const Index m = n - j - 1;
  for (Index d = 0; d < n_x; ++d) {
    auto& st = dims_[d];
    Vec v = prior_->cov.column(d, points_.topRows(n), point);
    v[j] = noisy_diag(d, point);
    // Rows above j are untouched; re-solve row j, then patch the trailing
    // block with one rank-one update and one downdate.
    Vec w(j);
    if (j > 0) {
      w = st.L.topLeftCorner(j, j).triangularView<Eigen::Lower>().solve(v.head(j));
      st.L.row(j).head(j) = w.transpose();
    }
    const double s = v[j] - w.squaredNorm();
    if (!(s > 0.0)) {
      std::cerr << "gpssm: replace_point pivot loss, refactorizing dim " << d << "\n";
      rebuild_dim(d);
      continue;
    }
    st.L(j, j) = std::sqrt(s);
    if (m > 0) {
      Vec u_old = st.L.col(j).segment(j + 1, m);
      Vec u_new = v.segment(j + 1, m);
      if (j > 0) u_new.noalias() -= st.L.block(j + 1, 0, m, j) * w;
      u_new /= st.L(j, j);
      st.L.col(j).segment(j + 1, m) = u_new;
      auto trailing = st.L.block(j + 1, j + 1, m, m);
      chol_rank1_update<double>(trailing, u_old);
      if (!chol_rank1_downdate<double>(trailing, u_new)) {
        std::cerr << "gpssm: downdate lost positive definiteness, refactorizing dim "
                  << d << "\n";
        rebuild_dim(d);
        continue;
      }
    }
  }
  set_target(j, target);
}

PredictiveMoments TrajectoryFactor::one_step_predictive(
    const Eigen::Ref<const Vec>& query) const {
  if (query.size() != prior_->gp_input_dim())
    throw std::invalid_argument("TrajectoryFactor: query dimension mismatch");
  refresh_solve();
  const Index n = size_;
  const Index n_x = prior_->state_dim();
  const Index n_u = query.size() - n_x;
  PredictiveMoments out;
  out.mu = prior_->mean.eval(query.head(n_x), query.tail(n_u));
  out.var = Vec(n_x);
  for (Index d = 0; d < n_x; ++d) {
    const auto& st = dims_[d];
    double mu = out.mu[d];
    double var = prior_->cov(d, query, query) + prior_->q_diag[d];
    if (n > 0) {
      const Vec kv = prior_->cov.column(d, points_.topRows(n), query);
      const Vec w =
          st.L.topLeftCorner(n, n).triangularView<Eigen::Lower>().solve(kv);
      mu += w.dot(st.c.head(n));
      var -= w.squaredNorm();
    }
    out.mu[d] = mu;
    out.var[d] = std::max(var, 0.0);
  }
  return out;
}

PredictiveMoments TrajectoryFactor::predictive_at(Index j) const {
  if (j < 0 || j >= size_) throw std::invalid_argument("TrajectoryFactor: index out of range");
  refresh_solve();
  const Index n_x = prior_->state_dim();
  PredictiveMoments out;
  out.mu = Vec(n_x);
  out.var = Vec(n_x);
  for (Index d = 0; d < n_x; ++d) {
    const auto& st = dims_[d];
    out.mu[d] = means_(j, d) + st.L.row(j).head(j).dot(st.c.head(j));
    out.var[d] = st.L(j, j) * st.L(j, j);
  }
  return out;
}

double TrajectoryFactor::log_density_tail(Index from) const {
  if (from < 0 || from > size_)
    throw std::invalid_argument("TrajectoryFactor: tail index out of range");
  refresh_solve();
  double lp = 0.0;
  const Index n = size_;
  for (Index d = 0; d < prior_->state_dim(); ++d) {
    const auto& st = dims_[d];
    for (Index j = from; j < n; ++j)
      lp += -0.5 * (kLog2Pi + 2.0 * std::log(st.L(j, j)) + st.c[j] * st.c[j]);
  }
  return lp;
}

double TrajectoryFactor::log_joint_prior() const { return log_density_tail(0); }

Mat sample_trajectory_from_prior(const std::shared_ptr<const TransitionPrior>& prior,
                                 const Eigen::Ref<const Vec>& x0,
                                 const Eigen::Ref<const Mat>& inputs, Index T,
                                 Rng& rng) {
  const Index n_x = prior->state_dim();
  Mat states(T + 1, n_x);
  states.row(0) = x0.transpose();
  TrajectoryFactor factor(prior, T);
  Vec z(prior->gp_input_dim());
  for (Index t = 0; t < T; ++t) {
    z.head(n_x) = states.row(t).transpose();
    z.tail(z.size() - n_x) = inputs.row(t).head(z.size() - n_x).transpose();
    const PredictiveMoments pm = factor.one_step_predictive(z);
    const Vec x =
        pm.mu + (pm.var.array().sqrt() * rng.normal_vec(n_x).array()).matrix();
    states.row(t + 1) = x.transpose();
    factor.extend(z, x);
  }
  return states;
}

}  // namespace gpssm
