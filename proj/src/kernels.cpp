#include "gpssm/kernels.hpp"

#include <stdexcept>

#include "gpssm/hyper.hpp"

namespace gpssm {

CovFunction::CovFunction(Mat log_lengthscales, Vec log_signal_variance)
    : log_ls_(std::move(log_lengthscales)), log_sf2_(std::move(log_signal_variance)) {
  if (log_ls_.rows() != log_sf2_.size())
    throw std::invalid_argument("CovFunction: lengthscale rows must match signal variance size");
  inv_ls2_ = (-2.0 * log_ls_).array().exp();
  sf2_ = log_sf2_.array().exp();
  if (!inv_ls2_.allFinite() || !sf2_.allFinite())
    throw std::invalid_argument("CovFunction: non-finite hyperparameters");
}

double CovFunction::operator()(Index d, const Eigen::Ref<const Vec>& a,
                               const Eigen::Ref<const Vec>& b) const {
  if (a.size() != input_dim() || b.size() != input_dim())
    throw std::invalid_argument("CovFunction: input dimension mismatch");
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff * inv_ls2_(d, i);
  }
  return sf2_[d] * std::exp(-0.5 * s);
}

Vec CovFunction::column(Index d, const Eigen::Ref<const Mat>& pts,
                        const Eigen::Ref<const Vec>& z) const {
  if (pts.cols() != input_dim() || z.size() != input_dim())
    throw std::invalid_argument("CovFunction: input dimension mismatch");
  Vec s = Vec::Zero(pts.rows());
  for (Index i = 0; i < pts.cols(); ++i)
    s.array() += (pts.col(i).array() - z[i]).square() * inv_ls2_(d, i);
  return sf2_[d] * (-0.5 * s.array()).exp();
}

Mat CovFunction::gram(Index d, const Eigen::Ref<const Mat>& pts) const {
  const Index n = pts.rows();
  Mat g(n, n);
  for (Index j = 0; j < n; ++j) {
    g.col(j).tail(n - j) = column(d, pts.bottomRows(n - j), pts.row(j).transpose());
    g.row(j).tail(n - j) = g.col(j).tail(n - j).transpose();
  }
  return g;
}

Vec cov_eval(const CovFunction& k, const Eigen::Ref<const Vec>& zi,
             const Eigen::Ref<const Vec>& zj) {
  Vec out(k.output_dim());
  for (Index d = 0; d < k.output_dim(); ++d) out[d] = k(d, zi, zj);
  return out;
}

MeanFunction MeanFunction::zero(Index n_x) {
  return MeanFunction(Kind::kZero, n_x, Vec());
}

MeanFunction MeanFunction::identity(Index n_x) {
  return MeanFunction(Kind::kIdentity, n_x, Vec());
}

MeanFunction MeanFunction::parametric(double a, double b, double c) {
  Vec p(3);
  p << a, b, c;
  return MeanFunction(Kind::kParametric, 1, std::move(p));
}

MeanFunction MeanFunction::affine(double alpha, double beta, double gamma) {
  Vec p(3);
  p << alpha, beta, gamma;
  return MeanFunction(Kind::kAffine, 1, std::move(p));
}

Vec MeanFunction::eval(const Eigen::Ref<const Vec>& x,
                       const Eigen::Ref<const Vec>& u) const {
  if (x.size() != n_x_)
    throw std::invalid_argument("MeanFunction: state dimension mismatch");
  switch (kind_) {
    case Kind::kZero:
      return Vec::Zero(n_x_);
    case Kind::kIdentity:
      return x;
    case Kind::kParametric: {
      const double xs = x[0];
      const double us = u.size() > 0 ? u[0] : 0.0;
      Vec out(1);
      out[0] = params_[0] * xs + params_[1] * xs / (1.0 + xs * xs) + params_[2] * us;
      return out;
    }
    case Kind::kAffine: {
      const double xs = x[0];
      const double us = u.size() > 0 ? u[0] : 0.0;
      Vec out(1);
      out[0] = params_[0] * xs + params_[1] * us + params_[2];
      return out;
    }
  }
  throw std::logic_error("MeanFunction: unknown kind");
}

HyperVector::HyperVector(Index n_x, Index n_in) : nx_(n_x), nin_(n_in) {
  if (n_x < 1 || n_in < 1)
    throw std::invalid_argument("HyperVector: dimensions must be positive");
  v_ = Vec::Zero(n_x * (n_in + 1) + n_x + 1);
}

HyperVector HyperVector::pack(const CovFunction& cov,
                              const Eigen::Ref<const Vec>& q_diag, double r) {
  HyperVector h(cov.output_dim(), cov.input_dim());
  for (Index d = 0; d < cov.output_dim(); ++d) {
    for (Index i = 0; i < cov.input_dim(); ++i)
      h[h.lengthscale_index(d, i)] = cov.log_lengthscales()(d, i);
    h[h.signal_variance_index(d)] = cov.log_signal_variance()[d];
    h[h.process_noise_index(d)] = std::log(q_diag[d]);
  }
  h[h.obs_noise_index()] = std::log(r);
  return h;
}

CovFunction HyperVector::cov() const {
  Mat ls(nx_, nin_);
  Vec sf2(nx_);
  for (Index d = 0; d < nx_; ++d) {
    for (Index i = 0; i < nin_; ++i) ls(d, i) = v_[lengthscale_index(d, i)];
    sf2[d] = v_[signal_variance_index(d)];
  }
  return CovFunction(std::move(ls), std::move(sf2));
}

Vec HyperVector::q_diag() const {
  Vec q(nx_);
  for (Index d = 0; d < nx_; ++d) q[d] = std::exp(v_[process_noise_index(d)]);
  return q;
}

Index HyperVector::dim_of(Index coord) const {
  if (coord == obs_noise_index()) return nx_;
  if (coord >= nx_ * (nin_ + 1)) return coord - nx_ * (nin_ + 1);
  return coord / (nin_ + 1);
}

std::string HyperVector::name(Index i) const {
  if (i == obs_noise_index()) return "log_obs_noise";
  if (i >= nx_ * (nin_ + 1))
    return "log_process_noise[" + std::to_string(i - nx_ * (nin_ + 1)) + "]";
  const Index d = i / (nin_ + 1);
  const Index k = i % (nin_ + 1);
  if (k == nin_) return "log_signal_variance[" + std::to_string(d) + "]";
  return "log_lengthscale[" + std::to_string(d) + "][" + std::to_string(k) + "]";
}

std::vector<std::string> HyperVector::names() const {
  std::vector<std::string> out;
  out.reserve(size());
  for (Index i = 0; i < size(); ++i) out.push_back(name(i));
  return out;
}

}  // namespace gpssm
