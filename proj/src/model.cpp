#include "gpssm/model.hpp"

#include <stdexcept>

#include "gpssm/rng.hpp"

namespace gpssm {

MeasurementModel::MeasurementModel(Kind kind, double coeff, double noise_var)
    : kind_(kind), coeff_(coeff), noise_var_(noise_var) {
  set_noise_var(noise_var);
}

void MeasurementModel::set_noise_var(double r) {
  if (!(r > 0.0)) throw std::invalid_argument("MeasurementModel: noise variance must be > 0");
  noise_var_ = r;
}

Vec MeasurementModel::predict(const Eigen::Ref<const Vec>& x) const {
  switch (kind_) {
    case Kind::kQuadraticGaussian:
      return coeff_ * x.array().square();
    case Kind::kLinearGaussian:
      return coeff_ * x;
  }
  throw std::logic_error("MeasurementModel: unknown kind");
}

double MeasurementModel::loglik(const Eigen::Ref<const Vec>& y,
                                const Eigen::Ref<const Vec>& x, double r) const {
  if (!(r > 0.0)) throw std::invalid_argument("MeasurementModel: noise variance must be > 0");
  const Vec pred = predict(x);
  if (y.size() != pred.size())
    throw std::invalid_argument("MeasurementModel: observation dimension mismatch");
  double lp = 0.0;
  for (Index j = 0; j < y.size(); ++j) lp += gaussian_logpdf(y[j], pred[j], r);
  return lp;
}

HyperVector GpSsmModel::hyper() const {
  return HyperVector::pack(cov_fn, process_noise, measurement.noise_var());
}

void GpSsmModel::set_hyper(const HyperVector& h) {
  cov_fn = h.cov();
  process_noise = h.q_diag();
  measurement.set_noise_var(h.obs_noise());
}

void GpSsmModel::validate() const {
  if (state_dim < 1) throw std::invalid_argument("model: state_dim must be positive");
  if (input_dim < 0) throw std::invalid_argument("model: input_dim must be nonnegative");
  if (obs_dim < 1) throw std::invalid_argument("model: obs_dim must be positive");
  if (obs_dim != state_dim)
    throw std::invalid_argument("model: measurement kinds map state to obs elementwise; obs_dim must equal state_dim");
  if (mean_fn.state_dim() != state_dim)
    throw std::invalid_argument("model: mean_fn state dimension mismatch");
  if (cov_fn.output_dim() != state_dim)
    throw std::invalid_argument("model: cov_fn output dimension mismatch");
  if (cov_fn.input_dim() != gp_input_dim())
    throw std::invalid_argument("model: cov_fn input dimension must be state_dim + input_dim");
  if (process_noise.size() != state_dim)
    throw std::invalid_argument("model: process_noise size mismatch");
  if ((process_noise.array() <= 0.0).any())
    throw std::invalid_argument("model: process_noise diagonal must be strictly positive");
  if (!(measurement.noise_var() > 0.0))
    throw std::invalid_argument("model: measurement noise variance must be > 0");
  if (initial_state.mean.size() != state_dim || initial_state.var.size() != state_dim)
    throw std::invalid_argument("model: initial_state size mismatch");
  if ((initial_state.var.array() < 0.0).any())
    throw std::invalid_argument("model: initial_state variance must be nonnegative");
  const Index n_hyper = state_dim * (gp_input_dim() + 1) + state_dim + 1;
  if (static_cast<Index>(hyper_priors.coords.size()) != n_hyper)
    throw std::invalid_argument("model: hyper_priors must hold exactly one prior per hyperparameter");
}

void Dataset::validate() const {
  const Index T = horizon();
  if (T < 0) throw std::invalid_argument("dataset: empty observation sequence");
  if (inputs.rows() != T + 1) throw std::invalid_argument("dataset: inputs rows must equal obs rows");
  if (has_states() && states.rows() != T + 1)
    throw std::invalid_argument("dataset: states rows must equal obs rows");
  if (has_latent() && latent_f.rows() != T + 1)
    throw std::invalid_argument("dataset: latent_f rows must equal obs rows");
}

Dataset simulate(const GpSsmModel& model, Index T, std::uint64_t seed,
                 const std::function<Vec(Index)>& input_law) {
  model.validate();
  if (T < 1) throw std::invalid_argument("simulate: horizon must be positive");
  Rng rng(seed);

  const Index n_x = model.state_dim;
  const Index n_u = model.input_dim;
  Dataset ds;
  ds.inputs = Mat::Zero(T + 1, n_u);
  ds.obs = Mat::Zero(T + 1, model.obs_dim);
  ds.states = Mat::Zero(T + 1, n_x);
  ds.latent_f = Mat::Zero(T + 1, n_x);

  for (Index t = 0; t <= T; ++t) {
    if (input_law) {
      const Vec u = input_law(t);
      if (u.size() != n_u) throw std::invalid_argument("simulate: input law dimension mismatch");
      ds.inputs.row(t) = u.transpose();
    }
  }

  Vec x = model.initial_state.mean;
  for (Index d = 0; d < n_x; ++d)
    x[d] += std::sqrt(model.initial_state.var[d]) * rng.normal();
  ds.states.row(0) = x.transpose();

  const Vec q_sd = model.process_noise.array().sqrt();
  for (Index t = 0; t < T; ++t) {
    const Vec f = model.mean_fn.eval(x, ds.inputs.row(t).transpose());
    ds.latent_f.row(t) = f.transpose();
    x = f + (q_sd.array() * rng.normal_vec(n_x).array()).matrix();
    if (!x.allFinite())
      throw std::runtime_error("simulate: non-finite state at t=" + std::to_string(t + 1));
    ds.states.row(t + 1) = x.transpose();
  }
  ds.latent_f.row(T) = model.mean_fn.eval(x, ds.inputs.row(T).transpose()).transpose();

  const double r_sd = std::sqrt(model.measurement.noise_var());
  for (Index t = 0; t <= T; ++t) {
    const Vec pred = model.measurement.predict(ds.states.row(t).transpose());
    ds.obs.row(t) = (pred + r_sd * rng.normal_vec(model.obs_dim)).transpose();
  }
  return ds;
}

double measurement_loglik(const GpSsmModel& model, const Eigen::Ref<const Vec>& y,
                          const Eigen::Ref<const Vec>& x, double r) {
  return model.measurement.loglik(y, x, r);
}

}  // namespace gpssm
