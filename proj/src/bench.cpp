#include "gpssm/bench.hpp"

#include <chrono>
#include <stdexcept>

#include "gpssm/predict.hpp"
#include "gpssm/smc.hpp"

namespace gpssm {

void BenchmarkSpec::validate() const {
  if (!(q > 0.0) || !(r > 0.0))
    throw std::invalid_argument("benchmark: q and r must be > 0");
  if (t_train < 1 || t_test < 1)
    throw std::invalid_argument("benchmark: horizons must be >= 1");
  if (n_repeats < 1) throw std::invalid_argument("benchmark: n_repeats must be >= 1");
}

BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& j) {
  BenchmarkSpec s;
  auto get = [&](const char* key, double& v) {
    if (j.contains(key)) v = j.at(key).get<double>();
  };
  get("a", s.a);
  get("b", s.b);
  get("c", s.c);
  get("d", s.d);
  get("q", s.q);
  get("r", s.r);
  get("x0", s.x0);
  get("x0_var", s.x0_var);
  if (j.contains("t_train")) s.t_train = j.at("t_train").get<Index>();
  if (j.contains("t_test")) s.t_test = j.at("t_test").get<Index>();
  if (j.contains("n_repeats")) s.n_repeats = j.at("n_repeats").get<Index>();
  if (j.contains("base_seed")) s.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (j.contains("mean_b")) {
    const auto& mb = j.at("mean_b");
    if (mb.size() != 3) throw std::invalid_argument("benchmark: mean_b must have 3 entries");
    for (int i = 0; i < 3; ++i) s.mean_b[i] = mb[i].get<double>();
  }
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    auto pget = [&](const char* key, double& m, double& sd) {
      if (p.contains(key)) {
        m = p.at(key).at("log_mean").get<double>();
        sd = p.at(key).at("log_sd").get<double>();
      }
    };
    pget("lengthscale_x", s.prior_ls_x_mean, s.prior_ls_x_sd);
    pget("lengthscale_u", s.prior_ls_u_mean, s.prior_ls_u_sd);
    pget("signal_variance", s.prior_sf2_mean, s.prior_sf2_sd);
    pget("process_noise", s.prior_q_mean, s.prior_q_sd);
    pget("obs_noise", s.prior_r_mean, s.prior_r_sd);
  }
  s.validate();
  return s;
}

nlohmann::json benchmark_spec_to_json(const BenchmarkSpec& s) {
  return nlohmann::json{
      {"a", s.a},
      {"b", s.b},
      {"c", s.c},
      {"d", s.d},
      {"q", s.q},
      {"r", s.r},
      {"x0", s.x0},
      {"x0_var", s.x0_var},
      {"t_train", s.t_train},
      {"t_test", s.t_test},
      {"n_repeats", s.n_repeats},
      {"base_seed", s.base_seed},
      {"mean_b", {s.mean_b[0], s.mean_b[1], s.mean_b[2]}},
      {"priors",
       {{"lengthscale_x", {{"log_mean", s.prior_ls_x_mean}, {"log_sd", s.prior_ls_x_sd}}},
        {"lengthscale_u", {{"log_mean", s.prior_ls_u_mean}, {"log_sd", s.prior_ls_u_sd}}},
        {"signal_variance", {{"log_mean", s.prior_sf2_mean}, {"log_sd", s.prior_sf2_sd}}},
        {"process_noise", {{"log_mean", s.prior_q_mean}, {"log_sd", s.prior_q_sd}}},
        {"obs_noise", {{"log_mean", s.prior_r_mean}, {"log_sd", s.prior_r_sd}}}}}};
}

Vec benchmark_input(Index t) {
  Vec u(1);
  u[0] = std::cos(1.2 * double(t + 1));
  return u;
}

namespace {

PriorSet benchmark_priors(const BenchmarkSpec& s) {
  // layout: ls(0,0), ls(0,1), sf2(0), q(0), r
  PriorSet p;
  p.coords = {{s.prior_ls_x_mean, s.prior_ls_x_sd},
              {s.prior_ls_u_mean, s.prior_ls_u_sd},
              {s.prior_sf2_mean, s.prior_sf2_sd},
              {s.prior_q_mean, s.prior_q_sd},
              {s.prior_r_mean, s.prior_r_sd}};
  return p;
}

PriorSet fixed_priors(const HyperVector& theta) {
  PriorSet p;
  for (Index i = 0; i < theta.size(); ++i) p.coords.push_back({theta[i], 0.0});
  return p;
}

}  // namespace

GpSsmModel make_benchmark_data_model(const BenchmarkSpec& s) {
  GpSsmModel m;
  m.state_dim = 1;
  m.input_dim = 1;
  m.obs_dim = 1;
  m.mean_fn = MeanFunction::parametric(s.a, s.b, s.c);
  m.cov_fn = CovFunction(Mat::Zero(1, 2), Vec::Zero(1));
  m.process_noise = Vec::Constant(1, s.q);
  m.measurement = MeasurementModel(MeasurementModel::Kind::kQuadraticGaussian, s.d, s.r);
  m.initial_state = {Vec::Constant(1, s.x0), Vec::Zero(1)};  // released from x0
  m.hyper_priors = fixed_priors(m.hyper());
  return m;
}

GpSsmModel make_benchmark_learning_model(const BenchmarkSpec& s) {
  GpSsmModel m;
  m.state_dim = 1;
  m.input_dim = 1;
  m.obs_dim = 1;
  m.mean_fn = MeanFunction::parametric(s.mean_b[0], s.mean_b[1], s.mean_b[2]);
  Mat ls(1, 2);
  ls << std::log(3.0), 0.0;
  m.cov_fn = CovFunction(ls, Vec::Constant(1, std::log(30.0)));
  m.process_noise = Vec::Constant(1, 5.0);
  m.measurement = MeasurementModel(MeasurementModel::Kind::kQuadraticGaussian, s.d, 1.0);
  m.initial_state = {Vec::Zero(1), Vec::Constant(1, s.x0_var)};
  m.hyper_priors = benchmark_priors(s);
  return m;
}

Dataset simulate_benchmark(const BenchmarkSpec& spec, Index T, std::uint64_t seed) {
  const GpSsmModel data_model = make_benchmark_data_model(spec);
  return simulate(data_model, T, seed, [](Index t) { return benchmark_input(t); });
}

GpSsmModel make_benchmark_learning_model(const BenchmarkSpec& spec, const Dataset& train) {
  GpSsmModel m = make_benchmark_learning_model(spec);
  if (train.has_states()) {
    m.initial_state.mean = train.states.row(0).transpose();
    m.initial_state.var = Vec::Constant(m.state_dim, 1.0);
  }
  return m;
}

BaselineFit fit_baselines(const Dataset& train) {
  if (!train.has_states())
    throw std::invalid_argument("fit_baselines: train data needs ground-truth states");
  const Index T = train.horizon();
  Mat phi_ts(T, 3), phi_lin(T, 3);
  Vec y(T);
  for (Index t = 0; t < T; ++t) {
    const double x = train.states(t, 0);
    const double u = train.inputs(t, 0);
    phi_ts.row(t) << x, x / (1.0 + x * x), u;
    phi_lin.row(t) << x, u, 1.0;
    y[t] = train.states(t + 1, 0);
  }
  const auto qr_ts = phi_ts.colPivHouseholderQr();
  const auto qr_lin = phi_lin.colPivHouseholderQr();
  if (qr_ts.rank() < 3 || qr_lin.rank() < 3)
    throw std::invalid_argument("fit_baselines: regressors are rank deficient");
  BaselineFit fit;
  fit.true_structure = qr_ts.solve(y);
  fit.linear = qr_lin.solve(y);
  fit.q_true_structure = (y - phi_ts * fit.true_structure).squaredNorm() / double(T);
  fit.q_linear = (y - phi_lin * fit.linear).squaredNorm() / double(T);
  return fit;
}

double parametric_prediction_rmse(const MeanFunction& f, const Dataset& test) {
  if (!test.has_states() || !test.has_latent())
    throw std::invalid_argument("parametric_prediction_rmse: test set needs states and latent values");
  double se = 0.0;
  Index n = 0;
  for (Index t = 0; t < test.latent_f.rows(); ++t) {
    const Vec pred = f.eval(test.states.row(t).transpose(), test.inputs.row(t).transpose());
    se += (pred - test.latent_f.row(t).transpose()).squaredNorm();
    n += pred.size();
  }
  return std::sqrt(se / double(n));
}

double parametric_smoothing_rmse(const MeanFunction& f, double q, double r,
                                 double d_coeff, const InitialState& init,
                                 const Dataset& train, Index n_particles,
                                 Index n_iterations, Index burn_in, std::uint64_t seed) {
  if (!train.has_states())
    throw std::invalid_argument("parametric_smoothing_rmse: train data needs states");
  const Index T = train.horizon();
  const Vec q_vec = Vec::Constant(1, q);
  const MeasurementModel meas(MeasurementModel::Kind::kQuadraticGaussian, d_coeff, r);
  ParametricSweepFactory fac{&f, &q_vec};

  Rng root(seed);
  Rng init_rng = root.substream(0, 900001);
  Mat x = bootstrap_pf(fac, meas, init, train, n_particles, init_rng).sampled_trajectory;

  Mat mean = Mat::Zero(T + 1, 1);
  Index kept = 0;
  for (Index it = 0; it < n_iterations; ++it) {
    Rng sweep_rng = root.substream(static_cast<std::uint64_t>(it) + 1, 3);
    x = cpf_as_sweep(fac, meas, init, train, x, n_particles, sweep_rng).sampled_trajectory;
    if (it + 1 > burn_in) {
      mean += x;
      ++kept;
    }
  }
  mean /= double(kept);
  return std::sqrt((mean - train.states).squaredNorm() / double(train.states.size()));
}

BenchSeedResult run_benchmark_seed(const BenchmarkSpec& spec, const PgasConfig& pgas,
                                   std::uint64_t seed) {
  const Dataset train = simulate_benchmark(spec, spec.t_train, seed);
  const Dataset test = simulate_benchmark(spec, spec.t_test, mix64(seed ^ 0x7e57da7aull));
  const GpSsmModel model = make_benchmark_learning_model(spec, train);

  PgasConfig cfg = pgas;
  cfg.seed = seed;

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<ChainSample> chain = run_pgas(model, train, cfg);
  const auto t1 = std::chrono::steady_clock::now();

  BenchSeedResult out;
  out.seconds_per_iteration =
      std::chrono::duration<double>(t1 - t0).count() / double(cfg.n_iterations);
  out.pred_rmse = rmse_prediction(chain, cfg.burn_in, model, train, test);
  out.smooth_rmse = rmse_smoothing(chain, cfg.burn_in, train.states);

  // A time step is sign-ambiguous when both signs hold >= 10% of samples.
  const Index T = train.horizon();
  Index kept = 0;
  for (const auto& s : chain)
    if (s.iteration > cfg.burn_in) ++kept;
  for (Index t = 0; t <= T && !out.bimodal; ++t) {
    Index pos = 0;
    for (const auto& s : chain)
      if (s.iteration > cfg.burn_in && s.trajectory(t, 0) > 0.0) ++pos;
    const double frac = double(pos) / double(kept);
    if (frac >= 0.1 && frac <= 0.9) out.bimodal = true;
  }
  return out;
}

BenchSummary run_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  BenchSummary sum;
  for (Index rep = 0; rep < spec.n_repeats; ++rep) {
    const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(rep);

    PgasConfig dense = spec.pgas;
    dense.prior = PgasConfig::PriorKind::kDense;
    const BenchSeedResult rd = run_benchmark_seed(spec, dense, seed);
    sum.values["gpssm_dense/prediction_rmse"].push_back(rd.pred_rmse);
    sum.values["gpssm_dense/smoothing_rmse"].push_back(rd.smooth_rmse);
    sum.values["gpssm_dense/seconds_per_iteration"].push_back(rd.seconds_per_iteration);
    sum.values["gpssm_dense/bimodal"].push_back(rd.bimodal ? 1.0 : 0.0);

    PgasConfig fic = spec.pgas;
    fic.prior = PgasConfig::PriorKind::kFic;
    const BenchSeedResult rf = run_benchmark_seed(spec, fic, seed);
    sum.values["gpssm_fic/prediction_rmse"].push_back(rf.pred_rmse);
    sum.values["gpssm_fic/smoothing_rmse"].push_back(rf.smooth_rmse);
    sum.values["gpssm_fic/seconds_per_iteration"].push_back(rf.seconds_per_iteration);

    const Dataset train = simulate_benchmark(spec, spec.t_train, seed);
    const Dataset test = simulate_benchmark(spec, spec.t_test, mix64(seed ^ 0x7e57da7aull));
    const BaselineFit fit = fit_baselines(train);

    const MeanFunction f_true = MeanFunction::parametric(spec.a, spec.b, spec.c);
    const MeanFunction f_b =
        MeanFunction::parametric(spec.mean_b[0], spec.mean_b[1], spec.mean_b[2]);
    const MeanFunction f_ts = MeanFunction::parametric(
        fit.true_structure[0], fit.true_structure[1], fit.true_structure[2]);
    const MeanFunction f_lin =
        MeanFunction::affine(fit.linear[0], fit.linear[1], fit.linear[2]);

    sum.values["ground_truth_known/prediction_rmse"].push_back(
        parametric_prediction_rmse(f_true, test));
    sum.values["model_b_fixed/prediction_rmse"].push_back(
        parametric_prediction_rmse(f_b, test));
    sum.values["true_structure_learned/prediction_rmse"].push_back(
        parametric_prediction_rmse(f_ts, test));
    sum.values["linear_learned/prediction_rmse"].push_back(
        parametric_prediction_rmse(f_lin, test));

    const Index n_it = spec.pgas.n_iterations;
    const Index burn = spec.pgas.burn_in;
    const Index np = spec.pgas.n_particles;
    const InitialState init{train.states.row(0).transpose(), Vec::Constant(1, 1.0)};
    sum.values["ground_truth_known/smoothing_rmse"].push_back(parametric_smoothing_rmse(
        f_true, spec.q, spec.r, spec.d, init, train, np, n_it, burn, seed));
    sum.values["model_b_fixed/smoothing_rmse"].push_back(parametric_smoothing_rmse(
        f_b, spec.q, spec.r, spec.d, init, train, np, n_it, burn, seed));
    sum.values["true_structure_learned/smoothing_rmse"].push_back(
        parametric_smoothing_rmse(f_ts, fit.q_true_structure, spec.r, spec.d, init,
                                  train, np, n_it, burn, seed));
    sum.values["linear_learned/smoothing_rmse"].push_back(parametric_smoothing_rmse(
        f_lin, fit.q_linear, spec.r, spec.d, init, train, np, n_it, burn, seed));
  }
  return sum;
}

double vec_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double vec_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = vec_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

nlohmann::json BenchSummary::to_json(const BenchmarkSpec& spec) const {
  nlohmann::json rows;
  for (const auto& [name, vals] : values) {
    rows[name] = {{"mean", vec_mean(vals)}, {"sd", vec_sd(vals)}, {"per_seed", vals}};
  }
  return nlohmann::json{
      {"protocol", benchmark_spec_to_json(spec)},
      {"rows", rows},
      {"metadata",
       {{"baseline_fit", "least squares on ground-truth train states"},
        {"smoothing_estimate", "posterior mean over post-burn-in samples"}}}};
}

}  // namespace gpssm
