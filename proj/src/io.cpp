#include "gpssm/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gpssm {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw std::invalid_argument("csv: bad number '" + s + "' in " + where);
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

// Count columns with prefix like "u_1", "u_2", ...
Index count_group(const std::vector<std::string>& header, const std::string& prefix) {
  Index n = 0;
  for (const auto& h : header)
    if (h.size() > prefix.size() && h.compare(0, prefix.size(), prefix) == 0) ++n;
  return n;
}

const nlohmann::json& require_key(const nlohmann::json& j, const std::string& key,
                                  const std::string& context) {
  if (!j.contains(key))
    throw std::invalid_argument("config: missing key '" + context + key + "'");
  return j.at(key);
}

Vec vec_from_json(const nlohmann::json& j, const std::string& context) {
  if (!j.is_array()) throw std::invalid_argument("config: '" + context + "' must be an array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

void write_dataset_csv(const std::string& path, const Dataset& ds) {
  ds.validate();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  const Index T = ds.horizon();
  os << "t";
  for (Index i = 0; i < ds.inputs.cols(); ++i) os << ",u_" << (i + 1);
  for (Index i = 0; i < ds.obs.cols(); ++i) os << ",y_" << (i + 1);
  if (ds.has_states())
    for (Index i = 0; i < ds.states.cols(); ++i) os << ",x_" << (i + 1);
  if (ds.has_latent())
    for (Index i = 0; i < ds.latent_f.cols(); ++i) os << ",f_" << (i + 1);
  os << "\n";
  for (Index t = 0; t <= T; ++t) {
    os << t;
    for (Index i = 0; i < ds.inputs.cols(); ++i) os << "," << format_double(ds.inputs(t, i));
    for (Index i = 0; i < ds.obs.cols(); ++i) os << "," << format_double(ds.obs(t, i));
    if (ds.has_states())
      for (Index i = 0; i < ds.states.cols(); ++i) os << "," << format_double(ds.states(t, i));
    if (ds.has_latent())
      for (Index i = 0; i < ds.latent_f.cols(); ++i)
        os << "," << format_double(ds.latent_f(t, i));
    os << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("csv: empty file: " + path);
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t")
    throw std::invalid_argument("csv: first column must be 't' in " + path);
  const Index n_u = count_group(header, "u_");
  const Index n_y = count_group(header, "y_");
  const Index n_x = count_group(header, "x_");
  const Index n_f = count_group(header, "f_");
  if (n_y < 1) throw std::invalid_argument("csv: no observation columns in " + path);
  const Index expected = 1 + n_u + n_y + n_x + n_f;
  if (static_cast<Index>(header.size()) != expected)
    throw std::invalid_argument("csv: unrecognized columns in " + path);

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<Index>(fields.size()) != expected)
      throw std::invalid_argument("csv: row with wrong field count in " + path);
    std::vector<double> r;
    r.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i)
      r.push_back(parse_double(fields[i], path));
    rows.push_back(std::move(r));
  }
  const Index n = static_cast<Index>(rows.size());
  if (n < 1) throw std::invalid_argument("csv: no data rows in " + path);

  Dataset ds;
  ds.inputs = Mat::Zero(n, n_u);
  ds.obs = Mat::Zero(n, n_y);
  if (n_x > 0) ds.states = Mat::Zero(n, n_x);
  if (n_f > 0) ds.latent_f = Mat::Zero(n, n_f);
  for (Index t = 0; t < n; ++t) {
    Index c = 0;
    for (Index i = 0; i < n_u; ++i) ds.inputs(t, i) = rows[t][c++];
    for (Index i = 0; i < n_y; ++i) ds.obs(t, i) = rows[t][c++];
    for (Index i = 0; i < n_x; ++i) ds.states(t, i) = rows[t][c++];
    for (Index i = 0; i < n_f; ++i) ds.latent_f(t, i) = rows[t][c++];
  }
  ds.validate();
  return ds;
}

GpSsmModel model_from_json(const nlohmann::json& j) {
  GpSsmModel m;
  m.state_dim = require_key(j, "state_dim", "model.").get<Index>();
  m.input_dim = require_key(j, "input_dim", "model.").get<Index>();
  m.obs_dim = require_key(j, "obs_dim", "model.").get<Index>();

  const auto& jm = require_key(j, "mean_function", "model.");
  const std::string mean_kind = require_key(jm, "kind", "model.mean_function.").get<std::string>();
  if (mean_kind == "zero") {
    m.mean_fn = MeanFunction::zero(m.state_dim);
  } else if (mean_kind == "identity") {
    m.mean_fn = MeanFunction::identity(m.state_dim);
  } else if (mean_kind == "parametric") {
    const Vec p = vec_from_json(require_key(jm, "params", "model.mean_function."),
                                "model.mean_function.params");
    if (p.size() != 3)
      throw std::invalid_argument("config: model.mean_function.params must have 3 entries");
    m.mean_fn = MeanFunction::parametric(p[0], p[1], p[2]);
  } else if (mean_kind == "affine") {
    const Vec p = vec_from_json(require_key(jm, "params", "model.mean_function."),
                                "model.mean_function.params");
    if (p.size() != 3)
      throw std::invalid_argument("config: model.mean_function.params must have 3 entries");
    m.mean_fn = MeanFunction::affine(p[0], p[1], p[2]);
  } else {
    throw std::invalid_argument("config: unknown model.mean_function.kind '" + mean_kind + "'");
  }

  const auto& jk = require_key(j, "kernel", "model.");
  const auto& jls = require_key(jk, "log_lengthscales", "model.kernel.");
  Mat ls(m.state_dim, m.state_dim + m.input_dim);
  if (static_cast<Index>(jls.size()) != m.state_dim)
    throw std::invalid_argument("config: model.kernel.log_lengthscales needs one row per state dim");
  for (Index d = 0; d < m.state_dim; ++d) {
    const Vec row = vec_from_json(jls[d], "model.kernel.log_lengthscales");
    if (row.size() != ls.cols())
      throw std::invalid_argument("config: model.kernel.log_lengthscales row size mismatch");
    ls.row(d) = row.transpose();
  }
  const Vec lsf = vec_from_json(require_key(jk, "log_signal_variance", "model.kernel."),
                                "model.kernel.log_signal_variance");
  m.cov_fn = CovFunction(ls, lsf);

  m.process_noise = vec_from_json(require_key(j, "process_noise", "model."),
                                  "model.process_noise");

  const auto& jme = require_key(j, "measurement", "model.");
  const std::string meas_kind = require_key(jme, "kind", "model.measurement.").get<std::string>();
  MeasurementModel::Kind mk;
  if (meas_kind == "quadratic")
    mk = MeasurementModel::Kind::kQuadraticGaussian;
  else if (meas_kind == "linear")
    mk = MeasurementModel::Kind::kLinearGaussian;
  else
    throw std::invalid_argument("config: unknown model.measurement.kind '" + meas_kind + "'");
  m.measurement = MeasurementModel(
      mk, require_key(jme, "coefficient", "model.measurement.").get<double>(),
      require_key(jme, "noise_variance", "model.measurement.").get<double>());

  const auto& ji = require_key(j, "initial_state", "model.");
  m.initial_state.mean =
      vec_from_json(require_key(ji, "mean", "model.initial_state."), "model.initial_state.mean");
  m.initial_state.var = vec_from_json(require_key(ji, "variance", "model.initial_state."),
                                      "model.initial_state.variance");

  const auto& jp = require_key(j, "priors", "model.");
  const HyperVector layout(m.state_dim, m.state_dim + m.input_dim);
  m.hyper_priors.coords.clear();
  for (Index i = 0; i < layout.size(); ++i) {
    const std::string name = layout.name(i);
    if (!jp.contains(name))
      throw std::invalid_argument("config: missing prior for '" + name + "'");
    const auto& pj = jp.at(name);
    LogNormalPrior prior;
    prior.log_mean = require_key(pj, "log_mean", "model.priors." + name + ".").get<double>();
    prior.log_sd = require_key(pj, "log_sd", "model.priors." + name + ".").get<double>();
    m.hyper_priors.coords.push_back(prior);
  }
  if (jp.size() != static_cast<std::size_t>(layout.size()))
    throw std::invalid_argument("config: model.priors has unknown extra entries");

  m.validate();
  return m;
}

nlohmann::json model_to_json(const GpSsmModel& m) {
  nlohmann::json j;
  j["state_dim"] = m.state_dim;
  j["input_dim"] = m.input_dim;
  j["obs_dim"] = m.obs_dim;
  switch (m.mean_fn.kind()) {
    case MeanFunction::Kind::kZero:
      j["mean_function"] = {{"kind", "zero"}};
      break;
    case MeanFunction::Kind::kIdentity:
      j["mean_function"] = {{"kind", "identity"}};
      break;
    case MeanFunction::Kind::kParametric:
      j["mean_function"] = {{"kind", "parametric"},
                            {"params", std::vector<double>(m.mean_fn.params().begin(),
                                                           m.mean_fn.params().end())}};
      break;
    case MeanFunction::Kind::kAffine:
      j["mean_function"] = {{"kind", "affine"},
                            {"params", std::vector<double>(m.mean_fn.params().begin(),
                                                           m.mean_fn.params().end())}};
      break;
  }
  nlohmann::json ls = nlohmann::json::array();
  for (Index d = 0; d < m.state_dim; ++d) {
    nlohmann::json row = nlohmann::json::array();
    for (Index i = 0; i < m.cov_fn.input_dim(); ++i)
      row.push_back(m.cov_fn.log_lengthscales()(d, i));
    ls.push_back(row);
  }
  j["kernel"] = {{"log_lengthscales", ls},
                 {"log_signal_variance",
                  std::vector<double>(m.cov_fn.log_signal_variance().begin(),
                                      m.cov_fn.log_signal_variance().end())}};
  j["process_noise"] = std::vector<double>(m.process_noise.begin(), m.process_noise.end());
  j["measurement"] = {
      {"kind", m.measurement.kind() == MeasurementModel::Kind::kQuadraticGaussian
                   ? "quadratic"
                   : "linear"},
      {"coefficient", m.measurement.coeff()},
      {"noise_variance", m.measurement.noise_var()}};
  j["initial_state"] = {
      {"mean", std::vector<double>(m.initial_state.mean.begin(), m.initial_state.mean.end())},
      {"variance", std::vector<double>(m.initial_state.var.begin(), m.initial_state.var.end())}};
  nlohmann::json priors;
  const HyperVector layout(m.state_dim, m.state_dim + m.input_dim);
  for (Index i = 0; i < layout.size(); ++i)
    priors[layout.name(i)] = {{"log_mean", m.hyper_priors.coords[i].log_mean},
                              {"log_sd", m.hyper_priors.coords[i].log_sd}};
  j["priors"] = priors;
  return j;
}

PgasConfig pgas_config_from_json(const nlohmann::json& j) {
  PgasConfig c;
  if (j.contains("n_particles")) c.n_particles = j.at("n_particles").get<Index>();
  if (j.contains("n_iterations")) c.n_iterations = j.at("n_iterations").get<Index>();
  if (j.contains("burn_in")) c.burn_in = j.at("burn_in").get<Index>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("prior")) {
    const std::string p = j.at("prior").get<std::string>();
    if (p == "dense")
      c.prior = PgasConfig::PriorKind::kDense;
    else if (p == "fic")
      c.prior = PgasConfig::PriorKind::kFic;
    else
      throw std::invalid_argument("config: pgas.prior must be 'dense' or 'fic'");
  }
  if (j.contains("fic")) {
    const auto& jf = j.at("fic");
    if (jf.contains("m")) c.fic_m = jf.at("m").get<Index>();
    if (jf.contains("strategy"))
      c.fic_strategy = inducing_strategy_from_string(jf.at("strategy").get<std::string>());
  }
  if (j.contains("slice")) {
    const auto& js = j.at("slice");
    if (js.contains("width")) c.slice.width = js.at("width").get<double>();
    if (js.contains("max_step_outs")) c.slice.max_step_outs = js.at("max_step_outs").get<int>();
  }
  if (j.contains("sample_hyperparameters"))
    c.sample_hyperparameters = j.at("sample_hyperparameters").get<bool>();
  if (j.contains("warm_start")) {
    const auto& jw = j.at("warm_start");
    if (jw.contains("iterations"))
      c.warm_start_iterations = jw.at("iterations").get<Index>();
    if (jw.contains("particles")) c.warm_start_particles = jw.at("particles").get<Index>();
  }
  c.validate();
  return c;
}

nlohmann::json pgas_config_to_json(const PgasConfig& c) {
  return nlohmann::json{
      {"n_particles", c.n_particles},
      {"n_iterations", c.n_iterations},
      {"burn_in", c.burn_in},
      {"seed", c.seed},
      {"prior", c.prior == PgasConfig::PriorKind::kDense ? "dense" : "fic"},
      {"fic", {{"m", c.fic_m}, {"strategy", to_string(c.fic_strategy)}}},
      {"slice", {{"width", c.slice.width}, {"max_step_outs", c.slice.max_step_outs}}},
      {"sample_hyperparameters", c.sample_hyperparameters},
      {"warm_start",
       {{"iterations", c.warm_start_iterations}, {"particles", c.warm_start_particles}}}};
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("bad json in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
}

nlohmann::json chain_sample_to_json(const ChainSample& s) {
  nlohmann::json theta;
  for (Index i = 0; i < s.theta.size(); ++i) theta[s.theta.name(i)] = s.theta[i];
  nlohmann::json traj = nlohmann::json::array();
  for (Index t = 0; t < s.trajectory.rows(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (Index d = 0; d < s.trajectory.cols(); ++d) row.push_back(s.trajectory(t, d));
    traj.push_back(row);
  }
  return nlohmann::json{{"iteration", s.iteration},
                        {"theta", theta},
                        {"trajectory", traj},
                        {"log_joint", s.log_joint}};
}

ChainSample chain_sample_from_json(const nlohmann::json& j, Index n_x, Index n_in) {
  ChainSample s;
  s.iteration = require_key(j, "iteration", "chain.").get<Index>();
  s.log_joint = require_key(j, "log_joint", "chain.").get<double>();
  s.theta = HyperVector(n_x, n_in);
  const auto& theta = require_key(j, "theta", "chain.");
  for (Index i = 0; i < s.theta.size(); ++i) {
    const std::string name = s.theta.name(i);
    if (!theta.contains(name))
      throw std::invalid_argument("chain record missing theta entry '" + name + "'");
    s.theta[i] = theta.at(name).get<double>();
  }
  const auto& traj = require_key(j, "trajectory", "chain.");
  s.trajectory.resize(static_cast<Index>(traj.size()), n_x);
  for (Index t = 0; t < s.trajectory.rows(); ++t)
    for (Index d = 0; d < n_x; ++d) s.trajectory(t, d) = traj[t][d].get<double>();
  return s;
}

void append_chain_sample(std::ostream& os, const ChainSample& s) {
  os << chain_sample_to_json(s).dump() << "\n";
  os.flush();
}

std::vector<ChainSample> read_chain_jsonl(const std::string& path, Index n_x, Index n_in) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<ChainSample> chain;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    chain.push_back(chain_sample_from_json(nlohmann::json::parse(line), n_x, n_in));
  }
  return chain;
}

}  // namespace gpssm
