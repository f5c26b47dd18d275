// Command-line driver: simulate benchmark data, run the learner, evaluate
// predictions against held-out data, and emit plot-ready grids.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpssm/bench.hpp"
#include "gpssm/io.hpp"
#include "gpssm/model.hpp"
#include "gpssm/pgas.hpp"
#include "gpssm/predict.hpp"

namespace {

using nlohmann::json;

gpssm::BenchmarkSpec load_spec(const std::string& config_path) {
  if (config_path.empty()) return gpssm::BenchmarkSpec{};
  const json j = gpssm::read_json_file(config_path);
  return gpssm::benchmark_spec_from_json(j.contains("benchmark") ? j.at("benchmark") : j);
}

struct GridAxis {
  std::string name;
  double lo = 0.0, hi = 0.0;
  gpssm::Index count = 1;
};

// "x0=-20:20:41,u0=-1:1:5"
std::vector<GridAxis> parse_grid(const std::string& s) {
  std::vector<GridAxis> axes;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    GridAxis ax;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("bad grid spec: " + part);
    ax.name = part.substr(0, eq);
    const std::string rest = part.substr(eq + 1);
    const auto c1 = rest.find(':');
    const auto c2 = rest.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::invalid_argument("bad grid spec: " + part);
    ax.lo = std::stod(rest.substr(0, c1));
    ax.hi = std::stod(rest.substr(c1 + 1, c2 - c1 - 1));
    ax.count = std::stol(rest.substr(c2 + 1));
    if (ax.count < 1) throw std::invalid_argument("grid count must be >= 1: " + part);
    axes.push_back(ax);
  }
  if (axes.empty()) throw std::invalid_argument("empty grid spec");
  return axes;
}

int cmd_simulate(const std::string& config, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, std::optional<gpssm::Index> t_train,
                 std::optional<gpssm::Index> t_test) {
  gpssm::BenchmarkSpec spec = load_spec(config);
  if (seed) spec.base_seed = *seed;
  if (t_train) spec.t_train = *t_train;
  if (t_test) spec.t_test = *t_test;
  spec.validate();
  std::filesystem::create_directories(out_dir);
  const gpssm::Dataset train = gpssm::simulate_benchmark(spec, spec.t_train, spec.base_seed);
  const gpssm::Dataset test = gpssm::simulate_benchmark(
      spec, spec.t_test, gpssm::mix64(spec.base_seed ^ 0x7e57da7aull));
  gpssm::write_dataset_csv(out_dir + "/train.csv", train);
  gpssm::write_dataset_csv(out_dir + "/test.csv", test);
  std::cout << "wrote " << out_dir << "/train.csv (T=" << spec.t_train << ") and "
            << out_dir << "/test.csv (T=" << spec.t_test << ")\n";
  return 0;
}

int cmd_learn(const std::string& config, const std::string& data_path,
              const std::string& out_path, const gpssm::PgasConfig& overrides,
              bool have_particles, bool have_iterations, bool have_burn_in,
              bool have_prior, bool have_m, bool have_seed, bool resume) {
  gpssm::GpSsmModel model;
  gpssm::PgasConfig cfg;
  bool benchmark_style = config.empty();
  if (!config.empty()) {
    const json j = gpssm::read_json_file(config);
    if (j.contains("model")) {
      model = gpssm::model_from_json(j.at("model"));
      if (j.contains("pgas")) cfg = gpssm::pgas_config_from_json(j.at("pgas"));
    } else {
      // benchmark-style config
      benchmark_style = true;
      const gpssm::BenchmarkSpec spec = gpssm::benchmark_spec_from_json(
          j.contains("benchmark") ? j.at("benchmark") : j);
      model = gpssm::make_benchmark_learning_model(spec);
      cfg = spec.pgas;
      if (j.contains("pgas")) cfg = gpssm::pgas_config_from_json(j.at("pgas"));
    }
  } else {
    model = gpssm::make_benchmark_learning_model(gpssm::BenchmarkSpec{});
  }
  if (have_particles) cfg.n_particles = overrides.n_particles;
  if (have_iterations) cfg.n_iterations = overrides.n_iterations;
  if (have_burn_in) cfg.burn_in = overrides.burn_in;
  if (have_prior) cfg.prior = overrides.prior;
  if (have_m) cfg.fic_m = overrides.fic_m;
  if (have_seed) cfg.seed = overrides.seed;
  if (!have_burn_in) cfg.burn_in = std::min(cfg.burn_in, cfg.n_iterations - 1);
  cfg.validate();

  const gpssm::Dataset data = gpssm::read_dataset_csv(data_path);
  if (benchmark_style && data.has_states()) {
    model.initial_state.mean = data.states.row(0).transpose();
    model.initial_state.var = gpssm::Vec::Constant(model.state_dim, 1.0);
  }

  std::optional<gpssm::ChainSample> resume_from;
  if (resume && std::filesystem::exists(out_path)) {
    const auto prev = gpssm::read_chain_jsonl(out_path, model.state_dim,
                                              model.state_dim + model.input_dim);
    if (!prev.empty()) {
      resume_from = prev.back();
      std::cout << "resuming after iteration " << resume_from->iteration << "\n";
    }
  }

  std::ofstream os(out_path, resume_from ? std::ios::app : std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + out_path);

  auto last = std::chrono::steady_clock::now();
  const auto on_sample = [&](const gpssm::ChainSample& s) {
    gpssm::append_chain_sample(os, s);
    const auto now = std::chrono::steady_clock::now();
    std::cout << "iteration " << s.iteration << "  log_joint " << s.log_joint << "  ("
              << std::chrono::duration<double>(now - last).count() << " s)\n";
    last = now;
  };
  gpssm::run_pgas(model, data, cfg, on_sample, resume_from);
  std::cout << "chain written to " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& config, const std::string& chain_path,
                 const std::string& train_path, const std::string& test_path,
                 const std::string& out_path, std::optional<gpssm::Index> burn_in) {
  const gpssm::BenchmarkSpec spec = load_spec(config);
  const gpssm::Dataset train = gpssm::read_dataset_csv(train_path);
  const gpssm::Dataset test = gpssm::read_dataset_csv(test_path);
  const gpssm::GpSsmModel model = gpssm::make_benchmark_learning_model(spec, train);
  const auto chain = gpssm::read_chain_jsonl(chain_path, model.state_dim,
                                             model.state_dim + model.input_dim);
  if (chain.empty()) throw std::invalid_argument("evaluate: empty chain file");
  const gpssm::Index burn = burn_in.value_or(spec.pgas.burn_in);

  json report;
  report["n_samples"] = chain.size();
  report["burn_in"] = burn;
  report["seed"] = spec.base_seed;
  report["rows"]["gpssm"]["prediction_rmse"] =
      gpssm::rmse_prediction(chain, burn, model, train, test);
  if (train.has_states())
    report["rows"]["gpssm"]["smoothing_rmse"] =
        gpssm::rmse_smoothing(chain, burn, train.states);

  if (train.has_states()) {
    const gpssm::BaselineFit fit = gpssm::fit_baselines(train);
    const auto f_true = gpssm::MeanFunction::parametric(spec.a, spec.b, spec.c);
    const auto f_b =
        gpssm::MeanFunction::parametric(spec.mean_b[0], spec.mean_b[1], spec.mean_b[2]);
    const auto f_ts = gpssm::MeanFunction::parametric(
        fit.true_structure[0], fit.true_structure[1], fit.true_structure[2]);
    const auto f_lin = gpssm::MeanFunction::affine(fit.linear[0], fit.linear[1], fit.linear[2]);
    report["rows"]["ground_truth_known"]["prediction_rmse"] =
        gpssm::parametric_prediction_rmse(f_true, test);
    report["rows"]["model_b_fixed"]["prediction_rmse"] =
        gpssm::parametric_prediction_rmse(f_b, test);
    report["rows"]["true_structure_learned"]["prediction_rmse"] =
        gpssm::parametric_prediction_rmse(f_ts, test);
    report["rows"]["linear_learned"]["prediction_rmse"] =
        gpssm::parametric_prediction_rmse(f_lin, test);
    report["rows"]["true_structure_learned"]["params"] = {
        fit.true_structure[0], fit.true_structure[1], fit.true_structure[2]};
    report["rows"]["linear_learned"]["params"] = {fit.linear[0], fit.linear[1],
                                                  fit.linear[2]};
  }
  report["metadata"]["baseline_fit"] = "least squares on ground-truth train states";
  gpssm::write_json_file(out_path, report);
  std::cout << "report written to " << out_path << "\n";
  return 0;
}

int cmd_predict(const std::string& config, const std::string& chain_path,
                const std::string& train_path, const std::string& grid_spec,
                const std::string& out_path, std::optional<gpssm::Index> burn_in) {
  const gpssm::BenchmarkSpec spec = load_spec(config);
  const gpssm::Dataset train = gpssm::read_dataset_csv(train_path);
  const gpssm::GpSsmModel model = gpssm::make_benchmark_learning_model(spec, train);
  const auto chain = gpssm::read_chain_jsonl(chain_path, model.state_dim,
                                             model.state_dim + model.input_dim);
  if (chain.empty()) throw std::invalid_argument("predict: empty chain file");
  const gpssm::Index burn = burn_in.value_or(spec.pgas.burn_in);

  const auto axes = parse_grid(grid_spec);
  const gpssm::Index n_x = model.state_dim;
  const gpssm::Index n_u = model.input_dim;
  if (static_cast<gpssm::Index>(axes.size()) != n_x + n_u)
    throw std::invalid_argument("predict: grid must name one axis per state and input dim");

  gpssm::MixturePredictor pred(chain, burn, model, train);

  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot open for writing: " + out_path);
  os.precision(12);
  for (gpssm::Index i = 0; i < n_x; ++i) os << "x_" << (i + 1) << ",";
  for (gpssm::Index i = 0; i < n_u; ++i) os << "u_" << (i + 1) << ",";
  for (gpssm::Index i = 0; i < n_x; ++i)
    os << "mean_" << (i + 1) << ",var_" << (i + 1) << (i + 1 < n_x ? "," : "");
  os << "\n";

  std::vector<gpssm::Index> idx(axes.size(), 0);
  const auto axis_value = [&](std::size_t a) {
    const auto& ax = axes[a];
    return ax.count > 1 ? ax.lo + (ax.hi - ax.lo) * double(idx[a]) / double(ax.count - 1)
                        : 0.5 * (ax.lo + ax.hi);
  };
  bool done = false;
  while (!done) {
    gpssm::Vec x(n_x), u(n_u);
    for (gpssm::Index i = 0; i < n_x; ++i) x[i] = axis_value(i);
    for (gpssm::Index i = 0; i < n_u; ++i) u[i] = axis_value(n_x + i);
    const auto mix = pred.at(x, u);
    const gpssm::Vec mean = mix.mean();
    const gpssm::Vec var = mix.variance();
    for (gpssm::Index i = 0; i < n_x; ++i) os << x[i] << ",";
    for (gpssm::Index i = 0; i < n_u; ++i) os << u[i] << ",";
    for (gpssm::Index i = 0; i < n_x; ++i)
      os << mean[i] << "," << var[i] << (i + 1 < n_x ? "," : "");
    os << "\n";
    done = true;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].count) {
        done = false;
        break;
      }
      idx[a] = 0;
    }
  }
  std::cout << "predictions written to " << out_path << "\n";
  return 0;
}

int cmd_bench(const std::string& config, const std::string& out_dir,
              std::optional<std::uint64_t> seed, std::optional<gpssm::Index> repeats,
              const gpssm::PgasConfig& overrides, bool have_particles,
              bool have_iterations, bool have_burn_in) {
  gpssm::BenchmarkSpec spec = load_spec(config);
  if (seed) spec.base_seed = *seed;
  if (repeats) spec.n_repeats = *repeats;
  if (have_particles) spec.pgas.n_particles = overrides.n_particles;
  if (have_iterations) spec.pgas.n_iterations = overrides.n_iterations;
  if (have_burn_in) spec.pgas.burn_in = overrides.burn_in;
  if (!have_burn_in)
    spec.pgas.burn_in = std::min(spec.pgas.burn_in, spec.pgas.n_iterations - 1);
  spec.validate();
  spec.pgas.validate();
  std::filesystem::create_directories(out_dir);
  const gpssm::BenchSummary sum = gpssm::run_benchmark(spec);
  gpssm::write_json_file(out_dir + "/bench_report.json", sum.to_json(spec));

  std::ofstream os(out_dir + "/bench_summary.csv");
  os << "row,mean,sd\n";
  os.precision(6);
  for (const auto& [name, vals] : sum.values)
    os << name << "," << gpssm::vec_mean(vals) << "," << gpssm::vec_sd(vals) << "\n";
  std::cout << "benchmark report written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian nonparametric state-space learning"};
  app.require_subcommand(1);

  std::string config, out, data, chain, train, test, grid, prior_str = "dense";
  std::uint64_t seed = 0;
  gpssm::Index particles = 20, iterations = 50, burn_in = 10, fic_m = 40, t_train = 200,
               t_test = 10000, repeats = 10;
  bool resume = false;

  auto* sim = app.add_subcommand("simulate", "generate train and test datasets");
  sim->add_option("--config", config);
  sim->add_option("--out", out)->required();
  auto* sim_seed = sim->add_option("--seed", seed);
  auto* sim_tt = sim->add_option("--t-train", t_train);
  auto* sim_te = sim->add_option("--t-test", t_test);

  auto* learn = app.add_subcommand("learn", "run the trajectory/hyperparameter sampler");
  learn->add_option("--config", config);
  learn->add_option("--data", data)->required();
  learn->add_option("--out", out)->required();
  auto* l_np = learn->add_option("--particles", particles);
  auto* l_it = learn->add_option("--iterations", iterations);
  auto* l_bi = learn->add_option("--burn-in", burn_in);
  auto* l_pr = learn->add_option("--prior", prior_str)->check(CLI::IsMember({"dense", "fic"}));
  auto* l_m = learn->add_option("--m", fic_m);
  auto* l_sd = learn->add_option("--seed", seed);
  learn->add_flag("--resume", resume);

  auto* eval = app.add_subcommand("evaluate", "score a chain against held-out data");
  eval->add_option("--config", config);
  eval->add_option("--chain", chain)->required();
  eval->add_option("--train", train)->required();
  eval->add_option("--test", test)->required();
  eval->add_option("--out", out)->required();
  auto* e_bi = eval->add_option("--burn-in", burn_in);

  auto* predict = app.add_subcommand("predict", "evaluate the predictive mixture on a grid");
  predict->add_option("--config", config);
  predict->add_option("--chain", chain)->required();
  predict->add_option("--train", train)->required();
  predict->add_option("--grid", grid)->required();
  predict->add_option("--out", out)->required();
  auto* p_bi = predict->add_option("--burn-in", burn_in);

  auto* bench = app.add_subcommand("bench", "run the full multi-seed evaluation protocol");
  bench->add_option("--config", config);
  bench->add_option("--out", out)->required();
  auto* b_sd = bench->add_option("--seed", seed);
  auto* b_rp = bench->add_option("--repeats", repeats);
  auto* b_np = bench->add_option("--particles", particles);
  auto* b_it = bench->add_option("--iterations", iterations);
  auto* b_bi = bench->add_option("--burn-in", burn_in);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return cmd_simulate(config, out,
                          sim_seed->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
                          sim_tt->count() ? std::optional<gpssm::Index>(t_train) : std::nullopt,
                          sim_te->count() ? std::optional<gpssm::Index>(t_test) : std::nullopt);
    }
    if (learn->parsed()) {
      gpssm::PgasConfig o;
      o.n_particles = particles;
      o.n_iterations = iterations;
      o.burn_in = burn_in;
      o.prior = prior_str == "fic" ? gpssm::PgasConfig::PriorKind::kFic
                                   : gpssm::PgasConfig::PriorKind::kDense;
      o.fic_m = fic_m;
      o.seed = seed;
      return cmd_learn(config, data, out, o, l_np->count() > 0, l_it->count() > 0,
                       l_bi->count() > 0, l_pr->count() > 0, l_m->count() > 0,
                       l_sd->count() > 0, resume);
    }
    if (eval->parsed()) {
      return cmd_evaluate(config, chain, train, test, out,
                          e_bi->count() ? std::optional<gpssm::Index>(burn_in) : std::nullopt);
    }
    if (predict->parsed()) {
      return cmd_predict(config, chain, train, grid, out,
                         p_bi->count() ? std::optional<gpssm::Index>(burn_in) : std::nullopt);
    }
    if (bench->parsed()) {
      gpssm::PgasConfig o;
      o.n_particles = particles;
      o.n_iterations = iterations;
      o.burn_in = burn_in;
      return cmd_bench(config, out,
                       b_sd->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
                       b_rp->count() ? std::optional<gpssm::Index>(repeats) : std::nullopt, o,
                       b_np->count() > 0, b_it->count() > 0, b_bi->count() > 0);
    }
  } catch (const std::exception& e) {
    const nlohmann::json err{{"status", "error"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 1;
}
