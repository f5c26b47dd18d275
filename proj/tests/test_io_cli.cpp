#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "gpssm/bench.hpp"
#include "gpssm/io.hpp"
#include "gpssm/predict.hpp"

using namespace gpssm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("gpssm_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GPSSM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("dataset csv round-trips bit-exactly") {
  const auto dir = temp_dir("csv");
  BenchmarkSpec spec;
  const Dataset ds = simulate_benchmark(spec, 25, 5);
  const std::string path = (dir / "data.csv").string();
  write_dataset_csv(path, ds);

  // header layout is part of the interface
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "t,u_1,y_1,x_1,f_1");

  const Dataset back = read_dataset_csv(path);
  CHECK((back.inputs - ds.inputs).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.obs - ds.obs).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.states - ds.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.latent_f - ds.latent_f).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("observations-only files are readable too") {
    Dataset bare;
    bare.inputs = ds.inputs;
    bare.obs = ds.obs;
    const std::string p2 = (dir / "bare.csv").string();
    write_dataset_csv(p2, bare);
    const Dataset b2 = read_dataset_csv(p2);
    CHECK_FALSE(b2.has_states());
    CHECK_FALSE(b2.has_latent());
    CHECK((b2.obs - ds.obs).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("malformed rows are rejected with the file named") {
    const std::string p3 = (dir / "bad.csv").string();
    std::ofstream os(p3);
    os << "t,u_1,y_1\n0,1.0\n";
    os.close();
    CHECK_THROWS_AS(read_dataset_csv(p3), std::invalid_argument);
  }
}

TEST_CASE("model config json round-trips and validates keys") {
  BenchmarkSpec spec;
  const GpSsmModel m = make_benchmark_learning_model(spec);
  const nlohmann::json j = model_to_json(m);
  const GpSsmModel back = model_from_json(j);
  CHECK(back.state_dim == m.state_dim);
  CHECK((back.cov_fn.log_lengthscales() - m.cov_fn.log_lengthscales()).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(back.measurement.coeff() == m.measurement.coeff());
  CHECK(back.hyper_priors.coords.size() == m.hyper_priors.coords.size());

  SUBCASE("missing keys are named") {
    nlohmann::json broken = j;
    broken.erase("process_noise");
    try {
      model_from_json(broken);
      FAIL("expected missing-key error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("process_noise") != std::string::npos);
    }
  }
  SUBCASE("missing priors are named") {
    nlohmann::json broken = j;
    broken["priors"].erase("log_obs_noise");
    try {
      model_from_json(broken);
      FAIL("expected missing-prior error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("log_obs_noise") != std::string::npos);
    }
  }
  SUBCASE("unknown extra priors are rejected") {
    nlohmann::json broken = j;
    broken["priors"]["log_bogus"] = {{"log_mean", 0.0}, {"log_sd", 1.0}};
    CHECK_THROWS_AS(model_from_json(broken), std::invalid_argument);
  }
}

TEST_CASE("pgas config json round-trips") {
  PgasConfig c;
  c.n_particles = 7;
  c.n_iterations = 11;
  c.burn_in = 2;
  c.seed = 1234;
  c.prior = PgasConfig::PriorKind::kFic;
  c.fic_m = 17;
  c.fic_strategy = InducingStrategy::kKmeans;
  c.slice.width = 0.5;
  const PgasConfig back = pgas_config_from_json(pgas_config_to_json(c));
  CHECK(back.n_particles == 7);
  CHECK(back.prior == PgasConfig::PriorKind::kFic);
  CHECK(back.fic_m == 17);
  CHECK(back.fic_strategy == InducingStrategy::kKmeans);
  CHECK(back.slice.width == 0.5);

  CHECK_THROWS_AS(pgas_config_from_json(nlohmann::json{{"prior", "banana"}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(pgas_config_from_json(nlohmann::json{{"n_particles", 1}}),
                  std::invalid_argument);
}

TEST_CASE("chain records round-trip through json lines") {
  const auto dir = temp_dir("chain");
  BenchmarkSpec spec;
  spec.t_train = 10;
  const Dataset data = simulate_benchmark(spec, spec.t_train, 3);
  const GpSsmModel m = make_benchmark_learning_model(spec);
  PgasConfig cfg;
  cfg.n_particles = 5;
  cfg.n_iterations = 4;
  cfg.burn_in = 0;
  cfg.seed = 8;

  const std::string path = (dir / "chain.jsonl").string();
  std::ofstream os(path);
  const auto chain =
      run_pgas(m, data, cfg, [&](const ChainSample& s) { append_chain_sample(os, s); });
  os.close();

  const auto back = read_chain_jsonl(path, m.state_dim, m.state_dim + m.input_dim);
  REQUIRE(back.size() == chain.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].iteration == chain[i].iteration);
    CHECK((back[i].trajectory - chain[i].trajectory).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back[i].theta.values() - chain[i].theta.values()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back[i].log_joint == doctest::Approx(chain[i].log_joint).epsilon(1e-12));
  }
}

TEST_CASE("cli: full pipeline simulate -> learn -> evaluate -> predict") {
  const auto dir = temp_dir("cli");
  const std::string d = dir.string();

  REQUIRE(run_cli("simulate --out " + d + " --seed 4 --t-train 30 --t-test 200") == 0);
  CHECK(fs::exists(dir / "train.csv"));
  CHECK(fs::exists(dir / "test.csv"));

  REQUIRE(run_cli("learn --data " + d + "/train.csv --out " + d +
                  "/chain.jsonl --iterations 5 --particles 10 --seed 4") == 0);
  CHECK(fs::exists(dir / "chain.jsonl"));

  SUBCASE("learned chains are reproducible across runs") {
    REQUIRE(run_cli("learn --data " + d + "/train.csv --out " + d +
                    "/chain2.jsonl --iterations 5 --particles 10 --seed 4") == 0);
    std::ifstream a(dir / "chain.jsonl"), b(dir / "chain2.jsonl");
    std::string la, lb;
    while (std::getline(a, la)) {
      REQUIRE(std::getline(b, lb));
      CHECK(la == lb);
    }
  }

  SUBCASE("resume continues the same chain") {
    REQUIRE(run_cli("learn --data " + d + "/train.csv --out " + d +
                    "/chain3.jsonl --iterations 3 --particles 10 --seed 4") == 0);
    REQUIRE(run_cli("learn --data " + d + "/train.csv --out " + d +
                    "/chain3.jsonl --iterations 5 --particles 10 --seed 4 --resume") == 0);
    const auto full = read_chain_jsonl((dir / "chain.jsonl").string(), 1, 2);
    const auto resumed = read_chain_jsonl((dir / "chain3.jsonl").string(), 1, 2);
    REQUIRE(full.size() == resumed.size());
    for (std::size_t i = 0; i < full.size(); ++i)
      CHECK((full[i].trajectory - resumed[i].trajectory).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("evaluate writes a report with the expected schema") {
    REQUIRE(run_cli("evaluate --chain " + d + "/chain.jsonl --train " + d +
                    "/train.csv --test " + d + "/test.csv --out " + d +
                    "/report.json --burn-in 1") == 0);
    const nlohmann::json rep = read_json_file((dir / "report.json").string());
    CHECK(rep.contains("rows"));
    CHECK(rep["rows"].contains("gpssm"));
    CHECK(rep["rows"]["gpssm"].contains("prediction_rmse"));
    CHECK(rep["rows"]["gpssm"].contains("smoothing_rmse"));
    CHECK(rep["rows"].contains("model_b_fixed"));
    CHECK(rep["rows"].contains("linear_learned"));
    CHECK(rep["rows"].contains("true_structure_learned"));
    CHECK(rep["rows"].contains("ground_truth_known"));
    CHECK(rep["rows"]["ground_truth_known"]["prediction_rmse"].get<double>() == 0.0);
    CHECK(rep["n_samples"].get<int>() == 5);
  }

  SUBCASE("predict writes a grid csv") {
    REQUIRE(run_cli("predict --chain " + d + "/chain.jsonl --train " + d +
                    "/train.csv --grid x0=-20:20:9,u0=-1:1:3 --out " + d +
                    "/pred.csv --burn-in 1") == 0);
    std::ifstream is(dir / "pred.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == "x_1,u_1,mean_1,var_1");
    int rows = 0;
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 27);
  }

  SUBCASE("sparse prior engages through the cli") {
    REQUIRE(run_cli("learn --data " + d + "/train.csv --out " + d +
                    "/chain_fic.jsonl --iterations 3 --particles 10 --seed 4 "
                    "--prior fic --m 12") == 0);
    const auto c = read_chain_jsonl((dir / "chain_fic.jsonl").string(), 1, 2);
    CHECK(c.size() == 3);
  }
}

TEST_CASE("cli: failures exit nonzero with a machine-readable error record") {
  const auto dir = temp_dir("clierr");
  const std::string d = dir.string();
  const std::string cmd = std::string(GPSSM_CLI_PATH) + " learn --data " + d +
                          "/missing.csv --out " + d + "/x.jsonl 2> " + d + "/err.txt";
  CHECK(std::system(cmd.c_str()) != 0);
  std::ifstream is(dir / "err.txt");
  std::string line;
  std::getline(is, line);
  const nlohmann::json err = nlohmann::json::parse(line);
  CHECK(err["status"] == "error");
  CHECK(err.contains("message"));
}

TEST_CASE("cli: config keys are validated before running") {
  const auto dir = temp_dir("clicfg");
  const std::string d = dir.string();
  {
    std::ofstream os(dir / "bad.json");
    os << R"({"model": {"state_dim": 1}})";
  }
  {
    std::ofstream os(dir / "data.csv");
    os << "t,y_1\n0,0.1\n1,0.2\n";
  }
  const std::string cmd = std::string(GPSSM_CLI_PATH) + " learn --config " + d +
                          "/bad.json --data " + d + "/data.csv --out " + d +
                          "/x.jsonl 2> " + d + "/err.txt";
  CHECK(std::system(cmd.c_str()) != 0);
  std::ifstream is(dir / "err.txt");
  std::string line;
  std::getline(is, line);
  const nlohmann::json err = nlohmann::json::parse(line);
  CHECK(std::string(err["message"]).find("input_dim") != std::string::npos);
}
