#include <doctest.h>

#include <cmath>

#include "gpssm/bench.hpp"
#include "gpssm/model.hpp"
#include "gpssm/rng.hpp"

using namespace gpssm;

namespace {

// Benchmark-shaped model with adjustable noise levels.
GpSsmModel tiny_benchmark_model(double q, double r, double a = 0.5, double b = 25.0,
                                double c = 8.0) {
  BenchmarkSpec spec;
  spec.a = a;
  spec.b = b;
  spec.c = c;
  spec.q = q;
  spec.r = r;
  return make_benchmark_data_model(spec);
}

}  // namespace

TEST_CASE("simulate: one noise-free step of the evaluation system") {
  // x_1 = 8 cos(1.2) with x_0 = 0 and vanishing noise
  const GpSsmModel m = tiny_benchmark_model(1e-30, 1e-30);
  const Dataset ds = simulate(m, 1, 42, benchmark_input);
  CHECK(ds.states(0, 0) == 0.0);
  CHECK(ds.states(1, 0) == doctest::Approx(2.898862035813389).epsilon(1e-9));
  CHECK(ds.latent_f(0, 0) == doctest::Approx(2.898862035813389).epsilon(1e-9));
}

TEST_CASE("simulate: zero dynamics stay at zero") {
  const GpSsmModel m = tiny_benchmark_model(1e-30, 1e-30, 0.0, 0.0, 0.0);
  const Dataset ds = simulate(m, 20, 3, benchmark_input);
  CHECK(ds.states.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(ds.obs.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("simulate: identical seeds give bitwise-identical datasets") {
  const GpSsmModel m = tiny_benchmark_model(10.0, 1.0);
  const Dataset a = simulate(m, 50, 99, benchmark_input);
  const Dataset b = simulate(m, 50, 99, benchmark_input);
  CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.obs - b.obs).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.inputs - b.inputs).cwiseAbs().maxCoeff() == 0.0);
  const Dataset c = simulate(m, 50, 100, benchmark_input);
  CHECK((a.states - c.states).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("simulate: empirical noise moments match q and r") {
  // zero dynamics so states are pure process noise, observations add r
  const double q = 10.0, r = 1.0;
  GpSsmModel m = tiny_benchmark_model(q, r, 0.0, 0.0, 0.0);
  m.measurement = MeasurementModel(MeasurementModel::Kind::kLinearGaussian, 0.0, r);
  const Index n = 100000;
  const Dataset ds = simulate(m, n, 7, {});
  const auto v = ds.states.col(0).tail(n);  // x_{t+1} = v_t
  const double mean_v = v.mean();
  const double var_v = (v.array() - mean_v).square().sum() / double(n - 1);
  const auto e = ds.obs.col(0);  // y = e with zero measurement map
  const double mean_e = e.mean();
  const double var_e = (e.array() - mean_e).square().sum() / double(e.size() - 1);

  const double se_mean_v = std::sqrt(q / n);
  const double se_var_v = q * std::sqrt(2.0 / n);
  CHECK(std::abs(mean_v - 0.0) < 4.0 * se_mean_v);
  CHECK(std::abs(var_v - q) < 4.0 * se_var_v);
  const double se_mean_e = std::sqrt(r / double(e.size()));
  const double se_var_e = r * std::sqrt(2.0 / double(e.size()));
  CHECK(std::abs(mean_e - 0.0) < 4.0 * se_mean_e);
  CHECK(std::abs(var_e - r) < 4.0 * se_var_e);
}

TEST_CASE("simulate: diverging dynamics abort with a diagnostic") {
  GpSsmModel m = tiny_benchmark_model(1.0, 1.0);
  m.mean_fn = MeanFunction::affine(1e12, 0.0, 1e12);
  CHECK_THROWS_AS(simulate(m, 100, 1, benchmark_input), std::runtime_error);
}

TEST_CASE("measurement log-likelihood") {
  const GpSsmModel m = tiny_benchmark_model(10.0, 1.0);
  Vec x(1), y(1);

  SUBCASE("closed-form value at zero residual, unit variance") {
    x << 0.0;
    y << 0.0;
    CHECK(measurement_loglik(m, y, x, 1.0) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-14));
  }
  SUBCASE("exact observation attains the density peak") {
    x << 3.0;
    y << 0.05 * 9.0;
    const double r = 0.37;
    CHECK(measurement_loglik(m, y, x, r) ==
          doctest::Approx(-0.5 * std::log(2.0 * M_PI * r)).epsilon(1e-13));
  }
  SUBCASE("sign-flipped states are indistinguishable under the quadratic map") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
      x << rng.normal() * 10.0;
      y << rng.normal() * 5.0;
      const double lp = measurement_loglik(m, y, x, 1.0);
      const double lm = measurement_loglik(m, y, -x, 1.0);
      CHECK(lp == lm);
    }
  }
  SUBCASE("nonpositive noise variance is rejected") {
    x << 0.0;
    y << 0.0;
    CHECK_THROWS_AS(measurement_loglik(m, y, x, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(measurement_loglik(m, y, x, -1.0), std::invalid_argument);
  }
}

TEST_CASE("model validation names the offending field") {
  BenchmarkSpec spec;
  GpSsmModel m = make_benchmark_learning_model(spec);
  m.process_noise[0] = -1.0;
  try {
    m.validate();
    FAIL("expected validation failure");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("process_noise") != std::string::npos);
  }

  GpSsmModel m2 = make_benchmark_learning_model(spec);
  m2.hyper_priors.coords.pop_back();
  CHECK_THROWS_AS(m2.validate(), std::invalid_argument);
}
