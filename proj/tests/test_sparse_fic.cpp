#include <doctest.h>

#include <chrono>
#include <memory>
#include <set>

#include "gpssm/sparse_fic.hpp"
#include "support/oracles.hpp"

using namespace gpssm;

namespace {

std::shared_ptr<const TransitionPrior> make_prior(double ls = 1.5, double sf2 = 2.0,
                                                  double q = 0.4, Index n_x = 1,
                                                  Index n_u = 1) {
  Mat l(n_x, n_x + n_u);
  l.setConstant(std::log(ls));
  Vec s = Vec::Constant(n_x, std::log(sf2));
  return std::make_shared<const TransitionPrior>(TransitionPrior{
      CovFunction(l, s), MeanFunction::identity(n_x), Vec::Constant(n_x, q)});
}

void random_points(Rng& rng, Index n, Index n_in, Index n_x, Mat& pts, Mat& tg) {
  pts.resize(n, n_in);
  tg.resize(n, n_x);
  for (Index i = 0; i < n; ++i) {
    pts.row(i) = (rng.normal_vec(n_in) * 2.0).transpose();
    tg.row(i) = (rng.normal_vec(n_x) * 1.5).transpose();
  }
}

}  // namespace

TEST_CASE("sparse covariance restores the exact diagonal") {
  Rng rng(3);
  auto prior = make_prior();
  Mat u(4, 2);
  for (Index i = 0; i < 4; ++i) u.row(i) = rng.normal_vec(2).transpose();
  const InducingSet ind(prior, u);
  for (int rep = 0; rep < 20; ++rep) {
    const Vec z = rng.normal_vec(2) * 3.0;
    CHECK(fic_cov(ind, z, z, true)[0] ==
          doctest::Approx(prior->cov(0, z, z)).epsilon(1e-14));
  }
}

TEST_CASE("sparse covariance is exact between inducing inputs") {
  Rng rng(5);
  auto prior = make_prior();
  Mat u(5, 2);
  for (Index i = 0; i < 5; ++i) u.row(i) = rng.normal_vec(2).transpose();
  const InducingSet ind(prior, u);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) {
      if (i == j) continue;
      const double got = fic_cov(ind, u.row(i).transpose(), u.row(j).transpose(), false)[0];
      const double want = prior->cov(0, u.row(i).transpose(), u.row(j).transpose());
      CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("sparse covariance vanishes off-diagonal far from the inducing set") {
  auto prior = make_prior();
  Mat u(3, 2);
  u << 100.0, 100.0, 101.0, 100.0, 100.0, 101.0;
  const InducingSet ind(prior, u);
  Vec a(2), b(2);
  a << 0.0, 0.0;
  b << 0.5, 0.0;
  CHECK(std::abs(fic_cov(ind, a, b, false)[0]) < 1e-300);
  CHECK(fic_cov(ind, a, a, true)[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("sparse one-step predictive: empty conditioning set is the marginal") {
  auto prior = make_prior(1.5, 2.0, 0.4);
  Rng rng(7);
  Mat u(3, 2);
  for (Index i = 0; i < 3; ++i) u.row(i) = rng.normal_vec(2).transpose();
  auto ind = std::make_shared<const InducingSet>(prior, u);
  FicState f(ind, 5);
  Vec z(2);
  z << 0.3, -0.2;
  const PredictiveMoments pm = f.one_step_predictive(z);
  CHECK(pm.mu[0] == doctest::Approx(0.3).epsilon(1e-10));
  CHECK(pm.var[0] == doctest::Approx(2.0 + 0.4).epsilon(1e-7));
}

TEST_CASE("sparse predictive matches the direct low-rank formulas") {
  Rng rng(11);
  auto prior = make_prior(1.3, 1.8, 0.5, 1, 1);
  Mat u(5, 2);
  for (Index i = 0; i < 5; ++i) u.row(i) = (rng.normal_vec(2) * 1.5).transpose();
  auto ind = std::make_shared<const InducingSet>(prior, u);
  Mat pts, tg;
  random_points(rng, 20, 2, 1, pts, tg);
  const FicState f = FicState::build(ind, pts, tg);
  for (int rep = 0; rep < 10; ++rep) {
    const Vec z = rng.normal_vec(2);
    const PredictiveMoments got = f.one_step_predictive(z);
    const PredictiveMoments want = oracle::fic_predictive(*ind, pts, tg, z);
    CHECK(got.mu[0] == doctest::Approx(want.mu[0]).epsilon(1e-8));
    CHECK(got.var[0] == doctest::Approx(want.var[0]).epsilon(1e-8));
  }
}

TEST_CASE("sparse joint density accumulates the chain rule exactly") {
  Rng rng(13);
  auto prior = make_prior(1.1, 2.2, 0.6);
  Mat u(4, 2);
  for (Index i = 0; i < 4; ++i) u.row(i) = rng.normal_vec(2).transpose();
  auto ind = std::make_shared<const InducingSet>(prior, u);
  FicState f(ind, 12);
  double cumulative = 0.0;
  for (Index j = 0; j < 12; ++j) {
    const Vec z = rng.normal_vec(2) * 1.5;
    const Vec x = rng.normal_vec(1);
    const PredictiveMoments pm = f.one_step_predictive(z);
    cumulative += gaussian_logpdf(x[0], pm.mu[0], pm.var[0]);
    f.extend(z, x);
    CHECK(f.log_joint_prior() == doctest::Approx(cumulative).epsilon(1e-9));
  }
}

TEST_CASE("sparse joint density matches the dense sparse-covariance oracle") {
  Rng rng(17);
  auto prior = make_prior(1.4, 1.6, 0.45);
  Mat u(5, 2);
  for (Index i = 0; i < 5; ++i) u.row(i) = (rng.normal_vec(2) * 2.0).transpose();
  auto ind = std::make_shared<const InducingSet>(prior, u);
  Mat pts, tg;
  random_points(rng, 10, 2, 1, pts, tg);
  const FicState f = FicState::build(ind, pts, tg);
  CHECK(f.log_joint_prior() ==
        doctest::Approx(oracle::fic_log_joint(*ind, pts, tg)).epsilon(1e-8));
}

TEST_CASE("saturated inducing set reproduces the dense prior") {
  Rng rng(19);
  auto prior = make_prior(1.2, 2.0, 0.5, 1, 1);
  Mat pts, tg;
  random_points(rng, 15, 2, 1, pts, tg);
  auto ind = std::make_shared<const InducingSet>(prior, pts);  // U = training inputs
  const FicState f = FicState::build(ind, pts, tg);

  const double dense = oracle::dense_log_joint(*prior, pts, tg);
  CHECK(std::abs(f.log_joint_prior() - dense) < 1e-6 * std::abs(dense) + 1e-6);

  const TrajectoryFactor dense_f = TrajectoryFactor::build(prior, pts, tg);
  for (int rep = 0; rep < 8; ++rep) {
    const Vec z = rng.normal_vec(2);
    const PredictiveMoments sparse_pm = f.one_step_predictive(z);
    const PredictiveMoments dense_pm = dense_f.one_step_predictive(z);
    CHECK(sparse_pm.mu[0] == doctest::Approx(dense_pm.mu[0]).epsilon(1e-6));
    CHECK(std::abs(sparse_pm.var[0] - dense_pm.var[0]) < 1e-6);
  }
}

TEST_CASE("replace and retarget agree with a rebuilt state") {
  Rng rng(23);
  auto prior = make_prior(1.0, 1.5, 0.4);
  Mat u(4, 2);
  for (Index i = 0; i < 4; ++i) u.row(i) = rng.normal_vec(2).transpose();
  auto ind = std::make_shared<const InducingSet>(prior, u);
  Mat pts, tg;
  random_points(rng, 12, 2, 1, pts, tg);
  FicState f = FicState::build(ind, pts, tg);
  for (int step = 0; step < 60; ++step) {
    const Index j = static_cast<Index>(rng.uniform() * 12);
    if (step % 3 == 0) {
      tg.row(j) = rng.normal_vec(1).transpose();
      f.set_target(j, tg.row(j).transpose());
    } else {
      pts.row(j) = (rng.normal_vec(2) * 2.0).transpose();
      tg.row(j) = rng.normal_vec(1).transpose();
      f.replace_point(j, pts.row(j).transpose(), tg.row(j).transpose());
    }
  }
  const FicState rebuilt = FicState::build(ind, pts, tg);
  CHECK(f.log_joint_prior() == doctest::Approx(rebuilt.log_joint_prior()).epsilon(1e-8));
  Rng qr(29);
  for (int rep = 0; rep < 5; ++rep) {
    const Vec z = qr.normal_vec(2);
    const PredictiveMoments a = f.one_step_predictive(z);
    const PredictiveMoments b = rebuilt.one_step_predictive(z);
    CHECK(a.mu[0] == doctest::Approx(b.mu[0]).epsilon(1e-8));
    CHECK(a.var[0] == doctest::Approx(b.var[0]).epsilon(1e-8));
  }
}

TEST_CASE("per-step cost stays flat as the trajectory grows") {
  Rng rng(31);
  auto prior = make_prior(1.5, 2.0, 0.5);
  Mat u(20, 2);
  for (Index i = 0; i < 20; ++i) u.row(i) = (rng.normal_vec(2) * 2.0).transpose();
  auto ind = std::make_shared<const InducingSet>(prior, u);
  FicState f(ind, 450);
  const Vec query = rng.normal_vec(2);

  auto step_cost = [&](Index upto) {
    // predictive + extend, the per-step work of a sweep
    const auto t0 = std::chrono::steady_clock::now();
    while (f.size() < upto) {
      const PredictiveMoments pm = f.one_step_predictive(query);
      (void)pm;
      f.extend(rng.normal_vec(2) * 2.0, rng.normal_vec(1));
    }
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
  };
  const double warm = step_cost(50);
  (void)warm;
  const double at_50 = step_cost(100) / 50.0;    // steps 51..100
  step_cost(400);
  const double at_400 = step_cost(450) / 50.0;  // steps 401..450
  CHECK(at_400 <= 2.0 * at_50);
}

TEST_CASE("inducing selection: subsample keeps the candidates themselves") {
  Rng rng(37);
  Mat cands(6, 2);
  for (Index i = 0; i < 6; ++i) cands.row(i) = rng.normal_vec(2).transpose();
  const Mat all = select_inducing(cands, 6, InducingStrategy::kSubsample, 1);
  CHECK((all - cands).cwiseAbs().maxCoeff() == 0.0);

  const Mat some = select_inducing(cands, 3, InducingStrategy::kSubsample, 9);
  std::set<double> first_col(cands.col(0).begin(), cands.col(0).end());
  for (Index i = 0; i < 3; ++i) CHECK(first_col.count(some(i, 0)) == 1);
  CHECK_THROWS_AS(select_inducing(cands, 7, InducingStrategy::kSubsample, 1),
                  std::invalid_argument);
}

TEST_CASE("inducing selection: grid covers the candidate box") {
  Mat cands(2, 2);
  cands << -20.0, -1.0, 20.0, 1.0;
  const Mat grid = select_inducing(cands, 40, InducingStrategy::kGrid, 0);
  CHECK(grid.rows() == 40);
  CHECK(grid.col(0).minCoeff() == doctest::Approx(-20.0));
  CHECK(grid.col(0).maxCoeff() == doctest::Approx(20.0));
  CHECK(grid.col(1).minCoeff() == doctest::Approx(-1.0));
  CHECK(grid.col(1).maxCoeff() == doctest::Approx(1.0));
  // the long axis gets the fine resolution
  std::set<double> xs(grid.col(0).begin(), grid.col(0).end());
  std::set<double> us(grid.col(1).begin(), grid.col(1).end());
  CHECK(xs.size() * us.size() == 40);
  CHECK(xs.size() >= us.size());
}

TEST_CASE("inducing selection: kmeans is deterministic and rejects degenerate input") {
  Rng rng(41);
  Mat cands(50, 2);
  for (Index i = 0; i < 50; ++i) cands.row(i) = rng.normal_vec(2).transpose();
  const Mat a = select_inducing(cands, 5, InducingStrategy::kKmeans, 123);
  const Mat b = select_inducing(cands, 5, InducingStrategy::kKmeans, 123);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  Mat same = Mat::Ones(10, 2);
  CHECK_THROWS_AS(select_inducing(same, 3, InducingStrategy::kKmeans, 1),
                  std::invalid_argument);
}
