#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include "bqr/forecast.hpp"

using namespace bqr;

namespace {

VectorXd normal_draws(int n, std::uint64_t seed, double mu = 0.0, double sd = 1.0) {
  Rng rng(seed);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = mu + sd * std_normal(rng);
  return v;
}

Dataset ar_data(int T, std::uint64_t seed) {
  Rng rng(seed);
  VectorXd y(T);
  MatrixXd X(T, 2);
  double prev = 0.0;
  for (int t = 0; t < T; ++t) {
    X(t, 0) = 1.0;
    X(t, 1) = prev;
    y[t] = 0.5 * prev + std_normal(rng);
    prev = y[t];
  }
  return Dataset(y, X, true);
}

}  // namespace

TEST(QuantileGrid, NineteenLevels) {
  const auto g = forecast_quantile_grid();
  ASSERT_EQ(g.size(), 19u);
  EXPECT_DOUBLE_EQ(g.front(), 0.05);
  EXPECT_DOUBLE_EQ(g[9], 0.5);
  EXPECT_DOUBLE_EQ(g.back(), 0.95);
}

TEST(Density, SilvermanByHand) {
  VectorXd s(5);
  s << 1, 2, 3, 4, 10;
  // Mean 4, IQR = 4 - 2 = 2.
  const double m = 4.0;
  const double sd = std::sqrt(((1 - m) * (1 - m) + 4 + 1 + 0 + 36) / 4.0);
  const double expected = 0.9 * std::min(sd, 2.0 / 1.34) * std::pow(5.0, -0.2);
  EXPECT_NEAR(silverman_bandwidth(s), expected, 1e-14);
}

TEST(Density, IntegratesToOneAndMatchesKernelSum) {
  const VectorXd a = normal_draws(3000, 1), b = normal_draws(3000, 2, 3.0, 0.5);
  const CombinedDensity d = combine_density({a, b});
  ASSERT_EQ(d.grid.size(), 512);
  const double dx = d.grid[1] - d.grid[0];
  const double mass = dx * (d.density.sum() - 0.5 * (d.density[0] + d.density[511]));
  EXPECT_NEAR(mass, 1.0, 1e-12);
  EXPECT_TRUE((d.density.array() >= 0).all());
  for (int i = 50; i < 512; i += 60) {
    const double exact = d.pdf(d.grid[i]);
    EXPECT_NEAR(d.density[i], exact, 0.01 * std::max(exact, 0.01)) << i;
  }
}

TEST(Density, RecoversNormalDensity) {
  const CombinedDensity d = combine_density({normal_draws(20000, 3)});
  for (double x : {-1.0, 0.0, 1.5}) {
    const double truth = boost::math::pdf(boost::math::normal(), x);
    EXPECT_NEAR(d.pdf(x) / truth, 1.0, 0.04) << x;
    EXPECT_NEAR(d.cdf(x), boost::math::cdf(boost::math::normal(), x), 0.01) << x;
  }
  EXPECT_NEAR(d.cdf(1e9), 1.0, 1e-15);
  EXPECT_NEAR(d.cdf(-1e9), 0.0, 1e-15);
}

TEST(Density, DegenerateStackWarns) {
  set_warning_handler({});
  const long before = warning_count();
  const CombinedDensity d = combine_density({VectorXd::Constant(10, 2.5)});
  EXPECT_GT(warning_count(), before);
  EXPECT_GT(d.bandwidth, 0.0);
  EXPECT_TRUE(d.density.allFinite());
  EXPECT_THROW(combine_density({VectorXd()}), DomainError);
  set_warning_handler(nullptr);
}

TEST(Scores, LpdsFloor) {
  bool floored = false;
  const CombinedDensity d = combine_density({normal_draws(500, 4)});
  EXPECT_NEAR(score_lpds(d, 0.0, &floored), std::log(d.pdf(0.0)), 1e-15);
  EXPECT_FALSE(floored);
  EXPECT_EQ(score_lpds(d, 1e6, &floored), std::log(1e-300));
  EXPECT_TRUE(floored);
  EXPECT_EQ(score_lpds(0.0), std::log(1e-300));
}

TEST(Scores, CrpsOfNormalForecast) {
  // CRPS(N(0,1), y) = y (2 Phi(y) - 1) + 2 phi(y) - 1/sqrt(pi).
  const VectorXd draws = normal_draws(40000, 5);
  Rng rng(6);
  for (double y : {0.0, 1.0, -2.0}) {
    const boost::math::normal n01;
    const double closed = y * (2 * boost::math::cdf(n01, y) - 1) + 2 * boost::math::pdf(n01, y) -
                          1 / std::sqrt(M_PI);
    EXPECT_NEAR(score_crps(draws, y, rng), closed, 0.01) << y;
  }
}

TEST(Scores, CrpsOfPointMass) {
  Rng rng(7);
  EXPECT_DOUBLE_EQ(score_crps(VectorXd::Constant(50, 1.5), 4.0, rng), 2.5);
  EXPECT_EQ(score_crps(VectorXd::Constant(50, 1.5), 1.5, rng), 0.0);
}

TEST(Scores, CrpsResamplingIsUnbiased) {
  // Averaged over resampling seeds the score approaches the sample CRPS
  // mean|y - x_i| - sum_ij |x_i - x_j| / (2 S^2).
  const VectorXd d = normal_draws(30, 101, 0.0, 3.0);
  const double y = 1.7;
  double exact = 0;
  for (int i = 0; i < 30; ++i) {
    exact += std::abs(y - d[i]) / 30;
    for (int j = 0; j < 30; ++j) exact -= std::abs(d[i] - d[j]) / (2.0 * 900);
  }
  Rng rng(8);
  double avg = 0;
  const int n = 20000;
  for (int r = 0; r < n; ++r) avg += score_crps(d, y, rng) / n;
  EXPECT_NEAR(avg, exact, 0.01);
}

TEST(Scores, QuantileScore) {
  EXPECT_DOUBLE_EQ(score_qs(1.0, 3.0, 0.25), 0.5);
  EXPECT_DOUBLE_EQ(score_qs(3.0, 1.0, 0.25), 1.5);
}

TEST(Scores, QwcrpsUnitScores) {
  // sum_{i=1}^{19} (i/20)^2 / 20 = 2470 / 8000.
  const auto g = forecast_quantile_grid();
  const std::vector<double> ones(19, 1.0);
  double oracle = 0;
  for (int i = 1; i <= 19; ++i) oracle += (i / 20.0) * (i / 20.0) / 20.0;
  EXPECT_NEAR(score_qwcrps(ones, g, 1.0 / 20.0), 0.30875, 1e-12);
  EXPECT_NEAR(score_qwcrps(ones, g, 1.0 / 20.0), oracle, 1e-12);
  EXPECT_THROW(score_qwcrps({1.0}, g), DomainError);
}

TEST(Pit, EmpiricalAndKernel) {
  VectorXd d(4);
  d << 1, 2, 3, 4;
  EXPECT_EQ(pit_empirical(d, 2.5), 0.5);
  EXPECT_EQ(pit_empirical(d, 4.0), 1.0);
  EXPECT_EQ(pit_empirical(d, 0.0), 0.0);
  const CombinedDensity k = combine_density({normal_draws(5000, 9)});
  EXPECT_NEAR(pit_density(k, 0.3), pit_empirical(k.points, 0.3), 0.02);
}

TEST(Pit, CalibratedForecastsAreUniform) {
  Rng rng(10);
  std::vector<double> pits;
  for (int i = 0; i < 400; ++i) {
    const double mu = std_normal(rng);
    const VectorXd draws = normal_draws(500, 1000 + i, mu);
    pits.push_back(pit_empirical(draws, mu + std_normal(rng)));
  }
  EXPECT_GT(ks_uniform_test(pits).pvalue, 0.01);
}

TEST(KsTest, KnownCriticalValue) {
  // The 5% point of the limiting Kolmogorov distribution is about 1.358.
  EXPECT_NEAR(kolmogorov_survival(1.358), 0.05, 5e-4);
  EXPECT_NEAR(kolmogorov_survival(1.628), 0.01, 2e-4);
  EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
  EXPECT_NEAR(kolmogorov_band(100), 0.1358, 1e-12);
}

TEST(KsTest, StatisticByHand) {
  // Sample {0.1, 0.2}: D = max(0.5 - 0.1, 1 - 0.2, 0.1, 0.2 - 0.5) = 0.8.
  const auto r = ks_uniform_test({0.2, 0.1});
  EXPECT_NEAR(r.stat, 0.8, 1e-15);
  std::vector<double> grid;
  for (int i = 0; i < 200; ++i) grid.push_back((i + 0.5) / 200);
  EXPECT_GT(ks_uniform_test(grid).pvalue, 0.99);
  std::vector<double> squeezed(200, 0.5);
  EXPECT_LT(ks_uniform_test(squeezed).pvalue, 1e-10);
}

TEST(DmTest, MatchesHandComputation) {
  VectorXd d(12);
  d << 0.5, -0.2, 0.8, 0.1, 0.3, -0.4, 0.9, 0.2, 0.0, 0.6, -0.1, 0.4;
  for (int h : {1, 2, 3}) {
    const double n = 12, m = d.mean();
    double var = 0;
    for (int i = 0; i < 12; ++i) var += (d[i] - m) * (d[i] - m);
    var /= n;
    for (int k = 1; k < h; ++k) {
      double g = 0;
      for (int i = k; i < 12; ++i) g += (d[i] - m) * (d[i - k] - m);
      var += 2.0 * (1.0 - double(k) / h) * g / n;
    }
    const double stat = m / std::sqrt(var / n);
    const auto r = dm_test(d, h);
    EXPECT_NEAR(r.stat, stat, 1e-12) << h;
    EXPECT_NEAR(r.pvalue, 2 * (1 - boost::math::cdf(boost::math::normal(), std::abs(stat))), 1e-12);
  }
}

TEST(DmTest, Edges) {
  EXPECT_THROW(dm_test(VectorXd::Ones(9), 1), DomainError);
  const auto r = dm_test(VectorXd::Ones(20), 1);
  EXPECT_EQ(r.stat, 0.0);
  EXPECT_EQ(r.pvalue, 1.0);
}

TEST(DirectTraining, PairsResponseWithLaggedRegressors) {
  const Dataset data = ar_data(30, 11);
  const Dataset train = direct_training_data(data, 20, 3);
  EXPECT_EQ(train.T(), 17);
  EXPECT_EQ(train.y()[0], data.y()[3]);
  EXPECT_EQ(train.y()[16], data.y()[19]);
  EXPECT_EQ(train.X().row(16), data.X().row(16));
  EXPECT_TRUE(train.has_intercept());
  EXPECT_THROW(direct_training_data(data, 3, 2), DomainError);
}

TEST(ForecastConfig, Validation) {
  ForecastConfig cfg;
  EXPECT_NO_THROW(cfg.validate(60));
  EXPECT_THROW(cfg.validate(50), DomainError);
  cfg.horizons = {0};
  EXPECT_THROW(cfg.validate(100), DomainError);
  cfg.horizons = {1};
  cfg.quantiles = {1.0};
  EXPECT_THROW(cfg.validate(100), DomainError);
}

TEST(ExpandingWindow, PerfectForecasterScoresZero) {
  ForecastConfig cfg;
  cfg.estimators = {"PERFECT"};
  cfg.chain.retained = 20;
  const auto reps = run_expanding_window(ar_data(120, 12), cfg);
  ASSERT_EQ(reps.size(), 1u);
  EXPECT_EQ(reps[0].windows, 70);
  EXPECT_EQ(reps[0].records.front().origin, 50);
  EXPECT_EQ(reps[0].records.back().origin, 119);
  EXPECT_EQ(reps[0].msfe, 0.0);
  EXPECT_EQ(reps[0].crps, 0.0);
  EXPECT_EQ(reps[0].qwcrps, 0.0);
  for (double p : reps[0].pits) EXPECT_EQ(p, 1.0);
}

TEST(ExpandingWindow, ThreadInvariantAndOrdered) {
  ForecastConfig cfg;
  cfg.estimators = {"HSBQR", "HSBQR_BIC"};
  cfg.quantiles = {0.25, 0.5, 0.75};
  cfg.horizons = {1, 2};
  cfg.chain.burn_in = 30;
  cfg.chain.retained = 40;
  cfg.initial_window = 40;
  const Dataset data = ar_data(48, 13);
  cfg.threads = 1;
  const auto a = run_expanding_window(data, cfg);
  cfg.threads = 4;
  const auto b = run_expanding_window(data, cfg);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0].estimator, "HSBQR");
  EXPECT_EQ(a[1].horizon, 2);
  EXPECT_EQ(a[0].windows, 8);
  EXPECT_EQ(a[1].windows, 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].crps, b[i].crps);
    EXPECT_EQ(a[i].lpds, b[i].lpds);
    EXPECT_EQ(a[i].pits, b[i].pits);
  }
  EXPECT_EQ(a[2].records[0].inclusion.size(), 3u);
  EXPECT_TRUE(a[0].records[0].inclusion.empty());
  for (const auto& rec : a[0].records) {
    EXPECT_LE(rec.quantile_means[0], rec.quantile_means[2] + 1.0);
    EXPECT_EQ(rec.qs.size(), 3u);
  }
}
