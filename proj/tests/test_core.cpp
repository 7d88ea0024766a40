#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "bqr/core.hpp"

using namespace bqr;

TEST(QuantileConstants, Median) {
  const auto q = quantile_constants(0.5);
  EXPECT_EQ(q.xi, 0.0);
  EXPECT_EQ(q.tau_sq, 8.0);
}

TEST(QuantileConstants, Tails) {
  const auto lo = quantile_constants(0.05);
  EXPECT_NEAR(lo.xi, 18.9474, 1e-4);
  EXPECT_NEAR(lo.tau_sq, 42.1053, 1e-4);
  const auto hi = quantile_constants(0.95);
  EXPECT_NEAR(hi.xi, -18.9474, 1e-4);
  EXPECT_NEAR(hi.tau_sq, 42.1053, 1e-4);
}

TEST(QuantileConstants, ExactFormulas) {
  for (double p : {0.01, 0.1, 0.3, 0.77, 0.99}) {
    const auto q = quantile_constants(p);
    EXPECT_EQ(q.xi, (1.0 - 2.0 * p) / (p * (1.0 - p)));
    EXPECT_EQ(q.tau_sq, 2.0 / (p * (1.0 - p)));
    EXPECT_GT(q.tau_sq, 0.0);
  }
}

TEST(QuantileConstants, XiAntisymmetric) {
  for (int i = 1; i < 100; ++i) {
    const double p = i / 100.0;
    EXPECT_NEAR(quantile_constants(p).xi, -quantile_constants(1.0 - p).xi, 1e-12 * (1 + std::abs(quantile_constants(p).xi)));
  }
}

TEST(QuantileConstants, RejectsOutOfRange) {
  EXPECT_THROW(quantile_constants(0.0), DomainError);
  EXPECT_THROW(quantile_constants(1.0), DomainError);
  EXPECT_THROW(quantile_constants(-0.2), DomainError);
  EXPECT_THROW(quantile_constants(std::nan("")), DomainError);
}

TEST(TickLoss, Examples) {
  EXPECT_DOUBLE_EQ(tick_loss(1.0, 0.9), 0.9);
  EXPECT_DOUBLE_EQ(tick_loss(-1.0, 0.9), 0.1);
  EXPECT_EQ(tick_loss(0.0, 0.3), 0.0);
  EXPECT_EQ(tick_loss(0.0, 0.7), 0.0);
}

TEST(TickLoss, SymmetrySumIsAbs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-50, 50), P(0.001, 0.999);
  for (int i = 0; i < 10000; ++i) {
    const double u = U(rng), p = P(rng);
    EXPECT_NEAR(tick_loss(u, p) + tick_loss(-u, p), std::abs(u), 1e-12 * (1 + std::abs(u)));
    EXPECT_GE(tick_loss(u, p), 0.0);
  }
}

TEST(AldLogLikelihood, ZeroResidual) {
  Dataset d(VectorXd::Constant(1, 2.0), MatrixXd::Constant(1, 1, 1.0));
  EXPECT_NEAR(ald_log_likelihood(d, VectorXd::Constant(1, 2.0), 1.0, quantile_constants(0.5)),
              std::log(0.25), 1e-15);
}

TEST(AldLogLikelihood, UnitResidual) {
  Dataset d(VectorXd::Constant(1, 3.0), MatrixXd::Constant(1, 1, 1.0));
  EXPECT_NEAR(ald_log_likelihood(d, VectorXd::Constant(1, 2.0), 1.0, quantile_constants(0.5)),
              std::log(0.25) - 0.5, 1e-15);
}

TEST(AldLogLikelihood, TwoObservationsAgainstLoop) {
  // Residuals (1, -1), sigma = 2, p = 0.25.
  VectorXd y(2);
  y << 1.0, -1.0;
  Dataset d(y, MatrixXd::Ones(2, 1));
  const double got = ald_log_likelihood(d, VectorXd::Zero(1), 2.0, quantile_constants(0.25));
  const double closed = 2 * std::log(0.1875) - 2 * std::log(2.0) - (0.25 + 0.75) / 2.0;
  double loop = 0.0;
  const double res[] = {1.0, -1.0};
  for (double r : res) {
    const double rho = r >= 0 ? 0.25 * r : (0.25 - 1.0) * r;
    loop += std::log(0.25 * 0.75 / 2.0) - rho / 2.0;
  }
  EXPECT_NEAR(got, closed, 1e-14);
  EXPECT_NEAR(got, loop, 1e-14);
}

TEST(AldLogLikelihood, RejectsNonPositiveSigma) {
  Dataset d(VectorXd::Ones(1), MatrixXd::Ones(1, 1));
  EXPECT_THROW(ald_log_likelihood(d, VectorXd::Zero(1), 0.0, quantile_constants(0.5)), DomainError);
  EXPECT_THROW(ald_log_likelihood(d, VectorXd::Zero(1), -1.0, quantile_constants(0.5)), DomainError);
}

TEST(AldLogLikelihood, MaximisedAtTickLossMinimiser) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const int T = 41;
  VectorXd y(T);
  MatrixXd X(T, 1);
  for (int t = 0; t < T; ++t) {
    X(t, 0) = 1.0 + std::abs(n01(rng));
    y[t] = 0.7 * X(t, 0) + n01(rng);
  }
  Dataset d(y, X);
  const auto q = quantile_constants(0.3);
  double best_ll = -1e300, best_ll_b = 0, best_loss = 1e300, best_loss_b = 0;
  for (int i = 0; i <= 4000; ++i) {
    const double b = -1.0 + i * 0.001;
    const VectorXd beta = VectorXd::Constant(1, b);
    const double ll = ald_log_likelihood(d, beta, 1.3, q);
    double loss = 0.0;
    for (int t = 0; t < T; ++t) loss += tick_loss(y[t] - X(t, 0) * b, 0.3);
    if (ll > best_ll) best_ll = ll, best_ll_b = b;
    if (loss < best_loss) best_loss = loss, best_loss_b = b;
  }
  EXPECT_NEAR(best_ll_b, best_loss_b, 1e-12);
}

TEST(Dataset, CachesColumnNorms) {
  MatrixXd X(3, 2);
  X << 1, 2, 3, 4, 5, 6;
  Dataset d(VectorXd::Zero(3), X);
  EXPECT_DOUBLE_EQ(d.col_norm_sq()[0], 35.0);
  EXPECT_DOUBLE_EQ(d.col_norm_sq()[1], 56.0);
  EXPECT_EQ(d.T(), 3);
  EXPECT_EQ(d.K(), 2);
}

TEST(Dataset, Validates) {
  EXPECT_THROW(Dataset(VectorXd::Zero(3), MatrixXd::Zero(2, 1)), DomainError);
  MatrixXd X = MatrixXd::Zero(2, 1);
  X(0, 0) = std::nan("");
  EXPECT_THROW(Dataset(VectorXd::Zero(2), X), DomainError);
  EXPECT_THROW(Dataset(VectorXd(), MatrixXd()), DomainError);
}

namespace {
std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << content;
  return path.string();
}
}  // namespace

TEST(CsvLoader, InterceptGoesFirst) {
  const auto path = write_temp("bqr_core_ok.csv", "y,a,b\n1,2,3\n4,5,6\n");
  std::vector<std::string> names;
  const Dataset d = load_dataset_csv(path, true, &names);
  ASSERT_EQ(d.K(), 3);
  EXPECT_EQ(names, (std::vector<std::string>{"intercept", "a", "b"}));
  EXPECT_EQ(d.X()(1, 0), 1.0);
  EXPECT_EQ(d.X()(1, 2), 6.0);
  EXPECT_EQ(d.y()[1], 4.0);
  EXPECT_TRUE(d.has_intercept());
}

TEST(CsvLoader, RejectsBlankAndNa) {
  EXPECT_THROW(load_dataset_csv(write_temp("bqr_core_blank.csv", "y,a\n1,\n"), true), IoError);
  EXPECT_THROW(load_dataset_csv(write_temp("bqr_core_na.csv", "y,a\n1,NA\n"), true), IoError);
  EXPECT_THROW(load_dataset_csv(write_temp("bqr_core_ragged.csv", "y,a\n1,2,3\n"), true), IoError);
  EXPECT_THROW(load_dataset_csv("/nonexistent/file.csv", true), IoError);
}

TEST(CsvLoader, ResponseOnlyWithIntercept) {
  const Dataset d = load_dataset_csv(write_temp("bqr_core_y.csv", "y\n1\n2\n3\n"), true);
  EXPECT_EQ(d.K(), 1);
  EXPECT_EQ(d.T(), 3);
}
