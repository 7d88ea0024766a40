#include <cmath>

#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "bqr/random.hpp"

using namespace bqr;

TEST(Streams, KeyedByIdentity) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  Rng a = make_stream(5, {1}), b = make_stream(5, {1});
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a(), b());
}

TEST(InverseGaussian, MeanAndVariance) {
  Rng rng(11);
  const double mu = 1.7, lambda = 3.2;
  const int n = 400000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = draw_inverse_gaussian(rng, mu, lambda);
    ASSERT_GT(x, 0.0);
    s += x;
    s2 += x * x;
  }
  const double m = s / n, v = s2 / n - m * m;
  EXPECT_NEAR(m / mu, 1.0, 0.005);
  EXPECT_NEAR(v / (mu * mu * mu / lambda), 1.0, 0.03);
}

TEST(InverseGaussian, ExtremeLocationStaysPositive) {
  Rng rng(12);
  for (double mu : {1e-8, 1e6, 1e12}) {
    for (int i = 0; i < 1000; ++i) {
      const double x = draw_inverse_gaussian(rng, mu, 2.0);
      ASSERT_TRUE(std::isfinite(x));
      ASSERT_GT(x, 0.0);
    }
  }
}

TEST(InverseGamma, Mean) {
  Rng rng(13);
  double s = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) s += draw_inverse_gamma(rng, 3.0, 2.0);
  EXPECT_NEAR(s / n, 1.0, 0.02);
}

TEST(TruncatedGamma, StaysInRangeAndMatchesMean) {
  Rng rng(14);
  for (double shape : {0.5, 1.0, 3.0}) {
    const double rate = 1.5, upper = 0.8;
    const int n = 200000;
    double s = 0;
    for (int i = 0; i < n; ++i) {
      const double x = draw_truncated_gamma(rng, shape, rate, upper);
      ASSERT_GT(x, 0.0);
      ASSERT_LE(x, upper);
      s += x;
    }
    // E[X | X < u] = (shape / rate) P(shape + 1, rate u) / P(shape, rate u).
    const double expected = shape / rate * boost::math::gamma_p(shape + 1, rate * upper) /
                            boost::math::gamma_p(shape, rate * upper);
    EXPECT_NEAR(s / n / expected, 1.0, 0.01) << "shape " << shape;
  }
}

TEST(TruncatedGamma, DegenerateRates) {
  Rng rng(15);
  for (int i = 0; i < 1000; ++i) {
    const double a = draw_truncated_gamma(rng, 1.0, 0.0, 5.0);
    ASSERT_GT(a, 0.0);
    ASSERT_LE(a, 5.0);
    const double b = draw_truncated_gamma(rng, 2.5, 1e6, 1e6);
    ASSERT_TRUE(std::isfinite(b));
    ASSERT_GT(b, 0.0);
  }
}
