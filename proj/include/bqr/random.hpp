#pragma once

// Random streams and the handful of variate generators the samplers need
// beyond <random>: inverse Gaussian (Michael-Schucany-Haas), inverse gamma,
// beta, and a gamma truncated to (0, upper).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

#include <boost/math/special_functions/gamma.hpp>

#include "bqr/error.hpp"

namespace bqr {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive a seed from a master seed and a task identity. Streams are keyed by
/// what the task is (replication, quantile, window, ...), never by which
/// worker runs it, so results do not depend on the thread count.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(master);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t master,
                       std::initializer_list<std::uint64_t> keys) {
  std::seed_seq seq{static_cast<std::uint32_t>(derive_seed(master, keys)),
                    static_cast<std::uint32_t>(derive_seed(master, keys) >> 32)};
  return Rng(seq);
}

/// Uniform on the open interval (0, 1).
template <class R>
double uniform_open(R& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u;
  do {
    u = unif(rng);
  } while (u <= 0.0);
  return u;
}

template <class R>
double std_normal(R& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  return n01(rng);
}

template <class R>
double draw_gamma(R& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw DomainError("draw_gamma: shape and rate must be positive");
  std::gamma_distribution<double> g(shape, 1.0);
  return g(rng) / rate;
}

/// Inverse gamma with density proportional to x^{-shape-1} exp(-scale / x).
template <class R>
double draw_inverse_gamma(R& rng, double shape, double scale) {
  if (!(scale > 0.0))
    throw DomainError("draw_inverse_gamma: scale must be positive");
  return scale / draw_gamma(rng, shape, 1.0);
}

template <class R>
double draw_beta(R& rng, double a, double b) {
  const double x = draw_gamma(rng, a, 1.0);
  const double y = draw_gamma(rng, b, 1.0);
  if (x + y <= 0.0) return a / (a + b);
  return x / (x + y);
}

/// Inverse Gaussian with mean `mu` and shape `lambda`, via the
/// Michael-Schucany-Haas transformation. `mu` may be +infinity, in which case
/// the draw is from the Levy limit lambda / chi^2_1.
template <class R>
double draw_inverse_gaussian(R& rng, double mu, double lambda) {
  if (!(mu > 0.0) || !(lambda > 0.0))
    throw DomainError("draw_inverse_gaussian: mu and lambda must be positive");
  const double nu = std_normal(rng);
  const double y = nu * nu;
  if (std::isinf(mu)) return lambda / std::max(y, std::numeric_limits<double>::min());
  // x = mu * (1 + a - sqrt(a^2 + 2a)) with a = mu*y/(2 lambda), rewritten to
  // avoid cancellation when a is large.
  const double a = mu * y / (2.0 * lambda);
  const double x = mu / (1.0 + a + std::sqrt(a * a + 2.0 * a));
  if (uniform_open(rng) <= mu / (mu + x)) return x;
  return mu * (mu / x);
}

/// Gamma(shape, rate) restricted to (0, upper).
template <class R>
double draw_truncated_gamma(R& rng, double shape, double rate, double upper) {
  if (!(shape > 0.0) || !(upper > 0.0) || rate < 0.0)
    throw DomainError("draw_truncated_gamma: invalid parameters");
  if (std::isinf(upper)) return draw_gamma(rng, shape, rate);
  const double u = uniform_open(rng);
  const double ru = rate * upper;
  if (ru < 1e-10) {
    // exp(-rate x) is flat on (0, upper): density proportional to x^{shape-1}.
    return upper * std::pow(u, 1.0 / shape);
  }
  if (shape == 1.0) {
    return -std::log1p(-u * -std::expm1(-ru)) / rate;
  }
  const double mass = boost::math::gamma_p(shape, ru);
  if (mass <= std::numeric_limits<double>::min()) {
    return upper * std::pow(u, 1.0 / shape);
  }
  const double x = boost::math::gamma_p_inv(shape, u * mass) / rate;
  return std::clamp(x, std::numeric_limits<double>::min(), upper);
}

}  // namespace bqr
