#pragma once

// Gibbs sampler for quantile regression under the asymmetric-Laplace working
// likelihood. One sweep draws the latent scales z, the ALD scale sigma, the
// coefficients beta (direct Cholesky or the T x T fast sampler), and then the
// prior hyperparameters.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "bqr/core.hpp"
#include "bqr/error.hpp"
#include "bqr/priors.hpp"
#include "bqr/random.hpp"

namespace bqr {

enum class BetaSampler { Direct, Fast, Auto };

inline std::string to_string(BetaSampler s) {
  switch (s) {
    case BetaSampler::Direct: return "direct";
    case BetaSampler::Fast: return "fast";
    case BetaSampler::Auto: return "auto";
  }
  return "unknown";
}

inline BetaSampler parse_beta_sampler(std::string_view name) {
  if (name == "direct") return BetaSampler::Direct;
  if (name == "fast") return BetaSampler::Fast;
  if (name == "auto") return BetaSampler::Auto;
  throw ConfigError("unknown beta sampler '" + std::string(name) + "'");
}

struct ChainConfig {
  int burn_in = 5000;
  int retained = 5000;
  int thin = 1;
  std::uint64_t seed = 20240101;
  BetaSampler beta_sampler = BetaSampler::Auto;

  void validate() const {
    if (burn_in < 0) throw DomainError("burn_in must be >= 0");
    if (retained < 1) throw DomainError("retained must be >= 1");
    if (thin < 1) throw DomainError("thin must be >= 1");
  }
};

struct GibbsState {
  VectorXd beta;
  double sigma = 1.0;
  VectorXd z;
  PriorState prior;

  static GibbsState initial(Eigen::Index T, Eigen::Index K) {
    GibbsState s;
    s.beta = VectorXd::Zero(K);
    s.z = VectorXd::Ones(T);
    s.prior = PriorState::initial(K);
    return s;
  }
};

inline constexpr double kResidualFloor = 1e-10;

/// Inverse-Gaussian parameters of 1/z_t given everything else.
struct LatentPosterior {
  VectorXd c_bar;  // location
  VectorXd d_bar;  // shape (rate in the inverse-Gaussian parameterisation)
};

inline LatentPosterior latent_posterior(const GibbsState& state, const Dataset& data,
                                        const QuantileLevel& q) {
  if (!(state.sigma > 0.0)) throw DomainError("latent_posterior: sigma must be positive");
  const double s = q.xi_sq_plus_2tau_sq();
  const VectorXd r = data.y() - data.X() * state.beta;
  LatentPosterior post;
  post.c_bar.resize(r.size());
  post.d_bar = VectorXd::Constant(r.size(), s / (state.sigma * q.tau_sq));
  const double root = std::sqrt(s);
  for (Eigen::Index t = 0; t < r.size(); ++t)
    post.c_bar[t] = root / std::max(std::abs(r[t]), kResidualFloor);
  return post;
}

template <class R>
VectorXd draw_z(const GibbsState& state, const Dataset& data, const QuantileLevel& q, R& rng) {
  const LatentPosterior post = latent_posterior(state, data, q);
  VectorXd z(post.c_bar.size());
  for (Eigen::Index t = 0; t < z.size(); ++t)
    z[t] = 1.0 / draw_inverse_gaussian(rng, post.c_bar[t], post.d_bar[t]);
  return z;
}

/// Inverse-gamma parameters of sigma given everything else.
struct SigmaPosterior {
  double a_bar;
  double b_bar;
};

inline SigmaPosterior sigma_posterior(const GibbsState& state, const Dataset& data,
                                      const QuantileLevel& q, const PriorConfig& cfg) {
  const VectorXd r = data.y() - data.X() * state.beta - q.xi * state.z;
  double b = cfg.sigma_b;
  for (Eigen::Index t = 0; t < r.size(); ++t) {
    if (!(state.z[t] > 0.0)) throw DomainError("sigma_posterior: z must be positive");
    b += r[t] * r[t] / (2.0 * state.z[t] * q.tau_sq) + state.z[t];
  }
  return {cfg.sigma_a + 1.5 * static_cast<double>(data.T()), b};
}

template <class R>
double draw_sigma(const GibbsState& state, const Dataset& data, const QuantileLevel& q,
                  const PriorConfig& cfg, R& rng) {
  const SigmaPosterior post = sigma_posterior(state, data, q, cfg);
  return draw_inverse_gamma(rng, post.a_bar, post.b_bar);
}

namespace detail {

/// Cholesky of a symmetric positive-definite matrix with one retry after
/// adding eps = 1e-8 * trace / n to the diagonal.
inline Eigen::LLT<MatrixXd> robust_llt(MatrixXd A, const char* what) {
  Eigen::LLT<MatrixXd> llt(A);
  if (llt.info() == Eigen::Success) return llt;
  const double eps = 1e-8 * std::abs(A.trace()) / static_cast<double>(A.rows());
  warn(std::string(what) + ": matrix not positive definite, adding jitter " + std::to_string(eps));
  A.diagonal().array() += eps;
  llt.compute(A);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(what) + ": Cholesky failed after jitter");
  return llt;
}

}  // namespace detail

/// Weights Sigma_t = 1 / (tau^2 z_t sigma) and working response y - xi z.
struct BetaWorkingData {
  VectorXd weight;
  VectorXd response;
};

inline BetaWorkingData beta_working_data(const Dataset& data, const GibbsState& state,
                                         const QuantileLevel& q) {
  BetaWorkingData w;
  w.weight = (q.tau_sq * state.sigma * state.z.array()).inverse().matrix();
  w.response = data.y() - q.xi * state.z;
  return w;
}

/// Direct draw from N(A^{-1} X' Sigma (y - xi z), A^{-1}) with
/// A = X' Sigma X + diag(1/lambda). `eps` is the standard-normal vector; a
/// zero vector returns the posterior mean.
inline VectorXd beta_direct_core(const MatrixXd& X, const BetaWorkingData& w,
                                 const VectorXd& lambda, const VectorXd& eps) {
  const Eigen::Index K = X.cols();
  const MatrixXd Xw = X.array().colwise() * w.weight.array().sqrt();
  MatrixXd A = MatrixXd::Zero(K, K);
  A.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
  A.diagonal() += lambda.cwiseInverse();
  A.triangularView<Eigen::StrictlyUpper>() = A.transpose();
  const auto llt = detail::robust_llt(std::move(A), "draw_beta_direct");
  const VectorXd b = X.transpose() * (w.weight.cwiseProduct(w.response));
  VectorXd mean = llt.solve(b);
  mean += llt.matrixU().solve(eps);
  return mean;
}

/// Fast draw for K >> T. `u` is a draw from N(0, diag(lambda)) and `delta` a
/// standard-normal T-vector; with both zero the result is the posterior mean.
inline VectorXd beta_fast_core(const MatrixXd& X, const BetaWorkingData& w,
                               const VectorXd& lambda, const VectorXd& u,
                               const VectorXd& delta) {
  const Eigen::Index T = X.rows();
  const VectorXd sw = w.weight.array().sqrt();
  const MatrixXd Phi = X.array().colwise() * sw.array();
  const VectorXd alpha = sw.cwiseProduct(w.response);
  const MatrixXd PhiS = Phi * lambda.cwiseSqrt().asDiagonal();
  MatrixXd M = MatrixXd::Identity(T, T);
  M.selfadjointView<Eigen::Lower>().rankUpdate(PhiS);
  M.triangularView<Eigen::StrictlyUpper>() = M.transpose();
  const auto llt = detail::robust_llt(std::move(M), "draw_beta_fast");
  const VectorXd v = Phi * u + delta;
  const VectorXd wv = llt.solve(alpha - v);
  return u + lambda.cwiseProduct(Phi.transpose() * wv);
}

template <class R>
VectorXd draw_beta_direct(const Dataset& data, const GibbsState& state, const VectorXd& lambda,
                          const QuantileLevel& q, R& rng) {
  VectorXd eps(data.K());
  for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = std_normal(rng);
  return beta_direct_core(data.X(), beta_working_data(data, state, q), lambda, eps);
}

template <class R>
VectorXd draw_beta_fast(const Dataset& data, const GibbsState& state, const VectorXd& lambda,
                        const QuantileLevel& q, R& rng) {
  VectorXd u(data.K());
  for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = std::sqrt(lambda[j]) * std_normal(rng);
  VectorXd delta(data.T());
  for (Eigen::Index t = 0; t < delta.size(); ++t) delta[t] = std_normal(rng);
  return beta_fast_core(data.X(), beta_working_data(data, state, q), lambda, u, delta);
}

/// Retained draws of one chain.
struct PosteriorChain {
  MatrixXd beta_draws;           // S x K
  VectorXd sigma_draws;          // S
  Eigen::VectorXi model_size_draws;  // S; SSVS only, -1 otherwise
  Eigen::MatrixXi gamma_draws;   // S x K; SSVS only, empty otherwise
  VectorXd z_mean;               // posterior mean of the latent scales
  QuantileLevel quantile;
  ChainConfig chain;
  PriorConfig prior;
  BetaSampler sampler_used = BetaSampler::Direct;
  double seconds = 0.0;

  Eigen::Index S() const { return beta_draws.rows(); }
  Eigen::Index K() const { return beta_draws.cols(); }
  VectorXd beta_mean() const { return beta_draws.colwise().mean().transpose(); }
  double sigma_mean() const { return sigma_draws.mean(); }
};

inline BetaSampler resolve_sampler(BetaSampler s, Eigen::Index T, Eigen::Index K) {
  if (s != BetaSampler::Auto) return s;
  return K > T ? BetaSampler::Fast : BetaSampler::Direct;
}

/// Runs burn_in + retained * thin sweeps from the default initial state,
/// using a random stream derived from `cc.seed`.
inline PosteriorChain run_gibbs(const Dataset& data, const QuantileLevel& q,
                                const PriorConfig& prior, const ChainConfig& cc) {
  cc.validate();
  prior.validate();
  if (data.T() < 2) throw DomainError("run_gibbs: need at least two observations");
  const auto start = std::chrono::steady_clock::now();
  Rng rng = make_stream(cc.seed, {});
  const Eigen::Index T = data.T();
  const Eigen::Index K = data.K();
  const BetaSampler sampler = resolve_sampler(cc.beta_sampler, T, K);

  PosteriorChain chain;
  chain.quantile = q;
  chain.chain = cc;
  chain.prior = prior;
  chain.sampler_used = sampler;
  chain.beta_draws.resize(cc.retained, K);
  chain.sigma_draws.resize(cc.retained);
  chain.model_size_draws = Eigen::VectorXi::Constant(cc.retained, -1);
  const bool ssvs = prior.family == PriorFamily::Ssvs;
  if (ssvs) chain.gamma_draws.resize(cc.retained, K);
  chain.z_mean = VectorXd::Zero(T);

  GibbsState state = GibbsState::initial(T, K);
  const long total = static_cast<long>(cc.burn_in) + static_cast<long>(cc.retained) * cc.thin;
  Eigen::Index kept = 0;
  for (long it = 0; it < total; ++it) {
    try {
      state.z = draw_z(state, data, q, rng);
      state.sigma = draw_sigma(state, data, q, prior, rng);
      const VectorXd lambda = prior_variance(state.prior, prior);
      state.beta = sampler == BetaSampler::Fast ? draw_beta_fast(data, state, lambda, q, rng)
                                                : draw_beta_direct(data, state, lambda, q, rng);
      if (!state.beta.allFinite() || !std::isfinite(state.sigma))
        throw NumericalError("non-finite draw");
      state.prior = update_prior(state.prior, state.beta, prior, rng);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    if (it < cc.burn_in || (it - cc.burn_in + 1) % cc.thin != 0) continue;
    chain.beta_draws.row(kept) = state.beta.transpose();
    chain.sigma_draws[kept] = state.sigma;
    chain.z_mean += state.z;
    if (ssvs) {
      chain.gamma_draws.row(kept) = state.prior.gamma.transpose();
      chain.model_size_draws[kept] = state.prior.gamma.sum();
    }
    ++kept;
  }
  chain.z_mean /= static_cast<double>(cc.retained);
  chain.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return chain;
}

}  // namespace bqr
