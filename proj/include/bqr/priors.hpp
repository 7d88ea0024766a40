#pragma once

// Shrinkage priors on the quantile regression coefficients. Each family keeps
// its hyperparameters in a PriorState and maps them to the diagonal prior
// variance Lambda* used by the coefficient draw.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "bqr/error.hpp"
#include "bqr/random.hpp"

namespace bqr {

enum class PriorFamily { Lasso, Horseshoe, Ssvs };

inline std::string to_string(PriorFamily f) {
  switch (f) {
    case PriorFamily::Lasso: return "lasso";
    case PriorFamily::Horseshoe: return "horseshoe";
    case PriorFamily::Ssvs: return "ssvs";
  }
  return "unknown";
}

inline PriorFamily parse_prior_family(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "lasso") return PriorFamily::Lasso;
  if (s == "horseshoe" || s == "hs") return PriorFamily::Horseshoe;
  if (s == "ssvs") return PriorFamily::Ssvs;
  throw ConfigError("unknown prior family '" + std::string(name) + "'");
}

struct PriorConfig {
  PriorFamily family = PriorFamily::Horseshoe;
  // Lasso: phi ~ Gamma(a1, b1).
  double a1 = 0.1;
  double b1 = 0.1;
  // SSVS: slab variance lambda_j^2 ~ IG(a2, b2), pi0 ~ Beta(a3, b3), spike
  // variance c * lambda_j^2.
  double a2 = 0.1;
  double b2 = 0.1;
  double a3 = 1.0;
  double b3 = 1.0;
  double c = 1e-5;
  // Use Beta(1 + a3, k - 1 + b3) for pi0 instead of the conjugate update.
  bool literal_pi0 = false;
  // sigma ~ IG(sigma_a, sigma_b).
  double sigma_a = 0.1;
  double sigma_b = 0.1;

  void validate() const {
    const auto pos = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw DomainError(std::string("prior hyperparameter ") + name + " must be positive");
    };
    pos(a1, "a1");
    pos(b1, "b1");
    pos(a2, "a2");
    pos(b2, "b2");
    pos(a3, "a3");
    pos(b3, "b3");
    pos(sigma_a, "sigma.a");
    pos(sigma_b, "sigma.b");
    if (!(c > 0.0 && c < 1.0)) throw DomainError("prior.c must lie in (0,1)");
  }
};

/// Current hyperparameter draws. For the lasso, `lambda_sq[j]` holds the
/// coefficient variance lambda_j itself (the lasso hierarchy puts the
/// exponential prior directly on the variance).
struct PriorState {
  Eigen::VectorXd lambda_sq;
  double nu_sq = 1.0;
  double phi = 1.0;
  Eigen::VectorXi gamma;
  double pi0 = 0.5;

  static PriorState initial(Eigen::Index K) {
    PriorState s;
    s.lambda_sq = Eigen::VectorXd::Ones(K);
    s.gamma = Eigen::VectorXi::Ones(K);
    return s;
  }
};

inline constexpr double kScaleFloor = 1e-12;
inline constexpr double kScaleCeil = 1e12;
inline constexpr double kLassoBetaFloor = 1e-12;

inline double clamp_scale(double v) {
  if (std::isnan(v)) return 1.0;
  return std::clamp(v, kScaleFloor, kScaleCeil);
}

/// Diagonal of Lambda*.
inline Eigen::VectorXd prior_variance(const PriorState& state, const PriorConfig& cfg) {
  switch (cfg.family) {
    case PriorFamily::Lasso:
      return state.lambda_sq;
    case PriorFamily::Horseshoe:
      return state.nu_sq * state.lambda_sq;
    case PriorFamily::Ssvs: {
      Eigen::VectorXd v = state.lambda_sq;
      for (Eigen::Index j = 0; j < v.size(); ++j)
        if (state.gamma[j] == 0) v[j] *= cfg.c;
      return v;
    }
  }
  return state.lambda_sq;
}

struct GammaParams {
  double shape;
  double rate;
};

/// Conditional of the lasso rate: Gamma(K + a1, sum(lambda)/2 + b1).
inline GammaParams lasso_phi_posterior(const PriorState& state, const PriorConfig& cfg) {
  return {static_cast<double>(state.lambda_sq.size()) + cfg.a1,
          0.5 * state.lambda_sq.sum() + cfg.b1};
}

template <class R>
PriorState lasso_update(PriorState state, const Eigen::VectorXd& beta,
                        const PriorConfig& cfg, R& rng) {
  const Eigen::Index K = beta.size();
  for (Eigen::Index j = 0; j < K; ++j) {
    const double b2 = std::max(beta[j] * beta[j], kLassoBetaFloor);
    const double inv = draw_inverse_gaussian(rng, std::sqrt(state.phi / b2), state.phi);
    state.lambda_sq[j] = clamp_scale(1.0 / inv);
  }
  const auto post = lasso_phi_posterior(state, cfg);
  state.phi = clamp_scale(draw_gamma(rng, post.shape, post.rate));
  return state;
}

/// Slice update of the local scales. With eta = 1/lambda^2 and a half-Cauchy
/// prior on lambda, the conditional of eta given beta is proportional to
/// exp(-eta m) / (1 + eta) with m = beta^2 / (2 nu^2). Drawing
/// u ~ U(0, 1/(1+eta)) leaves eta | u exponential, truncated to (0, (1-u)/u).
template <class R>
void horseshoe_local_update(PriorState& state, const Eigen::VectorXd& beta, R& rng) {
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double eta = 1.0 / state.lambda_sq[j];
    const double u = uniform_open(rng) / (1.0 + eta);
    const double upper = (1.0 - u) / u;
    const double rate = beta[j] * beta[j] / (2.0 * state.nu_sq);
    state.lambda_sq[j] = clamp_scale(1.0 / draw_truncated_gamma(rng, 1.0, rate, upper));
  }
}

/// Same scheme for the global scale; all K coefficients enter, so eta | u is
/// a gamma with shape (K+1)/2 truncated to (0, (1-u)/u).
template <class R>
void horseshoe_global_update(PriorState& state, const Eigen::VectorXd& beta, R& rng) {
  const double eta = 1.0 / state.nu_sq;
  const double u = uniform_open(rng) / (1.0 + eta);
  const double upper = (1.0 - u) / u;
  const double rate = 0.5 * (beta.array().square() / state.lambda_sq.array()).sum();
  const double shape = 0.5 * (static_cast<double>(beta.size()) + 1.0);
  state.nu_sq = clamp_scale(1.0 / draw_truncated_gamma(rng, shape, rate, upper));
}

template <class R>
PriorState horseshoe_update(PriorState state, const Eigen::VectorXd& beta, R& rng) {
  horseshoe_local_update(state, beta, rng);
  horseshoe_global_update(state, beta, rng);
  return state;
}

/// P(gamma_j = 1 | beta_j, lambda_j^2, pi0), evaluated on the log-odds scale
/// so that large |beta_j| cannot underflow the spike density.
inline double ssvs_inclusion_probability(double beta_j, double lambda_sq_j, double pi0,
                                         double c) {
  const double log_odds = std::log(pi0) - std::log1p(-pi0) + 0.5 * std::log(c) +
                          beta_j * beta_j / (2.0 * lambda_sq_j) * (1.0 / c - 1.0);
  if (log_odds > 0.0) return 1.0 / (1.0 + std::exp(-log_odds));
  const double e = std::exp(log_odds);
  return e / (1.0 + e);
}

/// Beta parameters for the pi0 conditional given k included coefficients.
inline std::pair<double, double> ssvs_pi0_posterior(int k, Eigen::Index K,
                                                    const PriorConfig& cfg) {
  if (cfg.literal_pi0)
    return {1.0 + cfg.a3, std::max(static_cast<double>(k) - 1.0 + cfg.b3, 1e-3)};
  return {cfg.a3 + k, cfg.b3 + static_cast<double>(K - k)};
}

template <class R>
PriorState ssvs_update(PriorState state, const Eigen::VectorXd& beta,
                       const PriorConfig& cfg, R& rng) {
  const Eigen::Index K = beta.size();
  for (Eigen::Index j = 0; j < K; ++j) {
    const double s = state.gamma[j] == 1 ? 1.0 : cfg.c;
    const double scale = cfg.b2 + beta[j] * beta[j] / (2.0 * s);
    state.lambda_sq[j] = clamp_scale(draw_inverse_gamma(rng, cfg.a2 + 0.5, scale));
  }
  int k = 0;
  for (Eigen::Index j = 0; j < K; ++j) {
    const double prob = ssvs_inclusion_probability(beta[j], state.lambda_sq[j], state.pi0, cfg.c);
    state.gamma[j] = uniform_open(rng) < prob ? 1 : 0;
    k += state.gamma[j];
  }
  const auto [a, b] = ssvs_pi0_posterior(k, K, cfg);
  state.pi0 = std::clamp(draw_beta(rng, a, b), 1e-12, 1.0 - 1e-12);
  return state;
}

template <class R>
PriorState update_prior(const PriorState& state, const Eigen::VectorXd& beta,
                        const PriorConfig& cfg, R& rng) {
  switch (cfg.family) {
    case PriorFamily::Lasso: return lasso_update(state, beta, cfg, rng);
    case PriorFamily::Horseshoe: return horseshoe_update(state, beta, rng);
    case PriorFamily::Ssvs: return ssvs_update(state, beta, cfg, rng);
  }
  return state;
}

}  // namespace bqr
