#pragma once

// Posterior sparsification: SAVS soft-thresholding of a coefficient vector,
// the full coordinate-descent solver of the same objective, the quantile BIC,
// and per-draw sparsification of a posterior chain.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "bqr/core.hpp"
#include "bqr/error.hpp"
#include "bqr/gibbs.hpp"
#include "bqr/parallel.hpp"

namespace bqr {

enum class KappaMode { Fixed, QbicGrid };

inline std::vector<double> default_kappa_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.25 * i);
  grid.push_back(10.0);
  return grid;
}

struct SparsifyConfig {
  KappaMode kappa_mode = KappaMode::QbicGrid;
  double kappa = 2.0;  // used when kappa_mode == Fixed
  std::vector<double> kappa_grid = default_kappa_grid();
  bool use_ald_correction = false;
  bool per_draw = true;
  // qBIC constant; NaN means log(K).
  double C_penalty = std::numeric_limits<double>::quiet_NaN();
  // Leave the intercept column (if the dataset has one) unpenalized.
  bool protect_intercept = true;

  void validate() const {
    if (kappa_mode == KappaMode::Fixed) {
      if (!(kappa >= 0.0)) throw DomainError("kappa must be >= 0");
      return;
    }
    if (kappa_grid.empty()) throw DomainError("kappa grid is empty");
    for (std::size_t i = 0; i < kappa_grid.size(); ++i) {
      if (!(kappa_grid[i] >= 0.0)) throw DomainError("kappa grid values must be >= 0");
      if (i > 0 && !(kappa_grid[i] > kappa_grid[i - 1]))
        throw DomainError("kappa grid must be strictly increasing");
    }
  }

  double penalty_constant(Eigen::Index K) const {
    return std::isnan(C_penalty) ? std::log(static_cast<double>(K)) : C_penalty;
  }
};

/// Extra inputs of the thresholding rule beyond the plain SAVS form.
struct ThresholdOptions {
  VectorXd correction;             // d_j = X_j' xi Zbar; empty for none
  std::vector<bool> unpenalized;   // phi_j = 0 where true; empty for none
};

inline double savs_penalty(double beta_bar, double kappa) {
  if (beta_bar == 0.0) return std::numeric_limits<double>::infinity();
  return std::pow(std::abs(beta_bar), -kappa);
}

namespace detail {

inline double soft_threshold(double g, double phi, double norm_sq) {
  const double mag = std::abs(g) - phi;
  if (!(mag > 0.0)) return 0.0;
  return (g >= 0.0 ? mag : -mag) / norm_sq;
}

}  // namespace detail

/// alpha_j = sign(beta_j) ||X_j||^-2 (|beta_j| ||X_j||^2 - phi_j)_+ with
/// phi_j = |beta_j|^-kappa. With a correction d the rule becomes
/// sign(g_j) (|g_j| - phi_j)_+ / ||X_j||^2 with g_j = beta_j ||X_j||^2 + d_j.
inline VectorXd savs_threshold(const VectorXd& beta_bar, const VectorXd& col_norm_sq,
                               double kappa, const ThresholdOptions& opt = {}) {
  const Eigen::Index K = beta_bar.size();
  if (col_norm_sq.size() != K) throw DomainError("savs_threshold: size mismatch");
  const bool corrected = opt.correction.size() > 0;
  VectorXd alpha = VectorXd::Zero(K);
  for (Eigen::Index j = 0; j < K; ++j) {
    const double n2 = col_norm_sq[j];
    if (!(n2 > 0.0)) {
      warn("savs_threshold: column " + std::to_string(j) + " has zero norm, coefficient set to 0");
      continue;
    }
    const bool free = !opt.unpenalized.empty() && opt.unpenalized[static_cast<std::size_t>(j)];
    const double g = beta_bar[j] * n2 + (corrected ? opt.correction[j] : 0.0);
    if (free) {
      alpha[j] = g / n2;
      continue;
    }
    if (beta_bar[j] == 0.0) continue;
    alpha[j] = detail::soft_threshold(g, savs_penalty(beta_bar[j], kappa), n2);
  }
  return alpha;
}

/// Zbar_t = |y_t - x_t'beta| / sqrt(xi^2 + 2 tau^2) + sigma tau^2 / (xi^2 + 2 tau^2).
inline VectorXd ald_correction(const Dataset& data, const VectorXd& beta, double sigma,
                               const QuantileLevel& q) {
  if (!(sigma > 0.0)) throw DomainError("ald_correction: sigma must be positive");
  const double s = q.xi_sq_plus_2tau_sq();
  const VectorXd r = data.y() - data.X() * beta;
  return (r.array().abs() / std::sqrt(s) + sigma * q.tau_sq / s).matrix();
}

/// d = X' xi Zbar, the per-coordinate correction entering the thresholding rule.
inline VectorXd correction_term(const Dataset& data, const VectorXd& zbar, const QuantileLevel& q) {
  return q.xi * (data.X().transpose() * zbar);
}

struct CoordinateDescentResult {
  VectorXd alpha;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_path;  // objective after each sweep; entry 0 is the start
};

/// Value of 0.5 ||X beta_bar - X alpha||^2 + sum phi_j |alpha_j| - alpha' d.
inline double savs_objective(const Dataset& data, const VectorXd& beta_bar, const VectorXd& alpha,
                             const VectorXd& phi, const VectorXd& d) {
  const VectorXd r = data.X() * (beta_bar - alpha);
  double pen = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j)
    if (alpha[j] != 0.0) pen += phi[j] * std::abs(alpha[j]);
  double val = 0.5 * r.squaredNorm() + pen;
  if (d.size() > 0) val -= alpha.dot(d);
  return val;
}

/// Gauss-Seidel coordinate descent on the SAVS objective, started at beta_bar.
/// `correction` is Zbar (not d); pass std::nullopt to drop the term.
inline CoordinateDescentResult coordinate_descent_full(
    const VectorXd& beta_bar, const Dataset& data, double kappa, const QuantileLevel& q,
    const std::optional<VectorXd>& correction = std::nullopt, int max_iter = 100,
    double tol = 1e-10, const std::vector<bool>& unpenalized = {}) {
  const Eigen::Index K = data.K();
  if (beta_bar.size() != K) throw DomainError("coordinate_descent_full: size mismatch");
  const MatrixXd& X = data.X();
  const VectorXd& n2 = data.col_norm_sq();
  VectorXd d;
  if (correction) d = correction_term(data, *correction, q);
  VectorXd phi(K);
  for (Eigen::Index j = 0; j < K; ++j) {
    const bool free = !unpenalized.empty() && unpenalized[static_cast<std::size_t>(j)];
    phi[j] = free ? 0.0 : savs_penalty(beta_bar[j], kappa);
  }

  CoordinateDescentResult res;
  res.alpha = beta_bar;
  VectorXd r = VectorXd::Zero(data.T());  // X beta_bar - X alpha
  res.objective_path.push_back(savs_objective(data, beta_bar, res.alpha, phi, d));
  for (int it = 0; it < max_iter; ++it) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) {
      if (!(n2[j] > 0.0)) {
        r += X.col(j) * res.alpha[j];
        res.alpha[j] = 0.0;
        continue;
      }
      const double old = res.alpha[j];
      const double g = X.col(j).dot(r) + n2[j] * old + (d.size() > 0 ? d[j] : 0.0);
      const double fresh = std::isinf(phi[j]) ? 0.0 : detail::soft_threshold(g, phi[j], n2[j]);
      if (fresh != old) {
        r -= X.col(j) * (fresh - old);
        res.alpha[j] = fresh;
        max_change = std::max(max_change, std::abs(fresh - old));
      }
    }
    res.iterations = it + 1;
    res.objective_path.push_back(savs_objective(data, beta_bar, res.alpha, phi, d));
    if (max_change < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

/// log(sum rho_p(y - X alpha)) + |S| log(T) / (2T) * C.
inline double qbic(const VectorXd& alpha, const Dataset& data, const QuantileLevel& q, double C) {
  const Eigen::Index T = data.T();
  VectorXd fit = VectorXd::Zero(T);
  int size = 0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    if (alpha[j] == 0.0) continue;
    fit += data.X().col(j) * alpha[j];
    ++size;
  }
  double loss = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) loss += tick_loss(data.y()[t] - fit[t], q.p);
  if (!(loss > 0.0)) {
    warn("qbic: tick-loss sum is zero, returning -inf");
    return -std::numeric_limits<double>::infinity();
  }
  const double Td = static_cast<double>(T);
  return std::log(loss) + size * std::log(Td) / (2.0 * Td) * C;
}

struct KappaSelection {
  double kappa;
  VectorXd alpha;
  double score;
};

inline ThresholdOptions threshold_options(const Dataset& data, const SparsifyConfig& cfg,
                                          const VectorXd& d) {
  ThresholdOptions opt;
  opt.correction = d;
  if (cfg.protect_intercept && data.has_intercept()) {
    opt.unpenalized.assign(static_cast<std::size_t>(data.K()), false);
    opt.unpenalized[0] = true;
  }
  return opt;
}

/// Scores every grid value by qBIC and returns the minimiser. Equal scores
/// go to the larger kappa.
inline KappaSelection select_kappa(const VectorXd& beta_bar, const Dataset& data,
                                   const QuantileLevel& q, const SparsifyConfig& cfg,
                                   const VectorXd& d = VectorXd()) {
  const ThresholdOptions opt = threshold_options(data, cfg, d);
  if (cfg.kappa_mode == KappaMode::Fixed) {
    VectorXd a = savs_threshold(beta_bar, data.col_norm_sq(), cfg.kappa, opt);
    const double s = qbic(a, data, q, cfg.penalty_constant(data.K()));
    return {cfg.kappa, std::move(a), s};
  }
  if (cfg.kappa_grid.empty()) throw DomainError("select_kappa: empty grid");
  const double C = cfg.penalty_constant(data.K());
  KappaSelection best{0.0, VectorXd(), std::numeric_limits<double>::infinity()};
  VectorXd prev_alpha;
  double prev_score = 0.0;
  for (double kappa : cfg.kappa_grid) {
    VectorXd a = savs_threshold(beta_bar, data.col_norm_sq(), kappa, opt);
    const double s = (prev_alpha.size() > 0 && a == prev_alpha) ? prev_score : qbic(a, data, q, C);
    if (best.alpha.size() == 0 || s <= best.score) best = {kappa, a, s};
    prev_alpha = std::move(a);
    prev_score = s;
  }
  return best;
}

struct SparsifiedChain {
  MatrixXd alpha_draws;         // S x K (S = 1 when sparsifying the posterior mean)
  VectorXd kappa_hat;           // per row of alpha_draws
  VectorXd inclusion_freq;      // K
  Eigen::VectorXi model_size;   // per row
  VectorXd alpha_mean() const { return alpha_draws.colwise().mean().transpose(); }
};

inline SparsifiedChain sparsify_chain(const PosteriorChain& chain, const Dataset& data,
                                      const SparsifyConfig& cfg, int threads = 1) {
  cfg.validate();
  if (chain.S() < 1) throw DomainError("sparsify_chain: empty chain");
  if (chain.K() != data.K()) throw DomainError("sparsify_chain: chain and data disagree on K");
  const QuantileLevel& q = chain.quantile;
  const Eigen::Index K = data.K();
  const Eigen::Index rows = cfg.per_draw ? chain.S() : 1;
  SparsifiedChain out;
  out.alpha_draws.resize(rows, K);
  out.kappa_hat.resize(rows);
  out.model_size.resize(rows);
  parallel_for(static_cast<std::size_t>(rows), threads, [&](std::size_t i) {
    const auto s = static_cast<Eigen::Index>(i);
    const VectorXd beta = cfg.per_draw ? VectorXd(chain.beta_draws.row(s).transpose()) : chain.beta_mean();
    const double sigma = cfg.per_draw ? chain.sigma_draws[s] : chain.sigma_mean();
    VectorXd d;
    if (cfg.use_ald_correction) d = correction_term(data, ald_correction(data, beta, sigma, q), q);
    const KappaSelection sel = select_kappa(beta, data, q, cfg, d);
    out.alpha_draws.row(s) = sel.alpha.transpose();
    out.kappa_hat[s] = sel.kappa;
    out.model_size[s] = static_cast<int>((sel.alpha.array() != 0.0).count());
  });
  out.inclusion_freq = (out.alpha_draws.array() != 0.0).cast<double>().colwise().mean().transpose();
  return out;
}

}  // namespace bqr
