#pragma once

// Synthetic designs for Monte Carlo studies of quantile-specific sparsity and
// the bias / selection metrics used to score estimators on them.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <Eigen/Dense>

#include "bqr/core.hpp"
#include "bqr/dss.hpp"
#include "bqr/error.hpp"
#include "bqr/gibbs.hpp"
#include "bqr/parallel.hpp"
#include "bqr/priors.hpp"
#include "bqr/random.hpp"

namespace bqr {

// y1: N(0,1) errors. y2: t(df) errors. y3: x1 loads on the error only in the
// tails, so its coefficient is F^-1(p) outside (0.15, 0.85) and zero inside.
// y4: x1 coefficient is -1/2 in the lower tail and +1/2 in the upper tail.
enum class Design { Y1, Y2, Y3, Y4 };
enum class Sparsity { Sparse, Block };

inline std::string to_string(Design d) {
  static const char* names[] = {"y1", "y2", "y3", "y4"};
  return names[static_cast<int>(d)];
}
inline std::string to_string(Sparsity s) { return s == Sparsity::Sparse ? "sparse" : "block"; }

inline Design parse_design(std::string_view s) {
  if (s == "y1") return Design::Y1;
  if (s == "y2") return Design::Y2;
  if (s == "y3") return Design::Y3;
  if (s == "y4") return Design::Y4;
  throw ConfigError("unknown design '" + std::string(s) + "'");
}
inline Sparsity parse_sparsity(std::string_view s) {
  if (s == "sparse") return Sparsity::Sparse;
  if (s == "block") return Sparsity::Block;
  throw ConfigError("unknown sparsity pattern '" + std::string(s) + "'");
}

struct DgpSpec {
  Design design = Design::Y1;
  Sparsity sparsity = Sparsity::Sparse;
  int T = 500;
  int K = 100;  // covariates, intercept not included
  double rho = 0.5;
  double error_df = 3.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (T < 2) throw DomainError("dgp.T must be >= 2");
    if (K < 1) throw DomainError("dgp.K must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("dgp.rho must lie in [0,1)");
    if (!(error_df > 0.0)) throw DomainError("dgp.error_df must be positive");
    if (sparsity == Sparsity::Block && (K < 5 || K % 5 != 0))
      throw DomainError("block sparsity needs K divisible by 5, got " + std::to_string(K));
    if ((design == Design::Y3 || design == Design::Y4) && K < 2)
      throw DomainError("designs y3/y4 need K >= 2");
  }
};

inline constexpr double kLowerTail = 0.15;
inline constexpr double kUpperTail = 0.85;

/// True quantile coefficients, intercept first.
struct TrueQuantileCoeffs {
  Design design = Design::Y1;
  VectorXd base;  // K+1 baseline coefficients
  double error_df = 3.0;

  double error_quantile(double p) const {
    if (design == Design::Y2)
      return boost::math::quantile(boost::math::students_t(error_df), p);
    return boost::math::quantile(boost::math::normal(), p);
  }

  VectorXd beta_of_p(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("beta_of_p: p must lie in (0,1)");
    VectorXd b = base;
    b[0] += error_quantile(p);
    const bool tail = p <= kLowerTail || p >= kUpperTail;
    if (design == Design::Y3 && tail) b[1] += error_quantile(p);
    if (design == Design::Y4) {
      if (p <= kLowerTail) b[1] -= 0.5;
      else if (p >= kUpperTail) b[1] += 0.5;
    }
    return b;
  }

  /// Nonzero pattern of the slopes at p (intercept excluded).
  std::vector<bool> slope_support(double p) const {
    const VectorXd b = beta_of_p(p);
    std::vector<bool> s(static_cast<std::size_t>(b.size() - 1));
    for (Eigen::Index j = 1; j < b.size(); ++j) s[static_cast<std::size_t>(j - 1)] = b[j] != 0.0;
    return s;
  }
};

struct SimData {
  Dataset data;
  TrueQuantileCoeffs truth;
};

inline MatrixXd toeplitz_covariance(int K, double rho) {
  MatrixXd omega(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) omega(i, j) = std::pow(rho, std::abs(i - j));
  return omega;
}

/// Baseline coefficient vector (length K+1, intercept first).
inline VectorXd baseline_coefficients(const DgpSpec& spec) {
  const int K = spec.K;
  VectorXd b = VectorXd::Zero(K + 1);
  const bool quantile_specific = spec.design == Design::Y3 || spec.design == Design::Y4;
  // y3/y4 reserve slope 1 for the quantile-varying covariate (baseline zero)
  // and start the constant pattern at slope 2.
  const int first = quantile_specific ? 2 : 1;
  b[0] = quantile_specific ? 0.0 : 1.0;
  if (spec.sparsity == Sparsity::Sparse) {
    static const double sparse_quantile_specific[] = {0.5, 0.33, 0.25};
    static const double sparse_baseline[] = {1.5, 1.0, 0.5, 0.33, 0.25};
    const double* vals = quantile_specific ? sparse_quantile_specific : sparse_baseline;
    const int n = quantile_specific ? 3 : 5;
    for (int i = 0; i < n && first + i <= K; ++i) b[first + i] = vals[i];
  } else {
    const int seg = K / 5;
    for (int i = 0; i < seg; ++i) {
      if (first + i <= K) b[first + i] = 0.5;
      if (first + 3 * seg + i <= K) b[first + 3 * seg + i] = 0.5;
    }
  }
  return b;
}

template <class R>
SimData generate_dgp(const DgpSpec& spec, R& rng) {
  spec.validate();
  const int T = spec.T;
  const int K = spec.K;
  const MatrixXd L = toeplitz_covariance(K, spec.rho).llt().matrixL();
  MatrixXd E(T, K);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < K; ++j) E(t, j) = std_normal(rng);
  MatrixXd X(T, K + 1);
  X.col(0).setOnes();
  X.rightCols(K) = E * L.transpose();

  TrueQuantileCoeffs truth{spec.design, baseline_coefficients(spec), spec.error_df};
  std::student_t_distribution<double> tdist(spec.error_df);
  const double lo = boost::math::quantile(boost::math::normal(), kLowerTail);
  const double hi = boost::math::quantile(boost::math::normal(), kUpperTail);
  VectorXd y = X * truth.base;
  for (int t = 0; t < T; ++t) {
    const double u = spec.design == Design::Y2 ? tdist(rng) : std_normal(rng);
    double e = u;
    if (spec.design == Design::Y3 && (u <= lo || u >= hi)) e += X(t, 1) * u;
    if (spec.design == Design::Y4) {
      if (u <= lo) e -= 0.5 * X(t, 1);
      else if (u >= hi) e += 0.5 * X(t, 1);
    }
    y[t] += e;
  }
  return {Dataset(std::move(y), std::move(X), true), std::move(truth)};
}

/// Mean over replications of ||beta_hat - beta||_2.
inline double coefficient_bias(const std::vector<VectorXd>& estimates,
                               const std::vector<VectorXd>& truths) {
  if (estimates.size() != truths.size() || estimates.empty())
    throw DomainError("coefficient_bias: need equally many estimates and truths");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (estimates[i].size() != truths[i].size()) throw DomainError("coefficient_bias: size mismatch");
    s += (estimates[i] - truths[i]).norm();
  }
  return s / static_cast<double>(estimates.size());
}

struct ConfusionMetrics {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double mcc = 0.0;
  double hit_rate = 0.0;
};

inline ConfusionMetrics confusion_metrics(const std::vector<bool>& selected,
                                          const std::vector<bool>& truth_nonzero) {
  if (selected.size() != truth_nonzero.size())
    throw DomainError("confusion_metrics: length mismatch");
  ConfusionMetrics m;
  for (std::size_t j = 0; j < selected.size(); ++j) {
    if (truth_nonzero[j]) (selected[j] ? m.tp : m.fn)++;
    else (selected[j] ? m.fp : m.tn)++;
  }
  const double tp = m.tp, fp = m.fp, tn = m.tn, fn = m.fn;
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = denom > 0.0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
  m.hit_rate = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Monte Carlo harness

enum class PostProcess { Raw, Savs, Bic, Truth };

struct EstimatorSpec {
  std::string name;
  PriorFamily prior = PriorFamily::Horseshoe;
  PostProcess post = PostProcess::Raw;
};

/// Names follow <prior>BQR[_SAVS|_BIC] with prior in {HS, L, SSVS}, plus
/// TRUTH for the debug estimator that returns the true coefficients.
inline EstimatorSpec parse_estimator(const std::string& name) {
  if (name == "TRUTH") return {name, PriorFamily::Horseshoe, PostProcess::Truth};
  EstimatorSpec e{name, PriorFamily::Horseshoe, PostProcess::Raw};
  std::string rest = name;
  const auto us = rest.find('_');
  if (us != std::string::npos) {
    const std::string suffix = rest.substr(us + 1);
    rest = rest.substr(0, us);
    if (suffix == "SAVS") e.post = PostProcess::Savs;
    else if (suffix == "BIC") e.post = PostProcess::Bic;
    else throw ConfigError("unknown estimator suffix in '" + name + "'");
  }
  if (rest == "HSBQR") e.prior = PriorFamily::Horseshoe;
  else if (rest == "LBQR") e.prior = PriorFamily::Lasso;
  else if (rest == "SSVSBQR") e.prior = PriorFamily::Ssvs;
  else throw ConfigError("unknown estimator '" + name + "'");
  return e;
}

struct MonteCarloConfig {
  DgpSpec dgp;
  std::vector<std::string> estimators{"HSBQR", "HSBQR_SAVS", "HSBQR_BIC"};
  std::vector<double> quantiles{0.05, 0.25, 0.5, 0.75, 0.95};
  int replications = 10;
  std::uint64_t seed = 1;
  ChainConfig chain;
  PriorConfig prior;
  SparsifyConfig sparsify;
  int threads = 1;
};

/// Per (estimator, quantile) outcome of one replication.
struct ReplicationResult {
  bool ok = false;
  std::string error;
  double bias = 0.0;
  double mcc = std::numeric_limits<double>::quiet_NaN();
  double hit_rate = std::numeric_limits<double>::quiet_NaN();
  VectorXd inclusion;  // K slopes; empty for raw continuous chains
};

struct MonteCarloCell {
  std::string estimator;
  double p = 0.5;
  double bias = 0.0;
  double mcc = std::numeric_limits<double>::quiet_NaN();
  double hit_rate = std::numeric_limits<double>::quiet_NaN();
  VectorXd inclusion;  // averaged over successful replications
  int ok = 0;
  int failed = 0;
  std::vector<ReplicationResult> reps;
};

struct MonteCarloReport {
  std::vector<MonteCarloCell> cells;  // estimator-major, quantile-minor

  const MonteCarloCell& cell(const std::string& estimator, double p) const {
    for (const auto& c : cells)
      if (c.estimator == estimator && std::abs(c.p - p) < 1e-12) return c;
    throw DomainError("no cell for " + estimator);
  }
};

namespace detail {

/// Draw-averaged selection metrics over the rows of a 0/nonzero matrix.
template <class M>
std::pair<double, double> average_selection(const M& draws, const std::vector<bool>& truth,
                                            Eigen::Index offset) {
  double mcc = 0.0, hit = 0.0;
  const Eigen::Index K = static_cast<Eigen::Index>(truth.size());
  std::vector<bool> sel(truth.size());
  for (Eigen::Index s = 0; s < draws.rows(); ++s) {
    for (Eigen::Index j = 0; j < K; ++j) sel[static_cast<std::size_t>(j)] = draws(s, j + offset) != 0;
    const auto m = confusion_metrics(sel, truth);
    mcc += m.mcc;
    hit += m.hit_rate;
  }
  const double S = static_cast<double>(draws.rows());
  return {mcc / S, hit / S};
}

inline VectorXd slope_inclusion(const MatrixXd& draws) {
  const Eigen::Index K = draws.cols() - 1;
  return (draws.rightCols(K).array() != 0.0).cast<double>().colwise().mean().transpose();
}

}  // namespace detail

inline MonteCarloReport run_monte_carlo(const MonteCarloConfig& cfg) {
  if (cfg.replications < 1) throw DomainError("replications must be >= 1");
  if (cfg.quantiles.empty()) throw DomainError("need at least one quantile");
  cfg.dgp.validate();
  std::vector<EstimatorSpec> est;
  for (const auto& n : cfg.estimators) est.push_back(parse_estimator(n));
  std::vector<PriorFamily> families;
  for (const auto& e : est)
    if (e.post != PostProcess::Truth &&
        std::find(families.begin(), families.end(), e.prior) == families.end())
      families.push_back(e.prior);

  const std::size_t nq = cfg.quantiles.size();
  const std::size_t R = static_cast<std::size_t>(cfg.replications);
  // results[rep][estimator][quantile]
  std::vector<std::vector<std::vector<ReplicationResult>>> results(
      R, std::vector<std::vector<ReplicationResult>>(est.size(), std::vector<ReplicationResult>(nq)));

  parallel_for(R, cfg.threads, [&](std::size_t rep) {
    Rng data_rng = make_stream(cfg.seed, {rep, 0});
    SimData sim;
    try {
      sim = generate_dgp(cfg.dgp, data_rng);
    } catch (const std::exception& e) {
      for (auto& row : results[rep])
        for (auto& r : row) r.error = e.what();
      return;
    }
    for (std::size_t qi = 0; qi < nq; ++qi) {
      const double p = cfg.quantiles[qi];
      const QuantileLevel q = quantile_constants(p);
      const VectorXd truth = sim.truth.beta_of_p(p);
      const std::vector<bool> support = sim.truth.slope_support(p);
      for (PriorFamily fam : families) {
        PosteriorChain chain;
        std::string failure;
        try {
          ChainConfig cc = cfg.chain;
          cc.seed = derive_seed(cfg.seed, {rep, qi + 1, static_cast<std::uint64_t>(fam) + 1});
          PriorConfig pc = cfg.prior;
          pc.family = fam;
          chain = run_gibbs(sim.data, q, pc, cc);
        } catch (const std::exception& e) {
          failure = e.what();
        }
        for (std::size_t ei = 0; ei < est.size(); ++ei) {
          if (est[ei].post == PostProcess::Truth || est[ei].prior != fam) continue;
          ReplicationResult& r = results[rep][ei][qi];
          if (!failure.empty()) {
            r.error = failure;
            continue;
          }
          try {
            if (est[ei].post == PostProcess::Raw) {
              r.bias = (chain.beta_mean() - truth).norm();
              if (fam == PriorFamily::Ssvs) {
                std::tie(r.mcc, r.hit_rate) = detail::average_selection(chain.gamma_draws, support, 1);
                r.inclusion = chain.gamma_draws.rightCols(chain.K() - 1).cast<double>().colwise().mean().transpose();
              }
            } else {
              SparsifyConfig sc = cfg.sparsify;
              if (est[ei].post == PostProcess::Savs) {
                sc.kappa_mode = KappaMode::Fixed;
                sc.kappa = 2.0;
              } else {
                sc.kappa_mode = KappaMode::QbicGrid;
              }
              const SparsifiedChain sp = sparsify_chain(chain, sim.data, sc);
              r.bias = (sp.alpha_mean() - truth).norm();
              std::tie(r.mcc, r.hit_rate) = detail::average_selection(sp.alpha_draws, support, 1);
              r.inclusion = detail::slope_inclusion(sp.alpha_draws);
            }
            r.ok = true;
          } catch (const std::exception& e) {
            r.error = e.what();
          }
        }
      }
      for (std::size_t ei = 0; ei < est.size(); ++ei) {
        if (est[ei].post != PostProcess::Truth) continue;
        ReplicationResult& r = results[rep][ei][qi];
        r.bias = 0.0;
        const auto m = confusion_metrics(support, support);
        r.mcc = m.mcc;
        r.hit_rate = m.hit_rate;
        r.inclusion.resize(static_cast<Eigen::Index>(support.size()));
        for (std::size_t j = 0; j < support.size(); ++j) r.inclusion[static_cast<Eigen::Index>(j)] = support[j];
        r.ok = true;
      }
    }
  });

  MonteCarloReport report;
  for (std::size_t ei = 0; ei < est.size(); ++ei) {
    for (std::size_t qi = 0; qi < nq; ++qi) {
      MonteCarloCell c;
      c.estimator = est[ei].name;
      c.p = cfg.quantiles[qi];
      double bias = 0.0, mcc = 0.0, hit = 0.0;
      bool have_sel = false;
      for (std::size_t rep = 0; rep < R; ++rep) {
        const auto& r = results[rep][ei][qi];
        c.reps.push_back(r);
        if (!r.ok) {
          ++c.failed;
          continue;
        }
        ++c.ok;
        bias += r.bias;
        if (!std::isnan(r.mcc)) {
          have_sel = true;
          mcc += r.mcc;
          hit += r.hit_rate;
        }
        if (r.inclusion.size() > 0) {
          if (c.inclusion.size() == 0) c.inclusion = VectorXd::Zero(r.inclusion.size());
          c.inclusion += r.inclusion;
        }
      }
      if (c.ok > 0) {
        c.bias = bias / c.ok;
        if (have_sel) {
          c.mcc = mcc / c.ok;
          c.hit_rate = hit / c.ok;
        }
        if (c.inclusion.size() > 0) c.inclusion /= c.ok;
      } else {
        c.bias = std::numeric_limits<double>::quiet_NaN();
      }
      report.cells.push_back(std::move(c));
    }
  }
  return report;
}

}  // namespace bqr
