#pragma once

// Direct h-step quantile forecasting on an expanding window, combination of
// the 19 quantile predictive distributions into one density, and the point,
// density and calibration scores used to compare forecasters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Dense>

#include "bqr/core.hpp"
#include "bqr/dss.hpp"
#include "bqr/error.hpp"
#include "bqr/gibbs.hpp"
#include "bqr/parallel.hpp"
#include "bqr/priors.hpp"
#include "bqr/random.hpp"
#include "bqr/simlab.hpp"

namespace bqr {

/// 0.05, 0.10, ..., 0.95.
inline std::vector<double> forecast_quantile_grid(int n = 19) {
  if (n < 1) throw DomainError("quantile grid needs at least one level");
  std::vector<double> g;
  for (int i = 1; i <= n; ++i) g.push_back(static_cast<double>(i) / (n + 1));
  return g;
}

// ---------------------------------------------------------------------------
// Density combination

struct CombinedDensity {
  VectorXd grid;
  VectorXd density;
  VectorXd points;  // sorted stacked draws
  double bandwidth = 0.0;

  /// Exact kernel density at x.
  double pdf(double x) const {
    const double c = 1.0 / (points.size() * bandwidth * std::sqrt(2.0 * M_PI));
    double s = 0.0;
    for (Eigen::Index i = 0; i < points.size(); ++i) {
      const double z = (x - points[i]) / bandwidth;
      s += std::exp(-0.5 * z * z);
    }
    return c * s;
  }

  /// Kernel CDF at x.
  double cdf(double x) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < points.size(); ++i)
      s += 0.5 * std::erfc(-(x - points[i]) / (bandwidth * M_SQRT2));
    return s / points.size();
  }
};

/// Mean taken relative to the first element, so a constant vector returns
/// that constant exactly.
inline double shifted_mean(const VectorXd& v) {
  if (v.size() == 0) return 0.0;
  return v[0] + (v.array() - v[0]).mean();
}

inline double sample_sd(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (v.size() - 1));
}

/// Linear-interpolation quantile of sorted data (type 7).
inline double sorted_quantile(const VectorXd& sorted, double p) {
  const double h = (sorted.size() - 1) * p;
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

/// Silverman's rule: 0.9 min(sd, IQR/1.34) n^(-1/5).
inline double silverman_bandwidth(const VectorXd& sorted) {
  const double sd = sample_sd(sorted);
  const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  return 0.9 * spread * std::pow(static_cast<double>(sorted.size()), -0.2);
}

inline constexpr int kDensityGridSize = 512;

/// Gaussian KDE of the stacked draws on a 512-point grid spanning
/// [min - 4bw, max + 4bw], via linear binning and a direct convolution.
inline CombinedDensity combine_density(const std::vector<VectorXd>& per_quantile_draws) {
  Eigen::Index n = 0;
  for (const auto& d : per_quantile_draws) n += d.size();
  if (n < 1) throw DomainError("combine_density: no draws");
  CombinedDensity out;
  out.points.resize(n);
  Eigen::Index k = 0;
  for (const auto& d : per_quantile_draws) {
    out.points.segment(k, d.size()) = d;
    k += d.size();
  }
  if (!out.points.allFinite()) throw NumericalError("combine_density: non-finite draw");
  std::sort(out.points.data(), out.points.data() + n);
  double bw = n >= 2 ? silverman_bandwidth(out.points) : 0.0;
  if (!(bw > 0.0)) {
    bw = 1e-6 * std::max(1.0, std::abs(out.points[0]));
    warn("combine_density: degenerate draws, using bandwidth " + std::to_string(bw));
  }
  out.bandwidth = bw;
  const int G = kDensityGridSize;
  const double lo = out.points[0] - 4.0 * bw;
  const double hi = out.points[n - 1] + 4.0 * bw;
  const double dx = (hi - lo) / (G - 1);
  out.grid = VectorXd::LinSpaced(G, lo, hi);
  VectorXd counts = VectorXd::Zero(G);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pos = (out.points[i] - lo) / dx;
    const int j = std::clamp(static_cast<int>(std::floor(pos)), 0, G - 2);
    const double w = std::clamp(pos - j, 0.0, 1.0);
    counts[j] += 1.0 - w;
    counts[j + 1] += w;
  }
  out.density = VectorXd::Zero(G);
  const int reach = std::min(G - 1, static_cast<int>(std::ceil(8.0 * bw / dx)));
  std::vector<double> kernel(static_cast<std::size_t>(reach + 1));
  for (int m = 0; m <= reach; ++m) {
    const double z = m * dx / bw;
    kernel[static_cast<std::size_t>(m)] = std::exp(-0.5 * z * z);
  }
  for (int j = 0; j < G; ++j) {
    if (counts[j] == 0.0) continue;
    const int a = std::max(0, j - reach), b = std::min(G - 1, j + reach);
    for (int i = a; i <= b; ++i) out.density[i] += counts[j] * kernel[static_cast<std::size_t>(std::abs(i - j))];
  }
  // Normalise by the trapezoid rule on the grid.
  const double mass = dx * (out.density.sum() - 0.5 * (out.density[0] + out.density[G - 1]));
  out.density /= mass;
  return out;
}

// ---------------------------------------------------------------------------
// Scores

inline constexpr double kLpdsFloor = 1e-300;

/// log density at the realised value, floored at log(1e-300).
inline double score_lpds(const CombinedDensity& density, double realized, bool* floored = nullptr) {
  const double f = density.pdf(realized);
  const bool low = !(f > kLpdsFloor);
  if (floored) *floored = low;
  return std::log(low ? kLpdsFloor : f);
}

inline double score_lpds(double density_value, bool* floored = nullptr) {
  const bool low = !(density_value > kLpdsFloor);
  if (floored) *floored = low;
  return std::log(low ? kLpdsFloor : density_value);
}

/// mean|y - A| - 0.5 mean|A - B| with A, B independent uniform resamples of
/// the draws, each of size S.
template <class R>
double score_crps(const VectorXd& draws, double realized, R& rng) {
  const Eigen::Index S = draws.size();
  if (S < 1) throw DomainError("score_crps: need at least one draw");
  std::uniform_int_distribution<Eigen::Index> pick(0, S - 1);
  double a_term = 0.0, ab_term = 0.0;
  for (Eigen::Index i = 0; i < S; ++i) {
    const double a = draws[pick(rng)];
    const double b = draws[pick(rng)];
    a_term += std::abs(realized - a);
    ab_term += std::abs(a - b);
  }
  return (a_term - 0.5 * ab_term) / static_cast<double>(S);
}

inline double score_qs(double yhat, double realized, double p) {
  return tick_loss(realized - yhat, p);
}

/// Riemann sum of (1-p)^2 QS_p over the levels with spacing dp.
inline double score_qwcrps(const std::vector<double>& qs_by_p, const std::vector<double>& levels,
                           double dp = 0.05) {
  if (qs_by_p.size() != levels.size()) throw DomainError("score_qwcrps: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) s += (1.0 - levels[i]) * (1.0 - levels[i]) * qs_by_p[i];
  return s * dp;
}

/// Share of draws at or below the realised value.
inline double pit_empirical(const VectorXd& draws, double realized) {
  if (draws.size() < 1) throw DomainError("pit: no draws");
  return static_cast<double>((draws.array() <= realized).count()) / static_cast<double>(draws.size());
}

inline double pit_density(const CombinedDensity& density, double realized) {
  return density.cdf(realized);
}

struct TestResult {
  double stat = 0.0;
  double pvalue = 1.0;
};

/// Diebold-Mariano test on loss differentials with a Bartlett HAC variance
/// using h-1 lags. Two-sided normal p-value.
inline TestResult dm_test(const VectorXd& d, int h) {
  const Eigen::Index n = d.size();
  if (n < 10) throw DomainError("dm_test: need at least 10 observations, got " + std::to_string(n));
  if (h < 1) throw DomainError("dm_test: horizon must be >= 1");
  const double mean = d.mean();
  const VectorXd c = d.array() - mean;
  double var = c.squaredNorm() / n;
  for (int k = 1; k < h && k < n; ++k) {
    const double gamma = c.head(n - k).dot(c.tail(n - k)) / n;
    var += 2.0 * (1.0 - static_cast<double>(k) / h) * gamma;
  }
  if (!(var > 0.0)) return {0.0, 1.0};
  const double stat = mean / std::sqrt(var / n);
  const double pval = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(stat)));
  return {stat, pval};
}

/// Limiting Kolmogorov survival function, sum_{k>=1} 2 (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
    s += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

/// One-sample KS test of uniformity on [0,1], with Stephens' small-sample
/// correction of the statistic.
inline TestResult ks_uniform_test(std::vector<double> u) {
  if (u.empty()) throw DomainError("ks_uniform_test: empty sample");
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max(d, (i + 1) / n - u[i]);
    d = std::max(d, u[i] - i / n);
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

/// Half-width of the 95% Kolmogorov band around the 45-degree line.
inline double kolmogorov_band(std::size_t n) { return 1.358 / std::sqrt(static_cast<double>(n)); }

// ---------------------------------------------------------------------------
// Expanding-window evaluation

/// Estimators accepted by the forecaster: the simulation names
/// (HSBQR, HSBQR_BIC, LBQR_SAVS, SSVSBQR, ...) plus PERFECT, a debug
/// forecaster whose draws all equal the realised value.
struct ForecastEstimator {
  std::string name;
  bool perfect = false;
  EstimatorSpec spec;
};

inline ForecastEstimator parse_forecast_estimator(const std::string& name) {
  if (name == "PERFECT") return {name, true, {}};
  return {name, false, parse_estimator(name)};
}

struct ForecastConfig {
  std::vector<int> horizons{1};
  std::vector<double> quantiles = forecast_quantile_grid();
  std::vector<std::string> estimators{"HSBQR", "HSBQR_BIC"};
  int initial_window = 50;
  std::uint64_t seed = 1;
  ChainConfig chain;
  PriorConfig prior;
  SparsifyConfig sparsify;
  int threads = 1;
  bool keep_densities = false;

  void validate(Eigen::Index T) const {
    if (horizons.empty()) throw DomainError("forecast: no horizons");
    for (int h : horizons)
      if (h < 1) throw DomainError("forecast: horizons must be >= 1");
    if (quantiles.empty()) throw DomainError("forecast: no quantiles");
    for (double p : quantiles)
      if (!(p > 0.0 && p < 1.0)) throw DomainError("forecast: quantiles must lie in (0,1)");
    if (initial_window < 2) throw DomainError("forecast: initial window must be >= 2");
    const int hmax = *std::max_element(horizons.begin(), horizons.end());
    if (T < initial_window + hmax)
      throw DomainError("forecast: need T >= initial_window + max horizon");
  }
};

/// Training rows for a direct forecast from origin t (1-indexed): pairs
/// (y_{s+h}, x_s) for s = 1..t-h.
inline Dataset direct_training_data(const Dataset& data, Eigen::Index t, int h) {
  const Eigen::Index n = t - h;
  if (n < 2) throw DomainError("direct forecast: fewer than two training pairs");
  return Dataset(data.y().segment(h, n), data.X().topRows(n), data.has_intercept());
}

/// Quantile predictive draws x_t' beta_p^s for every estimator and level:
/// draws[estimator][quantile] is a length-S vector. For sparsified
/// estimators inclusion[estimator][quantile] holds the per-covariate
/// inclusion frequencies of the window's chain.
struct DirectForecast {
  std::vector<std::vector<VectorXd>> draws;
  std::vector<std::vector<VectorXd>> inclusion;
};

inline DirectForecast direct_forecast(const Dataset& data, Eigen::Index t, int h,
                                      const std::vector<ForecastEstimator>& est,
                                      const ForecastConfig& cfg, double realized) {
  const Dataset train = direct_training_data(data, t, h);
  const VectorXd x = data.X().row(t - 1).transpose();
  const std::size_t nq = cfg.quantiles.size();
  DirectForecast res;
  res.draws.assign(est.size(), std::vector<VectorXd>(nq));
  res.inclusion.assign(est.size(), std::vector<VectorXd>(nq));
  auto& out = res.draws;
  std::vector<PriorFamily> families;
  for (const auto& e : est)
    if (!e.perfect && std::find(families.begin(), families.end(), e.spec.prior) == families.end())
      families.push_back(e.spec.prior);
  for (std::size_t qi = 0; qi < nq; ++qi) {
    const QuantileLevel q = quantile_constants(cfg.quantiles[qi]);
    for (PriorFamily fam : families) {
      ChainConfig cc = cfg.chain;
      cc.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(h), static_cast<std::uint64_t>(t),
                                       qi, static_cast<std::uint64_t>(fam)});
      PriorConfig pc = cfg.prior;
      pc.family = fam;
      const PosteriorChain chain = run_gibbs(train, q, pc, cc);
      for (std::size_t ei = 0; ei < est.size(); ++ei) {
        if (est[ei].perfect || est[ei].spec.prior != fam) continue;
        const PostProcess post = est[ei].spec.post;
        if (post == PostProcess::Raw || post == PostProcess::Truth) {
          out[ei][qi] = chain.beta_draws * x;
        } else {
          SparsifyConfig sc = cfg.sparsify;
          sc.kappa_mode = post == PostProcess::Savs ? KappaMode::Fixed : KappaMode::QbicGrid;
          if (post == PostProcess::Savs) sc.kappa = 2.0;
          const SparsifiedChain sp = sparsify_chain(chain, train, sc);
          out[ei][qi] = sp.alpha_draws * x;
          res.inclusion[ei][qi] = sp.inclusion_freq;
        }
      }
    }
  }
  for (std::size_t ei = 0; ei < est.size(); ++ei)
    if (est[ei].perfect)
      for (std::size_t qi = 0; qi < nq; ++qi) out[ei][qi] = VectorXd::Constant(cfg.chain.retained, realized);
  return res;
}

struct ForecastRecord {
  Eigen::Index origin = 0;  // 1-indexed window end t
  int horizon = 1;
  double realized = 0.0;
  bool ok = false;
  std::string error;
  std::vector<double> quantile_means;  // expected quantile per level
  double point = 0.0;                  // mean of stacked draws
  double lpds = 0.0;
  bool lpds_floored = false;
  double crps = 0.0;
  double qwcrps = 0.0;
  std::vector<double> qs;
  double pit = 0.0;
  std::vector<VectorXd> inclusion;  // per level; sparsified estimators only
  CombinedDensity density;  // filled only with keep_densities
};

struct EvalReport {
  std::string estimator;
  int horizon = 1;
  double msfe = 0.0;
  double lpds = 0.0;
  double crps = 0.0;
  double qwcrps = 0.0;
  std::vector<double> qs_by_p;
  std::vector<double> pits;
  int windows = 0;
  int failed = 0;
  std::vector<ForecastRecord> records;
};

/// Scores one window from the per-level draws.
template <class R>
ForecastRecord score_window(const std::vector<VectorXd>& draws, const std::vector<double>& levels,
                            double realized, R& rng, bool keep_density) {
  ForecastRecord rec;
  rec.realized = realized;
  const CombinedDensity dens = combine_density(draws);
  rec.point = shifted_mean(dens.points);
  rec.lpds = score_lpds(dens, realized, &rec.lpds_floored);
  rec.crps = score_crps(dens.points, realized, rng);
  rec.pit = pit_empirical(dens.points, realized);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    rec.quantile_means.push_back(shifted_mean(draws[i]));
    rec.qs.push_back(score_qs(rec.quantile_means.back(), realized, levels[i]));
  }
  rec.qwcrps = score_qwcrps(rec.qs, levels, 1.0 / static_cast<double>(levels.size() + 1));
  if (keep_density) rec.density = dens;
  rec.ok = true;
  return rec;
}

/// One EvalReport per (estimator, horizon), estimator-major.
inline std::vector<EvalReport> run_expanding_window(const Dataset& data, const ForecastConfig& cfg) {
  cfg.validate(data.T());
  std::vector<ForecastEstimator> est;
  for (const auto& n : cfg.estimators) est.push_back(parse_forecast_estimator(n));
  if (est.empty()) throw DomainError("forecast: no estimators");

  struct Task {
    int h;
    Eigen::Index t;
  };
  std::vector<Task> tasks;
  for (int h : cfg.horizons)
    for (Eigen::Index t = cfg.initial_window; t + h <= data.T(); ++t) tasks.push_back({h, t});

  // records[task][estimator]
  std::vector<std::vector<ForecastRecord>> records(tasks.size(), std::vector<ForecastRecord>(est.size()));
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    const Task task = tasks[i];
    const double realized = data.y()[task.t + task.h - 1];
    DirectForecast fc;
    std::string failure;
    try {
      fc = direct_forecast(data, task.t, task.h, est, cfg, realized);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    for (std::size_t ei = 0; ei < est.size(); ++ei) {
      ForecastRecord& rec = records[i][ei];
      if (failure.empty()) {
        try {
          Rng rng = make_stream(cfg.seed, {static_cast<std::uint64_t>(task.h),
                                           static_cast<std::uint64_t>(task.t), ei, 0xC0FFEEULL});
          rec = score_window(fc.draws[ei], cfg.quantiles, realized, rng, cfg.keep_densities);
          if (fc.inclusion[ei].front().size() > 0) rec.inclusion = fc.inclusion[ei];
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
      } else {
        rec.error = failure;
      }
      rec.origin = task.t;
      rec.horizon = task.h;
      rec.realized = realized;
    }
  });

  std::vector<EvalReport> reports;
  for (std::size_t ei = 0; ei < est.size(); ++ei) {
    for (int h : cfg.horizons) {
      EvalReport rep;
      rep.estimator = est[ei].name;
      rep.horizon = h;
      rep.qs_by_p.assign(cfg.quantiles.size(), 0.0);
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].h != h) continue;
        const ForecastRecord& rec = records[i][ei];
        rep.records.push_back(rec);
        if (!rec.ok) {
          ++rep.failed;
          warn("forecast window t=" + std::to_string(rec.origin) + " h=" + std::to_string(h) +
               " failed: " + rec.error);
          continue;
        }
        ++rep.windows;
        rep.msfe += (rec.realized - rec.point) * (rec.realized - rec.point);
        rep.lpds += rec.lpds;
        rep.crps += rec.crps;
        rep.qwcrps += rec.qwcrps;
        for (std::size_t k = 0; k < rec.qs.size(); ++k) rep.qs_by_p[k] += rec.qs[k];
        rep.pits.push_back(rec.pit);
      }
      if (rep.windows > 0) {
        const double n = rep.windows;
        rep.msfe /= n;
        rep.lpds /= n;
        rep.crps /= n;
        rep.qwcrps /= n;
        for (auto& v : rep.qs_by_p) v /= n;
      }
      reports.push_back(std::move(rep));
    }
  }
  return reports;
}

}  // namespace bqr
