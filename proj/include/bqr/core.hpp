#pragma once

// Quantile-level constants, the tick loss, the asymmetric-Laplace working
// likelihood, and the Dataset container shared by every other module.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bqr/error.hpp"

namespace bqr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A quantile level p with the constants of the exponential-normal mixture
/// representation of the asymmetric Laplace error:
///   eps = xi * z + sqrt(tau_sq * sigma * z) * u,  z ~ Exp(sigma), u ~ N(0,1).
struct QuantileLevel {
  double p = 0.5;
  double xi = 0.0;
  double tau_sq = 8.0;

  /// xi^2 + 2 tau^2, which appears in every latent-scale conditional.
  double xi_sq_plus_2tau_sq() const { return xi * xi + 2.0 * tau_sq; }
};

inline QuantileLevel quantile_constants(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("quantile level must lie in (0,1), got " + std::to_string(p));
  const double v = p * (1.0 - p);
  return QuantileLevel{p, (1.0 - 2.0 * p) / v, 2.0 / v};
}

/// rho_p(u) = [p - 1{u < 0}] u.
inline double tick_loss(double u, double p) {
  return (p - (u < 0.0 ? 1.0 : 0.0)) * u;
}

/// Response vector and design matrix. Column norms are cached because the
/// sparsification step uses them for every posterior draw.
class Dataset {
 public:
  Dataset() = default;

  Dataset(VectorXd y, MatrixXd X, bool has_intercept = false)
      : y_(std::move(y)), X_(std::move(X)), has_intercept_(has_intercept) {
    if (y_.size() < 1 || X_.cols() < 1)
      throw DomainError("Dataset: need T >= 1 observations and K >= 1 covariates");
    if (X_.rows() != y_.size())
      throw DomainError("Dataset: X has " + std::to_string(X_.rows()) +
                        " rows but y has " + std::to_string(y_.size()));
    if (!y_.allFinite() || !X_.allFinite())
      throw DomainError("Dataset: all entries must be finite");
    col_norm_sq_ = X_.colwise().squaredNorm().transpose();
  }

  const VectorXd& y() const { return y_; }
  const MatrixXd& X() const { return X_; }
  const VectorXd& col_norm_sq() const { return col_norm_sq_; }
  bool has_intercept() const { return has_intercept_; }
  Eigen::Index T() const { return y_.size(); }
  Eigen::Index K() const { return X_.cols(); }

  /// Rows [first, first + count) as a new dataset.
  Dataset rows(Eigen::Index first, Eigen::Index count) const {
    return Dataset(y_.segment(first, count), X_.middleRows(first, count),
                   has_intercept_);
  }

 private:
  VectorXd y_;
  MatrixXd X_;
  VectorXd col_norm_sq_;
  bool has_intercept_ = false;
};

/// Sum of tick losses of the residuals y - X beta.
inline double tick_loss_sum(const Dataset& data, const VectorXd& beta, double p) {
  const VectorXd r = data.y() - data.X() * beta;
  double s = 0.0;
  for (Eigen::Index t = 0; t < r.size(); ++t) s += tick_loss(r[t], p);
  return s;
}

/// log f(Y | beta, sigma) = T log(p(1-p)) - T log(sigma) - sum rho_p(r_t) / sigma.
inline double ald_log_likelihood(const Dataset& data, const VectorXd& beta,
                                 double sigma, const QuantileLevel& q) {
  if (!(sigma > 0.0)) throw DomainError("ald_log_likelihood: sigma must be positive");
  const double T = static_cast<double>(data.T());
  return T * std::log(q.p * (1.0 - q.p)) - T * std::log(sigma) -
         tick_loss_sum(data, beta, q.p) / sigma;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view cell, std::size_t line_no, std::size_t col) {
  cell = trim(cell);
  double value = 0.0;
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() ||
      !std::isfinite(value)) {
    throw IoError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                  ": not a finite number: '" + std::string(cell) + "'");
  }
  return value;
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;
  MatrixXd values;
};

/// Reads a numeric CSV with a header row. Blank or non-numeric cells are
/// rejected; there is no imputation.
inline CsvTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  CsvTable table;
  for (auto cell : detail::split_csv_line(line)) table.header.emplace_back(detail::trim(cell));
  const std::size_t ncol = table.header.size();
  std::vector<double> buffer;
  std::size_t nrow = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != ncol)
      throw IoError(path + ": line " + std::to_string(line_no) + " has " +
                    std::to_string(cells.size()) + " cells, expected " + std::to_string(ncol));
    for (std::size_t c = 0; c < ncol; ++c)
      buffer.push_back(detail::parse_number(cells[c], line_no, c));
    ++nrow;
  }
  table.values.resize(static_cast<Eigen::Index>(nrow), static_cast<Eigen::Index>(ncol));
  for (std::size_t r = 0; r < nrow; ++r)
    for (std::size_t c = 0; c < ncol; ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = buffer[r * ncol + c];
  return table;
}

/// First column is the response, the rest are covariates. With
/// `add_intercept`, a column of ones becomes covariate 1.
inline Dataset load_dataset_csv(const std::string& path, bool add_intercept,
                                std::vector<std::string>* covariate_names = nullptr) {
  const CsvTable table = read_numeric_csv(path);
  const Eigen::Index T = table.values.rows();
  const Eigen::Index ncov = table.values.cols() - 1;
  if (T < 1) throw IoError("'" + path + "' has no data rows");
  if (ncov < 0 || (ncov == 0 && !add_intercept))
    throw IoError("'" + path + "' needs a response column and at least one covariate");
  const Eigen::Index offset = add_intercept ? 1 : 0;
  MatrixXd X(T, ncov + offset);
  if (add_intercept) X.col(0).setOnes();
  if (ncov > 0) X.rightCols(ncov) = table.values.rightCols(ncov);
  if (covariate_names) {
    covariate_names->clear();
    if (add_intercept) covariate_names->push_back("intercept");
    for (std::size_t c = 1; c < table.header.size(); ++c) covariate_names->push_back(table.header[c]);
  }
  return Dataset(table.values.col(0), std::move(X), add_intercept);
}

}  // namespace bqr
