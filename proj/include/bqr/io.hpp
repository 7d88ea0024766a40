#pragma once

// Plain CSV output. Numbers are written in the shortest form that round-trips,
// so rerunning with the same seed gives byte-identical files.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bqr/core.hpp"
#include "bqr/error.hpp"
#include "bqr/gibbs.hpp"

namespace bqr {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write '" + path + "'");
  }

  CsvWriter& cell(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  CsvWriter& cell(const char* s) { return cell(std::string(s)); }
  CsvWriter& cell(double v) { return cell(format_double(v)); }
  CsvWriter& cell(int v) { return cell(std::to_string(v)); }
  CsvWriter& cell(long v) { return cell(std::to_string(v)); }
  CsvWriter& cell(long long v) { return cell(std::to_string(v)); }
  CsvWriter& cell(unsigned long v) { return cell(std::to_string(v)); }

  void row(const std::vector<std::string>& cells) {
    for (const auto& c : cells) cell(c);
    end_row();
  }

  void end_row() {
    out_ << '\n';
    first_ = true;
  }

  ~CsvWriter() {
    out_.flush();
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }

  std::string path_;
  std::ofstream out_;
  bool first_ = true;
};

/// Columns: draw, sigma, <covariate names...>, model_size.
inline void write_chain_csv(const std::string& path, const PosteriorChain& chain,
                            const std::vector<std::string>& names) {
  if (static_cast<Eigen::Index>(names.size()) != chain.K())
    throw DomainError("write_chain_csv: need one name per coefficient");
  CsvWriter w(path);
  w.cell("draw").cell("sigma");
  for (const auto& n : names) w.cell(n);
  w.cell("model_size").end_row();
  for (Eigen::Index s = 0; s < chain.S(); ++s) {
    w.cell(static_cast<long>(s + 1)).cell(chain.sigma_draws[s]);
    for (Eigen::Index j = 0; j < chain.K(); ++j) w.cell(chain.beta_draws(s, j));
    if (chain.model_size_draws.size() > s && chain.model_size_draws[s] >= 0)
      w.cell(chain.model_size_draws[s]);
    else
      w.cell("NA");
    w.end_row();
  }
}

/// Reads the draws back; quantile and configuration must come from the
/// sidecar metadata.
inline PosteriorChain read_chain_csv(const std::string& path, std::vector<std::string>* names = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  std::vector<std::string> header;
  for (auto c : detail::split_csv_line(line)) header.emplace_back(detail::trim(c));
  if (header.size() < 4 || header[0] != "draw" || header[1] != "sigma" || header.back() != "model_size")
    throw IoError("'" + path + "' is not a chain file");
  const std::size_t K = header.size() - 3;
  std::vector<double> beta, sigma;
  std::vector<int> msize;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw IoError(path + ": line " + std::to_string(line_no) + " has the wrong number of cells");
    sigma.push_back(detail::parse_number(cells[1], line_no, 1));
    for (std::size_t j = 0; j < K; ++j) beta.push_back(detail::parse_number(cells[2 + j], line_no, 2 + j));
    const auto ms = detail::trim(cells.back());
    msize.push_back(ms == "NA" ? -1 : static_cast<int>(detail::parse_number(ms, line_no, header.size() - 1)));
  }
  const auto S = static_cast<Eigen::Index>(sigma.size());
  if (S < 1) throw IoError("'" + path + "' has no draws");
  PosteriorChain chain;
  chain.beta_draws.resize(S, static_cast<Eigen::Index>(K));
  chain.sigma_draws.resize(S);
  chain.model_size_draws.resize(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    chain.sigma_draws[s] = sigma[static_cast<std::size_t>(s)];
    chain.model_size_draws[s] = msize[static_cast<std::size_t>(s)];
    for (std::size_t j = 0; j < K; ++j)
      chain.beta_draws(s, static_cast<Eigen::Index>(j)) = beta[static_cast<std::size_t>(s) * K + j];
  }
  chain.chain.retained = static_cast<int>(S);
  if (names) names->assign(header.begin() + 2, header.end() - 1);
  return chain;
}

inline void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory '" + dir + "'");
}

}  // namespace bqr
