#pragma once

// Command-line front end: settings resolution (defaults < config file <
// flags), dispatch to fit / sparsify / simulate / forecast, and output files.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bqr/bqr.hpp"

namespace bqr::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kNumerical = 4 };

struct SettingDef {
  std::string key;
  std::vector<std::string> flags;
  std::string default_value;
  std::string help;
};

inline const std::vector<SettingDef>& setting_defs() {
  static const std::vector<SettingDef> defs = {
      {"data", {"--data"}, "", "input CSV (first column is the response)"},
      {"intercept", {"--intercept"}, "true", "prepend a column of ones"},
      {"quantiles", {"--quantiles"}, "", "comma list of levels, or an integer n for the n-point grid"},
      {"prior.family", {"--prior"}, "horseshoe", "lasso | horseshoe | ssvs"},
      {"prior.a1", {"--prior-a1"}, "0.1", "lasso rate prior shape"},
      {"prior.b1", {"--prior-b1"}, "0.1", "lasso rate prior rate"},
      {"prior.a2", {"--prior-a2"}, "0.1", "SSVS slab variance shape"},
      {"prior.b2", {"--prior-b2"}, "0.1", "SSVS slab variance scale"},
      {"prior.a3", {"--prior-a3"}, "1", "SSVS inclusion prior a"},
      {"prior.b3", {"--prior-b3"}, "1", "SSVS inclusion prior b"},
      {"prior.c", {"--prior-c"}, "1e-05", "SSVS spike factor"},
      {"prior.literal_pi0", {"--literal-pi0"}, "false", "use Beta(1+a3, k-1+b3) for pi0"},
      {"sigma.a", {"--sigma-a"}, "0.1", "ALD scale prior shape"},
      {"sigma.b", {"--sigma-b"}, "0.1", "ALD scale prior scale"},
      {"burn", {"--burn"}, "5000", "burn-in sweeps"},
      {"retained", {"--retained"}, "5000", "retained draws"},
      {"thin", {"--thin"}, "1", "thinning stride"},
      {"seed", {"--seed"}, "20240101", "master seed"},
      {"sampler", {"--sampler"}, "auto", "direct | fast | auto"},
      {"out", {"--out"}, "bqr_out", "output directory"},
      {"threads", {"--threads"}, "", "worker count (default: BQR_THREADS or all cores)"},
      {"sparsify.kappa", {"--sparsify"}, "qbic", "qbic, or a fixed kappa"},
      {"sparsify.grid", {"--kappa-grid"}, "", "comma list of kappa values for qbic"},
      {"sparsify.correction", {"--correction"}, "false", "include the ALD correction term"},
      {"sparsify.per_draw", {"--per-draw"}, "true", "sparsify every draw (false: posterior mean)"},
      {"sparsify.C", {"--qbic-C"}, "", "qBIC constant (default log K)"},
      {"sparsify.protect_intercept", {"--protect-intercept"}, "true", "never penalise the intercept"},
      {"chains", {"--chains"}, "", "comma list of chain CSVs to sparsify"},
      {"dgp.design", {"--design"}, "y1", "y1 | y2 | y3 | y4"},
      {"dgp.sparsity", {"--sparsity"}, "sparse", "sparse | block"},
      {"dgp.T", {"--dgp-T"}, "500", "simulated sample size"},
      {"dgp.K", {"--dgp-K"}, "100", "simulated covariates (intercept excluded)"},
      {"dgp.rho", {"--rho"}, "0.5", "Toeplitz correlation"},
      {"dgp.df", {"--error-df"}, "3", "t degrees of freedom for y2"},
      {"replications", {"--replications"}, "10", "Monte Carlo replications"},
      {"estimators", {"--estimators"}, "", "comma list, e.g. HSBQR,HSBQR_BIC,SSVSBQR"},
      {"horizons", {"--horizons"}, "1", "comma list of forecast horizons"},
      {"initial_window", {"--initial-window"}, "50", "first forecast origin"},
      {"keep_densities", {"--keep-densities"}, "false", "write per-window combined densities"},
  };
  return defs;
}

inline std::string command_default(const std::string& command, const std::string& key) {
  if (key == "quantiles") {
    if (command == "simulate") return "0.05,0.25,0.5,0.75,0.95";
    if (command == "forecast") return "19";
    return "0.5";
  }
  if (key == "estimators") {
    if (command == "forecast") return "HSBQR,HSBQR_BIC";
    return "HSBQR,HSBQR_SAVS,HSBQR_BIC";
  }
  return "";
}

struct RunConfig {
  std::string command;
  std::string data_path;
  bool add_intercept = true;
  std::vector<double> quantiles;
  PriorConfig prior;
  ChainConfig chain;
  SparsifyConfig sparsify;
  DgpSpec dgp;
  int replications = 10;
  std::vector<std::string> estimators;
  std::vector<int> horizons;
  int initial_window = 50;
  bool keep_densities = false;
  std::vector<std::string> chain_paths;
  std::string output_dir;
  int threads = 1;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> settings;  // effective values
  std::map<std::string, std::string> source;    // default | file | flag
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = std::string(bqr::detail::trim(item));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto t = bqr::detail::trim(v);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("setting '" + key + "': expected a number, got '" + v + "'");
  return x;
}

inline long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto t = bqr::detail::trim(v);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("setting '" + key + "': expected an integer, got '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  std::string s(bqr::detail::trim(v));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("setting '" + key + "': expected true/false, got '" + v + "'");
}

inline const SettingDef* find_def(const std::string& key) {
  for (const auto& d : setting_defs())
    if (d.key == key) return &d;
  return nullptr;
}

inline std::string flag_name(const std::string& key) {
  const SettingDef* d = find_def(key);
  return d ? d->flags.front() : key;
}

/// key = value lines; '#' starts a comment.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto t = std::string(bqr::detail::trim(line));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key(bqr::detail::trim(std::string_view(t).substr(0, eq)));
    const std::string value(bqr::detail::trim(std::string_view(t).substr(eq + 1)));
    if (!find_def(key)) throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    out[key] = value;
  }
  return out;
}

inline std::vector<double> parse_quantiles(const std::string& v) {
  const auto items = split_list(v);
  if (items.size() == 1 && items[0].find('.') == std::string::npos &&
      items[0].find('e') == std::string::npos) {
    const long long n = to_int("quantiles", items[0]);
    if (n < 1 || n > 999) throw DomainError("--quantiles: grid size must lie in [1, 999], got " + items[0]);
    return forecast_quantile_grid(static_cast<int>(n));
  }
  std::vector<double> q;
  for (const auto& s : items) {
    const double p = to_double("quantiles", s);
    if (!(p > 0.0 && p < 1.0)) throw DomainError("--quantiles: " + s + " is not in (0,1)");
    q.push_back(p);
  }
  if (q.empty()) throw ConfigError("setting 'quantiles' is empty");
  std::sort(q.begin(), q.end());
  if (std::adjacent_find(q.begin(), q.end()) != q.end())
    throw DomainError("--quantiles: levels must be distinct");
  return q;
}

}  // namespace detail

/// Builds the typed configuration from resolved settings.
inline RunConfig build_config(const std::string& command, std::map<std::string, std::string> s,
                              std::map<std::string, std::string> source) {
  using namespace detail;
  RunConfig rc;
  rc.command = command;
  for (const auto& d : setting_defs()) {
    if (!s.count(d.key)) {
      s[d.key] = d.default_value.empty() ? command_default(command, d.key) : d.default_value;
      source[d.key] = "default";
    }
  }
  auto num = [&](const char* k) { return to_double(k, s[k]); };
  auto integer = [&](const char* k) { return to_int(k, s[k]); };
  auto boolean = [&](const char* k) { return to_bool(k, s[k]); };

  rc.data_path = s["data"];
  rc.add_intercept = boolean("intercept");
  rc.quantiles = parse_quantiles(s["quantiles"]);
  rc.prior.family = parse_prior_family(s["prior.family"]);
  rc.prior.a1 = num("prior.a1");
  rc.prior.b1 = num("prior.b1");
  rc.prior.a2 = num("prior.a2");
  rc.prior.b2 = num("prior.b2");
  rc.prior.a3 = num("prior.a3");
  rc.prior.b3 = num("prior.b3");
  rc.prior.c = num("prior.c");
  rc.prior.literal_pi0 = boolean("prior.literal_pi0");
  rc.prior.sigma_a = num("sigma.a");
  rc.prior.sigma_b = num("sigma.b");
  rc.prior.validate();

  const long long burn = integer("burn"), retained = integer("retained"), thin = integer("thin");
  if (burn < 0 || burn > 100000000) throw DomainError("--burn must lie in [0, 1e8]");
  if (retained < 1 || retained > 100000000) throw DomainError("--retained must lie in [1, 1e8]");
  if (thin < 1 || thin > 100000) throw DomainError("--thin must lie in [1, 1e5]");
  rc.chain.burn_in = static_cast<int>(burn);
  rc.chain.retained = static_cast<int>(retained);
  rc.chain.thin = static_cast<int>(thin);
  rc.seed = static_cast<std::uint64_t>(integer("seed"));
  rc.chain.seed = rc.seed;
  rc.chain.beta_sampler = parse_beta_sampler(s["sampler"]);

  const std::string kappa = s["sparsify.kappa"];
  if (kappa == "qbic") {
    rc.sparsify.kappa_mode = KappaMode::QbicGrid;
  } else {
    rc.sparsify.kappa_mode = KappaMode::Fixed;
    rc.sparsify.kappa = to_double("sparsify.kappa", kappa);
  }
  if (!s["sparsify.grid"].empty()) {
    rc.sparsify.kappa_grid.clear();
    for (const auto& v : split_list(s["sparsify.grid"]))
      rc.sparsify.kappa_grid.push_back(to_double("sparsify.grid", v));
  }
  rc.sparsify.use_ald_correction = boolean("sparsify.correction");
  rc.sparsify.per_draw = boolean("sparsify.per_draw");
  if (!s["sparsify.C"].empty()) rc.sparsify.C_penalty = num("sparsify.C");
  rc.sparsify.protect_intercept = boolean("sparsify.protect_intercept");
  rc.sparsify.validate();
  rc.chain_paths = split_list(s["chains"]);

  rc.dgp.design = parse_design(s["dgp.design"]);
  rc.dgp.sparsity = parse_sparsity(s["dgp.sparsity"]);
  rc.dgp.T = static_cast<int>(integer("dgp.T"));
  rc.dgp.K = static_cast<int>(integer("dgp.K"));
  rc.dgp.rho = num("dgp.rho");
  rc.dgp.error_df = num("dgp.df");
  rc.dgp.seed = rc.seed;
  if (command == "simulate") rc.dgp.validate();
  rc.replications = static_cast<int>(integer("replications"));
  if (rc.replications < 1) throw DomainError("--replications must be >= 1");
  rc.estimators = split_list(s["estimators"]);
  for (const auto& e : rc.estimators) parse_forecast_estimator(e);
  for (const auto& h : split_list(s["horizons"])) {
    const long long v = to_int("horizons", h);
    if (v < 1 || v > 1000) throw DomainError("--horizons: " + h + " must lie in [1, 1000]");
    rc.horizons.push_back(static_cast<int>(v));
  }
  rc.initial_window = static_cast<int>(integer("initial_window"));
  rc.keep_densities = boolean("keep_densities");
  rc.output_dir = s["out"];
  if (rc.output_dir.empty()) throw ConfigError("setting 'out' must not be empty");
  if (s["threads"].empty()) {
    rc.threads = default_threads();
  } else {
    const long long t = integer("threads");
    if (t < 1 || t > 1024) throw DomainError("--threads must lie in [1, 1024]");
    rc.threads = static_cast<int>(t);
  }
  if ((command == "fit" || command == "forecast" || command == "sparsify") && rc.data_path.empty())
    throw ConfigError("command '" + command + "' needs --data");
  rc.settings = std::move(s);
  rc.source = std::move(source);
  return rc;
}

/// Parses argv (argv[1] is the subcommand). Precedence: flags, then the
/// --config file, then defaults.
inline RunConfig parse_config(int argc, const char* const* argv) {
  CLI::App app{"Bayesian quantile regression with shrinkage priors and posterior sparsification"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);
  std::map<std::string, CLI::App*> subs;
  for (const char* name : {"fit", "sparsify", "simulate", "forecast"}) subs[name] = app.add_subcommand(name);
  subs["fit"]->description("fit one Gibbs chain per quantile and write the draws");
  subs["sparsify"]->description("sparsify chains (given via --chains or fitted afresh)");
  subs["simulate"]->description("Monte Carlo study on a synthetic design");
  subs["forecast"]->description("expanding-window direct quantile and density forecasts");

  const auto& defs = setting_defs();
  std::map<std::string, std::vector<std::string>> flag_values;  // flag -> value
  std::vector<std::pair<std::string, CLI::Option*>> opts;
  std::string config_path;
  std::vector<std::string> sets;
  for (auto& [name, sub] : subs) {
    for (const auto& d : defs) {
      for (const auto& f : d.flags) {
        auto* o = sub->add_option(f, flag_values[f], d.help);
        opts.emplace_back(d.key, o);
      }
    }
    auto* q = sub->add_option("--quantile", flag_values["--quantile"], "single quantile level");
    opts.emplace_back("quantile", q);
    sub->add_option("--config", config_path, "settings file with key = value lines");
    sub->add_option("--set", sets, "override any setting as key=value");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw;
  } catch (const CLI::CallForAllHelp&) {
    throw;
  } catch (const CLI::Success&) {
    throw;
  } catch (const CLI::ParseError& e) {
    throw ConfigError(std::string("usage: ") + e.what());
  }
  std::string command;
  for (auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  std::map<std::string, std::string> s, source;
  if (!config_path.empty()) {
    for (auto& [k, v] : detail::read_config_file(config_path)) {
      s[k] = v;
      source[k] = "file";
    }
  }
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    if (!detail::find_def(key)) throw ConfigError("--set: unknown key '" + key + "'");
    s[key] = kv.substr(eq + 1);
    source[key] = "flag";
  }
  const auto& qv = flag_values["--quantile"];
  const auto& qsv = flag_values["--quantiles"];
  if (!qv.empty() && !qsv.empty()) throw ConfigError("conflicting flags --quantile and --quantiles");
  for (const auto& d : defs) {
    for (const auto& f : d.flags) {
      const auto& vals = flag_values[f];
      if (vals.empty()) continue;
      s[d.key] = vals.back();
      source[d.key] = "flag";
    }
  }
  if (!qv.empty()) {
    if (qv.size() > 1) {
      std::string joined;
      for (const auto& v : qv) joined += (joined.empty() ? "" : ",") + v;
      s["quantiles"] = joined;
    } else {
      s["quantiles"] = qv.back();
    }
    source["quantiles"] = "flag";
    for (const auto& v : qv) {
      const double p = detail::to_double("quantile", v);
      if (!(p > 0.0 && p < 1.0)) throw DomainError("--quantile: " + v + " is not in (0,1)");
    }
  }
  return build_config(command, std::move(s), std::move(source));
}

// ---------------------------------------------------------------------------
// Execution

inline std::string quantile_tag(double p) { return "p" + format_double(p); }

inline void write_config_echo(const RunConfig& rc) {
  std::ofstream out(rc.output_dir + "/config.echo", std::ios::binary);
  if (!out) throw IoError("cannot write config.echo");
  out << "# effective configuration (source in brackets)\n";
  out << "command = " << rc.command << "\n";
  for (const auto& [k, v] : rc.settings) {
    const auto it = rc.source.find(k);
    out << k << " = " << v << "  # [" << (it == rc.source.end() ? "default" : it->second) << "]\n";
  }
}

inline nlohmann::json chain_meta(const PosteriorChain& chain, const RunConfig& rc) {
  nlohmann::json j;
  j["quantile"] = chain.quantile.p;
  j["xi"] = chain.quantile.xi;
  j["tau_sq"] = chain.quantile.tau_sq;
  j["seed"] = chain.chain.seed;
  j["master_seed"] = rc.seed;
  j["burn_in"] = chain.chain.burn_in;
  j["retained"] = chain.chain.retained;
  j["thin"] = chain.chain.thin;
  j["sampler"] = to_string(chain.sampler_used);
  j["prior"] = {{"family", to_string(chain.prior.family)}, {"a1", chain.prior.a1}, {"b1", chain.prior.b1},
                {"a2", chain.prior.a2}, {"b2", chain.prior.b2}, {"a3", chain.prior.a3},
                {"b3", chain.prior.b3}, {"c", chain.prior.c}, {"literal_pi0", chain.prior.literal_pi0},
                {"sigma_a", chain.prior.sigma_a}, {"sigma_b", chain.prior.sigma_b}};
  j["seconds"] = chain.seconds;
  return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

struct FitOutput {
  Dataset data;
  std::vector<std::string> names;
  std::vector<PosteriorChain> chains;
};

inline FitOutput fit_chains(const RunConfig& rc) {
  FitOutput fo;
  fo.data = load_dataset_csv(rc.data_path, rc.add_intercept, &fo.names);
  fo.chains.resize(rc.quantiles.size());
  parallel_for(rc.quantiles.size(), rc.threads, [&](std::size_t qi) {
    ChainConfig cc = rc.chain;
    cc.seed = derive_seed(rc.seed, {qi});
    fo.chains[qi] = run_gibbs(fo.data, quantile_constants(rc.quantiles[qi]), rc.prior, cc);
  });
  return fo;
}

inline void write_posterior_summary(const std::string& path, const FitOutput& fo) {
  CsvWriter w(path);
  w.row({"quantile", "covariate", "mean", "sd", "q025", "q975"});
  for (const auto& ch : fo.chains) {
    for (Eigen::Index j = 0; j < ch.K(); ++j) {
      VectorXd col = ch.beta_draws.col(j);
      std::sort(col.data(), col.data() + col.size());
      w.cell(ch.quantile.p).cell(fo.names[static_cast<std::size_t>(j)]).cell(col.mean()).cell(sample_sd(col));
      w.cell(sorted_quantile(col, 0.025)).cell(sorted_quantile(col, 0.975)).end_row();
    }
  }
}

inline nlohmann::json run_fit(const RunConfig& rc, std::vector<std::string>& outputs) {
  const FitOutput fo = fit_chains(rc);
  nlohmann::json res = nlohmann::json::array();
  for (std::size_t qi = 0; qi < fo.chains.size(); ++qi) {
    const auto& ch = fo.chains[qi];
    const std::string base = "chain_" + quantile_tag(ch.quantile.p);
    write_chain_csv(rc.output_dir + "/" + base + ".csv", ch, fo.names);
    write_json(rc.output_dir + "/" + base + ".json", chain_meta(ch, rc));
    outputs.push_back(base + ".csv");
    outputs.push_back(base + ".json");
    res.push_back({{"quantile", ch.quantile.p}, {"draws", ch.S()}, {"seconds", ch.seconds},
                   {"sampler", to_string(ch.sampler_used)}, {"sigma_mean", ch.sigma_mean()}});
  }
  write_posterior_summary(rc.output_dir + "/posterior_summary.csv", fo);
  outputs.push_back("posterior_summary.csv");
  return res;
}

inline nlohmann::json run_sparsify(const RunConfig& rc, std::vector<std::string>& outputs) {
  FitOutput fo;
  if (rc.chain_paths.empty()) {
    fo = fit_chains(rc);
  } else {
    fo.data = load_dataset_csv(rc.data_path, rc.add_intercept, &fo.names);
    for (const auto& path : rc.chain_paths) {
      std::vector<std::string> names;
      PosteriorChain ch = read_chain_csv(path, &names);
      std::string meta_path = path;
      if (meta_path.size() > 4 && meta_path.substr(meta_path.size() - 4) == ".csv")
        meta_path.replace(meta_path.size() - 4, 4, ".json");
      std::ifstream in(meta_path);
      if (!in) throw IoError("missing chain metadata '" + meta_path + "'");
      nlohmann::json meta;
      try {
        in >> meta;
        ch.quantile = quantile_constants(meta.at("quantile").get<double>());
      } catch (const nlohmann::json::exception& e) {
        throw IoError("bad chain metadata '" + meta_path + "': " + e.what());
      }
      if (ch.K() != fo.data.K() || names != fo.names)
        throw IoError("chain '" + path + "' does not match the covariates of '" + rc.data_path + "'");
      fo.chains.push_back(std::move(ch));
    }
  }
  CsvWriter inc(rc.output_dir + "/inclusion.csv");
  inc.row({"quantile", "covariate", "inclusion_freq"});
  CsvWriter ms(rc.output_dir + "/model_size.csv");
  ms.row({"quantile", "draw", "kappa", "model_size"});
  CsvWriter co(rc.output_dir + "/sparse_coefficients.csv");
  co.row({"quantile", "covariate", "alpha_mean"});
  nlohmann::json res = nlohmann::json::array();
  for (const auto& ch : fo.chains) {
    const SparsifiedChain sp = sparsify_chain(ch, fo.data, rc.sparsify, rc.threads);
    const VectorXd am = sp.alpha_mean();
    for (Eigen::Index j = 0; j < fo.data.K(); ++j) {
      inc.cell(ch.quantile.p).cell(fo.names[static_cast<std::size_t>(j)]).cell(sp.inclusion_freq[j]).end_row();
      co.cell(ch.quantile.p).cell(fo.names[static_cast<std::size_t>(j)]).cell(am[j]).end_row();
    }
    for (Eigen::Index s = 0; s < sp.alpha_draws.rows(); ++s)
      ms.cell(ch.quantile.p).cell(static_cast<long>(s + 1)).cell(sp.kappa_hat[s]).cell(sp.model_size[s]).end_row();
    res.push_back({{"quantile", ch.quantile.p}, {"mean_model_size", sp.model_size.cast<double>().mean()}});
  }
  outputs.insert(outputs.end(), {"inclusion.csv", "model_size.csv", "sparse_coefficients.csv"});
  return res;
}

inline nlohmann::json run_simulate(const RunConfig& rc, std::vector<std::string>& outputs) {
  MonteCarloConfig mc;
  mc.dgp = rc.dgp;
  mc.estimators = rc.estimators;
  mc.quantiles = rc.quantiles;
  mc.replications = rc.replications;
  mc.seed = rc.seed;
  mc.chain = rc.chain;
  mc.prior = rc.prior;
  mc.sparsify = rc.sparsify;
  mc.threads = rc.threads;
  const MonteCarloReport rep = run_monte_carlo(mc);

  const std::string design = to_string(rc.dgp.design), sparsity = to_string(rc.dgp.sparsity);
  CsvWriter w(rc.output_dir + "/report.csv");
  w.row({"estimator", "design", "sparsity", "T", "K", "quantile", "bias", "mcc", "hit_rate", "ok", "failed"});
  CsvWriter r(rc.output_dir + "/replications.csv");
  r.row({"estimator", "quantile", "replication", "ok", "bias", "mcc", "hit_rate", "error"});
  CsvWriter inc(rc.output_dir + "/inclusion.csv");
  inc.row({"estimator", "quantile", "covariate", "inclusion_freq"});
  nlohmann::json res = nlohmann::json::array();
  for (const auto& c : rep.cells) {
    w.cell(c.estimator).cell(design).cell(sparsity).cell(rc.dgp.T).cell(rc.dgp.K).cell(c.p);
    w.cell(c.bias).cell(c.mcc).cell(c.hit_rate).cell(c.ok).cell(c.failed).end_row();
    for (std::size_t i = 0; i < c.reps.size(); ++i) {
      const auto& x = c.reps[i];
      std::string err = x.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      r.cell(c.estimator).cell(c.p).cell(static_cast<long>(i + 1)).cell(x.ok ? 1 : 0);
      r.cell(x.ok ? x.bias : std::nan("")).cell(x.mcc).cell(x.hit_rate).cell(err).end_row();
    }
    for (Eigen::Index j = 0; j < c.inclusion.size(); ++j)
      inc.cell(c.estimator).cell(c.p).cell("x" + std::to_string(j + 1)).cell(c.inclusion[j]).end_row();
    res.push_back({{"estimator", c.estimator}, {"quantile", c.p}, {"bias", c.bias},
                   {"ok", c.ok}, {"failed", c.failed}});
  }
  outputs.insert(outputs.end(), {"report.csv", "replications.csv", "inclusion.csv"});
  return res;
}

inline nlohmann::json run_forecast(const RunConfig& rc, std::vector<std::string>& outputs) {
  std::vector<std::string> names;
  const Dataset data = load_dataset_csv(rc.data_path, rc.add_intercept, &names);
  ForecastConfig fc;
  fc.horizons = rc.horizons;
  fc.quantiles = rc.quantiles;
  fc.estimators = rc.estimators;
  fc.initial_window = rc.initial_window;
  fc.seed = rc.seed;
  fc.chain = rc.chain;
  fc.prior = rc.prior;
  fc.sparsify = rc.sparsify;
  fc.threads = rc.threads;
  fc.keep_densities = rc.keep_densities;
  const std::vector<EvalReport> reports = run_expanding_window(data, fc);

  CsvWriter sc(rc.output_dir + "/scores.csv");
  sc.row({"estimator", "horizon", "msfe", "lpds", "crps", "qwcrps", "windows", "failed", "ks_stat", "ks_pvalue"});
  CsvWriter qs(rc.output_dir + "/qs.csv");
  qs.row({"estimator", "horizon", "quantile", "qs"});
  CsvWriter pit(rc.output_dir + "/pits.csv");
  pit.row({"estimator", "horizon", "origin", "realized", "pit"});
  CsvWriter pcdf(rc.output_dir + "/pit_cdf.csv");
  pcdf.row({"estimator", "horizon", "u", "ecdf", "band_lower", "band_upper"});
  CsvWriter rec(rc.output_dir + "/records.csv");
  {
    std::vector<std::string> h{"estimator", "horizon", "origin", "realized", "ok", "point", "lpds", "crps", "qwcrps", "pit"};
    for (double p : rc.quantiles) h.push_back("q" + format_double(p));
    rec.row(h);
  }
  CsvWriter heat(rc.output_dir + "/inclusion_heatmap.csv");
  heat.row({"estimator", "horizon", "origin", "quantile", "covariate", "inclusion_freq"});
  std::optional<CsvWriter> dens;
  if (rc.keep_densities) {
    dens.emplace(rc.output_dir + "/density.csv");
    dens->row({"estimator", "horizon", "origin", "x", "density"});
  }
  nlohmann::json res = nlohmann::json::array();
  for (const auto& r : reports) {
    TestResult ks{std::nan(""), std::nan("")};
    if (!r.pits.empty()) ks = ks_uniform_test(r.pits);
    sc.cell(r.estimator).cell(r.horizon).cell(r.msfe).cell(r.lpds).cell(r.crps).cell(r.qwcrps);
    sc.cell(r.windows).cell(r.failed).cell(ks.stat).cell(ks.pvalue).end_row();
    for (std::size_t k = 0; k < rc.quantiles.size(); ++k)
      qs.cell(r.estimator).cell(r.horizon).cell(rc.quantiles[k]).cell(r.qs_by_p[k]).end_row();
    if (!r.pits.empty()) {
      std::vector<double> sorted = r.pits;
      std::sort(sorted.begin(), sorted.end());
      const double band = kolmogorov_band(sorted.size());
      for (int i = 0; i <= 100; ++i) {
        const double u = i / 100.0;
        const double e = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), u) - sorted.begin()) /
                         static_cast<double>(sorted.size());
        pcdf.cell(r.estimator).cell(r.horizon).cell(u).cell(e).cell(std::max(0.0, u - band)).cell(std::min(1.0, u + band)).end_row();
      }
    }
    for (const auto& x : r.records) {
      rec.cell(r.estimator).cell(r.horizon).cell(static_cast<long>(x.origin)).cell(x.realized).cell(x.ok ? 1 : 0);
      if (x.ok) {
        pit.cell(r.estimator).cell(r.horizon).cell(static_cast<long>(x.origin)).cell(x.realized).cell(x.pit).end_row();
        rec.cell(x.point).cell(x.lpds).cell(x.crps).cell(x.qwcrps).cell(x.pit);
        for (double v : x.quantile_means) rec.cell(v);
        for (std::size_t qi = 0; qi < x.inclusion.size(); ++qi)
          for (Eigen::Index j = 0; j < x.inclusion[qi].size(); ++j)
            heat.cell(r.estimator).cell(r.horizon).cell(static_cast<long>(x.origin)).cell(rc.quantiles[qi])
                .cell(names[static_cast<std::size_t>(j)]).cell(x.inclusion[qi][j]).end_row();
        if (dens)
          for (Eigen::Index g = 0; g < x.density.grid.size(); ++g)
            dens->cell(r.estimator).cell(r.horizon).cell(static_cast<long>(x.origin)).cell(x.density.grid[g]).cell(x.density.density[g]).end_row();
      } else {
        for (std::size_t i = 0; i < 5 + rc.quantiles.size(); ++i) rec.cell("NA");
      }
      rec.end_row();
    }
    res.push_back({{"estimator", r.estimator}, {"horizon", r.horizon}, {"windows", r.windows},
                   {"failed", r.failed}, {"qwcrps", r.qwcrps}, {"crps", r.crps}});
  }
  // Diebold-Mariano tests of every estimator against the first, on CRPS and qwCRPS.
  CsvWriter dm(rc.output_dir + "/dm.csv");
  dm.row({"estimator", "benchmark", "horizon", "score", "stat", "pvalue"});
  for (const auto& bench : reports) {
    if (bench.estimator != reports.front().estimator) continue;
    for (const auto& r : reports) {
      if (r.horizon != bench.horizon || r.estimator == bench.estimator) continue;
      for (const char* score : {"crps", "qwcrps"}) {
        std::vector<double> d;
        for (std::size_t i = 0; i < r.records.size() && i < bench.records.size(); ++i) {
          if (!r.records[i].ok || !bench.records[i].ok) continue;
          const bool crps = std::string(score) == "crps";
          d.push_back(crps ? r.records[i].crps - bench.records[i].crps
                           : r.records[i].qwcrps - bench.records[i].qwcrps);
        }
        if (d.size() < 10) continue;
        const TestResult t = dm_test(Eigen::Map<const VectorXd>(d.data(), static_cast<Eigen::Index>(d.size())), r.horizon);
        dm.cell(r.estimator).cell(bench.estimator).cell(r.horizon).cell(score).cell(t.stat).cell(t.pvalue).end_row();
      }
    }
  }
  outputs.insert(outputs.end(), {"scores.csv", "qs.csv", "pits.csv", "pit_cdf.csv", "records.csv",
                                 "inclusion_heatmap.csv", "dm.csv"});
  if (rc.keep_densities) outputs.push_back("density.csv");
  return res;
}

/// Runs a parsed configuration and writes summary.json. Exceptions
/// propagate; see main() for their mapping to exit codes.
inline void run(const RunConfig& rc) {
  const auto start = std::chrono::steady_clock::now();
  ensure_directory(rc.output_dir);
  write_config_echo(rc);
  const long warnings_before = warning_count();
  std::vector<std::string> outputs{"config.echo"};
  nlohmann::json result;
  if (rc.command == "fit") result = run_fit(rc, outputs);
  else if (rc.command == "sparsify") result = run_sparsify(rc, outputs);
  else if (rc.command == "simulate") result = run_simulate(rc, outputs);
  else if (rc.command == "forecast") result = run_forecast(rc, outputs);
  else throw ConfigError("unknown command '" + rc.command + "'");
  nlohmann::json summary;
  summary["command"] = rc.command;
  summary["version"] = kVersion;
  summary["master_seed"] = rc.seed;
  summary["threads"] = rc.threads;
  summary["quantiles"] = rc.quantiles;
  summary["outputs"] = outputs;
  summary["warnings"] = warning_count() - warnings_before;
  summary["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  summary["result"] = result;
  write_json(rc.output_dir + "/summary.json", summary);
}

/// Full entry point: parse, run, map failures to exit codes.
inline int main_entry(int argc, const char* const* argv) {
  try {
    const RunConfig rc = parse_config(argc, argv);
    run(rc);
    return kOk;
  } catch (const CLI::CallForHelp&) {
    CLI::App app;
    std::cout << "usage: bqr {fit|sparsify|simulate|forecast} [options]\n\nsettings (flag, key, default):\n";
    for (const auto& d : setting_defs())
      std::cout << "  " << d.flags.front() << "  " << d.key << "  [" << d.default_value << "]  " << d.help << "\n";
    std::cout << "  --quantile  single level\n  --config FILE\n  --set key=value\n";
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    return kOk;
  } catch (const CLI::Success&) {
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}

}  // namespace bqr::cli
