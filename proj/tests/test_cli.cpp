#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"

using namespace bqr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bqr_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bqr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::main_entry(static_cast<int>(argv.size()), argv.data());
}

cli::RunConfig parse(std::vector<std::string> args) {
  args.insert(args.begin(), "bqr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::parse_config(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return std::count(s.begin(), s.end(), '\n');
}

// y_t = 0.5 y_{t-1} + x_t + noise, with x as a regressor column.
fs::path write_series(const fs::path& dir, int T, std::uint64_t seed) {
  Rng rng(seed);
  const fs::path p = dir / "series.csv";
  std::ofstream out(p);
  out << "y,lag,x\n";
  double prev = 0.0;
  for (int t = 0; t < T; ++t) {
    const double x = std_normal(rng);
    const double y = 0.5 * prev + x + std_normal(rng);
    out << y << "," << prev << "," << x << "\n";
    prev = y;
  }
  return p;
}

}  // namespace

TEST(CliConfig, FlagsBeatFileBeatDefaults) {
  const fs::path dir = scratch("precedence");
  std::ofstream(dir / "run.cfg") << "# comment\nburn = 10\nretained = 7\nprior.family = lasso\n";
  const auto rc = parse({"fit", "--data", "unused.csv", "--config", (dir / "run.cfg").string(), "--burn", "5", "--set", "prior.family=ssvs"});
  EXPECT_EQ(rc.chain.burn_in, 5);
  EXPECT_EQ(rc.chain.retained, 7);
  EXPECT_EQ(rc.chain.thin, 1);
  EXPECT_EQ(rc.prior.family, PriorFamily::Ssvs);
  EXPECT_EQ(rc.source.at("burn"), "flag");
  EXPECT_EQ(rc.source.at("retained"), "file");
  EXPECT_EQ(rc.quantiles, std::vector<double>{0.5});
}

TEST(CliConfig, CommandDefaults) {
  EXPECT_EQ(parse({"forecast", "--data", "d.csv"}).quantiles.size(), 19u);
  EXPECT_THROW(parse({"forecast"}), ConfigError);
  EXPECT_EQ(parse({"simulate"}).quantiles, (std::vector<double>{0.05, 0.25, 0.5, 0.75, 0.95}));
  EXPECT_EQ(parse({"simulate"}).chain.burn_in, 5000);
  EXPECT_EQ(parse({"fit", "--data", "d.csv", "--quantile", "0.1", "--quantile", "0.9"}).quantiles,
            (std::vector<double>{0.1, 0.9}));
}

TEST(CliConfig, Errors) {
  EXPECT_THROW(parse({"fit", "--quantile", "1.5"}), DomainError);
  EXPECT_THROW(parse({"fit", "--quantile", "0.5", "--quantiles", "0.1,0.2"}), ConfigError);
  EXPECT_THROW(parse({"fit", "--set", "nonsense=1"}), ConfigError);
  EXPECT_THROW(parse({"fit", "--prior", "ridge"}), ConfigError);
  EXPECT_THROW(parse({"fit", "--burn", "many"}), ConfigError);
  const fs::path dir = scratch("badcfg");
  std::ofstream(dir / "bad.cfg") << "bogus.key = 3\n";
  EXPECT_THROW(parse({"fit", "--config", (dir / "bad.cfg").string()}), ConfigError);
  EXPECT_THROW(parse({"simulate", "--sparsity", "block", "--dgp-K", "12"}), DomainError);
}

TEST(CliExit, Codes) {
  const fs::path dir = scratch("exit");
  EXPECT_EQ(run_cli({"fit", "--quantile", "1.5"}), cli::kConfig);
  EXPECT_EQ(run_cli({"fit", "--quantile", "0.5", "--quantiles", "0.2"}), cli::kConfig);
  EXPECT_EQ(run_cli({"fit", "--set", "who=1"}), cli::kConfig);
  EXPECT_EQ(run_cli({}), cli::kConfig);
  EXPECT_EQ(run_cli({"fit", "--data", (dir / "missing.csv").string(), "--out", (dir / "o").string()}),
            cli::kIo);
  std::ofstream(dir / "na.csv") << "y,x\n1,NA\n";
  EXPECT_EQ(run_cli({"fit", "--data", (dir / "na.csv").string(), "--out", (dir / "o").string()}), cli::kIo);
  EXPECT_EQ(run_cli({"--version"}), cli::kOk);
}

TEST(CliFit, InterceptOnlyWritesDefaultDrawCount) {
  const fs::path dir = scratch("fit");
  {
    std::ofstream out(dir / "y.csv");
    out << "y\n";
    Rng rng(3);
    for (int t = 0; t < 40; ++t) out << 2.0 + std_normal(rng) << "\n";
  }
  ASSERT_EQ(run_cli({"fit", "--data", (dir / "y.csv").string(), "--burn", "200", "--out",
                     (dir / "out").string()}),
            cli::kOk);
  const fs::path chain = dir / "out" / "chain_p0.5.csv";
  ASSERT_TRUE(fs::exists(chain));
  EXPECT_EQ(count_lines(chain), 5001);
  std::vector<std::string> names;
  const PosteriorChain ch = read_chain_csv(chain.string(), &names);
  EXPECT_EQ(names, std::vector<std::string>{"intercept"});
  EXPECT_NEAR(ch.beta_mean()[0], 2.0, 0.5);
  EXPECT_TRUE(fs::exists(dir / "out" / "chain_p0.5.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / "config.echo"));
  EXPECT_NE(slurp(dir / "out" / "config.echo").find("burn = 200  # [flag]"), std::string::npos);
}

TEST(CliSparsify, FromSavedChainsMatchesFreshFit) {
  const fs::path dir = scratch("sparsify");
  const fs::path data = write_series(dir, 80, 4);
  const std::vector<std::string> common{"--data", data.string(), "--burn", "50", "--retained", "60",
                                        "--quantiles", "0.25,0.75", "--seed", "9"};
  std::vector<std::string> fit{"fit", "--out", (dir / "fit").string()};
  fit.insert(fit.end(), common.begin(), common.end());
  ASSERT_EQ(run_cli(fit), cli::kOk);
  std::vector<std::string> a{"sparsify", "--out", (dir / "a").string(), "--chains",
                             (dir / "fit" / "chain_p0.25.csv").string() + "," +
                                 (dir / "fit" / "chain_p0.75.csv").string()};
  a.insert(a.end(), common.begin(), common.end());
  ASSERT_EQ(run_cli(a), cli::kOk);
  std::vector<std::string> b{"sparsify", "--out", (dir / "b").string()};
  b.insert(b.end(), common.begin(), common.end());
  ASSERT_EQ(run_cli(b), cli::kOk);
  // Chains round-trip through shortest decimal text, so both paths agree.
  for (const char* f : {"inclusion.csv", "model_size.csv", "sparse_coefficients.csv"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  EXPECT_EQ(count_lines(dir / "a" / "model_size.csv"), 1 + 2 * 60);
}

TEST(CliSimulate, ThreadCountDoesNotChangeOutput) {
  const fs::path dir = scratch("simulate");
  const std::vector<std::string> common{"--dgp-T", "60", "--dgp-K", "10", "--replications", "3",
                                        "--burn", "40", "--retained", "40", "--quantiles", "0.25,0.5",
                                        "--estimators", "HSBQR,HSBQR_BIC,SSVSBQR_SAVS"};
  std::vector<std::string> one{"simulate", "--threads", "1", "--out", (dir / "one").string()};
  std::vector<std::string> four{"simulate", "--threads", "4", "--out", (dir / "four").string()};
  one.insert(one.end(), common.begin(), common.end());
  four.insert(four.end(), common.begin(), common.end());
  ASSERT_EQ(run_cli(one), cli::kOk);
  ASSERT_EQ(run_cli(four), cli::kOk);
  for (const char* f : {"report.csv", "replications.csv", "inclusion.csv"})
    EXPECT_EQ(slurp(dir / "one" / f), slurp(dir / "four" / f)) << f;
  EXPECT_EQ(count_lines(dir / "one" / "report.csv"), 1 + 3 * 2);
}

TEST(CliForecast, WindowCountAndArtifacts) {
  const fs::path dir = scratch("forecast");
  const fs::path data = write_series(dir, 120, 5);
  ASSERT_EQ(run_cli({"forecast", "--data", data.string(), "--burn", "20", "--retained", "30",
                     "--quantiles", "3", "--estimators", "HSBQR_BIC", "--initial-window", "50",
                     "--keep-densities", "true", "--out", (dir / "out").string()}),
            cli::kOk);
  EXPECT_EQ(count_lines(dir / "out" / "records.csv"), 1 + 70);
  EXPECT_EQ(count_lines(dir / "out" / "pits.csv"), 1 + 70);
  EXPECT_EQ(count_lines(dir / "out" / "density.csv"), 1 + 70 * 512);
  EXPECT_EQ(count_lines(dir / "out" / "inclusion_heatmap.csv"), 1 + 70 * 3 * 3);
  for (const char* f : {"scores.csv", "qs.csv", "pit_cdf.csv", "dm.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
}
