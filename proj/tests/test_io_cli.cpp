#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "glmtilt/cli.hpp"
#include "glmtilt/io.hpp"

using namespace glmtilt;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("glmtilt_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

int run_cli(std::vector<std::string> args) { return cli::run(args); }

const std::vector<std::string> kFastSolve{"--outer-count", "4000", "--no-mc-check"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Json, DoublesRoundTripExactly) {
  for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0}) {
    EXPECT_EQ(std::stod(io::format_double(x)), x);
  }
  EXPECT_EQ(io::format_double(std::nan("")), "nan");
  io::Json j;
  j["a"] = 0.1;
  j["b"] = std::nan("");
  const std::string text = io::dump_json(j);
  EXPECT_NE(text.find("0.10000000000000001"), std::string::npos);
  EXPECT_NE(text.find("null"), std::string::npos);
  EXPECT_EQ(text.back(), '\n');
}

TEST(Json, RecordRoundTrip) {
  SolutionRecord r;
  r.params = {1.5, 0.3, 1e-3};
  r.model = "logistic";
  r.prior = "beta:2,2";
  r.signal = "beta:2,5";
  r.order = {0.2, 0.1, 0.05, 0.18};
  r.tilt = TiltConstants::from_scores(0.7, 0.1, 0.2, 0.2);
  r.c_mse = 0.19;
  r.iterations = 17;
  r.residual = 3e-7;
  r.seed = 42;
  r.outer_count = 20000;
  r.status = SolveStatus::Converged;
  r.mc_shift = 1e-3;
  const SolutionRecord s = io::record_from_json(io::to_json(r));
  EXPECT_EQ(s.params.kappa, r.params.kappa);
  EXPECT_EQ(s.model, r.model);
  EXPECT_EQ(s.order.c_BBstar, r.order.c_BBstar);
  EXPECT_EQ(s.tilt.alpha, r.tilt.alpha);
  EXPECT_EQ(s.tilt.v, r.tilt.v);
  EXPECT_EQ(s.iterations, 17);
  EXPECT_EQ(s.seed, 42u);
  EXPECT_EQ(s.status, SolveStatus::Converged);
  EXPECT_THROW(io::record_from_json(io::Json::parse(R"({"params": 3})")), InvalidArgument);
}

TEST(Csv, RoundTrip) {
  TempDir dir;
  ChainOutput c;
  c.chain_id = 2;
  c.tracked_coords = {0, 5};
  c.draws = (Eigen::MatrixXd(3, 2) << 0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0).finished();
  c.q11 = Eigen::Vector3d(1, 2, 3);
  c.q1star = Eigen::Vector3d(0.5, 0.25, 0.125);
  c.q12 = Eigen::Vector3d(0.1, 0.1, 0.1);
  io::write_csv(dir / "c.csv", io::chain_table(c));
  const io::CsvTable t = io::read_csv(dir / "c.csv");
  EXPECT_TRUE(t.has_column("beta_5"));
  EXPECT_TRUE(t.has_column("q1star"));
  const ChainOutput back = io::chain_from_table(t);
  EXPECT_EQ(back.chain_id, 2);
  EXPECT_EQ(back.tracked_coords, c.tracked_coords);
  EXPECT_EQ(back.draws, c.draws);
  EXPECT_EQ(back.q11, c.q11);
  EXPECT_THROW(io::read_csv(dir / "missing.csv"), std::exception);
}

TEST(Csv, MleFile) {
  TempDir dir;
  std::ofstream(dir / "mle.csv") << "kappa,alpha_mle,sigma_mle\n0.5,1.2,0.8\n1,1.5,1.4\n";
  const auto mle = io::read_mle_csv(dir / "mle.csv");
  ASSERT_EQ(mle.size(), 2u);
  EXPECT_EQ(mle[1].alpha, 1.5);
  std::ofstream(dir / "bad.csv") << "kappa,alpha\n0.5,1.2\n";
  EXPECT_THROW(io::read_mle_csv(dir / "bad.csv"), InvalidArgument);
}

TEST(ConfigFile, Parsing) {
  TempDir dir;
  std::ofstream(dir / "a.conf") << "# comment\n\nouter_count = 5000\nprior=beta:2,2\n";
  const auto args = cli::config_file_arguments(dir / "a.conf");
  ASSERT_EQ(args.size(), 2u);
  EXPECT_EQ(args[0], "--outer-count=5000");
  EXPECT_EQ(args[1], "--prior=beta:2,2");
  std::ofstream(dir / "b.conf") << "config=x\n";
  EXPECT_THROW(cli::config_file_arguments(dir / "b.conf"), InvalidArgument);
}

TEST(Cli, SolveWritesRecord) {
  TempDir dir;
  ASSERT_EQ(run_cli(with({"solve", "--kappa", "1", "--out", dir / "s.json"}, kFastSolve)),
            cli::kExitOk);
  const io::Json j = io::Json::parse(io::read_text(dir / "s.json"));
  EXPECT_EQ(j["status"], "converged");
  EXPECT_NEAR(j["tilt"]["r1"].get<double>(), 0.6180339887498949, 1e-3);
  EXPECT_TRUE(j.contains("config"));
}

TEST(Cli, SolveIsByteReproducible) {
  TempDir dir;
  const auto args = with({"solve", "--kappa", "0.5", "--model", "logistic", "--prior", "beta:2,2",
                          "--signal", "beta:2,5", "--seed", "3"},
                         kFastSolve);
  ASSERT_EQ(run_cli(with(args, {"--out", dir / "a.json"})), 0);
  const std::string first = io::read_text(dir / "a.json");
  ASSERT_EQ(run_cli(with(args, {"--out", dir / "a.json"})), 0);
  EXPECT_EQ(first, io::read_text(dir / "a.json"));
}

TEST(Cli, UsageErrors) {
  TempDir dir;
  EXPECT_EQ(run_cli({"solve", "--kappa", "-1", "--out", dir / "s.json"}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"solve", "--out", dir / "s.json"}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"solve", "--kappa", "1", "--bogus", "2"}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"solve", "--kappa", "1", "--prior", "cauchy:1"}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"sweep", "--kappa-grid", "", "--out", dir / "s.csv"}), cli::kExitUsage);
  EXPECT_EQ(run_cli({"--help"}), cli::kExitOk);
}

TEST(Cli, ConfigFileAndOverride) {
  TempDir dir;
  std::ofstream(dir / "run.conf") << "kappa=2\nouter_count=4000\nno_mc_check=true\n";
  ASSERT_EQ(run_cli({"solve", "--config", dir / "run.conf", "--out", dir / "a.json"}), 0);
  EXPECT_NEAR(io::Json::parse(io::read_text(dir / "a.json"))["params"]["kappa"].get<double>(),
              2.0, 0);
  ASSERT_EQ(run_cli({"solve", "--config", dir / "run.conf", "--kappa", "1", "--out", dir / "b.json"}),
            0);
  EXPECT_NEAR(io::Json::parse(io::read_text(dir / "b.json"))["params"]["kappa"].get<double>(),
              1.0, 0);
  std::ofstream(dir / "bad.conf") << "kappa=1\nnot_a_flag=3\n";
  EXPECT_EQ(run_cli({"solve", "--config", dir / "bad.conf", "--out", dir / "c.json"}),
            cli::kExitUsage);
}

TEST(Cli, NonconvergenceExitsNumerical) {
  TempDir dir;
  EXPECT_EQ(run_cli(with({"solve", "--kappa", "1", "--max-iter", "1", "--out", dir / "s.json"},
                     kFastSolve)),
            cli::kExitNumerical);
  const io::Json j = io::Json::parse(io::read_text(dir / "s.json"));
  EXPECT_NE(j["status"], "converged");
}

TEST(Cli, SweepTable) {
  TempDir dir;
  ASSERT_EQ(run_cli(with({"sweep", "--kappa-grid", "0.5,1,2", "--out", dir / "s.csv", "--bayes-out",
                      dir / "b.csv"},
                     kFastSolve)),
            0);
  const io::CsvTable t = io::read_csv(dir / "s.csv");
  ASSERT_EQ(t.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const double k = t.number(i, "kappa");
    EXPECT_NEAR(t.number(i, "r1"), std::sqrt(0.25 * k * k + 1) - 0.5 * k, 1e-3);
  }
  const io::CsvTable b = io::read_csv(dir / "b.csv");
  EXPECT_TRUE(b.has_column("mse_bayes"));
  EXPECT_EQ(b.rows.size(), 3u);
}

TEST(Cli, Validate) {
  TempDir dir;
  EXPECT_EQ(run_cli({"validate"}), cli::kExitOk);
}

TEST(Cli, SimulateAndCompare) {
  TempDir dir;
  ASSERT_EQ(run_cli(with({"solve", "--kappa", "1", "--model", "logistic", "--prior", "beta:2,2",
                      "--signal", "beta:2,5", "--out", dir / "s.json"},
                     kFastSolve)),
            0);
  ASSERT_EQ(run_cli({"simulate", "--n", "60", "--kappa", "1", "--model", "logistic", "--prior",
                 "beta:2,2", "--signal", "beta:2,5", "--observed-only", "--chains", "2", "--draws",
                 "200", "--tune", "200", "--tracked", "0,1,2", "--out-dir", dir / "sim"}),
            0);
  EXPECT_TRUE(fs::exists(dir / "sim/chain_0.csv"));
  EXPECT_TRUE(fs::exists(dir / "sim/chain_1.csv"));
  const io::Json meta = io::Json::parse(io::read_text(dir / "sim/simulation.meta.json"));
  EXPECT_EQ(meta["p"], 60);
  EXPECT_EQ(meta["chains"].size(), 2u);
  const int code = run_cli({"compare", "--sim-dir", dir / "sim", "--solution", dir / "s.json",
                        "--theory-draws", "5000", "--ks-gate", "1.0", "--out", dir / "c.json"});
  EXPECT_EQ(code, 0);
  const io::Json c = io::Json::parse(io::read_text(dir / "c.json"));
  EXPECT_GE(c["ks_distance"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir / "c.qq.csv"));
  EXPECT_FALSE(c.contains("conditional"));
  EXPECT_EQ(run_cli({"compare", "--sim-dir", dir / "sim", "--solution", dir / "s.json",
                     "--theory-draws", "5000", "--ks-gate", "0", "--out", dir / "d.json"}),
            cli::kExitGateFailed);
  ASSERT_EQ(run_cli({"compare", "--sim-dir", dir / "sim", "--solution", dir / "s.json",
                     "--coordinate", "1", "--theory-draws", "5000", "--ks-gate", "1.0", "--out",
                     dir / "e.json"}),
            0);
  const io::Json e = io::Json::parse(io::read_text(dir / "e.json"));
  EXPECT_EQ(e["coordinate"], 1);
  ASSERT_TRUE(e.contains("conditional"));
  EXPECT_EQ(e["conditional"]["mode"], "conditional");
  EXPECT_EQ(run_cli({"compare", "--sim-dir", dir / "sim", "--solution", dir / "s.json",
                     "--mode", "conditional", "--out", dir / "f.json"}),
            cli::kExitUsage);
}
