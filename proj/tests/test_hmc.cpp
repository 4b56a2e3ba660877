#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "glmtilt/hmc.hpp"

using namespace glmtilt;

namespace {

// Independent Gaussian with standard deviations (1, 2).
void gaussian_2d(const Eigen::MatrixXd& q, Eigen::VectorXd& logp, Eigen::MatrixXd& grad) {
  const Eigen::Vector2d prec(1.0, 0.25);
  grad = -(prec.asDiagonal() * q);
  logp.resize(q.cols());
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    logp(c) = -0.5 * q.col(c).dot(prec.asDiagonal() * q.col(c));
  }
}

struct Collected {
  std::vector<Eigen::MatrixXd> draws;
};

std::vector<HmcChainStats> run_gaussian(const HmcConfig& cfg, Collected& out) {
  const Eigen::MatrixXd init = Eigen::MatrixXd::Zero(2, cfg.chains);
  return run_hmc(gaussian_2d, init, cfg,
                 [&](int, const Eigen::MatrixXd& q) { out.draws.push_back(q); });
}

}  // namespace

TEST(DualAveraging, FindsStepForTargetAcceptance) {
  DualAveraging da(0.8);
  double step = 1.0;
  da.restart(step);
  for (int i = 0; i < 3000; ++i) step = da.update(std::exp(-step));
  EXPECT_NEAR(da.final_step(), -std::log(0.8), 0.02);
}

TEST(DualAveraging, GrowsWhenAlwaysAccepted) {
  DualAveraging da(0.8);
  da.restart(0.1);
  for (int i = 0; i < 50; ++i) da.update(1.0);
  EXPECT_GT(da.final_step(), 0.1);
}

TEST(Hmc, SamplesGaussian) {
  HmcConfig cfg;
  cfg.chains = 4;
  cfg.draws = 2000;
  cfg.tune = 1000;
  cfg.seed = 5;
  Collected out;
  const auto stats = run_gaussian(cfg, out);
  ASSERT_EQ(out.draws.size(), 2000u);
  double s0 = 0, s1 = 0, ss0 = 0, ss1 = 0;
  std::vector<int> bins(10, 0);
  int total = 0;
  for (const Eigen::MatrixXd& q : out.draws) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      s0 += q(0, c);
      s1 += q(1, c);
      ss0 += q(0, c) * q(0, c);
      ss1 += q(1, c) * q(1, c);
      const double r2 = q(0, c) * q(0, c) + 0.25 * q(1, c) * q(1, c);
      const double u = 1.0 - std::exp(-0.5 * r2);
      ++bins[std::min(9, static_cast<int>(u * 10))];
      ++total;
    }
  }
  EXPECT_NEAR(s0 / total, 0.0, 0.08);
  EXPECT_NEAR(s1 / total, 0.0, 0.16);
  EXPECT_NEAR(ss0 / total, 1.0, 0.1);
  EXPECT_NEAR(ss1 / total, 4.0, 0.4);
  for (int b : bins) EXPECT_NEAR(double(b) / total, 0.1, 0.025);
  for (const HmcChainStats& s : stats) {
    EXPECT_GT(s.acceptance_rate, 0.6);
    EXPECT_LE(s.acceptance_rate, 1.0);
    EXPECT_EQ(s.divergences, 0);
    std::vector<double> e = s.energy_errors;
    std::nth_element(e.begin(), e.begin() + e.size() / 2, e.end());
    EXPECT_LT(e[e.size() / 2], 0.3);
  }
}

TEST(Hmc, Deterministic) {
  HmcConfig cfg;
  cfg.chains = 2;
  cfg.draws = 100;
  cfg.tune = 100;
  cfg.seed = 11;
  Collected a;
  Collected b;
  run_gaussian(cfg, a);
  run_gaussian(cfg, b);
  ASSERT_EQ(a.draws.size(), b.draws.size());
  for (std::size_t i = 0; i < a.draws.size(); ++i) EXPECT_EQ(a.draws[i], b.draws[i]);
  cfg.seed = 12;
  Collected c;
  run_gaussian(cfg, c);
  EXPECT_NE(a.draws.back(), c.draws.back());
}

TEST(Hmc, FixedLeapfrogStepsAreReported) {
  HmcConfig cfg;
  cfg.chains = 1;
  cfg.draws = 10;
  cfg.tune = 50;
  cfg.leapfrog_steps = 7;
  Collected out;
  EXPECT_EQ(run_gaussian(cfg, out).front().leapfrog_steps, 7);
}

TEST(Hmc, AllDivergentThrows) {
  const BatchLogDensity spike = [](const Eigen::MatrixXd& q, Eigen::VectorXd& logp,
                                   Eigen::MatrixXd& grad) {
    logp.resize(q.cols());
    grad = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      logp(c) = q.col(c).isZero(0.0) ? 0.0 : -std::numeric_limits<double>::infinity();
    }
  };
  HmcConfig cfg;
  cfg.chains = 2;
  cfg.draws = 20;
  cfg.tune = 20;
  EXPECT_THROW(run_hmc(spike, Eigen::MatrixXd::Zero(3, 2), cfg, {}), NumericalError);
}

TEST(Hmc, RejectsBadInput) {
  HmcConfig cfg;
  cfg.chains = 2;
  EXPECT_THROW(run_hmc(gaussian_2d, Eigen::MatrixXd::Zero(2, 3), cfg, {}), InvalidArgument);
  cfg.target_accept = 1.0;
  EXPECT_THROW(run_hmc(gaussian_2d, Eigen::MatrixXd::Zero(2, 2), cfg, {}), InvalidArgument);
  cfg.target_accept = 0.8;
  Eigen::MatrixXd far = Eigen::MatrixXd::Zero(2, 2);
  const BatchLogDensity bad = [](const Eigen::MatrixXd& q, Eigen::VectorXd& logp,
                                 Eigen::MatrixXd& grad) {
    logp = Eigen::VectorXd::Constant(q.cols(), std::nan(""));
    grad = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  };
  EXPECT_THROW(run_hmc(bad, far, cfg, {}), NumericalError);
}
