#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "glmtilt/simulator.hpp"
#include "glmtilt/stats.hpp"

using namespace glmtilt;

namespace {

double fd_rel_error(const Dataset& d, const ModelSpec& m, const PriorSpec& prior,
                    const Eigen::VectorXd& b, StatisticMode mode) {
  const auto [lp, g] = posterior_logdensity_and_grad(d, m, prior, b, mode);
  Eigen::VectorXd fd(b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(b(j)));
    Eigen::VectorXd bp = b;
    Eigen::VectorXd bm = b;
    bp(j) += h;
    bm(j) -= h;
    fd(j) = (posterior_logdensity_and_grad(d, m, prior, bp, mode).first -
             posterior_logdensity_and_grad(d, m, prior, bm, mode).first) /
            (2 * h);
  }
  return (fd - g).norm() / std::max(1.0, g.norm());
}

SimulationConfig small_config(int chains, int draws, int tune, std::uint64_t seed) {
  SimulationConfig cfg;
  cfg.hmc.chains = chains;
  cfg.hmc.draws = draws;
  cfg.hmc.tune = tune;
  cfg.hmc.seed = seed;
  cfg.tracked_coords = {0, 1};
  return cfg;
}

}  // namespace

TEST(Dataset, ShapeAndOutcomes) {
  const ModelSpec m = logistic_model(1e-3);
  const Dataset d = generate_dataset(m, beta_signal(2, 5), 200, 0.5, 3);
  EXPECT_EQ(d.p, 100);
  EXPECT_EQ(d.X.rows(), 200);
  EXPECT_EQ(d.X.cols(), 100);
  EXPECT_NEAR(d.X.squaredNorm() / d.X.size(), 1.0 / 200, 0.1 / 200);
  const Eigen::VectorXd x = d.X * d.beta_star;
  for (int i = 0; i < d.n; ++i) {
    EXPECT_EQ(d.y(i), m.outcome(x(i), d.e(i)));
    EXPECT_TRUE(d.y(i) == 0.0 || d.y(i) == 1.0);
  }
  EXPECT_GT(d.beta_star.minCoeff(), 0.0);
  EXPECT_LT(d.beta_star.maxCoeff(), 1.0);
}

TEST(Dataset, SeedAndErrors) {
  const ModelSpec m = linear_model();
  const SignalSpec s = gaussian_signal(1.0);
  const Dataset a = generate_dataset(m, s, 50, 1.0, 7);
  const Dataset b = generate_dataset(m, s, 50, 1.0, 7);
  EXPECT_EQ(a.X, b.X);
  EXPECT_EQ(a.y, b.y);
  const Eigen::VectorXd fixed = Eigen::VectorXd::Constant(50, 0.25);
  EXPECT_EQ(generate_dataset(m, s, 50, 1.0, 7, fixed).beta_star, fixed);
  EXPECT_THROW(generate_dataset(m, s, 5, 1.0, 7), InvalidArgument);
  EXPECT_THROW(generate_dataset(m, s, 50, -1.0, 7), InvalidArgument);
  EXPECT_THROW(generate_dataset(m, s, 50, 1.0, 7, Eigen::VectorXd::Zero(3)), InvalidArgument);
}

TEST(Posterior, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::normal_distribution<double> z;
  const std::vector<ModelSpec> models{linear_model(), logistic_model(1e-3), binomial_model(3)};
  for (const ModelSpec& m : models) {
    for (const PriorSpec& prior : {gaussian_prior(1.0), beta_prior(2, 2)}) {
      const Dataset d = generate_dataset(m, beta_signal(2, 5), 60, 0.5, 2);
      for (StatisticMode mode : {StatisticMode::Smoothed, StatisticMode::ObservedOnly}) {
        for (int k = 0; k < 5; ++k) {
          Eigen::VectorXd b(d.p);
          for (Eigen::Index j = 0; j < d.p; ++j) b(j) = prior.name == "beta" ? u(rng) : z(rng);
          EXPECT_LT(fd_rel_error(d, m, prior, b, mode), 1e-5) << m.name << " " << prior.name;
        }
      }
    }
  }
}

TEST(Posterior, BatchMatchesSinglePoint) {
  const ModelSpec m = logistic_model(1e-3);
  const PriorSpec prior = beta_prior(2, 2);
  const Dataset d = generate_dataset(m, beta_signal(2, 5), 40, 1.0, 4);
  const PosteriorTarget target(d, m, prior, StatisticMode::Smoothed);
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(d.p, 3, 0.3);
  b.col(1).setConstant(0.6);
  b(0, 2) = 1.5;
  Eigen::VectorXd lp;
  Eigen::MatrixXd g;
  target.batch(b, lp, g);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd gs;
    EXPECT_NEAR(target.logdensity_and_grad(b.col(c), gs), lp(c), 1e-9 * std::abs(lp(c)));
    EXPECT_LT((gs - g.col(c)).norm(), 1e-9 * gs.norm());
  }
  EXPECT_EQ(lp(2), -std::numeric_limits<double>::infinity());
  EXPECT_TRUE(g.col(2).isZero(0.0));
}

TEST(Posterior, ZeroDesignLeavesThePrior) {
  const ModelSpec m = logistic_model(1e-3);
  const PriorSpec prior = beta_prior(2, 5);
  Dataset d = generate_dataset(m, beta_signal(2, 5), 30, 1.0, 1);
  d.X.setZero();
  Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(d.p, 0.05, 0.95);
  const auto [lp, g] = posterior_logdensity_and_grad(d, m, prior, b, StatisticMode::ObservedOnly);
  for (Eigen::Index j = 0; j < d.p; ++j) {
    EXPECT_NEAR(g(j), prior.log_density_prime(b(j)), 1e-12);
  }
  const auto [lp2, g2] =
      posterior_logdensity_and_grad(d, m, prior, Eigen::VectorXd::Constant(d.p, 0.5),
                                    StatisticMode::ObservedOnly);
  double prior_diff = 0.0;
  for (Eigen::Index j = 0; j < d.p; ++j) {
    prior_diff += prior.log_density(b(j)) - prior.log_density(0.5);
  }
  EXPECT_NEAR(lp - lp2, prior_diff, 1e-9);
}

TEST(Posterior, LinearModeIsRidge) {
  const ModelSpec m = linear_model();
  const PriorSpec prior = gaussian_prior(1.0);
  const Dataset d = generate_dataset(m, gaussian_signal(1.0), 80, 0.5, 6);
  const Eigen::MatrixXd a =
      d.X.transpose() * d.X + Eigen::MatrixXd::Identity(d.p, d.p);
  const Eigen::VectorXd mode = a.llt().solve(d.X.transpose() * d.y);
  const auto [lp, g] = posterior_logdensity_and_grad(d, m, prior, mode, StatisticMode::ObservedOnly);
  EXPECT_LT(g.norm(), 1e-10);
}

TEST(Chains, LinearPosteriorMoments) {
  const ModelSpec m = linear_model();
  const PriorSpec prior = gaussian_prior(1.0);
  const Dataset d = generate_dataset(m, gaussian_signal(1.0), 60, 0.5, 8);
  SimulationConfig cfg = small_config(4, 1000, 500, 3);
  cfg.mode = StatisticMode::ObservedOnly;
  const auto chains = run_chains(d, m, prior, cfg);
  ASSERT_EQ(chains.size(), 4u);
  const Eigen::MatrixXd a = d.X.transpose() * d.X + Eigen::MatrixXd::Identity(d.p, d.p);
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  const Eigen::VectorXd mu = llt.solve(d.X.transpose() * d.y);
  const Eigen::MatrixXd sigma = llt.solve(Eigen::MatrixXd::Identity(d.p, d.p));
  for (int j = 0; j < 2; ++j) {
    std::vector<Eigen::VectorXd> series;
    for (const ChainOutput& c : chains) series.push_back(c.draws.col(j));
    const Estimate e = batch_means(series);
    EXPECT_NEAR(e.mean, mu(j), 4 * e.se + 1e-3);
    EXPECT_LT(split_rhat(series), 1.05);
  }
  const OverlapEstimates ov = estimate_overlaps(chains);
  const double q11 = (mu.squaredNorm() + sigma.trace()) / d.p;
  const double q1s = d.beta_star.dot(mu) / d.p;
  const double q12 = mu.squaredNorm() / d.p;
  EXPECT_NEAR(ov.q11.mean, q11, 4 * ov.q11.se + 2e-3);
  EXPECT_NEAR(ov.q1star.mean, q1s, 4 * ov.q1star.se + 2e-3);
  ASSERT_TRUE(ov.q12_available);
  EXPECT_NEAR(ov.q12.mean, q12, 4 * ov.q12.se + 2e-3);
  for (const ChainOutput& c : chains) {
    EXPECT_GT(c.acceptance_rate, 0.5);
    EXPECT_EQ(c.status, "ok");
    EXPECT_EQ(c.q12_partner, (c.chain_id + 1) % 4);
  }
}

TEST(Chains, PriorOnlyCrossOverlapVanishes) {
  const ModelSpec m = linear_model();
  const PriorSpec prior = gaussian_prior(1.0);
  Dataset d = generate_dataset(m, gaussian_signal(1.0), 40, 1.0, 2);
  d.X.setZero();
  SimulationConfig cfg = small_config(3, 500, 300, 4);
  const OverlapEstimates ov = estimate_overlaps(run_chains(d, m, prior, cfg));
  EXPECT_NEAR(ov.q12.mean, 0.0, 4 * ov.q12.se + 1e-3);
  EXPECT_NEAR(ov.q11.mean, 1.0, 4 * ov.q11.se + 1e-3);
}

TEST(Chains, SingleChainHasNoCrossOverlap) {
  const ModelSpec m = linear_model();
  const Dataset d = generate_dataset(m, gaussian_signal(1.0), 20, 1.0, 2);
  const auto chains = run_chains(d, m, gaussian_prior(1.0), small_config(1, 50, 50, 1));
  EXPECT_EQ(chains.front().q12_partner, -1);
  EXPECT_FALSE(estimate_overlaps(chains).q12_available);
}

TEST(Chains, DeterministicAndRejectsBadCoordinates) {
  const ModelSpec m = logistic_model(1e-3);
  const PriorSpec prior = beta_prior(2, 2);
  const Dataset d = generate_dataset(m, beta_signal(2, 5), 30, 1.0, 5);
  const SimulationConfig cfg = small_config(2, 50, 50, 9);
  const auto a = run_chains(d, m, prior, cfg);
  const auto b = run_chains(d, m, prior, cfg);
  for (int c = 0; c < 2; ++c) {
    EXPECT_EQ(a[c].draws, b[c].draws);
    EXPECT_EQ(a[c].q11, b[c].q11);
    EXPECT_GT(a[c].draws.minCoeff(), 0.0);
    EXPECT_LT(a[c].draws.maxCoeff(), 1.0);
  }
  SimulationConfig bad = cfg;
  bad.tracked_coords = {30};
  EXPECT_THROW(run_chains(d, m, prior, bad), InvalidArgument);
}

TEST(Chains, LogisticBetaChainsMix) {
  const ModelSpec m = logistic_model(1e-3);
  const PriorSpec prior = beta_prior(2, 2);
  const Dataset d = generate_dataset(m, beta_signal(2, 5), 100, 1.0, 12);
  SimulationConfig cfg = small_config(4, 500, 500, 2);
  cfg.mode = StatisticMode::ObservedOnly;
  const auto chains = run_chains(d, m, prior, cfg);
  for (int j = 0; j < 2; ++j) {
    std::vector<Eigen::VectorXd> series;
    for (const ChainOutput& c : chains) series.push_back(c.draws.col(j));
    EXPECT_LT(split_rhat(series), 1.05);
  }
  std::vector<Eigen::VectorXd> q11;
  for (const ChainOutput& c : chains) q11.push_back(c.q11);
  EXPECT_LT(split_rhat(q11), 1.05);
}
