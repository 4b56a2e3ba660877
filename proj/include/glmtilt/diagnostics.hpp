#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "glmtilt/model.hpp"
#include "glmtilt/scalar_system.hpp"
#include "glmtilt/simulator.hpp"
#include "glmtilt/stats.hpp"

namespace glmtilt {

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Exact 1-Wasserstein distance between two empirical distributions,
/// int |F_a - F_b| dx.
double wasserstein1(std::span<const double> a, std::span<const double> b);

/// (theoretical, empirical) quantile pairs at the percentiles 1, ..., 99.
std::vector<std::pair<double, double>> qq_pairs(std::span<const double> theoretical,
                                                std::span<const double> empirical);

/// 1 - SS(empirical - theoretical) / SS(empirical - mean): fit of the QQ
/// pairs to the identity line.
double qq_r2_identity(const std::vector<std::pair<double, double>>& qq);
/// Squared correlation of the QQ pairs (least-squares line with intercept).
double qq_r2_ols(const std::vector<std::pair<double, double>>& qq);

struct ComparisonReport {
  double ks_distance = 0.0;
  double wasserstein1 = 0.0;
  std::vector<std::pair<double, double>> qq_pairs;
  std::size_t n_samples = 0;
  std::size_t n_theory = 0;
  /// Coordinate index, or -1 for a pooled comparison.
  long coordinate = -1;
  /// "mixture" or "conditional".
  std::string mode = "mixture";
  /// Z used by the conditional comparison.
  double z_matched = std::numeric_limits<double>::quiet_NaN();
  double qq_r2_identity = 0.0;
  double qq_r2_ols = 0.0;
  std::map<std::string, std::string> metadata;
};

ComparisonReport compare_samples(std::span<const double> empirical,
                                 std::span<const double> theoretical);

/// Draws from one coordinate against the Z-mixture of conditional marginals.
ComparisonReport compare_marginal(std::span<const double> chain_draws,
                                  const SolutionRecord& record, const PriorSpec& prior,
                                  double beta_star_j, int num_theory_draws, std::uint64_t seed,
                                  long coordinate = -1);

/// As compare_marginal, but against the conditional marginal at the Z whose
/// conditional mean equals the empirical mean.
ComparisonReport compare_marginal_conditional(std::span<const double> chain_draws,
                                              const SolutionRecord& record,
                                              const PriorSpec& prior, double beta_star_j,
                                              int num_theory_draws, std::uint64_t seed,
                                              long coordinate = -1);

/// Draws pooled over several coordinates against theory draws allotted
/// round-robin over the same coordinates.
ComparisonReport compare_pooled(const std::vector<std::vector<double>>& draws_by_coord,
                                const std::vector<double>& beta_star_by_coord,
                                const SolutionRecord& record, const PriorSpec& prior,
                                int num_theory_draws, std::uint64_t seed);

struct RmtOracle {
  double marginal_variance = 0.0;
  double r1 = 0.0;
};

/// Limit of [(X'X + I)^{-1}]_jj for X with N(0, 1/n) entries and p/n -> kappa.
RmtOracle rmt_linear_oracle(double kappa);

/// Mean of |b - beta_star|^2 / p over all kept draws, with batch-means s.e.
Estimate mse_empirical(const std::vector<ChainOutput>& chains, const Eigen::VectorXd& beta_star);

}  // namespace glmtilt
