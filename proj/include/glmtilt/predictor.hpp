#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "glmtilt/integrate.hpp"
#include "glmtilt/model.hpp"
#include "glmtilt/scalar_system.hpp"

namespace glmtilt {

/// Conditional limit law of one coordinate given Z = z:
/// p_{h,j}(b) ~ exp{-(b - alpha beta_star_j - sigma z)^2 / (2v)} mu(b),
/// tabulated on a fine grid together with its CDF.
struct MarginalPrediction {
  double beta_star_j = 0.0;
  double z = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  double v = 1.0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd density;
  Eigen::VectorXd cdf;

  /// Inverse CDF by linear interpolation on the table.
  double quantile(double u) const;
  double cdf_at(double b) const;
};

/// Fine-table resolution used for sampling and CDFs.
inline constexpr int kMarginalTableIntervals = 1024;

MarginalPrediction conditional_marginal(const SolutionRecord& record, const PriorSpec& prior,
                                        double beta_star_j, double z);

/// Normalized p_{h,j}(b) at the given points.
Eigen::VectorXd marginal_density(const SolutionRecord& record, const PriorSpec& prior,
                                 double beta_star_j, double z, const Eigen::VectorXd& grid);

/// One draw from the Z-mixture of conditional marginals.
double marginal_mixture_sampler(const SolutionRecord& record, const PriorSpec& prior,
                                double beta_star_j, Rng& rng);

/// One draw of <beta> under p_{h,j}(. | Z) with Z ~ N(0, 1).
double posterior_mean_law_sampler(const SolutionRecord& record, const PriorSpec& prior,
                                  double beta_star_j, Rng& rng);

/// CDF of the Z-mixture at the given points, averaging the conditional CDFs
/// over Gauss-Hermite nodes in Z.
Eigen::VectorXd mixture_cdf(const SolutionRecord& record, const PriorSpec& prior,
                            double beta_star_j, const Eigen::VectorXd& points,
                            int hermite_nodes = 512);

struct MseRow {
  double kappa = 0.0;
  double c = 0.0;
  double v_B = 0.0;
  double c_B = 0.0;
  double c_BBstar = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  double v = 0.0;
  std::string status;
  std::string message;
};

struct SweepResult {
  std::vector<MseRow> rows;
  std::vector<SolutionRecord> records;
};

/// Solves at every kappa of the grid, warm-starting from the previous
/// converged point unless `warm_start` is off. Failures become rows with a
/// status, never dropped.
SweepResult mse_curve(const ModelSpec& model, const PriorSpec& prior, const SignalSpec& signal,
                      const std::vector<double>& kappa_grid, const ProblemParams& base,
                      const SolverConfig& config, bool warm_start = true);

struct BayesRow {
  double kappa = 0.0;
  double alpha_bayes = 0.0;
  double sigma_bayes = 0.0;
  double mse = 0.0;
  /// (sigma_bayes / alpha_bayes)^2; NaN when alpha_bayes < 1e-8.
  double debiased_mse = 0.0;
  std::optional<double> alpha_mle;
  std::optional<double> sigma_mle;
};

struct MleConstants {
  double kappa = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
};

struct BayesTableOptions {
  /// Draws used by the regression estimate for non-Gaussian priors.
  int draws = 200000;
  std::uint64_t seed = 1;
};

/// Coefficients of the posterior-mean law <beta>_j ~ alpha_bayes beta_star_j + sigma_bayes Z.
/// Closed form under a Gaussian prior; otherwise the least-squares slope of
/// the sampled posterior mean on beta_star_j and the residual spread.
BayesRow bayes_row(const SolutionRecord& record, const PriorSpec& prior, const SignalSpec& signal,
                   const BayesTableOptions& options = {});

std::vector<BayesRow> bayes_vs_debiased_table(const std::vector<SolutionRecord>& records,
                                              const PriorSpec& prior, const SignalSpec& signal,
                                              const std::vector<MleConstants>& mle = {},
                                              const BayesTableOptions& options = {});

}  // namespace glmtilt
