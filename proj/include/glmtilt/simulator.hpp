#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "glmtilt/hmc.hpp"
#include "glmtilt/model.hpp"
#include "glmtilt/stats.hpp"

namespace glmtilt {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One draw of (X, y, beta_star) with X_ij ~ N(0, 1/n) and y_i = f(X_i' beta_star, e_i).
struct Dataset {
  RowMatrix X;
  Eigen::VectorXd y;
  Eigen::VectorXd beta_star;
  Eigen::VectorXd e;
  int n = 0;
  int p = 0;
  double kappa = 0.0;
  std::uint64_t seed = 0;
};

/// p = round(kappa n). beta_star is drawn i.i.d. from the signal unless supplied.
Dataset generate_dataset(const ModelSpec& model, const SignalSpec& signal, int n, double kappa,
                         std::uint64_t seed,
                         const std::optional<Eigen::VectorXd>& beta_star = std::nullopt);

/// Which per-observation statistic multiplies X_i' b in the log-likelihood.
enum class StatisticMode {
  /// T~(X_i' beta_star, e_i), using the retained latent uniforms.
  Smoothed,
  /// The observed outcome y_i.
  ObservedOnly,
};

Eigen::VectorXd sufficient_statistic(const Dataset& data, const ModelSpec& model,
                                     StatisticMode mode);

/// sum_i t_i X_i' b - A(X_i' b) + sum_j log mu(b_j) and its gradient, for
/// single points or column batches.
class PosteriorTarget {
 public:
  PosteriorTarget(const Dataset& data, const ModelSpec& model, const PriorSpec& prior,
                  StatisticMode mode);

  double logdensity_and_grad(const Eigen::VectorXd& b, Eigen::VectorXd& grad) const;
  void batch(const Eigen::MatrixXd& b, Eigen::VectorXd& logp, Eigen::MatrixXd& grad) const;

  const Eigen::VectorXd& statistic() const { return t_; }

 private:
  const Dataset* data_;
  const ModelSpec* model_;
  const PriorSpec* prior_;
  Eigen::VectorXd t_;
  /// With A(x) = x^2/2 the likelihood only needs X'X and X't.
  bool gram_ = false;
  /// Lower triangle of X'X.
  Eigen::MatrixXd gram_matrix_;
  Eigen::VectorXd xt_;
  double tt_ = 0.0;
};

std::pair<double, Eigen::VectorXd> posterior_logdensity_and_grad(
    const Dataset& data, const ModelSpec& model, const PriorSpec& prior, const Eigen::VectorXd& b,
    StatisticMode mode = StatisticMode::Smoothed);

struct SimulationConfig {
  HmcConfig hmc;
  std::vector<Eigen::Index> tracked_coords;
  StatisticMode mode = StatisticMode::Smoothed;
};

/// Per-chain output. Overlaps are recorded for every kept draw:
/// q11 = |b|^2/p, q1star = beta_star'b/p and q12 = b'c/p with c the draw of
/// the same index in chain (chain_id + 1) mod chains.
struct ChainOutput {
  int chain_id = 0;
  std::uint64_t seed = 0;
  int p = 0;
  std::vector<Eigen::Index> tracked_coords;
  Eigen::MatrixXd draws;
  Eigen::VectorXd q11;
  Eigen::VectorXd q1star;
  Eigen::VectorXd q12;
  int q12_partner = -1;
  double acceptance_rate = 0.0;
  double step_size = 0.0;
  int leapfrog_steps = 0;
  int divergences_tune = 0;
  int divergences = 0;
  std::vector<double> energy_errors;
  /// "ok", or "warning" when more than 1% of kept trajectories diverged.
  std::string status = "ok";
};

/// Starts every chain at the prior mode. For a bounded prior the sampler moves
/// in unconstrained coordinates u with b = b(u) (scaled logistic on an
/// interval, exponential on a half-line) and the log-Jacobian added to the
/// target; recorded draws are in b. Throws NumericalError if every kept
/// trajectory diverges.
std::vector<ChainOutput> run_chains(const Dataset& data, const ModelSpec& model,
                                    const PriorSpec& prior, const SimulationConfig& config);

struct OverlapEstimates {
  Estimate q11;
  Estimate q12;
  Estimate q1star;
  bool q12_available = false;
};

OverlapEstimates estimate_overlaps(const std::vector<ChainOutput>& chains);

}  // namespace glmtilt
