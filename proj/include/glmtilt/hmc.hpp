#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "glmtilt/types.hpp"

namespace glmtilt {

/// Log density and gradient at a batch of positions, one per column. Points
/// outside the support report -infinity and a zero gradient.
using BatchLogDensity = std::function<void(const Eigen::MatrixXd& positions,
                                           Eigen::VectorXd& logp, Eigen::MatrixXd& grad)>;

/// Nesterov dual averaging of log step size toward a target acceptance rate.
class DualAveraging {
 public:
  explicit DualAveraging(double target = 0.8, double gamma = 0.05, double t0 = 10.0,
                         double kappa = 0.75)
      : target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {}

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    log_step_bar_ = 0.0;
    h_bar_ = 0.0;
    count_ = 0;
  }

  /// Feeds one acceptance statistic; returns the next step size.
  double update(double accept_stat) {
    ++count_;
    const double t = count_;
    const double eta = 1.0 / (t + t0_);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_stat);
    const double log_step = mu_ - std::sqrt(t) / gamma_ * h_bar_;
    const double w = std::pow(t, -kappa_);
    log_step_bar_ = w * log_step + (1.0 - w) * log_step_bar_;
    return std::exp(log_step);
  }

  double final_step() const { return std::exp(log_step_bar_); }

 private:
  double target_;
  double gamma_;
  double t0_;
  double kappa_;
  double mu_ = 0.0;
  double log_step_bar_ = 0.0;
  double h_bar_ = 0.0;
  int count_ = 0;
};

struct HmcConfig {
  int chains = 4;
  int draws = 1000;
  int tune = 2000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  /// Fixed number of leapfrog steps; 0 chooses it from the integration time.
  int leapfrog_steps = 0;
  /// Integration time; 0 sets it to (pi/2) times the largest coordinate
  /// standard deviation seen in the first half of tuning.
  double trajectory_length = 0.0;
  int max_leapfrog_steps = 512;
  /// Per-iteration uniform jitter of the step size, as a fraction.
  double step_jitter = 0.1;
  double max_energy_error = 1000.0;
};

struct HmcChainStats {
  int chain_id = 0;
  std::uint64_t seed = 0;
  double step_size = 0.0;
  int leapfrog_steps = 0;
  /// Mean acceptance probability over the kept draws.
  double acceptance_rate = 0.0;
  int divergences_tune = 0;
  int divergences = 0;
  /// |H(end) - H(start)| per kept trajectory.
  std::vector<double> energy_errors;
};

/// Called after every kept iteration with the current positions of all chains.
using DrawCallback = std::function<void(int draw, const Eigen::MatrixXd& positions)>;

/// Runs `config.chains` HMC chains in lockstep from the columns of `init`
/// (identity mass matrix). Chain c draws from make_stream(seed, c).
std::vector<HmcChainStats> run_hmc(const BatchLogDensity& target, const Eigen::MatrixXd& init,
                                   const HmcConfig& config, const DrawCallback& on_draw);

}  // namespace glmtilt
