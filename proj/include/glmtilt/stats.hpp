#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace glmtilt {

/// A Monte Carlo estimate and its standard error.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Batch-means estimate over one or more series (e.g. one per chain). Each
/// series is cut into batches of floor(sqrt(length)) consecutive values; the
/// standard error is the spread of all batch means over sqrt(#batches).
Estimate batch_means(const std::vector<Eigen::VectorXd>& series);

/// Split R-hat (each series halved) of the potential scale reduction.
double split_rhat(const std::vector<Eigen::VectorXd>& series);

double sample_mean(std::span<const double> x);
/// Unbiased sample variance.
double sample_variance(std::span<const double> x);

/// Type-7 (linear interpolation) quantile of an ascending sample.
double sorted_quantile(std::span<const double> sorted, double q);

}  // namespace glmtilt
