#pragma once

#include <cmath>

namespace glmtilt {

/// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

/// sigmoid'(x) = sigmoid(x) (1 - sigmoid(x)), i.e. the logistic density.
inline double sigmoid_prime(double x) {
  const double ex = std::exp(-std::abs(x));
  return ex / ((1.0 + ex) * (1.0 + ex));
}

/// Inverse sigmoid with e clipped to [1e-12, 1 - 1e-12].
double logit_clipped(double e);

/// f_delta(x) = (tanh(x / delta) + 1) / 2, a smooth step of width delta.
inline double smooth_step(double x, double delta) {
  return 0.5 * (std::tanh(x / delta) + 1.0);
}

inline double smooth_step_prime(double x, double delta) {
  const double c = std::cosh(x / delta);
  if (!std::isfinite(c)) {
    return 0.0;
  }
  return 0.5 / (delta * c * c);
}

double normal_cdf(double x);
double normal_quantile(double p);

inline double normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// P(Y >= k) for Y ~ Binomial(m, p).
double binomial_upper_tail(int m, int k, double p);

/// P(Y = k) for Y ~ Binomial(m, p).
double binomial_pmf(int m, int k, double p);

}  // namespace glmtilt
