#include "glmtilt/special.hpp"

#include <algorithm>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/binomial.hpp>

namespace glmtilt {

double logit_clipped(double e) {
  constexpr double clip = 1e-12;
  e = std::clamp(e, clip, 1.0 - clip);
  return std::log(e) - std::log1p(-e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  constexpr double clip = 1e-300;
  p = std::clamp(p, clip, 1.0 - 1e-16);
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double binomial_pmf(int m, int k, double p) {
  if (k < 0 || k > m) {
    return 0.0;
  }
  return boost::math::binomial_coefficient<double>(m, k) * std::pow(p, k) *
         std::pow(1.0 - p, m - k);
}

double binomial_upper_tail(int m, int k, double p) {
  if (k <= 0) {
    return 1.0;
  }
  double tail = 0.0;
  for (int j = k; j <= m; ++j) {
    tail += binomial_pmf(m, j, p);
  }
  return std::min(tail, 1.0);
}

}  // namespace glmtilt
