#include "glmtilt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glmtilt/integrate.hpp"
#include "glmtilt/types.hpp"

namespace glmtilt {

Estimate batch_means(const std::vector<Eigen::VectorXd>& series) {
  std::vector<double> means;
  std::vector<double> all;
  for (const Eigen::VectorXd& s : series) {
    const Eigen::Index n = s.size();
    all.insert(all.end(), s.data(), s.data() + n);
    const Eigen::Index b = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::sqrt(n)));
    for (Eigen::Index k = 0; k + b <= n; k += b) means.push_back(s.segment(k, b).mean());
  }
  if (all.empty()) throw InvalidArgument("batch_means: no values");
  Estimate e;
  e.mean = pairwise_sum(all) / static_cast<double>(all.size());
  e.se = means.size() >= 2 ? std::sqrt(sample_variance(means) / means.size())
                           : std::numeric_limits<double>::quiet_NaN();
  return e;
}

double split_rhat(const std::vector<Eigen::VectorXd>& series) {
  std::vector<Eigen::VectorXd> halves;
  for (const Eigen::VectorXd& s : series) {
    const Eigen::Index h = s.size() / 2;
    if (h < 2) throw InvalidArgument("split_rhat: series too short");
    halves.push_back(s.head(h));
    halves.push_back(s.segment(s.size() - h, h));
  }
  const Eigen::Index n = halves.front().size();
  for (const auto& h : halves) {
    if (h.size() != n) throw InvalidArgument("split_rhat: series lengths differ");
  }
  const double m = static_cast<double>(halves.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& h : halves) {
    means.push_back(h.mean());
    w += (h.array() - h.mean()).square().sum() / (n - 1);
  }
  w /= m;
  const double b = n * sample_variance(means);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return w > 0 ? std::sqrt(var_plus / w) : std::numeric_limits<double>::quiet_NaN();
}

double sample_mean(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("sample_mean: empty sample");
  return pairwise_sum(x) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw InvalidArgument("sample_variance: need two values");
  const double m = sample_mean(x);
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - m) * (x[i] - m);
  return pairwise_sum(sq) / static_cast<double>(x.size() - 1);
}

double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("sorted_quantile: empty sample");
  const double h = (sorted.size() - 1) * std::clamp(q, 0.0, 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

}  // namespace glmtilt
