#include "glmtilt/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "glmtilt/predictor.hpp"

namespace glmtilt {

namespace {

std::vector<double> sorted_copy(std::span<const double> x, const char* who) {
  if (x.empty()) throw InvalidArgument(std::string(who) + ": empty sample");
  std::vector<double> s(x.begin(), x.end());
  for (double v : s) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(who) + ": non-finite value");
  }
  std::sort(s.begin(), s.end());
  return s;
}

// Walks the merged order statistics, calling step(x_k, x_{k+1}, F_a, F_b)
// on each gap between consecutive distinct values.
template <class Step>
void walk_cdfs(const std::vector<double>& a, const std::vector<double>& b, Step&& step) {
  std::size_t i = 0;
  std::size_t j = 0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() || j < b.size()) {
    const double x = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    double next = std::numeric_limits<double>::quiet_NaN();
    if (i < a.size() || j < b.size()) {
      next = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    }
    step(x, next, i / na, j / nb);
  }
}

}  // namespace

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  const auto sa = sorted_copy(a, "ks_two_sample");
  const auto sb = sorted_copy(b, "ks_two_sample");
  double d = 0.0;
  walk_cdfs(sa, sb, [&](double, double, double fa, double fb) { d = std::max(d, std::abs(fa - fb)); });
  return d;
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  const auto sa = sorted_copy(a, "wasserstein1");
  const auto sb = sorted_copy(b, "wasserstein1");
  double w = 0.0;
  walk_cdfs(sa, sb, [&](double x, double next, double fa, double fb) {
    if (!std::isnan(next)) w += std::abs(fa - fb) * (next - x);
  });
  return w;
}

std::vector<std::pair<double, double>> qq_pairs(std::span<const double> theoretical,
                                                std::span<const double> empirical) {
  const auto st = sorted_copy(theoretical, "qq_pairs");
  const auto se = sorted_copy(empirical, "qq_pairs");
  std::vector<std::pair<double, double>> out;
  for (int k = 1; k <= 99; ++k) {
    out.emplace_back(sorted_quantile(st, k / 100.0), sorted_quantile(se, k / 100.0));
  }
  return out;
}

double qq_r2_identity(const std::vector<std::pair<double, double>>& qq) {
  double mean = 0.0;
  for (const auto& [t, e] : qq) mean += e;
  mean /= qq.size();
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (const auto& [t, e] : qq) {
    ss_res += (e - t) * (e - t);
    ss_tot += (e - mean) * (e - mean);
  }
  return ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
}

double qq_r2_ols(const std::vector<std::pair<double, double>>& qq) {
  const double n = static_cast<double>(qq.size());
  double mt = 0.0;
  double me = 0.0;
  for (const auto& [t, e] : qq) {
    mt += t;
    me += e;
  }
  mt /= n;
  me /= n;
  double stt = 0.0;
  double see = 0.0;
  double ste = 0.0;
  for (const auto& [t, e] : qq) {
    stt += (t - mt) * (t - mt);
    see += (e - me) * (e - me);
    ste += (t - mt) * (e - me);
  }
  return stt > 0 && see > 0 ? ste * ste / (stt * see) : 1.0;
}

ComparisonReport compare_samples(std::span<const double> empirical,
                                 std::span<const double> theoretical) {
  ComparisonReport r;
  r.ks_distance = ks_two_sample(empirical, theoretical);
  r.wasserstein1 = wasserstein1(empirical, theoretical);
  r.qq_pairs = qq_pairs(theoretical, empirical);
  r.qq_r2_identity = qq_r2_identity(r.qq_pairs);
  r.qq_r2_ols = qq_r2_ols(r.qq_pairs);
  r.n_samples = empirical.size();
  r.n_theory = theoretical.size();
  return r;
}

namespace {

void require_samples(std::span<const double> draws) {
  if (draws.size() < 100) throw InvalidArgument("comparison needs at least 100 empirical draws");
}

}  // namespace

ComparisonReport compare_marginal(std::span<const double> chain_draws,
                                  const SolutionRecord& record, const PriorSpec& prior,
                                  double beta_star_j, int num_theory_draws, std::uint64_t seed,
                                  long coordinate) {
  require_samples(chain_draws);
  if (num_theory_draws < 1) throw InvalidArgument("compare_marginal: no theory draws");
  Rng rng = make_stream(seed, 0);
  std::vector<double> theory(num_theory_draws);
  for (double& x : theory) x = marginal_mixture_sampler(record, prior, beta_star_j, rng);
  ComparisonReport r = compare_samples(chain_draws, theory);
  r.coordinate = coordinate;
  r.mode = "mixture";
  return r;
}

ComparisonReport compare_marginal_conditional(std::span<const double> chain_draws,
                                              const SolutionRecord& record,
                                              const PriorSpec& prior, double beta_star_j,
                                              int num_theory_draws, std::uint64_t seed,
                                              long coordinate) {
  require_samples(chain_draws);
  if (num_theory_draws < 1) throw InvalidArgument("compare_marginal_conditional: no theory draws");
  const double target = sample_mean(chain_draws);
  auto cond_mean = [&](double z) {
    return tilt_moments(record.tilt.alpha * beta_star_j + record.tilt.sigma * z, record.tilt.v,
                        prior)
        .mean;
  };
  // The conditional mean is nondecreasing in z.
  double lo = -10.0;
  double hi = 10.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cond_mean(mid) < target ? lo : hi) = mid;
  }
  const double z = 0.5 * (lo + hi);
  const MarginalPrediction mp = conditional_marginal(record, prior, beta_star_j, z);
  Rng rng = make_stream(seed, 1);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> theory(num_theory_draws);
  for (double& x : theory) x = mp.quantile(uniform(rng));
  ComparisonReport r = compare_samples(chain_draws, theory);
  r.coordinate = coordinate;
  r.mode = "conditional";
  r.z_matched = z;
  return r;
}

ComparisonReport compare_pooled(const std::vector<std::vector<double>>& draws_by_coord,
                                const std::vector<double>& beta_star_by_coord,
                                const SolutionRecord& record, const PriorSpec& prior,
                                int num_theory_draws, std::uint64_t seed) {
  if (draws_by_coord.empty() || draws_by_coord.size() != beta_star_by_coord.size()) {
    throw InvalidArgument("compare_pooled: one beta_star per coordinate required");
  }
  std::vector<double> pooled;
  for (const auto& d : draws_by_coord) pooled.insert(pooled.end(), d.begin(), d.end());
  require_samples(pooled);
  Rng rng = make_stream(seed, 0);
  std::vector<double> theory(num_theory_draws);
  for (int i = 0; i < num_theory_draws; ++i) {
    theory[i] = marginal_mixture_sampler(record, prior,
                                         beta_star_by_coord[i % beta_star_by_coord.size()], rng);
  }
  ComparisonReport r = compare_samples(pooled, theory);
  r.coordinate = -1;
  r.mode = "mixture";
  return r;
}

RmtOracle rmt_linear_oracle(double kappa) {
  if (!(kappa > 0)) throw InvalidArgument("rmt_linear_oracle: kappa must be positive");
  const double h = 0.5 * kappa;
  RmtOracle o;
  o.marginal_variance = 1.0 / (std::sqrt(h * h + 1.0) + 1.0 - h);
  o.r1 = 1.0 / o.marginal_variance - 1.0;
  return o;
}

Estimate mse_empirical(const std::vector<ChainOutput>& chains, const Eigen::VectorXd& beta_star) {
  if (chains.empty()) throw InvalidArgument("mse_empirical: no chains");
  std::vector<Eigen::VectorXd> series;
  for (const ChainOutput& c : chains) {
    if (beta_star.size() != c.p) throw InvalidArgument("mse_empirical: dimension mismatch");
    const double norm2 = beta_star.squaredNorm() / c.p;
    series.push_back((c.q11.array() - 2.0 * c.q1star.array() + norm2).matrix());
  }
  return batch_means(series);
}

}  // namespace glmtilt
