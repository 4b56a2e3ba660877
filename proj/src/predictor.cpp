#include "glmtilt/predictor.hpp"

#include <algorithm>
#include <cmath>

namespace glmtilt {

namespace {

void require_converged(const SolutionRecord& record, const char* who) {
  if (!record.converged()) {
    throw InvalidArgument(std::string(who) + ": solution record is not converged");
  }
}

struct TiltLogWeight {
  const PriorSpec& prior;
  double m;
  double v;

  Jet operator()(double b) const {
    if (!prior.interior(b)) return {-std::numeric_limits<double>::infinity(), 0.0, 0.0};
    const Jet mu = prior.log_jet(b);
    const double d = b - m;
    return {-0.5 * d * d / v + mu.value, -d / v + mu.d1, -1.0 / v + mu.d2};
  }
};

TiltedOptions tilt_options(const PriorSpec& prior, double m) {
  TiltedOptions opt;
  opt.lo = prior.lo;
  opt.hi = prior.hi;
  opt.start = prior.interior(m) ? m : prior.mode;
  return opt;
}

}  // namespace

double MarginalPrediction::quantile(double u) const {
  const Eigen::Index n = nodes.size();
  if (n == 1) return nodes(0);
  u = std::clamp(u, 0.0, 1.0);
  const double* first = cdf.data();
  const Eigen::Index i = std::lower_bound(first, first + n, u) - first;
  if (i == 0) return nodes(0);
  if (i >= n) return nodes(n - 1);
  const double span = cdf(i) - cdf(i - 1);
  const double w = span > 0 ? (u - cdf(i - 1)) / span : 0.5;
  return nodes(i - 1) + w * (nodes(i) - nodes(i - 1));
}

double MarginalPrediction::cdf_at(double b) const {
  const Eigen::Index n = nodes.size();
  if (b < nodes(0)) return 0.0;
  if (b >= nodes(n - 1)) return 1.0;
  const double* first = nodes.data();
  const Eigen::Index i = std::upper_bound(first, first + n, b) - first;
  const double w = (b - nodes(i - 1)) / (nodes(i) - nodes(i - 1));
  return cdf(i - 1) + w * (cdf(i) - cdf(i - 1));
}

MarginalPrediction conditional_marginal(const SolutionRecord& record, const PriorSpec& prior,
                                        double beta_star_j, double z) {
  require_converged(record, "conditional_marginal");
  MarginalPrediction out;
  out.beta_star_j = beta_star_j;
  out.z = z;
  out.alpha = record.tilt.alpha;
  out.sigma = record.tilt.sigma;
  out.v = record.tilt.v;
  const double m = out.alpha * beta_star_j + out.sigma * z;
  const TiltLogWeight log_w{prior, m, out.v};
  const TiltedWindow win = locate_window(log_w, tilt_options(prior, m));
  if (!(win.hi > win.lo)) {
    out.nodes = Eigen::VectorXd::Constant(1, win.mode);
    out.density = Eigen::VectorXd::Ones(1);
    out.cdf = Eigen::VectorXd::Ones(1);
    return out;
  }
  const QuadratureGrid grid = simpson_grid(win.lo, win.hi, kMarginalTableIntervals);
  out.nodes = grid.nodes;
  out.density.resize(grid.nodes.size());
  for (Eigen::Index i = 0; i < grid.nodes.size(); ++i) {
    out.density(i) = std::exp(log_w(grid.nodes(i)).value - win.log_w_mode);
  }
  out.density /= grid.weights.dot(out.density);
  out.cdf.resize(grid.nodes.size());
  out.cdf(0) = 0.0;
  const double h = (win.hi - win.lo) / kMarginalTableIntervals;
  for (Eigen::Index i = 1; i < grid.nodes.size(); ++i) {
    out.cdf(i) = out.cdf(i - 1) + 0.5 * h * (out.density(i - 1) + out.density(i));
  }
  out.cdf /= out.cdf(out.cdf.size() - 1);
  return out;
}

Eigen::VectorXd marginal_density(const SolutionRecord& record, const PriorSpec& prior,
                                 double beta_star_j, double z, const Eigen::VectorXd& grid) {
  require_converged(record, "marginal_density");
  if (grid.size() == 0) throw InvalidArgument("marginal_density: empty grid");
  const double m = record.tilt.alpha * beta_star_j + record.tilt.sigma * z;
  const TiltLogWeight log_w{prior, m, record.tilt.v};
  const auto res = moments_of_tilted_density<1>(
      log_w, [](double b) { return Eigen::Array<double, 1, 1>(b); }, tilt_options(prior, m));
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    out(i) = std::exp(log_w(grid(i)).value - res.log_normalizer);
  }
  if (!(out.maxCoeff() > 0)) {
    throw InvalidArgument("marginal_density: grid lies outside the prior support");
  }
  return out;
}

double marginal_mixture_sampler(const SolutionRecord& record, const PriorSpec& prior,
                                double beta_star_j, Rng& rng) {
  const double z = std::normal_distribution<double>()(rng);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return conditional_marginal(record, prior, beta_star_j, z).quantile(u);
}

double posterior_mean_law_sampler(const SolutionRecord& record, const PriorSpec& prior,
                                  double beta_star_j, Rng& rng) {
  require_converged(record, "posterior_mean_law_sampler");
  const double z = std::normal_distribution<double>()(rng);
  return tilt_moments(record.tilt.alpha * beta_star_j + record.tilt.sigma * z, record.tilt.v,
                      prior)
      .mean;
}

Eigen::VectorXd mixture_cdf(const SolutionRecord& record, const PriorSpec& prior,
                            double beta_star_j, const Eigen::VectorXd& points,
                            int hermite_nodes) {
  const QuadratureGrid& gh = gauss_hermite_normal(hermite_nodes);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(points.size());
  for (Eigen::Index k = 0; k < gh.nodes.size(); ++k) {
    if (gh.weights(k) < 1e-300) continue;
    const MarginalPrediction mp = conditional_marginal(record, prior, beta_star_j, gh.nodes(k));
    for (Eigen::Index i = 0; i < points.size(); ++i) {
      out(i) += gh.weights(k) * mp.cdf_at(points(i));
    }
  }
  return out;
}

namespace {

MseRow row_from(const SolutionRecord& rec) {
  MseRow r;
  r.kappa = rec.params.kappa;
  r.c = rec.c_mse;
  r.v_B = rec.order.v_B;
  r.c_B = rec.order.c_B;
  r.c_BBstar = rec.order.c_BBstar;
  r.r1 = rec.tilt.r1;
  r.r2 = rec.tilt.r2;
  r.r3 = rec.tilt.r3;
  r.alpha = rec.tilt.alpha;
  r.sigma = rec.tilt.sigma;
  r.v = rec.tilt.v;
  r.status = to_string(rec.status);
  r.message = rec.message;
  return r;
}

MseRow failed_row(double kappa, const std::string& what) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MseRow r{kappa, nan, nan, nan, nan, nan, nan, nan, nan, nan, nan, "failed", what};
  return r;
}

}  // namespace

SweepResult mse_curve(const ModelSpec& model, const PriorSpec& prior, const SignalSpec& signal,
                      const std::vector<double>& kappa_grid, const ProblemParams& base,
                      const SolverConfig& config, bool warm_start) {
  if (kappa_grid.empty()) throw InvalidArgument("mse_curve: empty kappa grid");
  for (double k : kappa_grid) {
    if (!(k > 0) || !std::isfinite(k)) throw InvalidArgument("mse_curve: kappa must be positive");
  }
  const bool increasing = std::is_sorted(kappa_grid.begin(), kappa_grid.end(),
                                         [](double a, double b) { return a <= b; });
  const bool decreasing = std::is_sorted(kappa_grid.begin(), kappa_grid.end(),
                                         [](double a, double b) { return a >= b; });
  if (kappa_grid.size() > 1 && !increasing && !decreasing) {
    throw InvalidArgument("mse_curve: kappa grid must be strictly monotone");
  }

  const std::size_t n = kappa_grid.size();
  SweepResult out;
  out.rows.resize(n);
  out.records.resize(n);
  auto solve_at = [&](std::size_t i, SolverConfig cfg) {
    ProblemParams p = base;
    p.kappa = kappa_grid[i];
    try {
      out.records[i] = solve_fixed_point(model, prior, signal, p, cfg);
      out.rows[i] = row_from(out.records[i]);
    } catch (const NumericalError& err) {
      out.records[i].params = p;
      out.records[i].status = SolveStatus::Failed;
      out.records[i].message = err.what();
      out.rows[i] = failed_row(p.kappa, err.what());
    }
  };
  if (warm_start) {
    std::optional<OrderParams> prev;
    for (std::size_t i = 0; i < n; ++i) {
      SolverConfig cfg = config;
      if (prev) cfg.init = prev;
      solve_at(i, cfg);
      if (out.records[i].converged()) prev = out.records[i].order;
    }
  } else {
    SolverConfig cfg = config;
    cfg.threads = 1;
    parallel_for(static_cast<Eigen::Index>(n), config.threads,
                 [&](Eigen::Index i) { solve_at(static_cast<std::size_t>(i), cfg); });
  }
  return out;
}

BayesRow bayes_row(const SolutionRecord& record, const PriorSpec& prior, const SignalSpec& signal,
                   const BayesTableOptions& options) {
  require_converged(record, "bayes_row");
  BayesRow row;
  row.kappa = record.params.kappa;
  const TiltConstants& t = record.tilt;
  if (prior.name == "gauss") {
    const double tau2 = prior.parameters.at("variance");
    const double shrink = tau2 / (tau2 + t.v);
    row.alpha_bayes = t.alpha * shrink;
    row.sigma_bayes = t.sigma * shrink;
  } else {
    if (options.draws < 3) throw InvalidArgument("bayes_row: need at least 3 draws");
    Rng rng = make_stream(options.seed, 0);
    std::normal_distribution<double> normal;
    Eigen::VectorXd bs(options.draws);
    Eigen::VectorXd centers(options.draws);
    for (int i = 0; i < options.draws; ++i) {
      bs(i) = signal.sampler(rng);
      centers(i) = t.alpha * bs(i) + t.sigma * normal(rng);
    }
    auto f = [&](double m) { return Eigen::Array<double, 1, 1>(tilt_moments(m, t.v, prior).mean); };
    const auto fit = ChebyshevSeries<1>::fit(f, centers.minCoeff(), centers.maxCoeff());
    Eigen::VectorXd means(options.draws);
    for (int i = 0; i < options.draws; ++i) {
      means(i) = fit.converged() ? fit(centers(i))(0) : f(centers(i))(0);
    }
    const double mb = bs.mean();
    const double mm = means.mean();
    const double sxx = (bs.array() - mb).square().sum();
    const double sxy = ((bs.array() - mb) * (means.array() - mm)).sum();
    row.alpha_bayes = sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
    const Eigen::ArrayXd resid = (means.array() - mm) - row.alpha_bayes * (bs.array() - mb);
    row.sigma_bayes = std::sqrt(resid.square().sum() / (options.draws - 2));
  }
  row.mse = (1 - row.alpha_bayes) * (1 - row.alpha_bayes) + row.sigma_bayes * row.sigma_bayes;
  row.debiased_mse = std::abs(row.alpha_bayes) < 1e-8 || std::isnan(row.alpha_bayes)
                         ? std::numeric_limits<double>::quiet_NaN()
                         : (row.sigma_bayes / row.alpha_bayes) * (row.sigma_bayes / row.alpha_bayes);
  return row;
}

std::vector<BayesRow> bayes_vs_debiased_table(const std::vector<SolutionRecord>& records,
                                              const PriorSpec& prior, const SignalSpec& signal,
                                              const std::vector<MleConstants>& mle,
                                              const BayesTableOptions& options) {
  std::vector<BayesRow> out;
  for (const SolutionRecord& rec : records) {
    BayesRow row;
    if (rec.converged()) {
      row = bayes_row(rec, prior, signal, options);
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row = {rec.params.kappa, nan, nan, nan, nan, std::nullopt, std::nullopt};
    }
    for (const MleConstants& c : mle) {
      if (std::abs(c.kappa - row.kappa) <= 1e-12 * std::max(1.0, row.kappa)) {
        row.alpha_mle = c.alpha;
        row.sigma_mle = c.sigma;
      }
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace glmtilt
