#include "glmtilt/simulator.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "glmtilt/special.hpp"

namespace glmtilt {

Dataset generate_dataset(const ModelSpec& model, const SignalSpec& signal, int n, double kappa,
                         std::uint64_t seed, const std::optional<Eigen::VectorXd>& beta_star) {
  if (n < 10) throw InvalidArgument("generate_dataset: n must be at least 10");
  if (!(kappa > 0) || !std::isfinite(kappa)) {
    throw InvalidArgument("generate_dataset: kappa must be positive");
  }
  const long p = std::lround(kappa * n);
  if (p < 1) throw InvalidArgument("generate_dataset: kappa * n rounds to zero features");
  Dataset d;
  d.n = n;
  d.p = static_cast<int>(p);
  d.kappa = kappa;
  d.seed = seed;
  Rng rng = make_stream(seed, 0);
  if (beta_star) {
    if (beta_star->size() != p) throw InvalidArgument("generate_dataset: beta_star has wrong size");
    d.beta_star = *beta_star;
  } else {
    d.beta_star.resize(p);
    for (long j = 0; j < p; ++j) d.beta_star(j) = signal.sampler(rng);
  }
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
  d.X.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (long j = 0; j < p; ++j) d.X(i, j) = normal(rng);
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  d.e.resize(n);
  for (int i = 0; i < n; ++i) d.e(i) = uniform(rng);
  const Eigen::VectorXd x = d.X * d.beta_star;
  d.y.resize(n);
  for (int i = 0; i < n; ++i) d.y(i) = model.outcome(x(i), d.e(i));
  return d;
}

Eigen::VectorXd sufficient_statistic(const Dataset& data, const ModelSpec& model,
                                     StatisticMode mode) {
  if (mode == StatisticMode::ObservedOnly) return data.y;
  const Eigen::VectorXd x = data.X * data.beta_star;
  Eigen::VectorXd t(data.n);
  for (int i = 0; i < data.n; ++i) t(i) = model.t_tilde(x(i), data.e(i));
  return t;
}

PosteriorTarget::PosteriorTarget(const Dataset& data, const ModelSpec& model,
                                 const PriorSpec& prior, StatisticMode mode)
    : data_(&data), model_(&model), prior_(&prior), t_(sufficient_statistic(data, model, mode)) {
  gram_ = model.quadratic_a;
  if (gram_) {
    gram_matrix_ = Eigen::MatrixXd::Zero(data.p, data.p);
    gram_matrix_.selfadjointView<Eigen::Lower>().rankUpdate(data.X.transpose());
    xt_ = data.X.transpose() * t_;
  }
}

void PosteriorTarget::batch(const Eigen::MatrixXd& b, Eigen::VectorXd& logp,
                            Eigen::MatrixXd& grad) const {
  const Eigen::Index p = data_->p;
  const Eigen::Index cols = b.cols();
  if (b.rows() != p) throw InvalidArgument("PosteriorTarget: position has wrong dimension");
  logp.resize(cols);
  if (gram_) {
    const Eigen::MatrixXd gb = gram_matrix_.selfadjointView<Eigen::Lower>() * b;
    grad = (-gb).colwise() + xt_;
    for (Eigen::Index c = 0; c < cols; ++c) {
      logp(c) = xt_.dot(b.col(c)) - 0.5 * b.col(c).dot(gb.col(c));
    }
  } else {
    const Eigen::MatrixXd xb = data_->X * b;
    Eigen::MatrixXd resid(xb.rows(), cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      double ll = 0.0;
      for (Eigen::Index i = 0; i < xb.rows(); ++i) {
        const Jet a = model_->a_jet(xb(i, c));
        ll += t_(i) * xb(i, c) - a.value;
        resid(i, c) = t_(i) - a.d1;
      }
      logp(c) = ll;
    }
    grad.noalias() = data_->X.transpose() * resid;
  }
  for (Eigen::Index c = 0; c < cols; ++c) {
    double lp = 0.0;
    bool inside = true;
    for (Eigen::Index j = 0; j < p && inside; ++j) {
      const double x = b(j, c);
      if (!prior_->interior(x)) {
        inside = false;
        break;
      }
      lp += prior_->log_density(x);
      grad(j, c) += prior_->log_density_prime(x);
    }
    if (!inside) {
      logp(c) = -std::numeric_limits<double>::infinity();
      grad.col(c).setZero();
    } else {
      logp(c) += lp;
    }
  }
}

double PosteriorTarget::logdensity_and_grad(const Eigen::VectorXd& b,
                                            Eigen::VectorXd& grad) const {
  Eigen::VectorXd lp;
  Eigen::MatrixXd g;
  batch(b, lp, g);
  grad = g.col(0);
  return lp(0);
}

std::pair<double, Eigen::VectorXd> posterior_logdensity_and_grad(
    const Dataset& data, const ModelSpec& model, const PriorSpec& prior, const Eigen::VectorXd& b,
    StatisticMode mode) {
  const PosteriorTarget target(data, model, prior, mode);
  Eigen::VectorXd grad;
  const double lp = target.logdensity_and_grad(b, grad);
  return {lp, grad};
}

namespace {

/// Coordinate map b = b(u) from the real line onto the prior support: scaled
/// logistic for an interval, shifted exponential for a half-line.
struct SupportMap {
  enum class Kind { Identity, Interval, Lower, Upper };
  Kind kind = Kind::Identity;
  double lo = 0.0;
  double hi = 0.0;

  explicit SupportMap(const PriorSpec& prior) : lo(prior.lo), hi(prior.hi) {
    const bool l = std::isfinite(lo);
    const bool h = std::isfinite(hi);
    kind = l && h ? Kind::Interval : l ? Kind::Lower : h ? Kind::Upper : Kind::Identity;
  }

  double to_b(double u) const {
    switch (kind) {
      case Kind::Interval: return lo + (hi - lo) * sigmoid(u);
      case Kind::Lower: return lo + std::exp(u);
      case Kind::Upper: return hi - std::exp(u);
      default: return u;
    }
  }

  double to_u(double b) const {
    switch (kind) {
      case Kind::Interval: {
        const double w = (b - lo) / (hi - lo);
        return std::log(w / (1.0 - w));
      }
      case Kind::Lower: return std::log(b - lo);
      case Kind::Upper: return std::log(hi - b);
      default: return b;
    }
  }

  /// db/du, log|db/du| and d log|db/du| / du.
  void jacobian(double u, double& db_du, double& log_j, double& dlog_j) const {
    switch (kind) {
      case Kind::Interval: {
        const double s = sigmoid(u);
        db_du = (hi - lo) * sigmoid_prime(u);
        log_j = std::log(hi - lo) - log1pexp(-u) - log1pexp(u);
        dlog_j = 1.0 - 2.0 * s;
        return;
      }
      case Kind::Lower:
        db_du = std::exp(u);
        log_j = u;
        dlog_j = 1.0;
        return;
      case Kind::Upper:
        db_du = -std::exp(u);
        log_j = u;
        dlog_j = 1.0;
        return;
      default:
        db_du = 1.0;
        log_j = 0.0;
        dlog_j = 0.0;
    }
  }

  Eigen::MatrixXd to_b(const Eigen::MatrixXd& u) const {
    if (kind == Kind::Identity) return u;
    return u.unaryExpr([this](double x) { return to_b(x); });
  }
};

}  // namespace

std::vector<ChainOutput> run_chains(const Dataset& data, const ModelSpec& model,
                                    const PriorSpec& prior, const SimulationConfig& config) {
  const int chains = config.hmc.chains;
  const int draws = config.hmc.draws;
  const int p = data.p;
  for (Eigen::Index j : config.tracked_coords) {
    if (j < 0 || j >= p) throw InvalidArgument("run_chains: tracked coordinate out of range");
  }
  const PosteriorTarget target(data, model, prior, config.mode);
  std::vector<ChainOutput> out(chains);
  const auto& tracked = config.tracked_coords;
  for (int c = 0; c < chains; ++c) {
    ChainOutput& o = out[c];
    o.chain_id = c;
    o.seed = config.hmc.seed;
    o.p = p;
    o.tracked_coords = tracked;
    o.draws.resize(draws, static_cast<Eigen::Index>(tracked.size()));
    o.q11.resize(draws);
    o.q1star.resize(draws);
    o.q12 = Eigen::VectorXd::Constant(draws, std::numeric_limits<double>::quiet_NaN());
    o.q12_partner = chains > 1 ? (c + 1) % chains : -1;
  }
  const SupportMap map(prior);
  const Eigen::MatrixXd init = Eigen::MatrixXd::Constant(p, chains, map.to_u(prior.mode));
  const BatchLogDensity fn = [&](const Eigen::MatrixXd& u, Eigen::VectorXd& lp,
                                 Eigen::MatrixXd& g) {
    if (map.kind == SupportMap::Kind::Identity) {
      target.batch(u, lp, g);
      return;
    }
    target.batch(map.to_b(u), lp, g);
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
      if (!std::isfinite(lp(c))) continue;
      double log_j_sum = 0.0;
      for (Eigen::Index j = 0; j < u.rows(); ++j) {
        double db_du = 0.0;
        double log_j = 0.0;
        double dlog_j = 0.0;
        map.jacobian(u(j, c), db_du, log_j, dlog_j);
        log_j_sum += log_j;
        g(j, c) = g(j, c) * db_du + dlog_j;
      }
      lp(c) += log_j_sum;
    }
  };
  const double inv_p = 1.0 / p;
  const auto on_draw = [&](int d, const Eigen::MatrixXd& u) {
    const Eigen::MatrixXd q = map.to_b(u);
    for (int c = 0; c < chains; ++c) {
      ChainOutput& o = out[c];
      for (std::size_t k = 0; k < tracked.size(); ++k) {
        o.draws(d, static_cast<Eigen::Index>(k)) = q(tracked[k], c);
      }
      o.q11(d) = q.col(c).squaredNorm() * inv_p;
      o.q1star(d) = data.beta_star.dot(q.col(c)) * inv_p;
      if (chains > 1) o.q12(d) = q.col(c).dot(q.col(o.q12_partner)) * inv_p;
    }
  };
  const std::vector<HmcChainStats> stats = run_hmc(fn, init, config.hmc, on_draw);
  for (int c = 0; c < chains; ++c) {
    ChainOutput& o = out[c];
    o.acceptance_rate = stats[c].acceptance_rate;
    o.step_size = stats[c].step_size;
    o.leapfrog_steps = stats[c].leapfrog_steps;
    o.divergences_tune = stats[c].divergences_tune;
    o.divergences = stats[c].divergences;
    o.energy_errors = stats[c].energy_errors;
    if (o.divergences > 0.01 * draws) o.status = "warning";
  }
  return out;
}

OverlapEstimates estimate_overlaps(const std::vector<ChainOutput>& chains) {
  if (chains.empty()) throw InvalidArgument("estimate_overlaps: no chains");
  std::vector<Eigen::VectorXd> q11;
  std::vector<Eigen::VectorXd> q1star;
  std::vector<Eigen::VectorXd> q12;
  for (const ChainOutput& c : chains) {
    q11.push_back(c.q11);
    q1star.push_back(c.q1star);
  }
  OverlapEstimates est;
  est.q11 = batch_means(q11);
  est.q1star = batch_means(q1star);
  if (chains.size() >= 2) {
    // With two chains both series describe the same pair.
    const std::size_t used = chains.size() == 2 ? 1 : chains.size();
    for (std::size_t c = 0; c < used; ++c) q12.push_back(chains[c].q12);
    est.q12 = batch_means(q12);
    est.q12_available = true;
  } else {
    est.q12 = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }
  return est;
}

}  // namespace glmtilt
