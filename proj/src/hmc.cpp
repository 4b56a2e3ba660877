#include "glmtilt/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace glmtilt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Doubles or halves each chain's step until the one-step acceptance
// probability crosses 1/2.
Eigen::VectorXd initial_step_sizes(const BatchLogDensity& target, const Eigen::MatrixXd& q,
                                   const Eigen::VectorXd& logp, const Eigen::MatrixXd& g,
                                   std::vector<Rng>& rngs) {
  const Eigen::Index p = q.rows();
  const int chains = static_cast<int>(q.cols());
  Eigen::VectorXd eps = Eigen::VectorXd::Ones(chains);
  std::vector<int> direction(chains, 0);
  std::vector<bool> done(chains, false);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd r(p, chains);
  Eigen::MatrixXd q1(p, chains);
  Eigen::MatrixXd g1;
  Eigen::VectorXd lp1;
  for (int it = 0; it < 100; ++it) {
    for (int c = 0; c < chains; ++c) {
      for (Eigen::Index j = 0; j < p; ++j) r(j, c) = normal(rngs[c]);
    }
    Eigen::MatrixXd r1 = r + 0.5 * g * eps.asDiagonal();
    q1 = q + r1 * eps.asDiagonal();
    target(q1, lp1, g1);
    r1 += 0.5 * g1 * eps.asDiagonal();
    bool all_done = true;
    for (int c = 0; c < chains; ++c) {
      if (done[c]) continue;
      const double dh = (-lp1(c) + 0.5 * r1.col(c).squaredNorm()) -
                        (-logp(c) + 0.5 * r.col(c).squaredNorm());
      const double a = std::isfinite(lp1(c)) && std::isfinite(dh) ? std::exp(-dh) : 0.0;
      const int dir = a > 0.5 ? 1 : -1;
      if (direction[c] == 0) direction[c] = dir;
      if (dir != direction[c]) {
        done[c] = true;
        if (dir < 0) eps(c) *= 0.5;
        continue;
      }
      eps(c) *= dir > 0 ? 2.0 : 0.5;
      if (eps(c) > 1e3 || eps(c) < 1e-10) done[c] = true;
      all_done = false;
    }
    if (all_done) break;
  }
  return eps;
}

}  // namespace

std::vector<HmcChainStats> run_hmc(const BatchLogDensity& target, const Eigen::MatrixXd& init,
                                   const HmcConfig& cfg, const DrawCallback& on_draw) {
  if (cfg.chains < 1) throw InvalidArgument("run_hmc: need at least one chain");
  if (init.cols() != cfg.chains) throw InvalidArgument("run_hmc: one initial column per chain");
  if (cfg.draws < 0 || cfg.tune < 0) throw InvalidArgument("run_hmc: negative draws or tune");
  if (!(cfg.target_accept > 0 && cfg.target_accept < 1)) {
    throw InvalidArgument("run_hmc: target_accept must lie in (0, 1)");
  }
  const Eigen::Index p = init.rows();
  const int chains = cfg.chains;

  std::vector<Rng> rngs;
  std::vector<HmcChainStats> stats(chains);
  for (int c = 0; c < chains; ++c) {
    rngs.push_back(make_stream(cfg.seed, static_cast<std::uint64_t>(c)));
    stats[c].chain_id = c;
    stats[c].seed = cfg.seed;
  }

  Eigen::MatrixXd q = init;
  Eigen::VectorXd logp;
  Eigen::MatrixXd g;
  target(q, logp, g);
  for (int c = 0; c < chains; ++c) {
    if (!std::isfinite(logp(c))) {
      throw NumericalError("run_hmc: log density is not finite at the initial point");
    }
  }

  Eigen::VectorXd eps = initial_step_sizes(target, q, logp, g, rngs);
  std::vector<DualAveraging> adapt(chains, DualAveraging(cfg.target_accept));
  for (int c = 0; c < chains; ++c) adapt[c].restart(eps(c));

  // Integration time per chain; NaN until known.
  Eigen::VectorXd horizon =
      Eigen::VectorXd::Constant(chains, cfg.trajectory_length > 0
                                            ? cfg.trajectory_length
                                            : std::numeric_limits<double>::quiet_NaN());
  const int window_begin = cfg.tune / 4;
  const int window_end = cfg.tune / 2;
  Eigen::MatrixXd w_mean = Eigen::MatrixXd::Zero(p, chains);
  Eigen::MatrixXd w_m2 = Eigen::MatrixXd::Zero(p, chains);
  int w_count = 0;

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd r(p, chains);
  Eigen::MatrixXd qn;
  Eigen::MatrixXd rn;
  Eigen::MatrixXd gn;
  Eigen::VectorXd lpn;
  Eigen::VectorXd step(chains);
  Eigen::VectorXd h0(chains);
  Eigen::VectorXd h_end(chains);
  std::vector<int> steps(chains);
  std::vector<bool> active(chains);
  std::vector<bool> diverged(chains);
  std::vector<double> accept_sum(chains, 0.0);
  bool any_kept_accept = false;

  const int total = cfg.tune + cfg.draws;
  for (int it = 0; it < total; ++it) {
    const bool tuning = it < cfg.tune;
    if (cfg.trajectory_length <= 0 && it == window_end && w_count >= 2) {
      for (int c = 0; c < chains; ++c) {
        const double var_max = w_m2.col(c).maxCoeff() / (w_count - 1);
        horizon(c) = 0.5 * std::numbers::pi * std::sqrt(var_max);
      }
    }
    int max_steps = 0;
    for (int c = 0; c < chains; ++c) {
      step(c) = eps(c) * (1.0 + cfg.step_jitter * (2.0 * uniform(rngs[c]) - 1.0));
      if (cfg.leapfrog_steps > 0) {
        steps[c] = cfg.leapfrog_steps;
      } else if (std::isnan(horizon(c))) {
        steps[c] = 10;
      } else {
        steps[c] = static_cast<int>(std::clamp(std::ceil(horizon(c) / eps(c)), 1.0,
                                               static_cast<double>(cfg.max_leapfrog_steps)));
      }
      max_steps = std::max(max_steps, steps[c]);
      for (Eigen::Index j = 0; j < p; ++j) r(j, c) = normal(rngs[c]);
      h0(c) = -logp(c) + 0.5 * r.col(c).squaredNorm();
      active[c] = true;
      diverged[c] = false;
    }

    qn = q;
    rn = r;
    gn = g;
    lpn = logp;
    for (int s = 0; s < max_steps; ++s) {
      for (int c = 0; c < chains; ++c) {
        if (!active[c]) continue;
        rn.col(c) += 0.5 * step(c) * gn.col(c);
        qn.col(c) += step(c) * rn.col(c);
      }
      Eigen::VectorXd lp_new;
      Eigen::MatrixXd g_new;
      target(qn, lp_new, g_new);
      for (int c = 0; c < chains; ++c) {
        if (!active[c]) continue;
        lpn(c) = lp_new(c);
        gn.col(c) = g_new.col(c);
        if (!std::isfinite(lpn(c))) {
          diverged[c] = true;
          active[c] = false;
          continue;
        }
        rn.col(c) += 0.5 * step(c) * gn.col(c);
        h_end(c) = -lpn(c) + 0.5 * rn.col(c).squaredNorm();
        if (!std::isfinite(h_end(c)) || h_end(c) - h0(c) > cfg.max_energy_error) {
          diverged[c] = true;
          active[c] = false;
          continue;
        }
        if (s + 1 == steps[c]) active[c] = false;
      }
    }

    for (int c = 0; c < chains; ++c) {
      double a = 0.0;
      double dh = kInf;
      if (!diverged[c]) {
        dh = h_end(c) - h0(c);
        a = std::min(1.0, std::exp(-dh));
      }
      const double u = uniform(rngs[c]);
      if (!diverged[c] && u < a) {
        q.col(c) = qn.col(c);
        g.col(c) = gn.col(c);
        logp(c) = lpn(c);
      }
      if (tuning) {
        if (diverged[c]) ++stats[c].divergences_tune;
        eps(c) = adapt[c].update(a);
        if (it == cfg.tune - 1) eps(c) = adapt[c].final_step();
      } else {
        if (diverged[c]) ++stats[c].divergences;
        accept_sum[c] += a;
        if (a > 0) any_kept_accept = true;
        if (!diverged[c]) stats[c].energy_errors.push_back(std::abs(dh));
      }
    }

    if (tuning && it >= window_begin && it < window_end) {
      ++w_count;
      const Eigen::MatrixXd delta = q - w_mean;
      w_mean += delta / w_count;
      w_m2 += delta.cwiseProduct(q - w_mean);
    }
    if (!tuning && on_draw) on_draw(it - cfg.tune, q);
  }

  for (int c = 0; c < chains; ++c) {
    stats[c].step_size = eps(c);
    stats[c].leapfrog_steps =
        cfg.leapfrog_steps > 0
            ? cfg.leapfrog_steps
            : (std::isnan(horizon(c))
                   ? 10
                   : static_cast<int>(std::clamp(std::ceil(horizon(c) / eps(c)), 1.0,
                                                 static_cast<double>(cfg.max_leapfrog_steps))));
    stats[c].acceptance_rate = cfg.draws > 0 ? accept_sum[c] / cfg.draws : 0.0;
  }
  if (cfg.draws > 0 && !any_kept_accept) {
    throw NumericalError("run_hmc: every trajectory after tuning diverged or was rejected");
  }
  return stats;
}

}  // namespace glmtilt
