#include "glmtilt/scalar_system.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>

namespace glmtilt {

void validate_order(const OrderParams& o, double gamma2, double a_dp_bound, double tol) {
  auto fail = [&](const std::string& what) {
    std::ostringstream os;
    os.precision(17);
    os << "order parameters violate " << what << ": v_B=" << o.v_B << " c_B=" << o.c_B
       << " c_BBstar=" << o.c_BBstar << " a_dp=" << o.a_dp;
    throw NumericalError(os.str());
  };
  if (!(std::isfinite(o.v_B) && std::isfinite(o.c_B) && std::isfinite(o.c_BBstar) &&
        std::isfinite(o.a_dp))) {
    fail("finiteness");
  }
  if (o.c_B < -tol) fail("c_B >= 0");
  if (o.v_B < o.c_B - tol * std::max(1.0, o.v_B)) fail("v_B >= c_B");
  if (o.c_BBstar * o.c_BBstar > o.c_B * gamma2 + tol * std::max(1.0, o.c_B * gamma2)) {
    fail("c_BBstar^2 <= c_B gamma2");
  }
  if (o.a_dp < -tol || o.a_dp > a_dp_bound + tol) fail("a_dp in [0, sup A'']");
}

OrderParams project_order(const OrderParams& o, double gamma2) {
  OrderParams p = o;
  p.v_B = std::max(p.v_B, 0.0);
  p.c_B = std::clamp(p.c_B, 0.0, p.v_B);
  const double r = std::sqrt(p.c_B * std::max(gamma2, 0.0));
  p.c_BBstar = std::clamp(p.c_BBstar, -r, r);
  return p;
}

TiltConstants TiltConstants::from_scores(double r1, double r2, double r3, double t_gamma) {
  if (!(r1 >= kMinR1) || !std::isfinite(r1)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "tilt constants: r1 = %.17g is not positive", r1);
    throw NumericalError(buf);
  }
  if (!std::isfinite(r2) || !std::isfinite(r3) || !std::isfinite(t_gamma)) {
    throw NumericalError("tilt constants: non-finite scores");
  }
  TiltConstants t;
  t.r1 = r1;
  t.r2 = r2;
  t.r3 = std::max(r3, 0.0);
  t.t_gamma = t_gamma;
  t.alpha = (r2 + t_gamma) / r1;
  t.sigma = std::sqrt(t.r3) / r1;
  t.v = 1.0 / r1;
  return t;
}

namespace {

double checked_sqrt(double x, double scale, const char* what) {
  if (x < -1e-9 * std::max(1.0, scale)) {
    throw NumericalError(std::string("negative radicand in ") + what);
  }
  return std::sqrt(std::max(x, 0.0));
}

}  // namespace

ThetaCoefficients theta_coefficients(const OrderParams& o, const ProblemParams& p) {
  ThetaCoefficients c;
  const double k = p.kappa;
  if (o.c_B < kDegenerateCB) {
    c.degenerate = true;
    c.xi = checked_sqrt(k * o.v_B, k, "theta");
    c.star_xi = std::sqrt(k * p.gamma2);
    return c;
  }
  c.xi = checked_sqrt(k * (o.v_B - o.c_B), k * o.v_B, "theta");
  c.z = std::sqrt(k * o.c_B);
  c.star_xi = checked_sqrt(k * (p.gamma2 - o.c_BBstar * o.c_BBstar / o.c_B), k * p.gamma2,
                           "theta_star");
  c.star_z = o.c_BBstar * std::sqrt(k / o.c_B);
  return c;
}

ThetaPair theta_pair(const OrderParams& order, const ProblemParams& params, double xi_B,
                     double xi_Bstar, double z_BBstar) {
  const ThetaCoefficients c = theta_coefficients(order, params);
  return {c.star_xi * xi_Bstar + c.star_z * z_BBstar, c.xi * xi_B + c.z * z_BBstar};
}

PsMoments ps_conditional(const ThetaCoefficients& coef, const ModelSpec& model, double t,
                         double z_BBstar) {
  const double c1 = coef.xi;
  const double shift = coef.z * z_BBstar;
  PsMoments out;
  if (c1 == 0.0) {
    const Jet a = model.a_jet(shift);
    out.mean_Adpp = a.d2;
    out.mean_Stheta = t - a.d1;
    return out;
  }
  if (model.quadratic_a) {
    // p_s is Gaussian in xi_B.
    const double prec = 1.0 + c1 * c1;
    const double mean_theta = c1 * c1 * (t - shift) / prec + shift;
    const double var_theta = c1 * c1 / prec;
    out.mean_Adpp = 1.0;
    out.var_Stheta = var_theta;
    out.cov_SthetaStar_Stheta = -var_theta;
    out.mean_Stheta = t - mean_theta;
    return out;
  }

  auto log_w = [&](double xi) {
    const double theta = c1 * xi + shift;
    const Jet a = model.a_jet(theta);
    return Jet{t * theta - a.value - 0.5 * xi * xi, c1 * (t - a.d1) - xi, -c1 * c1 * a.d2 - 1.0};
  };
  TiltedOptions opt;
  opt.initial_intervals = 16;
  // A first pass locates the mode so that the integrands can be centered there.
  const TiltedWindow win = locate_window(log_w, opt);
  const double theta_m = c1 * win.mode + shift;
  const double ap_m = model.a_jet(theta_m).d1;
  auto g = [&](double xi) {
    const double theta = c1 * xi + shift;
    const Jet a = model.a_jet(theta);
    const double d = theta - theta_m;
    const double s = a.d1 - ap_m;
    Eigen::Array<double, 5, 1> r;
    r << a.d2, d, s, s * s, d * s;
    return r;
  };
  opt.start = win.mode;
  const auto res = moments_of_tilted_density<5>(log_w, g, opt);
  const auto& m = res.moments;
  out.mean_Adpp = m(0);
  out.var_Stheta = std::max(m(3) - m(2) * m(2), 0.0);
  out.cov_SthetaStar_Stheta = -(m(4) - m(1) * m(2));
  out.mean_Stheta = t - ap_m - m(2);
  return out;
}

PsMoments ps_moments(const OrderParams& order, const ProblemParams& params,
                     const ModelSpec& model, double xi_Bstar, double z_BBstar, double e) {
  const ThetaCoefficients coef = theta_coefficients(order, params);
  const double theta_star = coef.star_xi * xi_Bstar + coef.star_z * z_BBstar;
  PsMoments m = ps_conditional(coef, model, model.t_tilde(theta_star, e), z_BBstar);
  m.cov_SthetaStar_Stheta *= model.t_tilde_prime(theta_star, e);
  return m;
}

namespace {

// With a latent rule the sufficient-statistic nodes are fixed, so each p_s
// moment is a smooth function of z_BBstar alone; it is fitted once per node
// and the draws only evaluate the expansions. Returns an empty function if an
// expansion does not resolve, in which case each draw is integrated directly.
std::function<Eigen::Array4d(double, double)> latent_integrands(const ThetaCoefficients& coef,
                                                                const ModelSpec& model,
                                                                const OuterSampleSet& outer) {
  std::vector<LatentNode> probe;
  model.latent_rule(0.0, probe);
  const double z_lo = outer.draws.col(1).minCoeff();
  const double z_hi = coef.z == 0.0 ? z_lo : outer.draws.col(1).maxCoeff();
  auto fits = std::make_shared<std::vector<ChebyshevSeries<4>>>();
  for (const LatentNode& nd : probe) {
    const double t = nd.t;
    auto f = [&coef, &model, t](double z) {
      const PsMoments m = ps_conditional(coef, model, t, z);
      return Eigen::Array4d(m.mean_Adpp, m.var_Stheta, m.cov_SthetaStar_Stheta, m.mean_Stheta);
    };
    fits->push_back(ChebyshevSeries<4>::fit(f, z_lo, z_hi));
    if (!fits->back().converged()) return {};
  }
  return [fits, &model](double theta_star, double z) {
    thread_local std::vector<LatentNode> nodes;
    model.latent_rule(theta_star, nodes);
    if (nodes.size() != fits->size()) {
      throw NumericalError("fpe2_half: latent rule changed its node count");
    }
    Eigen::Array4d acc = Eigen::Array4d::Zero();
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const LatentNode& nd = nodes[j];
      if (nd.value_weight == 0.0 && nd.slope_weight == 0.0) continue;
      const Eigen::Array4d m = (*fits)[j](z);
      acc(0) += nd.value_weight * (m(0) - m(1));
      acc(1) += nd.slope_weight * m(2);
      acc(2) += nd.value_weight * m(3) * m(3);
      acc(3) += nd.value_weight * m(0);
    }
    return acc;
  };
}

}  // namespace

ScoreConstants fpe2_half(const OrderParams& order, const ProblemParams& params,
                         const ModelSpec& model, const OuterSampleSet& outer, int threads) {
  if (outer.kind != OuterKind::GaussianAndLatent) {
    throw InvalidArgument("fpe2_half: needs (xi_Bstar, z_BBstar, e) draws");
  }
  const Eigen::Index n = outer.count();
  if (n == 0) throw InvalidArgument("fpe2_half: empty outer sample set");
  const ThetaCoefficients coef = theta_coefficients(order, params);
  // Columns: r1, r2, r3, a_dp integrands.
  Eigen::MatrixXd rows(n, 4);
  std::function<Eigen::Array4d(double, double)> conditional;
  if (model.latent_rule) conditional = latent_integrands(coef, model, outer);
  if (model.latent_rule && !conditional) {
    conditional = [&](double theta_star, double z) {
      thread_local std::vector<LatentNode> nodes;
      model.latent_rule(theta_star, nodes);
      Eigen::Array4d acc = Eigen::Array4d::Zero();
      for (const LatentNode& nd : nodes) {
        if (nd.value_weight == 0.0 && nd.slope_weight == 0.0) continue;
        const PsMoments m = ps_conditional(coef, model, nd.t, z);
        acc(0) += nd.value_weight * (m.mean_Adpp - m.var_Stheta);
        acc(1) += nd.slope_weight * m.cov_SthetaStar_Stheta;
        acc(2) += nd.value_weight * m.mean_Stheta * m.mean_Stheta;
        acc(3) += nd.value_weight * m.mean_Adpp;
      }
      return acc;
    };
  }
  parallel_for(n, threads, [&](Eigen::Index i) {
    const double xs = outer.draws(i, 0);
    const double z = outer.draws(i, 1);
    const double theta_star = coef.star_xi * xs + coef.star_z * z;
    if (!model.latent_rule) {
      const double e = outer.draws(i, 2);
      const PsMoments m = ps_conditional(coef, model, model.t_tilde(theta_star, e), z);
      rows(i, 0) = m.mean_Adpp - m.var_Stheta;
      rows(i, 1) = model.t_tilde_prime(theta_star, e) * m.cov_SthetaStar_Stheta;
      rows(i, 2) = m.mean_Stheta * m.mean_Stheta;
      rows(i, 3) = m.mean_Adpp;
      return;
    }
    const Eigen::Array4d m = conditional(theta_star, z);
    rows.row(i) = m.matrix().transpose();
  });
  const Eigen::VectorXd sums = pairwise_column_sums(rows) / static_cast<double>(n);
  ScoreConstants s{sums(0), sums(1), sums(2), sums(3)};
  if (!(s.r1 > 0)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "fpe2_half: r1 = %.17g <= 0", s.r1);
    throw NumericalError(buf);
  }
  return s;
}

double t_gamma(const ModelSpec& model, const ProblemParams& params, const OuterSampleSet& outer) {
  const Eigen::Index n = outer.count();
  if (n == 0) throw InvalidArgument("t_gamma: empty outer sample set");
  const double scale = std::sqrt(params.kappa * params.gamma2);
  std::vector<double> vals(n);
  std::vector<LatentNode> nodes;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = scale * outer.draws(i, 0);
    if (model.latent_rule) {
      model.latent_rule(x, nodes);
      double s = 0.0;
      for (const LatentNode& nd : nodes) s += nd.slope_weight;
      vals[i] = s;
    } else {
      vals[i] = model.t_tilde_prime(x, outer.draws(i, outer.draws.cols() - 1));
    }
  }
  return pairwise_sum(vals) / static_cast<double>(n);
}

TiltMoments tilt_moments(double m, double v, const PriorSpec& prior) {
  auto log_w = [&](double b) {
    if (!prior.interior(b)) {
      return Jet{-std::numeric_limits<double>::infinity(), 0.0, 0.0};
    }
    const Jet mu = prior.log_jet(b);
    const double d = b - m;
    return Jet{-0.5 * d * d / v + mu.value, -d / v + mu.d1, -1.0 / v + mu.d2};
  };
  TiltedOptions opt;
  opt.lo = prior.lo;
  opt.hi = prior.hi;
  opt.initial_intervals = 16;
  opt.start = prior.interior(m) ? m : prior.mode;
  const auto res = moments_of_tilted_density<2>(
      log_w,
      [](double b) {
        Eigen::Array<double, 2, 1> r;
        r << b, b * b;
        return r;
      },
      opt);
  return {res.moments(0), res.moments(1)};
}

OrderParams fpe1_half(const TiltConstants& tilt, const PriorSpec& prior,
                      const OuterSampleSet& outer, int threads) {
  if (outer.kind != OuterKind::GaussianAndSignal) {
    throw InvalidArgument("fpe1_half: needs (Z, Bstar) draws");
  }
  const Eigen::Index n = outer.count();
  if (n == 0) throw InvalidArgument("fpe1_half: empty outer sample set");
  Eigen::VectorXd centers = tilt.alpha * outer.draws.col(1) + tilt.sigma * outer.draws.col(0);
  // <beta>_h and <beta^2>_h depend on the draw only through the center m.
  auto f = [&](double m) {
    const TiltMoments t = tilt_moments(m, tilt.v, prior);
    return Eigen::Array2d(t.mean, t.second);
  };
  const auto fit = ChebyshevSeries<2>::fit(f, centers.minCoeff(), centers.maxCoeff());
  Eigen::MatrixXd rows(n, 3);
  parallel_for(n, threads, [&](Eigen::Index i) {
    const double bs = outer.draws(i, 1);
    const Eigen::Array2d t = fit.converged() ? fit(centers(i)) : f(centers(i));
    rows(i, 0) = t(1);
    rows(i, 1) = t(0) * t(0);
    rows(i, 2) = t(0) * bs;
  });
  const Eigen::VectorXd sums = pairwise_column_sums(rows) / static_cast<double>(n);
  OrderParams o;
  o.v_B = sums(0);
  o.c_B = sums(1);
  o.c_BBstar = sums(2);
  return o;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged:
      return "converged";
    case SolveStatus::MaxIterations:
      return "max_iterations";
    case SolveStatus::Failed:
      return "failed";
  }
  return "unknown";
}

namespace {

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng rng = make_stream(seed, stream);
  return rng();
}

std::string describe(const OrderParams& o) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "v_B=%.17g c_B=%.17g c_BBstar=%.17g a_dp=%.17g", o.v_B, o.c_B,
                o.c_BBstar, o.a_dp);
  return buf;
}

double order_distance(const OrderParams& a, const OrderParams& b) {
  return std::max({std::abs(a.v_B - b.v_B), std::abs(a.c_B - b.c_B),
                   std::abs(a.c_BBstar - b.c_BBstar)});
}

struct CoreResult {
  OrderParams order;
  TiltConstants tilt;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::vector<OrderParams> trace;
};

CoreResult iterate_map(const ModelSpec& model, const PriorSpec& prior, const SignalSpec& signal,
                       const ProblemParams& params, const SolverConfig& cfg, Eigen::Index count,
                       std::uint64_t seed, const OrderParams& init) {
  const OuterSampleSet outer_s =
      make_outer_samples(OuterKind::GaussianAndLatent, count, derived_seed(seed, 0));
  const OuterSampleSet outer_h =
      make_outer_samples(OuterKind::GaussianAndSignal, count, derived_seed(seed, 1), &signal);
  const double tg = t_gamma(model, params, outer_s);

  CoreResult res;
  OrderParams order = init;
  double r_prev[3] = {std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN()};
  std::vector<std::string> trace_text;
  const double lambda = cfg.damping;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    ScoreConstants sc;
    OrderParams mapped;
    try {
      sc = fpe2_half(order, params, model, outer_s, cfg.threads);
      res.tilt = TiltConstants::from_scores(sc.r1, sc.r2, sc.r3, tg);
      mapped = fpe1_half(res.tilt, prior, outer_h, cfg.threads);
    } catch (const NumericalError& err) {
      trace_text.push_back("iteration " + std::to_string(it) + ": " + describe(order));
      throw NumericalError(std::string(err.what()) + " at iteration " + std::to_string(it),
                           std::move(trace_text));
    }
    mapped.a_dp = sc.a_dp;
    OrderParams next;
    next.v_B = (1 - lambda) * order.v_B + lambda * mapped.v_B;
    next.c_B = (1 - lambda) * order.c_B + lambda * mapped.c_B;
    next.c_BBstar = (1 - lambda) * order.c_BBstar + lambda * mapped.c_BBstar;
    next.a_dp = sc.a_dp;
    next = project_order(next, params.gamma2);
    validate_order(next, params.gamma2, model.a_double_prime_bound);

    double change = order_distance(next, order);
    double undamped = order_distance(project_order(mapped, params.gamma2), order);
    const double r_now[3] = {sc.r1, sc.r2, sc.r3};
    for (int k = 0; k < 3; ++k) {
      const double d = std::isnan(r_prev[k]) ? std::numeric_limits<double>::infinity()
                                             : std::abs(r_now[k] - r_prev[k]);
      change = std::max(change, d);
      undamped = std::max(undamped, d);
      r_prev[k] = r_now[k];
    }
    order = next;
    res.trace.push_back(order);
    trace_text.push_back("iteration " + std::to_string(it) + ": " + describe(order));
    res.iterations = it;
    res.residual = undamped;
    if (change < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.order = order;
  return res;
}

}  // namespace

SolutionRecord solve_fixed_point(const ModelSpec& model, const PriorSpec& prior,
                                 const SignalSpec& signal, const ProblemParams& params,
                                 const SolverConfig& cfg) {
  params.validate();
  if (!(cfg.damping > 0 && cfg.damping <= 1)) {
    throw InvalidArgument("solver: damping must lie in (0, 1]");
  }
  if (cfg.outer_count < 1) throw InvalidArgument("solver: outer_count must be positive");
  if (!(cfg.tol > 0)) throw InvalidArgument("solver: tol must be positive");
  if (cfg.max_iter < 1) throw InvalidArgument("solver: max_iter must be positive");
  if (std::abs(signal.second_moment - params.gamma2) > 1e-9 * std::max(1.0, params.gamma2)) {
    throw InvalidArgument("solver: gamma2 must equal the second moment of the signal");
  }

  OrderParams init;
  if (cfg.init) {
    init = *cfg.init;
  } else {
    init.v_B = prior.second_moment;
    init.c_B = 0.5 * init.v_B;
    init.c_BBstar = 0.0;
  }
  try {
    validate_order(init, params.gamma2, model.a_double_prime_bound);
  } catch (const NumericalError& err) {
    throw InvalidArgument(std::string("solver init: ") + err.what());
  }

  SolutionRecord rec;
  rec.params = params;
  rec.model = to_spec_string(model);
  rec.prior = to_spec_string(prior);
  rec.signal = to_spec_string(signal);
  rec.seed = cfg.seed;

  Eigen::Index count = cfg.outer_count;
  CoreResult core = iterate_map(model, prior, signal, params, cfg, count, cfg.seed, init);
  if (cfg.mc_check && core.converged) {
    while (true) {
      const CoreResult alt = iterate_map(model, prior, signal, params, cfg, count,
                                         derived_seed(cfg.seed, 100 + count), core.order);
      rec.mc_shift = order_distance(alt.order, core.order);
      if (rec.mc_shift <= cfg.mc_tol || 2 * count > cfg.max_outer_count) {
        if (rec.mc_shift > cfg.mc_tol) {
          rec.message = "Monte Carlo shift above mc_tol at the largest outer_count";
        }
        break;
      }
      count *= 2;
      core = iterate_map(model, prior, signal, params, cfg, count, cfg.seed, core.order);
      if (!core.converged) break;
    }
  }

  rec.order = core.order;
  rec.tilt = core.tilt;
  rec.iterations = core.iterations;
  rec.residual = core.residual;
  rec.outer_count = count;
  rec.trace = std::move(core.trace);
  rec.status = core.converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
  if (!core.converged) rec.message = "maximum number of iterations reached";
  rec.c_mse = mse_constant(rec);
  return rec;
}

double mse_constant(const SolutionRecord& record) {
  return record.params.gamma2 + record.order.v_B - 2.0 * record.order.c_BBstar;
}

}  // namespace glmtilt
