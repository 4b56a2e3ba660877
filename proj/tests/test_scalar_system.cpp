#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "glmtilt/scalar_system.hpp"
#include "glmtilt/special.hpp"

using namespace glmtilt;

namespace {

ProblemParams make_params(double kappa, double gamma2 = 1.0) {
  ProblemParams p;
  p.kappa = kappa;
  p.gamma2 = gamma2;
  return p;
}

double closed_r1(double kappa) { return std::sqrt(0.25 * kappa * kappa + 1.0) - 0.5 * kappa; }

SolverConfig quick_config() {
  SolverConfig c;
  c.outer_count = 20000;
  c.mc_check = false;
  return c;
}

}  // namespace

TEST(ThetaPair, DegenerateBranch) {
  const OrderParams o{1.0, 0.0, 0.0, 0.0};
  const ThetaPair t = theta_pair(o, make_params(1.0), 2.0, 0.3, -0.7);
  EXPECT_DOUBLE_EQ(t.theta, 2.0);
  EXPECT_DOUBLE_EQ(t.theta_star, 0.3);
  EXPECT_TRUE(theta_coefficients(o, make_params(1.0)).degenerate);
}

TEST(ThetaPair, NoXiTermWhenVarianceVanishes) {
  const OrderParams o{0.5, 0.5, 0.3, 0.0};
  const ProblemParams p = make_params(2.0);
  EXPECT_DOUBLE_EQ(theta_pair(o, p, 5.0, 0.1, 0.2).theta, theta_pair(o, p, -5.0, 0.1, 0.2).theta);
}

TEST(ThetaPair, Coefficients) {
  const OrderParams o{0.9, 0.4, 0.3, 0.0};
  const ProblemParams p = make_params(1.5, 0.8);
  const ThetaCoefficients c = theta_coefficients(o, p);
  EXPECT_NEAR(c.xi, std::sqrt(1.5 * 0.5), 1e-15);
  EXPECT_NEAR(c.z, std::sqrt(1.5 * 0.4), 1e-15);
  EXPECT_NEAR(c.star_xi, std::sqrt(1.5 * (0.8 - 0.09 / 0.4)), 1e-15);
  EXPECT_NEAR(c.star_z, 0.3 * std::sqrt(1.5 / 0.4), 1e-15);
  EXPECT_THROW(theta_coefficients(OrderParams{0.3, 0.4, 0.0, 0.0}, p), NumericalError);
}

TEST(ThetaPair, OuterVarianceIsKappaVB) {
  const OrderParams o{0.8, 0.35, 0.25, 0.0};
  const ProblemParams p = make_params(1.3);
  Rng rng(9);
  std::normal_distribution<double> n01;
  const int n = 1000000;
  double s = 0.0;
  double s2 = 0.0;
  double ss = 0.0;
  double cross = 0.0;
  for (int i = 0; i < n; ++i) {
    const ThetaPair t = theta_pair(o, p, n01(rng), n01(rng), n01(rng));
    s += t.theta;
    s2 += t.theta * t.theta;
    ss += t.theta_star * t.theta_star;
    cross += t.theta * t.theta_star;
  }
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var, 1.3 * 0.8, 4 * 1.3 * 0.8 * std::sqrt(2.0 / n));
  EXPECT_NEAR(ss / n, 1.3 * p.gamma2, 0.01);
  EXPECT_NEAR(cross / n, 1.3 * 0.25, 0.01);
}

TEST(PsMoments, LinearModel) {
  const ModelSpec m = linear_model();
  const OrderParams o{0.9, 0.4, 0.3, 0.0};
  const ProblemParams p = make_params(1.0);
  const double k = p.kappa * (o.v_B - o.c_B);
  for (double e : {0.1, 0.5, 0.8}) {
    const PsMoments ps = ps_moments(o, p, m, 0.4, -1.2, e);
    EXPECT_NEAR(ps.mean_Adpp, 1.0, 1e-14);
    EXPECT_NEAR(ps.var_Stheta, k / (1 + k), 1e-10);
    EXPECT_NEAR(ps.cov_SthetaStar_Stheta, -ps.var_Stheta, 1e-10);
  }
}

TEST(PsMoments, ZeroOrderParams) {
  const OrderParams o{0.0, 0.0, 0.0, 0.0};
  const ProblemParams p = make_params(1.0);
  for (const ModelSpec& m : {linear_model(), logistic_model(1e-3)}) {
    const double xs = 0.7;
    const double e = 0.35;
    const PsMoments ps = ps_moments(o, p, m, xs, 0.0, e);
    const double ts = theta_pair(o, p, 0.0, xs, 0.0).theta_star;
    EXPECT_NEAR(ps.var_Stheta, 0.0, 1e-12) << m.name;
    EXPECT_NEAR(ps.mean_Stheta, m.t_tilde(ts, e) - m.a_prime(0.0), 1e-12) << m.name;
  }
}

TEST(PsMoments, LogisticAgainstBruteForce) {
  const ModelSpec m = logistic_model(1e-3);
  const OrderParams o{0.3, 0.2, 0.1, 0.0};
  const ProblemParams p = make_params(1.0, 0.1);
  const ThetaCoefficients c = theta_coefficients(o, p);
  const double xs = 0.4;
  const double zb = -0.8;
  const double e = 0.3;
  const double ts = c.star_xi * xs + c.star_z * zb;
  const double t = m.t_tilde(ts, e);
  const double tp = m.t_tilde_prime(ts, e);
  double w0 = 0, w1 = 0, w2 = 0, wa = 0, wc = 0, wt = 0;
  const double h = 1e-3;
  for (double xi = -12; xi <= 12; xi += h) {
    const double th = c.xi * xi + c.z * zb;
    const double w = std::exp(t * th - m.a(th) - 0.5 * xi * xi);
    const double s = t - m.a_prime(th);
    w0 += w;
    w1 += w * s;
    w2 += w * s * s;
    wa += w * m.a_double_prime(th);
    wc += w * th * s;
    wt += w * th;
  }
  const PsMoments ps = ps_moments(o, p, m, xs, zb, e);
  EXPECT_NEAR(ps.mean_Stheta, w1 / w0, 1e-8);
  EXPECT_NEAR(ps.var_Stheta, w2 / w0 - (w1 / w0) * (w1 / w0), 1e-8);
  EXPECT_NEAR(ps.mean_Adpp, wa / w0, 1e-8);
  EXPECT_NEAR(ps.cov_SthetaStar_Stheta, tp * (wc / w0 - (wt / w0) * (w1 / w0)), 1e-8);
}

TEST(Fpe2, LinearClosedForms) {
  const ModelSpec m = linear_model();
  const ProblemParams p = make_params(1.0);
  const OrderParams o{0.9, 0.4, 0.35, 0.0};
  const auto outer = make_outer_samples(OuterKind::GaussianAndLatent, 200000, 3);
  const ScoreConstants sc = fpe2_half(o, p, m, outer);
  const double k = p.kappa * (o.v_B - o.c_B);
  EXPECT_NEAR(sc.r1, 1.0 / (k + 1.0), 1e-10);
  EXPECT_NEAR(sc.r2, -k / (k + 1.0), 1e-10);
  const double r3 = (p.kappa * (p.gamma2 + o.c_B - 2 * o.c_BBstar) + 1) / ((k + 1) * (k + 1));
  EXPECT_NEAR(sc.r3, r3, 0.01 * r3);
  EXPECT_NEAR(sc.a_dp, 1.0, 1e-14);
}

TEST(Fpe2, NoSpreadMeansNoR2) {
  const ModelSpec m = linear_model();
  const OrderParams o{0.5, 0.5, 0.2, 0.0};
  const auto outer = make_outer_samples(OuterKind::GaussianAndLatent, 5000, 3);
  EXPECT_NEAR(fpe2_half(o, make_params(1.0), m, outer).r2, 0.0, 1e-14);
}

TEST(Fpe2, ThreadCountIndependent) {
  const ModelSpec m = logistic_model(1e-3);
  const OrderParams o{0.3, 0.2, 0.1, 0.0};
  const ProblemParams p = make_params(1.0, 0.1);
  const auto outer = make_outer_samples(OuterKind::GaussianAndLatent, 3000, 5);
  const ScoreConstants a = fpe2_half(o, p, m, outer, 1);
  const ScoreConstants b = fpe2_half(o, p, m, outer, 3);
  EXPECT_EQ(a.r1, b.r1);
  EXPECT_EQ(a.r2, b.r2);
  EXPECT_EQ(a.r3, b.r3);
}

TEST(TGamma, LinearIsOne) {
  const auto outer = make_outer_samples(OuterKind::GaussianAndLatent, 1000, 1);
  EXPECT_DOUBLE_EQ(t_gamma(linear_model(), make_params(1.0), outer), 1.0);
}

TEST(TGamma, LogisticMatchesLogisticDensityAverage) {
  const auto outer = make_outer_samples(OuterKind::GaussianAndLatent, 20000, 1);
  const QuadratureGrid& gh = gauss_hermite_normal(200);
  double oracle = 0.0;
  for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
    oracle += gh.weights(i) * sigmoid_prime(gh.nodes(i));
  }
  EXPECT_NEAR(t_gamma(logistic_model(1e-3), make_params(1.0, 1.0), outer), oracle, 2e-3);
  EXPECT_NEAR(t_gamma(logistic_model(1e-3), make_params(1.0, 0.0), outer), 0.25, 1e-4);
}

TEST(TiltMoments, GaussianPrior) {
  const PriorSpec g = gaussian_prior(1.0);
  const TiltMoments t = tilt_moments(0.8, 2.0, g);
  EXPECT_NEAR(t.mean, 0.8 / 3.0, 1e-10);
  EXPECT_NEAR(t.second - t.mean * t.mean, 2.0 / 3.0, 1e-10);
}

TEST(Fpe1, GaussianPriorMatchesLinearFormula) {
  const PriorSpec prior = gaussian_prior(1.0);
  const SignalSpec signal = gaussian_signal(1.0);
  const double r1 = 0.7;
  const double r2 = -0.3;
  const double r3 = 0.5;
  const TiltConstants tilt = TiltConstants::from_scores(r1, r2, r3, 1.0);
  const auto outer = make_outer_samples(OuterKind::GaussianAndSignal, 5000, 2, &signal);
  const OrderParams o = fpe1_half(tilt, prior, outer);
  double cb = 0.0;
  double cbs = 0.0;
  for (Eigen::Index i = 0; i < outer.count(); ++i) {
    const double z = outer.draws(i, 0);
    const double bs = outer.draws(i, 1);
    const double mean = ((r2 + 1) * bs + std::sqrt(r3) * z) / (r1 + 1);
    cb += mean * mean;
    cbs += mean * bs;
  }
  cb /= outer.count();
  cbs /= outer.count();
  EXPECT_NEAR(o.c_B, cb, 1e-9);
  EXPECT_NEAR(o.c_BBstar, cbs, 1e-9);
  EXPECT_NEAR(o.v_B, cb + 1.0 / (r1 + 1), 1e-9);
}

TEST(Fpe1, NoTiltCenterMeansConstantMean) {
  const PriorSpec prior = beta_prior(2.0, 5.0);
  const SignalSpec signal = beta_signal(2.0, 2.0);
  const TiltConstants tilt = TiltConstants::from_scores(1.0, -1.0, 0.0, 1.0);
  ASSERT_EQ(tilt.alpha, 0.0);
  ASSERT_EQ(tilt.sigma, 0.0);
  const auto outer = make_outer_samples(OuterKind::GaussianAndSignal, 2000, 2, &signal);
  const OrderParams o = fpe1_half(tilt, prior, outer);
  const double mean = tilt_moments(0.0, 1.0, prior).mean;
  EXPECT_NEAR(o.c_B, mean * mean, 1e-9);
  EXPECT_NEAR(o.c_BBstar, mean * outer.draws.col(1).mean(), 1e-9);
}

TEST(TiltConstants, DerivedValuesAndGuard) {
  const TiltConstants t = TiltConstants::from_scores(0.5, 0.1, 0.09, 0.3);
  EXPECT_DOUBLE_EQ(t.v, 2.0);
  EXPECT_DOUBLE_EQ(t.alpha, 0.8);
  EXPECT_DOUBLE_EQ(t.sigma, 0.6);
  EXPECT_THROW(TiltConstants::from_scores(1e-8, 0.0, 0.1, 1.0), NumericalError);
}

TEST(OrderInvariants, ProjectionIsIdempotentAndLandsInSet) {
  Rng rng(21);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int k = 0; k < 10000; ++k) {
    const double gamma2 = std::abs(u(rng));
    OrderParams o{std::abs(u(rng)), u(rng), u(rng), 0.5};
    const OrderParams a = project_order(o, gamma2);
    const OrderParams b = project_order(a, gamma2);
    EXPECT_EQ(a.v_B, b.v_B);
    EXPECT_EQ(a.c_B, b.c_B);
    EXPECT_EQ(a.c_BBstar, b.c_BBstar);
    EXPECT_NO_THROW(validate_order(a, gamma2, 1.0));
  }
  EXPECT_THROW(validate_order(OrderParams{0.2, 0.3, 0.0, 0.5}, 1.0, 1.0), NumericalError);
  EXPECT_THROW(validate_order(OrderParams{1.0, 0.5, 0.9, 0.5}, 1.0, 1.0), NumericalError);
  EXPECT_THROW(validate_order(OrderParams{1.0, 0.5, 0.1, 1.5}, 1.0, 1.0), NumericalError);
}

TEST(Solver, LinearClosedForm) {
  const ModelSpec m = linear_model();
  const PriorSpec prior = gaussian_prior(1.0);
  const SignalSpec signal = gaussian_signal(1.0);
  for (double kappa : {1.0, 2.0}) {
    const SolutionRecord r = solve_fixed_point(m, prior, signal, make_params(kappa), quick_config());
    ASSERT_TRUE(r.converged());
    EXPECT_NEAR(r.tilt.r1, closed_r1(kappa), 1e-3);
    EXPECT_NEAR(r.tilt.r2, r.tilt.r1 - 1.0, 1e-3);
    EXPECT_LT(r.residual, 2 * quick_config().tol);
    EXPECT_DOUBLE_EQ(r.c_mse, mse_constant(r));
  }
}

TEST(Solver, LinearOrderIdentities) {
  const SolverConfig cfg = quick_config();
  const SolutionRecord r = solve_fixed_point(linear_model(), gaussian_prior(1.0),
                                             rademacher_signal(1.0), make_params(0.7), cfg);
  ASSERT_TRUE(r.converged());
  const double kappa = 0.7;
  const double k = kappa * (r.order.v_B - r.order.c_B);
  EXPECT_NEAR(r.tilt.r1, 1.0 / (k + 1), 5 * cfg.tol);
  EXPECT_NEAR(r.tilt.r2, -k / (k + 1), 5 * cfg.tol);
  const double r3 = (kappa * (1.0 + r.order.c_B - 2 * r.order.c_BBstar) + 1) / ((k + 1) * (k + 1));
  EXPECT_NEAR(r.tilt.r3, r3, 0.02 * r3);
  EXPECT_NEAR(r.order.v_B, 1.0 / (r.tilt.r1 + 1) + r.order.c_B, 5 * cfg.tol);
  EXPECT_NEAR(r.order.c_B,
              ((r.tilt.r2 + 1) * (r.tilt.r2 + 1) + r.tilt.r3) / ((r.tilt.r1 + 1) * (r.tilt.r1 + 1)),
              0.01);
  EXPECT_NEAR(r.order.c_BBstar, (r.tilt.r2 + 1) / (r.tilt.r1 + 1), 0.01);
}

TEST(Solver, NullSignal) {
  const SolutionRecord r = solve_fixed_point(linear_model(), gaussian_prior(1.0),
                                             parse_signal("point:0"), make_params(1.0, 0.0),
                                             quick_config());
  ASSERT_TRUE(r.converged());
  EXPECT_NEAR(r.order.c_BBstar, 0.0, 1e-12);
  EXPECT_NEAR(r.c_mse, r.order.v_B, 1e-12);
}

TEST(Solver, DeterministicAndInvariantAlongTrace) {
  const ModelSpec m = logistic_model(1e-3);
  const PriorSpec prior = beta_prior(2, 2);
  const SignalSpec signal = beta_signal(2, 5);
  SolverConfig cfg = quick_config();
  cfg.outer_count = 4000;
  const ProblemParams p = make_params(1.0, signal.second_moment);
  const SolutionRecord a = solve_fixed_point(m, prior, signal, p, cfg);
  cfg.threads = 2;
  const SolutionRecord b = solve_fixed_point(m, prior, signal, p, cfg);
  EXPECT_EQ(a.order.v_B, b.order.v_B);
  EXPECT_EQ(a.order.c_B, b.order.c_B);
  EXPECT_EQ(a.order.c_BBstar, b.order.c_BBstar);
  EXPECT_EQ(a.tilt.r3, b.tilt.r3);
  EXPECT_EQ(a.iterations, b.iterations);
  ASSERT_FALSE(a.trace.empty());
  for (const OrderParams& o : a.trace) {
    EXPECT_NO_THROW(validate_order(o, p.gamma2, m.a_double_prime_bound));
  }
  EXPECT_GT(a.tilt.r1, 0.0);
}

TEST(Solver, MonteCarloCheckRecordsShift) {
  SolverConfig cfg = quick_config();
  cfg.mc_check = true;
  cfg.outer_count = 5000;
  cfg.mc_tol = 1e-2;
  const SolutionRecord r = solve_fixed_point(linear_model(), gaussian_prior(1.0),
                                             gaussian_signal(1.0), make_params(1.0), cfg);
  EXPECT_TRUE(std::isfinite(r.mc_shift));
  EXPECT_GE(r.outer_count, cfg.outer_count);
  if (r.mc_shift <= cfg.mc_tol) {
    EXPECT_TRUE(r.message.empty());
  }
}

TEST(Solver, NonconvergenceIsReported) {
  SolverConfig cfg = quick_config();
  cfg.max_iter = 2;
  const SolutionRecord r = solve_fixed_point(linear_model(), gaussian_prior(1.0),
                                             gaussian_signal(1.0), make_params(1.0), cfg);
  EXPECT_EQ(r.status, SolveStatus::MaxIterations);
  EXPECT_EQ(r.iterations, 2);
  EXPECT_FALSE(r.message.empty());
}

TEST(Solver, RejectsBadConfig) {
  const ModelSpec m = linear_model();
  const PriorSpec prior = gaussian_prior(1.0);
  const SignalSpec signal = gaussian_signal(1.0);
  SolverConfig cfg = quick_config();
  cfg.damping = 0.0;
  EXPECT_THROW(solve_fixed_point(m, prior, signal, make_params(1.0), cfg), InvalidArgument);
  cfg = quick_config();
  cfg.init = OrderParams{0.1, 0.5, 0.0, 0.0};
  EXPECT_THROW(solve_fixed_point(m, prior, signal, make_params(1.0), cfg), InvalidArgument);
  EXPECT_THROW(solve_fixed_point(m, prior, signal, make_params(1.0, 2.0), quick_config()),
               InvalidArgument);
  EXPECT_THROW(solve_fixed_point(m, prior, signal, make_params(-1.0), quick_config()),
               InvalidArgument);
}
