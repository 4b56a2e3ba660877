#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glmtilt/integrate.hpp"
#include "glmtilt/model.hpp"

namespace glmtilt {

/// Limits of the sample overlaps: v_B = E<beta^2>_h, c_B = E<beta>_h^2,
/// c_BBstar = E<beta>_h Bstar, plus the averaged curvature a_dp = E<A''>_s.
struct OrderParams {
  double v_B = 0.0;
  double c_B = 0.0;
  double c_BBstar = 0.0;
  double a_dp = 0.0;
};

/// Throws NumericalError if the order parameters leave the invariant set
/// (up to tol): v_B >= c_B >= 0, c_BBstar^2 <= c_B gamma2, a_dp in [0, a_bound].
void validate_order(const OrderParams& order, double gamma2, double a_dp_bound,
                    double tol = 1e-9);

/// Projection onto {0 <= c_B <= v_B, c_BBstar^2 <= c_B gamma2}. Idempotent.
OrderParams project_order(const OrderParams& order, double gamma2);

/// Score constants (r1, r2, r3) and the derived Gaussian-tilt parameters.
struct TiltConstants {
  double r1 = 1.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double t_gamma = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  double v = 1.0;

  /// alpha = (r2 + t_gamma) / r1, sigma = sqrt(r3) / r1, v = 1 / r1.
  static TiltConstants from_scores(double r1, double r2, double r3, double t_gamma);
};

inline constexpr double kMinR1 = 1e-6;
inline constexpr double kDegenerateCB = 1e-10;

/// theta(xi_B) = xi * xi_B + z * z_BBstar, theta_star = star_xi * xi_Bstar + star_z * z_BBstar.
struct ThetaCoefficients {
  double xi = 0.0;
  double z = 0.0;
  double star_xi = 0.0;
  double star_z = 0.0;
  bool degenerate = false;
};

ThetaCoefficients theta_coefficients(const OrderParams& order, const ProblemParams& params);

struct ThetaPair {
  double theta_star = 0.0;
  double theta = 0.0;
};

ThetaPair theta_pair(const OrderParams& order, const ProblemParams& params, double xi_B,
                     double xi_Bstar, double z_BBstar);

/// Moments under p_s for one outer draw.
struct PsMoments {
  double mean_Adpp = 0.0;
  double var_Stheta = 0.0;
  double cov_SthetaStar_Stheta = 0.0;
  double mean_Stheta = 0.0;
};

/// Moments under p_s(xi_B) ~ exp{t theta(xi_B) - A(theta(xi_B)) - xi_B^2/2} for a
/// given sufficient-statistic value t = T~(theta_star). The covariance entry is
/// Cov_s(theta, S_theta), i.e. without the T~'(theta_star) factor.
PsMoments ps_conditional(const ThetaCoefficients& coef, const ModelSpec& model, double t,
                         double z_BBstar);

PsMoments ps_moments(const OrderParams& order, const ProblemParams& params,
                     const ModelSpec& model, double xi_Bstar, double z_BBstar, double e);

struct ScoreConstants {
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double a_dp = 0.0;
};

/// Averages p_s moments over the outer (xi_Bstar, z_BBstar, e) draws. When the
/// model carries a latent rule, e is integrated out conditionally instead of
/// using the drawn value. Throws NumericalError if r1 <= 0.
ScoreConstants fpe2_half(const OrderParams& order, const ProblemParams& params,
                         const ModelSpec& model, const OuterSampleSet& outer, int threads = 1);

/// t_gamma = E[T~'(sqrt(kappa) gamma Z)], Z taken from column 0 of a
/// GaussianAndLatent set.
double t_gamma(const ModelSpec& model, const ProblemParams& params, const OuterSampleSet& outer);

/// Moments of p_h(b) ~ exp{-(b - m)^2 / (2v)} mu(b).
struct TiltMoments {
  double mean = 0.0;
  double second = 0.0;
};

TiltMoments tilt_moments(double m, double v, const PriorSpec& prior);

/// (v_B, c_B, c_BBstar) averaged over (Z, Bstar) draws.
OrderParams fpe1_half(const TiltConstants& tilt, const PriorSpec& prior,
                      const OuterSampleSet& outer, int threads = 1);

struct SolverConfig {
  Eigen::Index outer_count = 20000;
  std::uint64_t seed = 1;
  double damping = 0.5;
  double tol = 1e-6;
  int max_iter = 1000;
  std::optional<OrderParams> init;
  int threads = 1;
  /// Re-solve with an independent outer set and double outer_count while the
  /// order parameters move by more than mc_tol.
  bool mc_check = true;
  double mc_tol = 5e-3;
  Eigen::Index max_outer_count = 160000;
};

enum class SolveStatus { Converged, MaxIterations, Failed };

std::string to_string(SolveStatus s);

struct SolutionRecord {
  ProblemParams params;
  std::string model;
  std::string prior;
  std::string signal;
  OrderParams order;
  TiltConstants tilt;
  double c_mse = 0.0;
  int iterations = 0;
  double residual = 0.0;
  std::uint64_t seed = 0;
  Eigen::Index outer_count = 0;
  SolveStatus status = SolveStatus::Failed;
  /// Largest order-parameter shift against an independent outer set; NaN if unchecked.
  double mc_shift = std::numeric_limits<double>::quiet_NaN();
  std::string message;
  /// Accepted iterates, after projection.
  std::vector<OrderParams> trace;

  bool converged() const { return status == SolveStatus::Converged; }
};

/// Gauss-Seidel iteration order -> (r1, r2, r3) -> tilt -> order' with damped
/// updates on common random numbers. Nonconvergence is reported through the
/// record's status; invalid iterates (r1 <= 0) throw NumericalError.
SolutionRecord solve_fixed_point(const ModelSpec& model, const PriorSpec& prior,
                                 const SignalSpec& signal, const ProblemParams& params,
                                 const SolverConfig& config = {});

/// Limiting MSE constant gamma^2 + v_B - 2 c_BBstar.
double mse_constant(const SolutionRecord& record);

}  // namespace glmtilt
