#pragma once

#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "glmtilt/types.hpp"

namespace glmtilt {

inline constexpr double kDefaultSmoothing = 1e-3;

/// Limit p/n -> kappa, signal strength gamma^2 and the smoothing width of
/// the smoothed binary-outcome models.
struct ProblemParams {
  double kappa = 1.0;
  double gamma2 = 1.0;
  double delta = kDefaultSmoothing;

  void validate() const;
};

/// One node of a conditional quadrature rule over the latent uniform e at a
/// fixed theta_star. For F(T, T') = G(T) + T' H(T):
///   E_e[F] ~= sum value_weight * G(t) + slope_weight * H(t).
/// The node positions t must not depend on theta_star.
struct LatentNode {
  double t = 0.0;
  double value_weight = 0.0;
  double slope_weight = 0.0;
};

using LatentRule = std::function<void(double theta_star, std::vector<LatentNode>& out)>;

/// A canonical GLM: log-likelihood T~(theta_star, e) x - A(x) with outcome
/// y = f(x, e), e ~ Unif[0, 1].
struct ModelSpec {
  std::string name;
  std::map<std::string, double> parameters;

  std::function<double(double theta_star, double e)> t_tilde;
  std::function<double(double theta_star, double e)> t_tilde_prime;
  std::function<double(double)> a;
  std::function<double(double)> a_prime;
  std::function<double(double)> a_double_prime;
  /// A, A', A'' at once; used in hot loops.
  std::function<Jet(double)> a_jet;
  std::function<double(double x, double e)> outcome;

  /// Declared bound d1 on |T~'|.
  double t_prime_bound = 1.0;
  /// sup A''.
  double a_double_prime_bound = 1.0;
  /// A(x) = x^2 / 2 exactly.
  bool quadratic_a = false;
  /// Whether u(x, y) = x T~(y) - A(x) <= 0 is claimed.
  bool u_nonpositive = false;
  /// Optional: integrates e out conditionally on theta_star. Empty means the
  /// drawn e is used directly.
  LatentRule latent_rule;
};

/// Strongly log-concave coordinate prior mu.
struct PriorSpec {
  std::string name;
  std::map<std::string, double> parameters;

  std::function<double(double)> log_density;
  std::function<double(double)> log_density_prime;
  std::function<double(double)> log_density_double_prime;

  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  /// Certified lower bound on -(log mu)''.
  double strong_concavity_eps = 1.0;
  double mode = 0.0;
  /// E[b^2] under mu.
  double second_moment = 1.0;

  bool in_support(double b) const { return b >= lo && b <= hi; }
  bool interior(double b) const { return b > lo && b < hi; }
  Jet log_jet(double b) const {
    return {log_density(b), log_density_prime(b), log_density_double_prime(b)};
  }
};

/// Distribution pi of the signal coordinates.
struct SignalSpec {
  std::string name;
  std::map<std::string, double> parameters;
  std::function<double(Rng&)> sampler;
  double second_moment = 1.0;
  double mean = 0.0;
  bool bounded = true;
};

ModelSpec linear_model();
ModelSpec logistic_model(double delta = kDefaultSmoothing);
ModelSpec binomial_model(int m, double delta = kDefaultSmoothing);

PriorSpec gaussian_prior(double variance);
PriorSpec beta_prior(double a, double b);

SignalSpec gaussian_signal(double variance);
SignalSpec rademacher_signal(double scale);
SignalSpec beta_signal(double a, double b);
/// Discrete signal with the given atoms and (normalized) weights.
SignalSpec point_mass_signal(std::vector<double> atoms, std::vector<double> weights);

/// `linear`, `logistic`, `binomial:m`.
ModelSpec parse_model(const std::string& text, double delta = kDefaultSmoothing);
/// `gauss:variance`, `beta:a,b`.
PriorSpec parse_prior(const std::string& text);
/// `gauss:variance`, `rademacher:scale`, `beta:a,b`, `point:c`,
/// `mixture:atom1,weight1,atom2,weight2,...`.
SignalSpec parse_signal(const std::string& text);

/// Inverse of the parse_* functions.
std::string to_spec_string(const ModelSpec& model);
std::string to_spec_string(const PriorSpec& prior);
std::string to_spec_string(const SignalSpec& signal);

/// Outcome of the runtime regularity checks on a model or prior.
struct RegularityReport {
  struct Check {
    std::string name;
    bool passed;
    double worst;
  };
  std::vector<Check> checks;

  bool ok() const;
};

/// Randomized checks of the likelihood regularity conditions and of the
/// analytic derivatives against central finite differences.
RegularityReport check_model(const ModelSpec& model, Rng& rng, int points = 100);
/// Randomized strong-concavity certificate and derivative checks.
RegularityReport check_prior(const PriorSpec& prior, Rng& rng, int points = 10000);

}  // namespace glmtilt
