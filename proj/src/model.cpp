#include "glmtilt/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <cstdio>
#include <sstream>

#include <boost/math/special_functions/binomial.hpp>

#include "glmtilt/integrate.hpp"
#include "glmtilt/special.hpp"

namespace glmtilt {

void ProblemParams::validate() const {
  if (!(kappa > 0) || !std::isfinite(kappa)) {
    throw InvalidArgument("kappa must be a positive finite number");
  }
  if (!(gamma2 >= 0) || !std::isfinite(gamma2)) {
    throw InvalidArgument("gamma2 must be a non-negative finite number");
  }
  if (!(delta > 0) || !std::isfinite(delta)) {
    throw InvalidArgument("delta must be a positive finite number");
  }
}

ModelSpec linear_model() {
  ModelSpec m;
  m.name = "linear";
  m.t_tilde = [](double theta_star, double e) { return theta_star + normal_quantile(e); };
  m.t_tilde_prime = [](double, double) { return 1.0; };
  m.a = [](double x) { return 0.5 * x * x; };
  m.a_prime = [](double x) { return x; };
  m.a_double_prime = [](double) { return 1.0; };
  m.a_jet = [](double x) { return Jet{0.5 * x * x, x, 1.0}; };
  m.outcome = [](double x, double e) { return x + normal_quantile(e); };
  m.t_prime_bound = 1.0;
  m.a_double_prime_bound = 1.0;
  m.quadratic_a = true;
  m.u_nonpositive = false;
  return m;
}

namespace {

// Thresholds x_k(e), k = 1..m, with P(Y >= k | sigmoid(x)) = e for
// Y ~ Binomial(m, sigmoid(x)). y = #{k : x >= x_k(e)} has the binomial law.
std::vector<double> binomial_thresholds(int m, double e) {
  std::vector<double> out(m);
  if (m == 1) {
    out[0] = logit_clipped(e);
    return out;
  }
  e = std::clamp(e, 1e-12, 1.0 - 1e-12);
  for (int k = 1; k <= m; ++k) {
    double lo = -60.0;
    double hi = 60.0;
    for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo)); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (binomial_upper_tail(m, k, sigmoid(mid)) < e) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    out[k - 1] = 0.5 * (lo + hi);
  }
  return out;
}

// Density in x of the k-th threshold: d/dx P(Y >= k | sigmoid(x)).
double threshold_density(int m, int k, double x) {
  const double p = sigmoid(x);
  return sigmoid_prime(x) * m * binomial_pmf(m - 1, k - 1, p);
}

ModelSpec threshold_model(std::string name, int m, double delta) {
  ModelSpec model;
  model.name = std::move(name);
  model.parameters = {{"delta", delta}};
  if (model.name == "binomial") model.parameters["m"] = m;
  const double md = m;
  model.t_tilde = [m, delta](double theta_star, double e) {
    double t = 0.0;
    for (double xk : binomial_thresholds(m, e)) t += smooth_step(theta_star - xk, delta);
    return t;
  };
  model.t_tilde_prime = [m, delta](double theta_star, double e) {
    double t = 0.0;
    for (double xk : binomial_thresholds(m, e)) t += smooth_step_prime(theta_star - xk, delta);
    return t;
  };
  model.a = [md](double x) { return md * log1pexp(x); };
  model.a_prime = [md](double x) { return md * sigmoid(x); };
  model.a_double_prime = [md](double x) { return md * sigmoid_prime(x); };
  model.a_jet = [md](double x) {
    const double ex = std::exp(-std::abs(x));
    const double sp = 1.0 / (1.0 + ex);
    const double s = x >= 0 ? sp : ex * sp;
    return Jet{md * (std::max(x, 0.0) + std::log1p(ex)), md * s, md * ex * sp * sp};
  };
  model.outcome = [m](double x, double e) {
    const double p = sigmoid(x);
    if (m == 1) return p >= e ? 1.0 : 0.0;
    int y = 0;
    for (int k = 1; k <= m; ++k) {
      if (binomial_upper_tail(m, k, p) >= e) ++y;
    }
    return static_cast<double>(y);
  };
  model.t_prime_bound = md / (2.0 * delta);
  model.a_double_prime_bound = md / 4.0;
  model.quadratic_a = false;
  model.u_nonpositive = true;

  // Outside the smoothing bands T~ sits on an integer count and T~' vanishes,
  // so the value part reduces to binomial point masses. Inside the k-th band,
  // substituting t = f_delta(theta_star - x_k) turns E_e[T~' H(T~)] into
  // int_0^1 H(k - 1 + t) g_k(theta_star - delta atanh(2t - 1)) dt.
  const auto gl = std::make_shared<QuadratureGrid>(gauss_legendre_unit(8));
  model.latent_rule = [m, delta, gl](double theta_star, std::vector<LatentNode>& out) {
    out.clear();
    const double p = sigmoid(theta_star);
    for (int k = 0; k <= m; ++k) {
      out.push_back({static_cast<double>(k), binomial_pmf(m, k, p), 0.0});
    }
    for (int k = 1; k <= m; ++k) {
      for (Eigen::Index i = 0; i < gl->nodes.size(); ++i) {
        const double tau = gl->nodes(i);
        const double x = theta_star - delta * std::atanh(2.0 * tau - 1.0);
        out.push_back({k - 1 + tau, 0.0, gl->weights(i) * threshold_density(m, k, x)});
      }
    }
  };
  return model;
}

}  // namespace

ModelSpec logistic_model(double delta) {
  if (!(delta > 0)) throw InvalidArgument("logistic_model: delta must be positive");
  return threshold_model("logistic", 1, delta);
}

ModelSpec binomial_model(int m, double delta) {
  if (m < 1) throw InvalidArgument("binomial_model: m must be >= 1");
  if (!(delta > 0)) throw InvalidArgument("binomial_model: delta must be positive");
  return threshold_model("binomial", m, delta);
}

PriorSpec gaussian_prior(double variance) {
  if (!(variance > 0) || !std::isfinite(variance)) {
    throw InvalidArgument("gaussian_prior: variance must be positive");
  }
  PriorSpec p;
  p.name = "gauss";
  p.parameters = {{"variance", variance}};
  p.log_density = [variance](double x) { return -0.5 * x * x / variance; };
  p.log_density_prime = [variance](double x) { return -x / variance; };
  p.log_density_double_prime = [variance](double) { return -1.0 / variance; };
  p.strong_concavity_eps = 1.0 / variance;
  p.mode = 0.0;
  p.second_moment = variance;
  return p;
}

PriorSpec beta_prior(double a, double b) {
  if (!(a > 1) || !(b > 1)) {
    throw InvalidArgument("beta_prior: both shape parameters must exceed 1");
  }
  PriorSpec p;
  p.name = "beta";
  p.parameters = {{"a", a}, {"b", b}};
  p.log_density = [a, b](double x) {
    if (x <= 0.0 || x >= 1.0) return -std::numeric_limits<double>::infinity();
    return (a - 1) * std::log(x) + (b - 1) * std::log1p(-x);
  };
  p.log_density_prime = [a, b](double x) { return (a - 1) / x - (b - 1) / (1 - x); };
  p.log_density_double_prime = [a, b](double x) {
    return -(a - 1) / (x * x) - (b - 1) / ((1 - x) * (1 - x));
  };
  p.lo = 0.0;
  p.hi = 1.0;
  // -(log mu)'' is minimized where ((1 - x) / x)^3 = (b - 1) / (a - 1).
  const double x_min = 1.0 / (1.0 + std::cbrt((b - 1) / (a - 1)));
  p.strong_concavity_eps = (a - 1) / (x_min * x_min) + (b - 1) / ((1 - x_min) * (1 - x_min));
  p.mode = (a - 1) / (a + b - 2);
  p.second_moment = a * (a + 1) / ((a + b) * (a + b + 1));
  return p;
}

SignalSpec gaussian_signal(double variance) {
  if (!(variance >= 0)) throw InvalidArgument("gaussian_signal: variance must be >= 0");
  SignalSpec s;
  s.name = "gauss";
  s.parameters = {{"variance", variance}};
  const double sd = std::sqrt(variance);
  s.sampler = [sd](Rng& rng) { return sd * std::normal_distribution<double>()(rng); };
  s.second_moment = variance;
  s.bounded = false;
  return s;
}

SignalSpec rademacher_signal(double scale) {
  SignalSpec s;
  s.name = "rademacher";
  s.parameters = {{"scale", scale}};
  s.sampler = [scale](Rng& rng) {
    return std::bernoulli_distribution(0.5)(rng) ? scale : -scale;
  };
  s.second_moment = scale * scale;
  return s;
}

SignalSpec beta_signal(double a, double b) {
  if (!(a > 0) || !(b > 0)) throw InvalidArgument("beta_signal: shape parameters must be > 0");
  SignalSpec s;
  s.name = "beta";
  s.parameters = {{"a", a}, {"b", b}};
  s.sampler = [a, b](Rng& rng) {
    const double x = std::gamma_distribution<double>(a, 1.0)(rng);
    const double y = std::gamma_distribution<double>(b, 1.0)(rng);
    return x / (x + y);
  };
  s.mean = a / (a + b);
  s.second_moment = a * (a + 1) / ((a + b) * (a + b + 1));
  return s;
}

SignalSpec point_mass_signal(std::vector<double> atoms, std::vector<double> weights) {
  if (atoms.empty() || atoms.size() != weights.size()) {
    throw InvalidArgument("point_mass_signal: atoms and weights must be non-empty and match");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0)) throw InvalidArgument("point_mass_signal: negative weight");
    total += w;
  }
  if (!(total > 0)) throw InvalidArgument("point_mass_signal: weights sum to zero");
  SignalSpec s;
  s.name = atoms.size() == 1 ? "point" : "mixture";
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    weights[i] /= total;
    mean += weights[i] * atoms[i];
    m2 += weights[i] * atoms[i] * atoms[i];
    s.parameters["atom" + std::to_string(i)] = atoms[i];
    s.parameters["weight" + std::to_string(i)] = weights[i];
  }
  s.mean = mean;
  s.second_moment = m2;
  auto dist = std::make_shared<std::discrete_distribution<std::size_t>>(weights.begin(),
                                                                         weights.end());
  s.sampler = [atoms, dist](Rng& rng) {
    std::discrete_distribution<std::size_t> d(dist->param());
    return atoms[d(rng)];
  };
  return s;
}

namespace {

struct NameArgs {
  std::string name;
  std::vector<double> args;
};

NameArgs split_spec(const std::string& text) {
  NameArgs out;
  const auto colon = text.find(':');
  out.name = text.substr(0, colon);
  if (colon == std::string::npos) return out;
  std::stringstream ss(text.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.args.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("malformed parameter '" + item + "' in '" + text + "'");
    }
  }
  return out;
}

void expect_args(const NameArgs& na, std::size_t n, const std::string& text) {
  if (na.args.size() != n) {
    throw InvalidArgument("'" + text + "' expects " + std::to_string(n) + " parameter(s)");
  }
}

}  // namespace

ModelSpec parse_model(const std::string& text, double delta) {
  const NameArgs na = split_spec(text);
  if (na.name == "linear") {
    expect_args(na, 0, text);
    return linear_model();
  }
  if (na.name == "logistic") {
    expect_args(na, 0, text);
    return logistic_model(delta);
  }
  if (na.name == "binomial") {
    expect_args(na, 1, text);
    const double m = na.args[0];
    if (m != std::floor(m)) throw InvalidArgument("binomial: m must be an integer");
    return binomial_model(static_cast<int>(m), delta);
  }
  throw InvalidArgument("unknown model '" + text + "'");
}

PriorSpec parse_prior(const std::string& text) {
  const NameArgs na = split_spec(text);
  if (na.name == "gauss") {
    expect_args(na, 1, text);
    return gaussian_prior(na.args[0]);
  }
  if (na.name == "beta") {
    expect_args(na, 2, text);
    return beta_prior(na.args[0], na.args[1]);
  }
  throw InvalidArgument("unknown prior '" + text + "'");
}

SignalSpec parse_signal(const std::string& text) {
  const NameArgs na = split_spec(text);
  if (na.name == "gauss") {
    expect_args(na, 1, text);
    return gaussian_signal(na.args[0]);
  }
  if (na.name == "rademacher") {
    expect_args(na, 1, text);
    return rademacher_signal(na.args[0]);
  }
  if (na.name == "beta") {
    expect_args(na, 2, text);
    return beta_signal(na.args[0], na.args[1]);
  }
  if (na.name == "point") {
    expect_args(na, 1, text);
    return point_mass_signal({na.args[0]}, {1.0});
  }
  if (na.name == "mixture") {
    if (na.args.empty() || na.args.size() % 2 != 0) {
      throw InvalidArgument("mixture expects atom,weight pairs");
    }
    std::vector<double> atoms;
    std::vector<double> weights;
    for (std::size_t i = 0; i < na.args.size(); i += 2) {
      atoms.push_back(na.args[i]);
      weights.push_back(na.args[i + 1]);
    }
    return point_mass_signal(std::move(atoms), std::move(weights));
  }
  throw InvalidArgument("unknown signal '" + text + "'");
}

bool RegularityReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

namespace {

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

RegularityReport check_model(const ModelSpec& model, Rng& rng, int points) {
  RegularityReport rep;
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  constexpr double h = 1e-5;
  double a_min = std::numeric_limits<double>::infinity();
  double app_min = std::numeric_limits<double>::infinity();
  double app_max = -std::numeric_limits<double>::infinity();
  double tp_max = 0.0;
  double u_max = -std::numeric_limits<double>::infinity();
  double d1_err = 0.0;
  double d2_err = 0.0;
  double tp_err = 0.0;
  const double delta = model.parameters.count("delta") ? model.parameters.at("delta") : 1.0;
  for (int i = 0; i < points; ++i) {
    const double x = normal(rng);
    const double e = uniform(rng);
    a_min = std::min(a_min, model.a(x));
    app_min = std::min(app_min, model.a_double_prime(x));
    app_max = std::max(app_max, model.a_double_prime(x));
    tp_max = std::max(tp_max, std::abs(model.t_tilde_prime(x, e)));
    if (model.u_nonpositive) {
      const double y = normal(rng);
      u_max = std::max(u_max, x * model.t_tilde(y, e) - model.a(x));
    }
    d1_err = std::max(d1_err, rel_err(model.a_prime(x), (model.a(x + h) - model.a(x - h)) / (2 * h)));
    d2_err = std::max(d2_err, rel_err(model.a_double_prime(x),
                                      (model.a_prime(x + h) - model.a_prime(x - h)) / (2 * h)));
    const Jet j = model.a_jet(x);
    d1_err = std::max(d1_err, rel_err(j.value, model.a(x)) + rel_err(j.d1, model.a_prime(x)));
    // T~' is resolved on its own length scale.
    const double ht = h * std::min(1.0, delta);
    tp_err = std::max(
        tp_err, std::abs(model.t_tilde_prime(x, e) -
                         (model.t_tilde(x + ht, e) - model.t_tilde(x - ht, e)) / (2 * ht)) /
                    std::max(1.0, model.t_prime_bound));
  }
  rep.checks.push_back({"A non-negative", a_min >= 0, a_min});
  rep.checks.push_back({"A'' in [0, sup A'']",
                        app_min >= 0 && app_max <= model.a_double_prime_bound + 1e-12, app_max});
  rep.checks.push_back({"A'' <= 1", app_max <= 1.0 + 1e-12, app_max});
  rep.checks.push_back({"|T~'| <= d1", tp_max <= model.t_prime_bound + 1e-12, tp_max});
  if (model.u_nonpositive) {
    rep.checks.push_back({"u(x, y) <= 0", u_max <= 1e-12, u_max});
  }
  rep.checks.push_back({"A' matches finite differences", d1_err < 1e-5, d1_err});
  rep.checks.push_back({"A'' matches finite differences", d2_err < 1e-5, d2_err});
  rep.checks.push_back({"T~' matches finite differences", tp_err < 1e-5, tp_err});
  return rep;
}

RegularityReport check_prior(const PriorSpec& prior, Rng& rng, int points) {
  RegularityReport rep;
  auto draw = [&]() {
    if (std::isfinite(prior.lo) && std::isfinite(prior.hi)) {
      const double w = prior.hi - prior.lo;
      return std::uniform_real_distribution<double>(prior.lo + 1e-3 * w, prior.hi - 1e-3 * w)(rng);
    }
    return std::normal_distribution<double>(prior.mode, 5.0)(rng);
  };
  double worst_curv = -std::numeric_limits<double>::infinity();
  double d1_err = 0.0;
  double d2_err = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = draw();
    worst_curv = std::max(worst_curv, prior.log_density_double_prime(x));
    const double h = 1e-6 * std::max(1.0, std::abs(x));
    d1_err = std::max(d1_err, rel_err(prior.log_density_prime(x),
                                      (prior.log_density(x + h) - prior.log_density(x - h)) / (2 * h)));
    d2_err = std::max(d2_err, rel_err(prior.log_density_double_prime(x),
                                      (prior.log_density_prime(x + h) -
                                       prior.log_density_prime(x - h)) / (2 * h)));
  }
  rep.checks.push_back({"(log mu)'' <= -eps < 0",
                        prior.strong_concavity_eps > 0 &&
                            worst_curv <= -prior.strong_concavity_eps * (1 - 1e-12),
                        worst_curv});
  rep.checks.push_back({"(log mu)' matches finite differences", d1_err < 1e-6, d1_err});
  rep.checks.push_back({"(log mu)'' matches finite differences", d2_err < 1e-6, d2_err});
  return rep;
}

namespace {

std::string fmt_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string to_spec_string(const ModelSpec& model) {
  if (model.name == "binomial") {
    return "binomial:" + fmt_num(model.parameters.at("m"));
  }
  return model.name;
}

std::string to_spec_string(const PriorSpec& prior) {
  if (prior.name == "gauss") return "gauss:" + fmt_num(prior.parameters.at("variance"));
  return "beta:" + fmt_num(prior.parameters.at("a")) + "," + fmt_num(prior.parameters.at("b"));
}

std::string to_spec_string(const SignalSpec& signal) {
  const auto& p = signal.parameters;
  if (signal.name == "gauss") return "gauss:" + fmt_num(p.at("variance"));
  if (signal.name == "rademacher") return "rademacher:" + fmt_num(p.at("scale"));
  if (signal.name == "beta") return "beta:" + fmt_num(p.at("a")) + "," + fmt_num(p.at("b"));
  if (signal.name == "point") return "point:" + fmt_num(p.at("atom0"));
  std::string out = "mixture:";
  for (std::size_t i = 0; p.count("atom" + std::to_string(i)); ++i) {
    if (i > 0) out += ",";
    out += fmt_num(p.at("atom" + std::to_string(i))) + "," +
           fmt_num(p.at("weight" + std::to_string(i)));
  }
  return out;
}

}  // namespace glmtilt
