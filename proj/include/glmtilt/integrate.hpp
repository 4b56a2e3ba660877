#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "glmtilt/model.hpp"
#include "glmtilt/types.hpp"

namespace glmtilt {

/// Composite rule on [lo, hi].
struct QuadratureGrid {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  double lo = 0.0;
  double hi = 0.0;
};

/// Composite Simpson rule with `intervals` (even) subintervals.
QuadratureGrid simpson_grid(double lo, double hi, int intervals);

/// Gauss-Legendre rule on [0, 1].
QuadratureGrid gauss_legendre_unit(int n);

/// Gauss-Hermite rule for E[g(Z)], Z ~ N(0, 1): nodes z_i, weights summing to 1.
/// Cached per n.
const QuadratureGrid& gauss_hermite_normal(int n);

struct TiltedOptions {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  /// Starting point of the mode search; NaN picks one inside [lo, hi].
  double start = std::numeric_limits<double>::quiet_NaN();
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  int initial_intervals = 32;
  int max_intervals = 1 << 15;
  /// Initial half-width in curvature scales around the mode.
  double width_scales = 12.0;
  /// The window is widened until log w has dropped by this much at both ends.
  double tail_drop = 36.0;
};

/// Mode, curvature scale and integration window of a log-concave weight.
struct TiltedWindow {
  double mode = 0.0;
  double log_w_mode = 0.0;
  double scale = 1.0;
  double lo = 0.0;
  double hi = 0.0;
};

template <int K>
struct TiltedMoments {
  Eigen::Array<double, K, 1> moments;
  TiltedWindow window;
  /// log of the integral of w over the window.
  double log_normalizer = 0.0;
  int intervals = 0;
  bool converged = false;
  /// Self-reported error estimate after each refinement.
  std::vector<double> error_history;
};

namespace detail {

template <class F>
Jet eval_jet(F& f, double x) {
  using R = std::invoke_result_t<F&, double>;
  if constexpr (std::is_same_v<R, Jet>) {
    return f(x);
  } else {
    const double h = 1e-4 * std::max(1.0, std::abs(x));
    const double f0 = f(x);
    const double fp = f(x + h);
    const double fm = f(x - h);
    return {f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)};
  }
}

template <class F>
double eval_value(F& f, double x) {
  using R = std::invoke_result_t<F&, double>;
  if constexpr (std::is_same_v<R, Jet>) {
    return f(x).value;
  } else {
    return f(x);
  }
}

inline double initial_point(const TiltedOptions& opt) {
  if (std::isfinite(opt.start) && opt.start > opt.lo && opt.start < opt.hi) {
    return opt.start;
  }
  if (std::isfinite(opt.lo) && std::isfinite(opt.hi)) {
    return 0.5 * (opt.lo + opt.hi);
  }
  if (std::isfinite(opt.lo)) {
    return std::max(0.0, opt.lo + 1.0);
  }
  if (std::isfinite(opt.hi)) {
    return std::min(0.0, opt.hi - 1.0);
  }
  return 0.0;
}

}  // namespace detail

/// Locates the mode of a log-concave weight by safeguarded Newton iteration
/// with bracket expansion. `log_w` returns either Jet or double.
template <class LogW>
TiltedWindow locate_window(LogW&& log_w, const TiltedOptions& opt) {
  double a = opt.lo;
  double b = opt.hi;
  double x = detail::initial_point(opt);
  Jet j = detail::eval_jet(log_w, x);
  if (!std::isfinite(j.value)) {
    throw NumericalError("tilted density: non-finite log weight at the starting point");
  }
  double step = 1.0;
  bool done = false;
  for (int it = 0; it < 400 && !done; ++it) {
    if (!(std::isfinite(j.d1) && std::isfinite(j.d2))) {
      throw NumericalError("tilted density: non-finite derivative during mode search");
    }
    if (j.d1 > 0) {
      a = x;
    } else if (j.d1 < 0) {
      b = x;
    } else {
      break;
    }
    double next;
    const double newton = j.d2 < 0 ? x - j.d1 / j.d2 : std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(newton) && newton > a && newton < b) {
      next = newton;
    } else if (std::isfinite(a) && std::isfinite(b)) {
      next = 0.5 * (a + b);
    } else {
      step = std::max(2.0 * step, 1.0);
      next = j.d1 > 0 ? x + step : x - step;
    }
    done = std::abs(next - x) <= 1e-13 * (1.0 + std::abs(x)) ||
           (std::isfinite(a) && std::isfinite(b) && b - a <= 1e-13 * (1.0 + std::abs(x)));
    x = next;
    j = detail::eval_jet(log_w, x);
    if (std::isnan(j.value) || j.value == std::numeric_limits<double>::infinity()) {
      throw NumericalError("tilted density: non-finite log weight during mode search");
    }
    if (!std::isfinite(j.value)) {
      // Stepped onto a boundary where the weight vanishes; back off.
      x = std::isfinite(a) && std::isfinite(b) ? 0.5 * (a + b) : (j.d1 > 0 ? a : b);
      j = detail::eval_jet(log_w, x);
      if (!std::isfinite(j.value)) {
        throw NumericalError("tilted density: failed to locate the mode");
      }
    }
  }
  if (!done && std::abs(j.d1) > 1e-6 * (1.0 + std::abs(j.value)) &&
      !(x - opt.lo < 1e-9 || opt.hi - x < 1e-9)) {
    throw NumericalError("tilted density: mode search did not converge");
  }

  TiltedWindow w;
  w.mode = x;
  w.log_w_mode = j.value;
  w.scale = (j.d2 < 0 && std::isfinite(j.d2)) ? 1.0 / std::sqrt(-j.d2) : 1.0;
  const double half = opt.width_scales * w.scale;
  w.lo = std::max(opt.lo, x - half);
  w.hi = std::min(opt.hi, x + half);
  for (int it = 0; it < 60 && w.lo > opt.lo; ++it) {
    const double v = detail::eval_value(log_w, w.lo);
    if (v - w.log_w_mode < -opt.tail_drop) break;
    w.lo = std::max(opt.lo, x - 2.0 * (x - w.lo));
  }
  for (int it = 0; it < 60 && w.hi < opt.hi; ++it) {
    const double v = detail::eval_value(log_w, w.hi);
    if (v - w.log_w_mode < -opt.tail_drop) break;
    w.hi = std::min(opt.hi, x + 2.0 * (w.hi - x));
  }
  if (!(std::isfinite(w.lo) && std::isfinite(w.hi))) {
    throw NumericalError("tilted density: unbounded mass region");
  }
  return w;
}

/// Normalized moments <g_k> = int g_k w / int w for a log-concave weight
/// w = exp(log_w). `g` maps x to Eigen::Array<double, K, 1>. Composite
/// Simpson on nested grids, refined by doubling until successive estimates
/// agree to rel_tol.
template <int K, class LogW, class G>
TiltedMoments<K> moments_of_tilted_density(LogW&& log_w, G&& g, const TiltedOptions& opt = {}) {
  using Acc = Eigen::Array<double, K + 1, 1>;
  TiltedMoments<K> out;
  out.window = locate_window(log_w, opt);
  const TiltedWindow& win = out.window;

  auto node_term = [&](double x) -> Acc {
    Acc r = Acc::Zero();
    const double lv = detail::eval_value(log_w, x);
    if (std::isnan(lv) || lv == std::numeric_limits<double>::infinity()) {
      throw NumericalError("tilted density: non-finite log weight inside the mass region");
    }
    const double w = std::exp(lv - win.log_w_mode);
    if (w > 0) {
      r(0) = w;
      r.template tail<K>() = w * g(x);
    }
    return r;
  };

  int n = opt.initial_intervals;
  const double width = win.hi - win.lo;
  if (width <= 0) {
    // Degenerate support: all mass at one point.
    out.moments = g(win.mode);
    out.log_normalizer = -std::numeric_limits<double>::infinity();
    out.converged = true;
    return out;
  }
  Acc ends = 0.5 * (node_term(win.lo) + node_term(win.hi));
  Acc interior = Acc::Zero();
  for (int i = 1; i < n; ++i) {
    interior += node_term(win.lo + width * i / n);
  }
  Acc trap_prev = (width / n) * (ends + interior);
  std::optional<Eigen::Array<double, K, 1>> prev_moments;
  double prev_norm = 0.0;
  while (true) {
    Acc mid = Acc::Zero();
    for (int i = 0; i < n; ++i) {
      mid += node_term(win.lo + width * (i + 0.5) / n);
    }
    interior += mid;
    n *= 2;
    const Acc trap = (width / n) * (ends + interior);
    const Acc simpson = (4.0 * trap - trap_prev) / 3.0;
    trap_prev = trap;
    if (!(simpson(0) > 0) || !simpson.allFinite()) {
      throw NumericalError("tilted density: non-finite or zero normalization");
    }
    const Eigen::Array<double, K, 1> m = simpson.template tail<K>() / simpson(0);
    if (prev_moments) {
      const double dnorm = std::abs(simpson(0) - prev_norm) / simpson(0);
      const double dm = (m - *prev_moments).abs().maxCoeff();
      const double err = std::max(dnorm, K > 0 ? dm : 0.0);
      out.error_history.push_back(err);
      const bool ok = dnorm <= opt.rel_tol &&
                      ((m - *prev_moments).abs() <= opt.rel_tol * m.abs() + opt.abs_tol).all();
      if (ok || n >= opt.max_intervals) {
        out.moments = m;
        out.converged = ok;
        out.intervals = n;
        out.log_normalizer = std::log(simpson(0)) + win.log_w_mode;
        return out;
      }
    }
    prev_moments = m;
    prev_norm = simpson(0);
  }
}

/// Normalized density of w = exp(log_w) tabulated on the converged Simpson grid.
struct TabulatedDensity {
  QuadratureGrid grid;
  Eigen::VectorXd density;
};

template <class LogW>
TabulatedDensity tabulate_tilted_density(LogW&& log_w, const TiltedOptions& opt = {}) {
  const auto res = moments_of_tilted_density<1>(
      log_w, [](double x) { return Eigen::Array<double, 1, 1>(x); }, opt);
  TabulatedDensity out;
  const auto& win = res.window;
  if (win.hi <= win.lo) {
    out.grid.nodes = Eigen::VectorXd::Constant(1, win.mode);
    out.grid.weights = Eigen::VectorXd::Ones(1);
    out.grid.lo = out.grid.hi = win.mode;
    out.density = Eigen::VectorXd::Ones(1);
    return out;
  }
  out.grid = simpson_grid(win.lo, win.hi, res.intervals);
  out.density.resize(out.grid.nodes.size());
  for (Eigen::Index i = 0; i < out.grid.nodes.size(); ++i) {
    const double lv = detail::eval_value(log_w, out.grid.nodes(i));
    out.density(i) = std::exp(lv - res.log_normalizer);
  }
  return out;
}

/// Chebyshev expansion of a smooth vector-valued function on [lo, hi], fitted
/// on nested Chebyshev-Lobatto grids until the trailing coefficients fall
/// below tol relative to the largest one.
template <int K>
class ChebyshevSeries {
 public:
  using Value = Eigen::Array<double, K, 1>;

  template <class F>
  static ChebyshevSeries fit(F&& f, double lo, double hi, double tol = 1e-12,
                             int max_degree = 1024) {
    ChebyshevSeries s;
    s.lo_ = lo;
    s.hi_ = hi;
    if (!(hi > lo)) {
      s.coef_.push_back(f(lo));
      s.converged_ = true;
      return s;
    }
    auto point = [&](int k, int n) {
      return 0.5 * (lo + hi) + 0.5 * (hi - lo) * std::cos(M_PI * k / n);
    };
    int n = 16;
    std::vector<Value> vals(n + 1);
    for (int k = 0; k <= n; ++k) vals[k] = f(point(k, n));
    while (true) {
      s.coef_.assign(n + 1, Value::Zero());
      for (int j = 0; j <= n; ++j) {
        Value c = Value::Zero();
        for (int k = 0; k <= n; ++k) {
          const double w = (k == 0 || k == n) ? 0.5 : 1.0;
          c += w * std::cos(M_PI * static_cast<double>(j) * k / n) * vals[k];
        }
        s.coef_[j] = (j == 0 || j == n ? 1.0 : 2.0) / n * c;
      }
      Value scale = Value::Zero();
      for (const Value& c : s.coef_) scale = scale.max(c.abs());
      Value tail = Value::Zero();
      for (int j = n - 2; j <= n; ++j) tail = tail.max(s.coef_[j].abs());
      if ((tail <= tol * scale.max(1.0)).all()) {
        s.converged_ = true;
        return s;
      }
      if (2 * n > max_degree) return s;
      std::vector<Value> finer(2 * n + 1);
      for (int k = 0; k <= n; ++k) finer[2 * k] = vals[k];
      for (int k = 1; k < 2 * n; k += 2) finer[k] = f(point(k, 2 * n));
      vals = std::move(finer);
      n *= 2;
    }
  }

  /// Clenshaw evaluation; x is clamped to [lo, hi].
  Value operator()(double x) const {
    if (coef_.size() == 1) return coef_[0];
    const double u = std::clamp((2.0 * x - lo_ - hi_) / (hi_ - lo_), -1.0, 1.0);
    Value b1 = Value::Zero();
    Value b2 = Value::Zero();
    for (std::size_t j = coef_.size() - 1; j >= 1; --j) {
      const Value b0 = 2.0 * u * b1 - b2 + coef_[j];
      b2 = b1;
      b1 = b0;
    }
    return u * b1 - b2 + coef_[0];
  }

  int degree() const { return static_cast<int>(coef_.size()) - 1; }
  bool converged() const { return converged_; }

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
  bool converged_ = false;
  std::vector<Value> coef_;
};

/// Kind of outer sample set: (xi_Bstar, z_BBstar, e) or (Z, Bstar).
enum class OuterKind { GaussianAndLatent, GaussianAndSignal };

/// I.i.d. outer draws, one row per draw. Columns are (xi_Bstar, z_BBstar, e)
/// for GaussianAndLatent and (Z, Bstar) for GaussianAndSignal.
struct OuterSampleSet {
  OuterKind kind = OuterKind::GaussianAndLatent;
  std::uint64_t seed = 0;
  Eigen::MatrixXd draws;

  Eigen::Index count() const { return draws.rows(); }
};

OuterSampleSet make_outer_samples(OuterKind kind, Eigen::Index count, std::uint64_t seed,
                                  const SignalSpec* signal = nullptr);

/// Pairwise (cascade) summation; the result depends only on the order of `x`.
double pairwise_sum(std::span<const double> x);

/// Column sums of a row-per-item matrix by pairwise summation.
Eigen::VectorXd pairwise_column_sums(const Eigen::MatrixXd& rows);

/// Runs body(i) for i in [0, n) on up to `threads` threads, in contiguous blocks.
/// body must write only to slot i of its output.
template <class Body>
void parallel_for(Eigen::Index n, int threads, Body&& body) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<Eigen::Index>(n, 1))));
  if (threads == 1) {
    for (Eigen::Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const Eigen::Index block = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        const Eigen::Index begin = t * block;
        const Eigen::Index end = std::min(n, begin + block);
        for (Eigen::Index i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace glmtilt
