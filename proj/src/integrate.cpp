#include "glmtilt/integrate.hpp"

#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>

namespace glmtilt {

QuadratureGrid simpson_grid(double lo, double hi, int intervals) {
  if (intervals < 2 || intervals % 2 != 0) {
    throw InvalidArgument("simpson_grid: intervals must be even and >= 2");
  }
  QuadratureGrid g;
  g.lo = lo;
  g.hi = hi;
  g.nodes = Eigen::VectorXd::LinSpaced(intervals + 1, lo, hi);
  g.weights.resize(intervals + 1);
  const double h = (hi - lo) / intervals;
  for (int i = 0; i <= intervals; ++i) {
    const double c = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    g.weights(i) = c * h / 3.0;
  }
  return g;
}

namespace {

// Golub-Welsch: eigen-decomposition of the symmetric Jacobi matrix.
QuadratureGrid golub_welsch(const Eigen::VectorXd& off_diagonal, double mu0) {
  const Eigen::Index n = off_diagonal.size() + 1;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    jacobi(i, i + 1) = jacobi(i + 1, i) = off_diagonal(i);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  QuadratureGrid g;
  g.nodes = es.eigenvalues();
  g.weights = mu0 * es.eigenvectors().row(0).transpose().array().square();
  g.lo = g.nodes(0);
  g.hi = g.nodes(n - 1);
  return g;
}

}  // namespace

QuadratureGrid gauss_legendre_unit(int n) {
  if (n < 1) throw InvalidArgument("gauss_legendre_unit: n must be >= 1");
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) {
    off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  }
  QuadratureGrid g = golub_welsch(off, 2.0);
  g.nodes = 0.5 * (g.nodes.array() + 1.0);
  g.weights *= 0.5;
  g.lo = 0.0;
  g.hi = 1.0;
  return g;
}

const QuadratureGrid& gauss_hermite_normal(int n) {
  static std::mutex mu;
  static std::map<int, QuadratureGrid> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) throw InvalidArgument("gauss_hermite_normal: n must be >= 1");
  // Probabilists' Hermite polynomials: off-diagonal sqrt(k).
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
  QuadratureGrid g = golub_welsch(off, 1.0);
  g.weights /= g.weights.sum();
  return cache.emplace(n, std::move(g)).first->second;
}

OuterSampleSet make_outer_samples(OuterKind kind, Eigen::Index count, std::uint64_t seed,
                                  const SignalSpec* signal) {
  if (count < 0) throw InvalidArgument("make_outer_samples: negative count");
  if (kind == OuterKind::GaussianAndSignal && signal == nullptr) {
    throw InvalidArgument("make_outer_samples: (Z, Bstar) draws need a signal distribution");
  }
  OuterSampleSet set;
  set.kind = kind;
  set.seed = seed;
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  if (kind == OuterKind::GaussianAndLatent) {
    set.draws.resize(count, 3);
    for (Eigen::Index i = 0; i < count; ++i) {
      set.draws(i, 0) = normal(rng);
      set.draws(i, 1) = normal(rng);
      set.draws(i, 2) = uniform(rng);
    }
  } else {
    set.draws.resize(count, 2);
    for (Eigen::Index i = 0; i < count; ++i) {
      set.draws(i, 0) = normal(rng);
      set.draws(i, 1) = signal->sampler(rng);
    }
  }
  return set;
}

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.subspan(0, half)) + pairwise_sum(x.subspan(half));
}

Eigen::VectorXd pairwise_column_sums(const Eigen::MatrixXd& rows) {
  Eigen::VectorXd out(rows.cols());
  std::vector<double> col(rows.rows());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) col[i] = rows(i, j);
    out(j) = pairwise_sum(col);
  }
  return out;
}

}  // namespace glmtilt
