#pragma once

// Brownian market with d assets driven by n >= d Brownian motions, in
// discounted units:
//
//   dS_i = S_i [ alpha_i(t) dt + sum_j sigma_ij(t) dW_j ]
//
// The market price of risk theta = sigma^T (sigma sigma^T)^{-1} alpha defines
// the state-price density Z = E(-theta . W) and the minimal martingale
// measure Q with dQ/dP = Z(T), under which W~ = W + int theta dt is a
// Brownian motion.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ru/errors.hpp"
#include "ru/parallel.hpp"
#include "ru/path_array.hpp"
#include "ru/rng.hpp"
#include "ru/stats.hpp"

namespace ru {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Deterministic, time-dependent market coefficients.
struct MarketModel {
  std::size_t d = 1;
  std::size_t n = 1;
  std::function<Vector(double)> alpha;
  std::function<Matrix(double)> sigma;
  Vector s0;

  static MarketModel constant(Vector alpha, Matrix sigma, Vector s0) {
    MarketModel m;
    m.d = static_cast<std::size_t>(sigma.rows());
    m.n = static_cast<std::size_t>(sigma.cols());
    m.alpha = [a = std::move(alpha)](double) { return a; };
    m.sigma = [s = std::move(sigma)](double) { return s; };
    m.s0 = std::move(s0);
    return m;
  }

  /// Piecewise-constant coefficients: segment i applies on [starts[i], starts[i+1]).
  static MarketModel piecewise(std::vector<double> starts, std::vector<Vector> alphas,
                               std::vector<Matrix> sigmas, Vector s0) {
    if (starts.empty() || starts.size() != alphas.size() || starts.size() != sigmas.size())
      throw ModelError("piecewise market: starts, alphas and sigmas must have equal nonzero length");
    if (!std::is_sorted(starts.begin(), starts.end()))
      throw ModelError("piecewise market: segment starts must be sorted");
    MarketModel m;
    m.d = static_cast<std::size_t>(sigmas.front().rows());
    m.n = static_cast<std::size_t>(sigmas.front().cols());
    auto segment = [starts](double t) {
      auto it = std::upper_bound(starts.begin(), starts.end(), t);
      return it == starts.begin() ? std::size_t{0} : static_cast<std::size_t>(it - starts.begin() - 1);
    };
    m.alpha = [segment, a = std::move(alphas)](double t) { return a[segment(t)]; };
    m.sigma = [segment, s = std::move(sigmas)](double t) { return s[segment(t)]; };
    m.s0 = std::move(s0);
    return m;
  }
};

/// Uniform grid t_k = k T / N, k = 0..N.
struct TimeGrid {
  double t_end = 1.0;
  std::size_t steps = 1;

  double dt() const noexcept { return t_end / static_cast<double>(steps); }
  std::size_t points() const noexcept { return steps + 1; }
  double time(std::size_t k) const noexcept {
    return k == steps ? t_end : static_cast<double>(k) * dt();
  }
  /// First grid index k with t_k >= t (within rounding), capped at N.
  std::size_t index_at_or_after(double t) const noexcept {
    if (t <= 0.0) return 0;
    const double x = t / dt();
    const double k = std::ceil(x - 1e-9);
    return k >= static_cast<double>(steps) ? steps : static_cast<std::size_t>(k);
  }
};

inline void check_grid(const TimeGrid& g) {
  if (!(g.t_end > 0.0) || !std::isfinite(g.t_end)) throw ModelError("time grid: horizon must be positive");
  if (g.steps < 1) throw ModelError("time grid: need at least one step");
}

/// Coefficients frozen at one grid time.
struct StepCoefficients {
  double t = 0.0;
  Vector alpha;
  Matrix sigma;
  Vector theta;        // market price of risk, length n
  double theta_sq = 0;  // |theta|^2
  Vector merton;       // (sigma sigma^T)^{-1} alpha, length d
  Vector var_drift;    // alpha_i - |sigma_i|^2 / 2, the log-price drift
};

namespace detail {

inline void check_shapes(const MarketModel& m, const Vector& a, const Matrix& s, double t) {
  if (static_cast<std::size_t>(a.size()) != m.d || static_cast<std::size_t>(s.rows()) != m.d ||
      static_cast<std::size_t>(s.cols()) != m.n) {
    std::ostringstream os;
    os << "coefficient shape mismatch at t=" << t << ": alpha has " << a.size() << " entries, sigma is "
       << s.rows() << "x" << s.cols() << ", expected d=" << m.d << ", n=" << m.n;
    throw ModelError(os.str());
  }
  if (!a.allFinite() || !s.allFinite()) throw ModelError("non-finite coefficient at t=" + std::to_string(t));
}

}  // namespace detail

/// theta(t) = sigma^T (sigma sigma^T)^{-1} alpha. Throws ModelError when
/// sigma sigma^T is singular.
inline Vector market_price_of_risk(const MarketModel& model, double t) {
  const Vector a = model.alpha(t);
  const Matrix s = model.sigma(t);
  detail::check_shapes(model, a, s, t);
  const Matrix cov = s * s.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 1e-14 * std::max(lmax, 1.0)))
    throw ModelError("sigma sigma^T is singular at t=" + std::to_string(t) + " (min eigenvalue " +
                     std::to_string(lmin) + ")");
  return s.transpose() * cov.llt().solve(a);
}

inline StepCoefficients step_coefficients(const MarketModel& model, double t) {
  StepCoefficients c;
  c.t = t;
  c.alpha = model.alpha(t);
  c.sigma = model.sigma(t);
  detail::check_shapes(model, c.alpha, c.sigma, t);
  c.theta = market_price_of_risk(model, t);
  c.theta_sq = c.theta.squaredNorm();
  c.merton = (c.sigma * c.sigma.transpose()).llt().solve(c.alpha);
  c.var_drift = c.alpha - 0.5 * c.sigma.rowwise().squaredNorm();
  return c;
}

struct ModelReport {
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  double max_eigenvalue = 0.0;
  double max_alpha_norm = 0.0;
  std::size_t min_rank = std::numeric_limits<std::size_t>::max();
  bool dimensions_ok = true;
  bool full_rank = true;
  bool elliptic = true;
  bool passed = true;
  std::string message;
};

/// Checks d <= n, positive initial prices, full rank of sigma and
/// sigma sigma^T >= eps I at every grid time. Never throws for coefficient
/// problems; the report carries the verdict.
inline ModelReport validate_model(const MarketModel& model, const TimeGrid& grid, double eps) {
  ModelReport r;
  auto fail = [&r](const std::string& why) {
    r.passed = false;
    if (!r.message.empty()) r.message += "; ";
    r.message += why;
  };
  if (model.d < 1 || model.n < model.d) {
    r.dimensions_ok = false;
    fail("need 1 <= d <= n");
  }
  if (static_cast<std::size_t>(model.s0.size()) != model.d) {
    r.dimensions_ok = false;
    fail("s0 must have d entries");
  } else if (!(model.s0.array() > 0.0).all()) {
    fail("initial prices must be positive");
  }
  if (!model.alpha || !model.sigma) {
    fail("coefficients not set");
    return r;
  }
  if (!r.dimensions_ok) return r;
  for (std::size_t k = 0; k <= grid.steps; ++k) {
    const double t = grid.time(k);
    Vector a = model.alpha(t);
    Matrix s = model.sigma(t);
    try {
      detail::check_shapes(model, a, s, t);
    } catch (const ModelError& e) {
      r.dimensions_ok = false;
      fail(e.what());
      return r;
    }
    Eigen::FullPivLU<Matrix> lu(s);
    lu.setThreshold(1e-12);
    r.min_rank = std::min<std::size_t>(r.min_rank, static_cast<std::size_t>(lu.rank()));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s * s.transpose(), Eigen::EigenvaluesOnly);
    r.min_eigenvalue = std::min(r.min_eigenvalue, std::max(0.0, eig.eigenvalues().minCoeff()));
    r.max_eigenvalue = std::max(r.max_eigenvalue, eig.eigenvalues().maxCoeff());
    r.max_alpha_norm = std::max(r.max_alpha_norm, a.norm());
  }
  if (r.min_rank < model.d) {
    r.full_rank = false;
    fail("sigma is rank deficient (rank " + std::to_string(r.min_rank) + " < d=" + std::to_string(model.d) + ")");
  }
  if (!(r.min_eigenvalue >= eps) || !(r.min_eigenvalue > 0.0)) {
    r.elliptic = false;
    fail("ellipticity violated: min eigenvalue " + std::to_string(r.min_eigenvalue) + " < eps " +
         std::to_string(eps));
  }
  return r;
}

/// Simulated state of all driving processes on a grid. Immutable once built.
///
/// W~ is not stored: W~(t_k) = W(t_k) + sum_{j<k} theta(t_j) dt is recovered
/// from a per-grid drift table.
class PathBatch {
 public:
  PathBatch(TimeGrid grid, std::size_t n_paths, std::size_t d, std::size_t n, std::uint64_t seed,
            std::vector<StepCoefficients> coeffs)
      : grid_(grid),
        n_paths_(n_paths),
        d_(d),
        n_(n),
        seed_(seed),
        coeffs_(std::move(coeffs)),
        w_(n_paths, grid.points(), n),
        s_(n_paths, grid.points(), d),
        z_(n_paths, grid.points(), 1),
        drift_(grid.points() * n, 0.0) {
    if (coeffs_.size() != grid.points()) throw ModelError("PathBatch: need one coefficient set per grid point");
    const double dt = grid.dt();
    for (std::size_t k = 0; k < grid.steps; ++k)
      for (std::size_t j = 0; j < n; ++j) drift_[(k + 1) * n + j] = drift_[k * n + j] + coeffs_[k].theta[j] * dt;
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t n_paths() const noexcept { return n_paths_; }
  std::size_t steps() const noexcept { return grid_.steps; }
  std::size_t points() const noexcept { return grid_.points(); }
  std::size_t assets() const noexcept { return d_; }
  std::size_t brownian_dim() const noexcept { return n_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double dt() const noexcept { return grid_.dt(); }
  double time(std::size_t k) const noexcept { return grid_.time(k); }

  const StepCoefficients& coeff(std::size_t k) const { return coeffs_[k]; }

  double w(std::size_t p, std::size_t k, std::size_t j) const { return w_(p, k, j); }
  double w_tilde(std::size_t p, std::size_t k, std::size_t j) const { return w_(p, k, j) + drift_[k * n_ + j]; }
  /// W~(t_{k+1}) - W~(t_k), computed from the stored Gaussian increment.
  double dw_tilde(std::size_t p, std::size_t k, std::size_t j) const {
    return (w_(p, k + 1, j) - w_(p, k, j)) + coeffs_[k].theta[j] * dt();
  }
  double s(std::size_t p, std::size_t k, std::size_t i) const { return s_(p, k, i); }
  double z(std::size_t p, std::size_t k) const { return z_(p, k); }

  const PathArray& w_array() const noexcept { return w_; }
  const PathArray& s_array() const noexcept { return s_; }
  const PathArray& z_array() const noexcept { return z_; }

  /// Mutable access for builders (simulation, import, tests).
  PathArray& w_array_mut() noexcept { return w_; }
  PathArray& s_array_mut() noexcept { return s_; }
  PathArray& z_array_mut() noexcept { return z_; }

 private:
  TimeGrid grid_;
  std::size_t n_paths_;
  std::size_t d_;
  std::size_t n_;
  std::uint64_t seed_;
  std::vector<StepCoefficients> coeffs_;
  PathArray w_;
  PathArray s_;
  PathArray z_;
  std::vector<double> drift_;
};

struct SimulationOptions {
  std::size_t threads = 0;  // 0: RU_THREADS or hardware concurrency
  double ellipticity_eps = 0.0;
};

inline std::vector<StepCoefficients> grid_coefficients(const MarketModel& model, const TimeGrid& grid) {
  std::vector<StepCoefficients> c;
  c.reserve(grid.points());
  for (std::size_t k = 0; k <= grid.steps; ++k) c.push_back(step_coefficients(model, grid.time(k)));
  return c;
}

/// Exact log-scheme with coefficients frozen at the left end of each step:
///
///   log S_i += (alpha_i - |sigma_i|^2/2) dt + sigma_i . dW
///   log Z   += -theta . dW - |theta|^2 dt / 2
///
/// Path p draws its Gaussians from counter stream p of `seed`.
inline PathBatch simulate(const MarketModel& model, const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& opts = {}) {
  check_grid(grid);
  if (n_paths < 1) throw ModelError("simulate: need at least one path");
  const ModelReport report = validate_model(model, grid, opts.ellipticity_eps);
  if (!report.passed) throw ModelError("simulate: invalid market model: " + report.message);

  PathBatch batch(grid, n_paths, model.d, model.n, seed, grid_coefficients(model, grid));
  PathArray& w = batch.w_array_mut();
  PathArray& s = batch.s_array_mut();
  PathArray& z = batch.z_array_mut();
  const std::size_t d = model.d;
  const std::size_t n = model.n;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);

  parallel_for(n_paths, opts.threads, [&](std::size_t begin, std::size_t end) {
    Vector dw(static_cast<Eigen::Index>(n));
    for (std::size_t p = begin; p < end; ++p) {
      CounterRng rng(seed, p);
      std::normal_distribution<double> normal;
      for (std::size_t i = 0; i < d; ++i) s(p, 0, i) = model.s0[static_cast<Eigen::Index>(i)];
      z(p, 0) = 1.0;
      for (std::size_t k = 0; k < grid.steps; ++k) {
        const StepCoefficients& c = batch.coeff(k);
        for (std::size_t j = 0; j < n; ++j) {
          dw[static_cast<Eigen::Index>(j)] = sqdt * normal(rng);
          w(p, k + 1, j) = w(p, k, j) + dw[static_cast<Eigen::Index>(j)];
        }
        for (std::size_t i = 0; i < d; ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          const double inc = c.var_drift[ii] * dt + c.sigma.row(ii).dot(dw);
          s(p, k + 1, i) = s(p, k, i) * std::exp(inc);
        }
        z(p, k + 1) = z(p, k) * std::exp(-c.theta.dot(dw) - 0.5 * c.theta_sq * dt);
      }
    }
  });
  return batch;
}

/// Which state-price weight multiplies a payoff observed at a stopping index.
enum class WeightAt { Stop, Terminal };

/// Q~-expectation estimator: mean and standard error of Z * payoff under P.
/// With stopping indices the weight is Z(tau) (default) or Z(T); without,
/// the weight is Z(T).
inline McEstimate q_expectation(const PathBatch& batch, std::span<const double> payoff,
                                std::span<const std::size_t> stop = {}, WeightAt at = WeightAt::Stop) {
  if (payoff.size() != batch.n_paths())
    throw std::invalid_argument("q_expectation: payoff has " + std::to_string(payoff.size()) + " entries for " +
                                std::to_string(batch.n_paths()) + " paths");
  if (!stop.empty() && stop.size() != batch.n_paths())
    throw std::invalid_argument("q_expectation: stopping index count does not match path count");
  std::vector<double> weighted(batch.n_paths());
  for (std::size_t p = 0; p < batch.n_paths(); ++p) {
    const std::size_t k = (stop.empty() || at == WeightAt::Terminal) ? batch.steps() : stop[p];
    weighted[p] = batch.z(p, k) * payoff[p];
  }
  return estimate(weighted);
}

}  // namespace ru
