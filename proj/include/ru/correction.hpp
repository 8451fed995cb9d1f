#pragma once

// Wealth correction V_x, its increasing/decreasing split, the target wealth
// I(U'(x) Z(t)) and the myopic portfolio, computed pathwise on a PathBatch.
//
//   V_x(t_k)  = sum_{j<k} F(U'(x) Z(t_j)) |theta(t_j)|^2 dt
//   pi_hat_i  = -(1/S_i) [(sigma sigma^T)^{-1} alpha]_i I'(U'(x) Z) U'(x) Z
//
// Strategies are numbers of shares per asset at each grid point.

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ru/errors.hpp"
#include "ru/market.hpp"
#include "ru/path_array.hpp"
#include "ru/utility.hpp"

namespace ru {

/// Per-path share holdings, width d.
using Strategy = PathArray;

struct CorrectionResult {
  double x0 = 0.0;
  PathArray v;
  PathArray v_pos;
  PathArray v_neg;
  PathArray target;  // I(U'(x0) Z(t)); empty unless requested
  Strategy pi_hat;   // empty unless requested
};

struct WealthPath {
  double x0 = 0.0;
  PathArray x;
  Strategy pi;
};

namespace detail {

/// Collects paths where I(U'(x0) Z) leaves the positive half-line and raises
/// unless the family is flagged assume_valid.
inline void check_target_domain(const PathBatch& batch, const UtilityFamily& fam, double x0, const char* where) {
  if (fam.assume_valid) return;
  const double y0 = fam.u1(x0);
  std::vector<std::size_t> bad;
  for (std::size_t p = 0; p < batch.n_paths(); ++p)
    for (std::size_t k = 0; k < batch.points(); ++k)
      if (!inverse_in_domain(fam, y0 * batch.z(p, k))) {
        bad.push_back(p);
        break;
      }
  if (!bad.empty()) {
    const std::string msg = std::string(where) + ": I(U'(x0) Z) is not positive for utility '" + fam.label +
                            "' on paths " + format_paths(bad) + " (set assume_valid to continue)";
    throw DomainError(msg, std::move(bad));
  }
}

inline void check_x0(double x0, const char* where) {
  if (!(x0 > 0.0) || !std::isfinite(x0)) throw DomainError(std::string(where) + ": initial wealth must be positive");
}

}  // namespace detail

/// V_x together with V+ and V- (left-point quadrature). v = v_pos - v_neg.
inline CorrectionResult correction_path(const PathBatch& batch, const UtilityFamily& fam, double x0) {
  detail::check_x0(x0, "correction_path");
  detail::check_target_domain(batch, fam, x0, "correction_path");
  const std::size_t np = batch.n_paths(), pts = batch.points();
  const double y0 = fam.u1(x0);
  const double dt = batch.dt();
  CorrectionResult r;
  r.x0 = x0;
  r.v = PathArray(np, pts);
  r.v_pos = PathArray(np, pts);
  r.v_neg = PathArray(np, pts);
  for (std::size_t p = 0; p < np; ++p) {
    double up = 0.0, dn = 0.0;
    for (std::size_t k = 0; k < batch.steps(); ++k) {
      const double f = f_correction(fam, y0 * batch.z(p, k));
      const double w = batch.coeff(k).theta_sq * dt;
      if (f > 0.0) up += f * w;
      if (f < 0.0) dn += -f * w;
      r.v_pos(p, k + 1) = up;
      r.v_neg(p, k + 1) = dn;
      r.v(p, k + 1) = up - dn;
    }
  }
  return r;
}

/// Terminal V+ only, for repeated evaluation at trial wealth levels.
inline std::vector<double> terminal_vplus(const PathBatch& batch, const UtilityFamily& fam, double x0) {
  detail::check_x0(x0, "terminal_vplus");
  detail::check_target_domain(batch, fam, x0, "terminal_vplus");
  const double y0 = fam.u1(x0);
  const double dt = batch.dt();
  std::vector<double> out(batch.n_paths());
  for (std::size_t p = 0; p < batch.n_paths(); ++p) {
    double up = 0.0;
    for (std::size_t k = 0; k < batch.steps(); ++k) {
      const double f = f_correction(fam, y0 * batch.z(p, k));
      if (f > 0.0) up += f * batch.coeff(k).theta_sq * dt;
    }
    out[p] = up;
  }
  return out;
}

/// CRRA closed form x p / (2 (p-1)^2) sum_j Z(t_j)^{1/(p-1)} |theta_j|^2 dt,
/// an independent route to V for U(x) = x^p / p.
inline PathArray crra_correction_closed_form(const PathBatch& batch, double p, double x0) {
  const double c = x0 * p / (2.0 * (p - 1.0) * (p - 1.0));
  const double q = 1.0 / (p - 1.0);
  PathArray v(batch.n_paths(), batch.points());
  for (std::size_t path = 0; path < batch.n_paths(); ++path) {
    double acc = 0.0;
    for (std::size_t k = 0; k < batch.steps(); ++k) {
      acc += std::pow(batch.z(path, k), q) * batch.coeff(k).theta_sq * batch.dt();
      v(path, k + 1) = c * acc;
    }
  }
  return v;
}

/// I(U'(x0) Z(t)) on every path and grid point.
inline PathArray target_wealth(const PathBatch& batch, const UtilityFamily& fam, double x0) {
  detail::check_x0(x0, "target_wealth");
  detail::check_target_domain(batch, fam, x0, "target_wealth");
  const double y0 = fam.u1(x0);
  PathArray t(batch.n_paths(), batch.points());
  for (std::size_t p = 0; p < batch.n_paths(); ++p)
    for (std::size_t k = 0; k < batch.points(); ++k) t(p, k) = fam.i(y0 * batch.z(p, k));
  return t;
}

namespace detail {

/// Shares -(1/S_i) dir_i I'(y) U'(x0) Z with y = U'(x0) Z, where dir(k) is
/// the per-step d-vector supplied by `direction`.
template <class Direction>
Strategy myopic_shares(const PathBatch& batch, const UtilityFamily& fam, double x0, Direction&& direction) {
  detail::check_x0(x0, "optimal_portfolio");
  detail::check_target_domain(batch, fam, x0, "optimal_portfolio");
  const double y0 = fam.u1(x0);
  const std::size_t d = batch.assets();
  std::vector<Vector> dirs;
  dirs.reserve(batch.points());
  for (std::size_t k = 0; k < batch.points(); ++k) dirs.push_back(direction(batch.coeff(k)));
  Strategy pi(batch.n_paths(), batch.points(), d);
  for (std::size_t p = 0; p < batch.n_paths(); ++p)
    for (std::size_t k = 0; k < batch.points(); ++k) {
      const double z = batch.z(p, k);
      const double scale = -fam.i1(y0 * z) * y0 * z;
      for (std::size_t i = 0; i < d; ++i) pi(p, k, i) = scale * dirs[k][static_cast<Eigen::Index>(i)] / batch.s(p, k, i);
    }
  return pi;
}

}  // namespace detail

/// Myopic portfolio through the Merton direction (sigma sigma^T)^{-1} alpha.
/// Valid for any d <= n.
inline Strategy optimal_portfolio(const PathBatch& batch, const UtilityFamily& fam, double x0) {
  return detail::myopic_shares(batch, fam, x0, [](const StepCoefficients& c) { return c.merton; });
}

/// Myopic portfolio through (sigma^T)^{-1} theta; requires d == n.
inline Strategy optimal_portfolio_complete(const PathBatch& batch, const UtilityFamily& fam, double x0) {
  if (batch.assets() != batch.brownian_dim())
    throw ModelError("optimal_portfolio_complete: requires a complete market (d == n)");
  return detail::myopic_shares(batch, fam, x0, [](const StepCoefficients& c) -> Vector {
    return c.sigma.transpose().partialPivLu().solve(c.theta);
  });
}

/// Correction, target wealth and myopic portfolio in one result.
inline CorrectionResult correct(const PathBatch& batch, const UtilityFamily& fam, double x0) {
  CorrectionResult r = correction_path(batch, fam, x0);
  r.target = target_wealth(batch, fam, x0);
  r.pi_hat = optimal_portfolio(batch, fam, x0);
  return r;
}

inline void check_strategy(const PathBatch& batch, const Strategy& pi, const char* where) {
  if (pi.n_paths() != batch.n_paths() || pi.points() != batch.points() || pi.width() != batch.assets())
    throw std::invalid_argument(std::string(where) + ": strategy shape does not match the path batch grid");
}

/// Self-financing wealth X(t_{k+1}) = X(t_k) + pi(t_k) . (S(t_{k+1}) - S(t_k)).
inline WealthPath wealth_path(const PathBatch& batch, const Strategy& pi, double x0) {
  check_strategy(batch, pi, "wealth_path");
  WealthPath w{x0, PathArray(batch.n_paths(), batch.points()), pi};
  for (std::size_t p = 0; p < batch.n_paths(); ++p) {
    double x = x0;
    w.x(p, 0) = x;
    for (std::size_t k = 0; k < batch.steps(); ++k) {
      for (std::size_t i = 0; i < batch.assets(); ++i) x += pi(p, k, i) * (batch.s(p, k + 1, i) - batch.s(p, k, i));
      w.x(p, k + 1) = x;
    }
  }
  return w;
}

/// Trading gains sum_j pi(t_j) . dS_j without initial wealth.
inline PathArray trading_gains(const PathBatch& batch, const Strategy& pi) {
  return wealth_path(batch, pi, 0.0).x;
}

/// Wealth of a strategy specified as dollar fractions of current wealth per
/// asset; the returned WealthPath carries the equivalent share holdings.
inline WealthPath wealth_from_fractions(const PathBatch& batch, const std::function<Vector(std::size_t)>& fractions,
                                        double x0) {
  const std::size_t d = batch.assets();
  WealthPath w{x0, PathArray(batch.n_paths(), batch.points()), Strategy(batch.n_paths(), batch.points(), d)};
  std::vector<Vector> frac;
  for (std::size_t k = 0; k < batch.points(); ++k) {
    frac.push_back(fractions(k));
    if (static_cast<std::size_t>(frac.back().size()) != d)
      throw std::invalid_argument("wealth_from_fractions: fraction vector must have d entries");
  }
  for (std::size_t p = 0; p < batch.n_paths(); ++p) {
    double x = x0;
    for (std::size_t k = 0; k < batch.points(); ++k) {
      w.x(p, k) = x;
      for (std::size_t i = 0; i < d; ++i) w.pi(p, k, i) = frac[k][static_cast<Eigen::Index>(i)] * x / batch.s(p, k, i);
      if (k == batch.steps()) break;
      for (std::size_t i = 0; i < d; ++i) x += w.pi(p, k, i) * (batch.s(p, k + 1, i) - batch.s(p, k, i));
    }
  }
  return w;
}

}  // namespace ru
