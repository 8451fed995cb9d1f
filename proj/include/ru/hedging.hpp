#pragma once

// Risk-minimizing hedge of the increasing part V+ of the correction.
//
// V+bar(t) = E~[V+(T) | F_t] is a Q~-martingale with representation
// V+bar(t) = E~ V+(T) + int beta . dW~. Projecting beta onto the traded
// directions (rows of A, A_ij = S_i sigma_ij) gives
//
//   A^T pi_bar + delta = beta,   A delta = 0,
//
// so that V+bar = E~ V+(T) + int pi_bar dS + M with M = int delta . dW~
// orthogonal to S (the intrinsic risk).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ru/correction.hpp"
#include "ru/errors.hpp"
#include "ru/market.hpp"
#include "ru/regression.hpp"
#include "ru/roots.hpp"
#include "ru/stats.hpp"
#include "ru/utility.hpp"

namespace ru {

/// A_ij = S_i sigma_ij.
inline Matrix build_a(const Vector& s, const Matrix& sigma) {
  if (s.size() != sigma.rows()) throw ModelError("build_a: price vector length must equal the rows of sigma");
  if (!(s.array() > 0.0).all()) throw ModelError("build_a: prices must be positive");
  Matrix a = s.asDiagonal() * sigma;
  Eigen::FullPivLU<Matrix> lu(a);
  lu.setThreshold(1e-12);
  if (lu.rank() < a.rows()) throw ModelError("build_a: A is rank deficient");
  return a;
}

struct KwProjection {
  Vector pi_bar;  // length d
  Vector delta;   // length n, A delta = 0
};

/// Unique split beta = A^T pi_bar + delta with delta in Ker(A):
/// pi_bar = (A A^T)^{-1} A beta.
inline KwProjection kw_project(const Matrix& a, const Vector& beta) {
  if (a.cols() != beta.size()) throw std::invalid_argument("kw_project: beta length must equal the columns of A");
  const Matrix aat = a * a.transpose();
  Eigen::LLT<Matrix> llt(aat);
  const double scale = std::max(aat.diagonal().maxCoeff(), std::numeric_limits<double>::min());
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array().square().minCoeff() > 1e-14 * scale))
    throw ModelError("kw_project: A A^T is singular");
  KwProjection r;
  r.pi_bar = llt.solve(a * beta);
  r.delta = beta - a.transpose() * r.pi_bar;
  return r;
}

struct ConditionalExpectation {
  PathArray vbar;  // E~[V+(T) | F_t], one value per grid point
  PathArray beta;  // width n; the last grid point is unused and zero
  std::vector<RegressionInfo> vbar_info;
  std::vector<RegressionInfo> beta_info;
};

namespace detail {

/// Regression basis at grid index k: 1, x, ..., x^order with x the
/// standardised log Z(t_k), followed by the standardised running V+(t_k).
/// V+ enters because E~[V+(T) | F_t] = V+(t) + g_t(Z(t)) for deterministic
/// coefficients.
struct HedgeBasis {
  std::size_t order;
  Standardizer logz, vpos;
  std::size_t size() const { return order + 2; }

  HedgeBasis(const PathBatch& batch, const PathArray& v_pos, std::size_t k, std::size_t order_) : order(order_) {
    std::vector<double> lz(batch.n_paths()), vp(batch.n_paths());
    for (std::size_t p = 0; p < batch.n_paths(); ++p) {
      lz[p] = std::log(batch.z(p, k));
      vp[p] = v_pos(p, k);
    }
    logz = Standardizer::fit(lz);
    vpos = Standardizer::fit(vp);
  }

  void fill(const PathBatch& batch, const PathArray& v_pos, std::size_t p, std::size_t k, std::span<double> row) const {
    const double x = logz(std::log(batch.z(p, k)));
    double xp = 1.0;
    for (std::size_t j = 0; j <= order; ++j) {
      row[j] = xp;
      xp *= x;
    }
    row[order + 1] = vpos(v_pos(p, k));
  }
};

}  // namespace detail

/// Least-squares Monte Carlo estimate of V+bar and of the representation
/// integrand beta.
///
/// V+bar(t_k): Z(T)-weighted regression of V+(T) on the basis at t_k (the
/// L2(Q~) projection). beta_j(t_k): Z(t_{k+1})-weighted regression of
/// dV+bar_k dW~_{k,j} / dt on the same basis.
inline ConditionalExpectation conditional_vplus(const PathBatch& batch, const PathArray& v_pos,
                                                std::size_t basis_order = 2) {
  if (v_pos.n_paths() != batch.n_paths() || v_pos.points() != batch.points() || v_pos.width() != 1)
    throw std::invalid_argument("conditional_vplus: V+ path shape does not match the batch");
  const std::size_t np = batch.n_paths(), N = batch.steps(), n = batch.brownian_dim();
  const double dt = batch.dt();
  ConditionalExpectation ce;
  ce.vbar = PathArray(np, batch.points());
  ce.beta = PathArray(np, batch.points(), n);
  ce.vbar_info.resize(batch.points());
  ce.beta_info.resize(N);

  const std::vector<double> zT = batch.z_array().column(N);
  for (std::size_t p = 0; p < np; ++p) ce.vbar(p, N) = v_pos(p, N);
  for (std::size_t k = 0; k < N; ++k) {
    const detail::HedgeBasis basis(batch, v_pos, k, basis_order);
    auto coef = weighted_regression(
        np, basis.size(), 1, [&](std::size_t p, std::span<double> row) { basis.fill(batch, v_pos, p, k, row); }, zT,
        [&](std::size_t p, std::span<double> y) { y[0] = v_pos(p, N); }, &ce.vbar_info[k]);
    std::vector<double> row(basis.size());
    for (std::size_t p = 0; p < np; ++p) {
      basis.fill(batch, v_pos, p, k, row);
      double v = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) v += row[j] * coef[0][static_cast<Eigen::Index>(j)];
      ce.vbar(p, k) = v;
    }
  }

  for (std::size_t k = 0; k < N; ++k) {
    const detail::HedgeBasis basis(batch, v_pos, k, basis_order);
    const std::vector<double> w = batch.z_array().column(k + 1);
    auto coef = weighted_regression(
        np, basis.size(), n, [&](std::size_t p, std::span<double> row) { basis.fill(batch, v_pos, p, k, row); }, w,
        [&](std::size_t p, std::span<double> y) {
          const double dv = ce.vbar(p, k + 1) - ce.vbar(p, k);
          for (std::size_t j = 0; j < n; ++j) y[j] = dv * batch.dw_tilde(p, k, j) / dt;
        },
        &ce.beta_info[k]);
    std::vector<double> row(basis.size());
    for (std::size_t p = 0; p < np; ++p) {
      basis.fill(batch, v_pos, p, k, row);
      for (std::size_t j = 0; j < n; ++j) {
        double b = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) b += row[c] * coef[j][static_cast<Eigen::Index>(c)];
        ce.beta(p, k, j) = b;
      }
    }
  }
  return ce;
}

struct HedgeDecomposition {
  PathArray vbar;
  PathArray beta;    // width n
  PathArray pi_bar;  // width d, shares
  PathArray delta;   // width n
  PathArray m;       // intrinsic risk M(t) = sum delta . dW~
  double cost = 0.0;          // V+bar(0)
  McEstimate cost_estimate;   // plain Monte Carlo E~[V+(T)]
  PathArray reconstruction;   // cost + sum pi_bar dS + M
  double max_orthogonality = 0.0;  // max |A delta|_inf over paths and steps
  double max_split_residual = 0.0; // max |A^T pi_bar + delta - beta|_inf
  double reconstruction_mae = 0.0; // mean |reconstruction(T) - V+bar(T)|
  std::size_t ridged_regressions = 0;
};

/// Kunita-Watanabe decomposition of V+bar along the simulated paths.
inline HedgeDecomposition hedge_decomposition(const PathBatch& batch, const PathArray& v_pos,
                                              std::size_t basis_order = 2) {
  const std::size_t np = batch.n_paths(), N = batch.steps(), n = batch.brownian_dim(), d = batch.assets();
  ConditionalExpectation ce = conditional_vplus(batch, v_pos, basis_order);
  HedgeDecomposition h;
  h.vbar = std::move(ce.vbar);
  h.beta = std::move(ce.beta);
  for (const auto& i : ce.vbar_info) h.ridged_regressions += i.ridged;
  for (const auto& i : ce.beta_info) h.ridged_regressions += i.ridged;
  h.pi_bar = PathArray(np, batch.points(), d);
  h.delta = PathArray(np, batch.points(), n);
  h.m = PathArray(np, batch.points());
  h.reconstruction = PathArray(np, batch.points());
  h.cost = np > 0 ? h.vbar(0, 0) : 0.0;
  {
    std::vector<double> vt(np);
    for (std::size_t p = 0; p < np; ++p) vt[p] = v_pos(p, N);
    h.cost_estimate = q_expectation(batch, vt);
  }

  Vector s(static_cast<Eigen::Index>(d)), beta(static_cast<Eigen::Index>(n));
  std::vector<double> err(np);
  for (std::size_t p = 0; p < np; ++p) {
    double m = 0.0, recon = h.cost;
    h.reconstruction(p, 0) = recon;
    for (std::size_t k = 0; k < N; ++k) {
      for (std::size_t i = 0; i < d; ++i) s[static_cast<Eigen::Index>(i)] = batch.s(p, k, i);
      for (std::size_t j = 0; j < n; ++j) beta[static_cast<Eigen::Index>(j)] = h.beta(p, k, j);
      const Matrix a = build_a(s, batch.coeff(k).sigma);
      const KwProjection kw = kw_project(a, beta);
      h.max_orthogonality = std::max(h.max_orthogonality, (a * kw.delta).cwiseAbs().maxCoeff());
      h.max_split_residual =
          std::max(h.max_split_residual, (a.transpose() * kw.pi_bar + kw.delta - beta).cwiseAbs().maxCoeff());
      for (std::size_t i = 0; i < d; ++i) {
        h.pi_bar(p, k, i) = kw.pi_bar[static_cast<Eigen::Index>(i)];
        recon += kw.pi_bar[static_cast<Eigen::Index>(i)] * (batch.s(p, k + 1, i) - batch.s(p, k, i));
      }
      for (std::size_t j = 0; j < n; ++j) {
        h.delta(p, k, j) = kw.delta[static_cast<Eigen::Index>(j)];
        m += kw.delta[static_cast<Eigen::Index>(j)] * batch.dw_tilde(p, k, j);
      }
      h.m(p, k + 1) = m;
      recon += m - h.m(p, k);
      h.reconstruction(p, k + 1) = recon;
    }
    err[p] = std::abs(recon - h.vbar(p, N));
  }
  h.reconstruction_mae = estimate(err).mean;
  return h;
}

struct XStarResult {
  double x_star = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  McEstimate premium;  // E~[V+_{x*}(T)]
  std::vector<std::pair<double, double>> sign_changes;
  int evaluations = 0;
};

/// Smallest z in (0, x] with z + E~[V+_z(T)] = x, all evaluations on the
/// same paths. A coarse scan locates sign changes of g(z) - x; the first is
/// refined by bisection until |g - x| <= tol. Monotonicity of g is not
/// assumed.
inline XStarResult solve_xstar(double x, const UtilityFamily& fam, const PathBatch& batch, double tol = 1e-8,
                               std::size_t scan_points = 16) {
  if (!(x > 0.0)) throw DomainError("solve_xstar: wealth must be positive");
  XStarResult r;
  auto premium = [&](double z) {
    ++r.evaluations;
    const std::vector<double> vt = terminal_vplus(batch, fam, z);
    return q_expectation(batch, vt);
  };
  auto excess = [&](double z) { return z + premium(z).mean - x; };

  // V+ vanishes identically when F <= 0, and then x* = x.
  if (const McEstimate at_x = premium(x); at_x.mean == 0.0) {
    r.x_star = r.bracket_lo = r.bracket_hi = x;
    r.premium = at_x;
    return r;
  }

  std::vector<double> zs, hs;
  for (std::size_t i = 1; i <= scan_points; ++i) {
    const double z = i == scan_points ? x : x * static_cast<double>(i) / static_cast<double>(scan_points);
    zs.push_back(z);
    hs.push_back(excess(z));
  }
  // Bracket expansion towards 0 when g already exceeds x on the first scan point.
  double lo_z = zs.front(), lo_h = hs.front();
  for (int j = 0; j < 60 && lo_h >= 0.0; ++j) {
    lo_z *= 0.5;
    lo_h = excess(lo_z);
  }
  if (lo_h >= 0.0)
    throw std::runtime_error("solve_xstar: no sign change of z + E~[V+_z(T)] - x found on (0, x]");
  zs.insert(zs.begin(), lo_z);
  hs.insert(hs.begin(), lo_h);
  for (std::size_t i = 1; i < zs.size(); ++i)
    if ((hs[i - 1] < 0.0) != (hs[i] < 0.0)) r.sign_changes.emplace_back(zs[i - 1], zs[i]);
  if (r.sign_changes.empty()) throw std::runtime_error("solve_xstar: g(z) - x never changes sign on the scan grid");

  const auto [lo, hi] = r.sign_changes.front();
  const RootResult root = bisect(excess, lo, hi, tol);
  r.x_star = root.root;
  r.bracket_lo = root.lo;
  r.bracket_hi = root.hi;
  r.premium = premium(r.x_star);
  return r;
}

struct HedgeSettings {
  std::size_t basis_order = 2;
  double tol = 1e-8;
};

struct CombinedStrategy {
  XStarResult xstar;
  CorrectionResult correction;  // at x*
  HedgeDecomposition hedge;     // of V+_{x*}
  Strategy strategy;            // pi_hat_{x*} + pi_bar_{x*}
  PathArray consumption;        // V-(t) + V+bar(t) - V+(t)
  PathArray wealth;             // self-financing wealth of `strategy` from x
  PathArray myopic_wealth;      // X^{x*, pi_hat}
  /// wealth - consumption - (X^{x*,pi_hat} + V_{x*}) + M: zero up to
  /// discretisation and regression error.
  PathArray consistency_gap;
  double mean_abs_gap_terminal = 0.0;
  double consumption_violation_rate = 0.0;  // fraction of (path, t) with V+bar < V+
};

inline CombinedStrategy combined_strategy(double x, const UtilityFamily& fam, const PathBatch& batch,
                                          const HedgeSettings& settings = {}) {
  CombinedStrategy c;
  c.xstar = solve_xstar(x, fam, batch, settings.tol);
  c.correction = correct(batch, fam, c.xstar.x_star);
  c.hedge = hedge_decomposition(batch, c.correction.v_pos, settings.basis_order);
  const std::size_t np = batch.n_paths(), pts = batch.points(), d = batch.assets();
  c.strategy = Strategy(np, pts, d);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t k = 0; k < pts; ++k)
      for (std::size_t i = 0; i < d; ++i) c.strategy(p, k, i) = c.correction.pi_hat(p, k, i) + c.hedge.pi_bar(p, k, i);
  c.consumption = PathArray(np, pts);
  c.consistency_gap = PathArray(np, pts);
  c.wealth = wealth_path(batch, c.strategy, x).x;
  c.myopic_wealth = wealth_path(batch, c.correction.pi_hat, c.xstar.x_star).x;
  std::size_t violations = 0;
  std::vector<double> gap_t(np);
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t k = 0; k < pts; ++k) {
      const double vp = c.correction.v_pos(p, k);
      c.consumption(p, k) = c.correction.v_neg(p, k) + c.hedge.vbar(p, k) - vp;
      if (c.hedge.vbar(p, k) < vp) ++violations;
      c.consistency_gap(p, k) = c.wealth(p, k) - c.consumption(p, k) -
                                (c.myopic_wealth(p, k) + c.correction.v(p, k)) + c.hedge.m(p, k);
    }
    gap_t[p] = std::abs(c.consistency_gap(p, pts - 1));
  }
  c.mean_abs_gap_terminal = estimate(gap_t).mean;
  c.consumption_violation_rate = static_cast<double>(violations) / static_cast<double>(np * pts);
  return c;
}

}  // namespace ru
