#pragma once

// Monte Carlo verification: stopping rules, the stopped objective, the
// robustness sweep and the budget / Y_tau / supermartingale identities.
// Every comparative estimate is computed on one PathBatch (common random
// numbers), so zero-cases come out as exact zeros.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ru/correction.hpp"
#include "ru/errors.hpp"
#include "ru/market.hpp"
#include "ru/roots.hpp"
#include "ru/stats.hpp"
#include "ru/utility.hpp"

namespace ru {

// ---------------------------------------------------------------- stopping

struct Deterministic {
  double t = 0.0;
};

enum class Direction { Up, Down };

/// First time S_asset crosses `level` (>= for Up, <= for Down).
struct Hitting {
  std::size_t asset = 0;
  double level = 0.0;
  Direction direction = Direction::Up;
};

/// First exit of Z~ from the open band (lower, upper).
struct ZBand {
  double lower = 0.0;
  double upper = 0.0;
};

using StoppingRule = std::variant<Deterministic, Hitting, ZBand>;

inline std::string label(const StoppingRule& rule) {
  using detail::shortest;
  struct V {
    std::string operator()(const Deterministic& r) const { return "deterministic(t=" + shortest(r.t) + ")"; }
    std::string operator()(const Hitting& r) const {
      return "hitting(asset=" + std::to_string(r.asset) + ",level=" + shortest(r.level) + "," +
             (r.direction == Direction::Up ? "up" : "down") + ")";
    }
    std::string operator()(const ZBand& r) const {
      return "z_band(" + shortest(r.lower) + "," + shortest(r.upper) + ")";
    }
  };
  return std::visit(V{}, rule);
}

inline void check_rule(const StoppingRule& rule, const PathBatch& batch) {
  if (const auto* h = std::get_if<Hitting>(&rule); h && h->asset >= batch.assets())
    throw std::invalid_argument("stopping rule " + label(rule) + ": asset index out of range");
  if (const auto* z = std::get_if<ZBand>(&rule); z && !(z->lower < z->upper))
    throw std::invalid_argument("stopping rule " + label(rule) + ": need lower < upper");
}

/// Decision of `rule` at grid index k on path p. Reads only the state at
/// index k (time, S, Z~), so the realized index is a stopping time.
inline bool fires(const StoppingRule& rule, const PathBatch& batch, std::size_t p, std::size_t k) {
  struct V {
    const PathBatch& b;
    std::size_t p, k;
    bool operator()(const Deterministic& r) const { return b.time(k) >= r.t; }
    bool operator()(const Hitting& r) const {
      const double s = b.s(p, k, r.asset);
      return r.direction == Direction::Up ? s >= r.level : s <= r.level;
    }
    bool operator()(const ZBand& r) const {
      const double z = b.z(p, k);
      return z <= r.lower || z >= r.upper;
    }
  };
  return std::visit(V{batch, p, k}, rule);
}

/// First grid index where the rule fires, else N. With stride > 1 the rule
/// is only consulted at multiples of the stride (coarse monitoring of a
/// fine path).
inline std::vector<std::size_t> realize_stop(const PathBatch& batch, const StoppingRule& rule,
                                             std::size_t stride = 1) {
  check_rule(rule, batch);
  if (stride == 0 || batch.steps() % stride != 0)
    throw std::invalid_argument("realize_stop: stride must divide the number of steps");
  const std::size_t N = batch.steps();
  std::vector<std::size_t> tau(batch.n_paths(), N);
  for (std::size_t p = 0; p < batch.n_paths(); ++p)
    for (std::size_t k = 0; k <= N; k += stride)
      if (fires(rule, batch, p, k)) {
        tau[p] = k;
        break;
      }
  return tau;
}

inline double fraction_before(std::span<const std::size_t> tau, std::size_t n) {
  if (tau.empty()) return 0.0;
  const auto early = std::count_if(tau.begin(), tau.end(), [n](std::size_t k) { return k < n; });
  return static_cast<double>(early) / static_cast<double>(tau.size());
}

/// values(p, tau[p]) for each path.
inline std::vector<double> at_stop(const PathArray& values, std::span<const std::size_t> tau, std::size_t j = 0) {
  if (tau.size() != values.n_paths()) throw std::invalid_argument("at_stop: stopping index count mismatch");
  std::vector<double> out(tau.size());
  for (std::size_t p = 0; p < tau.size(); ++p) out[p] = values(p, tau[p], j);
  return out;
}

// ---------------------------------------------------------------- checks

/// One verification outcome, as emitted in the JSON report.
struct Check {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

// ---------------------------------------------------------------- objective

/// U(w) per path; raises AdmissibilityError when corrected wealth is not
/// strictly positive or the utility is not finite.
inline std::vector<double> utility_samples(const UtilityFamily& fam, std::span<const double> corrected) {
  std::vector<double> u(corrected.size());
  std::vector<std::size_t> bad;
  for (std::size_t p = 0; p < corrected.size(); ++p) {
    if (!(corrected[p] > 0.0)) {
      bad.push_back(p);
      continue;
    }
    u[p] = fam.u(corrected[p]);
    if (!std::isfinite(u[p])) bad.push_back(p);
  }
  if (!bad.empty()) {
    const std::string msg =
        "corrected wealth X(tau) + V(tau) is not positive (or U is not finite) on paths " + detail::format_paths(bad);
    throw AdmissibilityError(msg, std::move(bad));
  }
  return u;
}

/// E U(X^{x0,pi}(tau) + V(tau)) with X the discrete self-financing wealth.
inline McEstimate evaluate_objective(const PathBatch& batch, std::span<const std::size_t> tau,
                                     const UtilityFamily& fam, double x0, const Strategy& pi, const PathArray& v) {
  const WealthPath w = wealth_path(batch, pi, x0);
  std::vector<double> c = at_stop(w.x, tau);
  if (!v.empty()) {
    if (v.n_paths() != batch.n_paths() || v.points() != batch.points())
      throw std::invalid_argument("evaluate_objective: correction shape does not match the batch");
    for (std::size_t p = 0; p < c.size(); ++p) c[p] += v(p, tau[p]);
  }
  return estimate(utility_samples(fam, c));
}

/// Optimal wealth I(U'(x0) Z~(t)) - V(t) on the grid, the closed form of
/// X^{x0,pi_hat}.
inline PathArray optimal_wealth(const CorrectionResult& c) {
  if (c.target.empty()) throw std::invalid_argument("optimal_wealth: correction result lacks target wealth");
  PathArray x = c.target;
  for (std::size_t p = 0; p < x.n_paths(); ++p)
    for (std::size_t k = 0; k < x.points(); ++k) x(p, k) -= c.v(p, k);
  return x;
}

// ---------------------------------------------------------------- robustness

/// A perturbation direction eta added to pi_hat as pi_hat + eps * eta.
struct Perturbation {
  enum class Kind { ConstantShares, Scale, Fraction, Shift };
  Kind kind = Kind::ConstantShares;
  double value = 1.0;  // shares per asset, scale factor, or lag in steps

  static Perturbation constant(double shares) { return {Kind::ConstantShares, shares}; }
  static Perturbation scale(double c) { return {Kind::Scale, c}; }
  /// c X_hat(t) / S_i(t) shares in every asset: c dollars per dollar of the
  /// optimal wealth X_hat = I(U'(x0) Z~) - V.
  static Perturbation fraction(double c) { return {Kind::Fraction, c}; }
  /// eta = pi_hat(t - lag) - pi_hat(t): a timing error.
  static Perturbation shift(std::size_t lag) { return {Kind::Shift, static_cast<double>(lag)}; }

  std::string label() const {
    switch (kind) {
      case Kind::ConstantShares: return "const(" + detail::shortest(value) + ")";
      case Kind::Scale: return "scale(" + detail::shortest(value) + ")";
      case Kind::Fraction: return "fraction(" + detail::shortest(value) + ")";
      case Kind::Shift: return "shift(" + std::to_string(static_cast<std::size_t>(value)) + ")";
    }
    return {};
  }
};

inline std::vector<Perturbation> default_perturbations() {
  return {Perturbation::constant(0.5), Perturbation::fraction(1.0), Perturbation::scale(0.5),
          Perturbation::shift(1),      Perturbation::shift(8),        Perturbation::shift(16)};
}

inline std::vector<double> default_epsilons() { return {-0.25, -0.1, 0.1, 0.25}; }

/// Trading gains of eta along every path; `c` supplies pi_hat and the
/// optimal wealth (see correct()).
inline PathArray perturbation_gains(const PathBatch& batch, const CorrectionResult& c, const Perturbation& eta) {
  const Strategy& pi_hat = c.pi_hat;
  check_strategy(batch, pi_hat, "perturbation_gains");
  if (eta.kind == Perturbation::Kind::Fraction && c.target.empty())
    throw std::invalid_argument("perturbation_gains: fraction perturbation needs the target wealth");
  const std::size_t d = batch.assets();
  const auto lag = static_cast<std::size_t>(eta.value);
  PathArray g(batch.n_paths(), batch.points());
  for (std::size_t p = 0; p < batch.n_paths(); ++p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < batch.steps(); ++k) {
      for (std::size_t i = 0; i < d; ++i) {
        double shares = 0.0;
        switch (eta.kind) {
          case Perturbation::Kind::ConstantShares: shares = eta.value; break;
          case Perturbation::Kind::Scale: shares = eta.value * pi_hat(p, k, i); break;
          case Perturbation::Kind::Fraction:
            shares = eta.value * (c.target(p, k) - c.v(p, k)) / batch.s(p, k, i);
            break;
          case Perturbation::Kind::Shift: shares = pi_hat(p, k >= lag ? k - lag : 0, i) - pi_hat(p, k, i); break;
        }
        acc += shares * (batch.s(p, k + 1, i) - batch.s(p, k, i));
      }
      g(p, k + 1) = acc;
    }
  }
  return g;
}

/// Base corrected wealth X^{pi_hat} + V: the closed form I(U'(x0) Z~) (Exact)
/// or the discrete wealth of the pi_hat shares plus V (Euler).
enum class BaseWealth { Exact, Euler };

struct RobustnessEntry {
  std::string rule;
  std::string perturbation;
  double epsilon = 0.0;
  McEstimate delta;     // objective(pi_hat + eps eta) - objective(pi_hat)
  double rms_step = 0;  // RMS of eps * G_eta(tau)
  bool passed = false;  // delta <= 2 s.e. + round-off floor
};

/// Relative round-off allowance on objective differences. A perturbation can
/// vanish identically (a shift of a constant holding), leaving only rounding
/// noise in delta.
inline constexpr double kRobustnessFloor = 1e-12;

struct RobustnessReport {
  std::vector<RobustnessEntry> entries;
  /// Per rule: the entry with the largest RMS perturbation must show
  /// delta < -3 s.e.
  std::vector<Check> strict;
  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; }) &&
           std::all_of(strict.begin(), strict.end(), [](const auto& c) { return c.passed; });
  }
};

struct RobustnessOptions {
  std::vector<double> epsilons = default_epsilons();
  BaseWealth base = BaseWealth::Exact;
  bool require_strict = true;
};

inline RobustnessReport robustness_sweep(const PathBatch& batch, const std::vector<StoppingRule>& rules,
                                         const UtilityFamily& fam, double x0,
                                         const std::vector<Perturbation>& perturbations,
                                         const RobustnessOptions& opts = {}) {
  const CorrectionResult c = correct(batch, fam, x0);
  PathArray base(batch.n_paths(), batch.points());
  if (opts.base == BaseWealth::Exact) {
    base = c.target;
  } else {
    base = wealth_path(batch, c.pi_hat, x0).x;
    for (std::size_t p = 0; p < base.n_paths(); ++p)
      for (std::size_t k = 0; k < base.points(); ++k) base(p, k) += c.v(p, k);
  }
  std::vector<PathArray> gains;
  gains.reserve(perturbations.size());
  for (const auto& eta : perturbations) gains.push_back(perturbation_gains(batch, c, eta));

  RobustnessReport rep;
  for (const auto& rule : rules) {
    const auto tau = realize_stop(batch, rule);
    const std::vector<double> w0 = at_stop(base, tau);
    const std::vector<double> u0 = utility_samples(fam, w0);
    double u_scale = 1.0;
    {
      std::vector<double> au(u0.size());
      for (std::size_t p = 0; p < au.size(); ++p) au[p] = std::abs(u0[p]);
      u_scale = std::max(1.0, pairwise_sum(au) / static_cast<double>(au.size()));
    }
    std::size_t largest = rep.entries.size();
    for (std::size_t e = 0; e < perturbations.size(); ++e) {
      const std::vector<double> g = at_stop(gains[e], tau);
      for (double eps : opts.epsilons) {
        std::vector<double> w(w0.size()), sq(w0.size());
        for (std::size_t p = 0; p < w.size(); ++p) {
          w[p] = w0[p] + eps * g[p];
          sq[p] = eps * g[p] * eps * g[p];
        }
        RobustnessEntry en{label(rule), perturbations[e].label(), eps, {}, 0.0, false};
        try {
          en.delta = paired_difference(utility_samples(fam, w), u0);
        } catch (const AdmissibilityError& err) {
          throw AdmissibilityError("robustness_sweep " + en.rule + " " + en.perturbation + " eps=" +
                                       detail::shortest(eps) + ": " + err.what(),
                                   err.paths());
        }
        en.rms_step = std::sqrt(pairwise_sum(sq) / static_cast<double>(sq.size()));
        en.passed = en.delta.mean <= 2.0 * en.delta.std_error + kRobustnessFloor * u_scale;
        if (largest == rep.entries.size() || en.rms_step > rep.entries[largest].rms_step) largest = rep.entries.size();
        rep.entries.push_back(std::move(en));
      }
    }
    if (opts.require_strict && largest < rep.entries.size()) {
      const auto& en = rep.entries[largest];
      Check ch{"strict_concavity " + en.rule, en.delta.mean, en.delta.std_error, -3.0 * en.delta.std_error, false, {}};
      ch.passed = en.delta.mean < -3.0 * en.delta.std_error;
      ch.detail = en.perturbation + " eps=" + detail::shortest(en.epsilon);
      rep.strict.push_back(std::move(ch));
    }
  }
  return rep;
}

// ---------------------------------------------------------------- identities

/// E~[I(U'(x0) Z~(tau)) - V(tau)] estimated as E[Z~(tau)(...)], which equals
/// x0. With include_v = false the correction is dropped (negative control).
inline McEstimate budget_check(const PathBatch& batch, std::span<const std::size_t> tau, const UtilityFamily& fam,
                               double x0, bool include_v = true) {
  const CorrectionResult c = correction_path(batch, fam, x0);
  const double y0 = fam.u1(x0);
  std::vector<double> s(batch.n_paths());
  for (std::size_t p = 0; p < s.size(); ++p) {
    const double z = batch.z(p, tau[p]);
    s[p] = z * (fam.i(y0 * z) - (include_v ? c.v(p, tau[p]) : 0.0));
  }
  return estimate(s);
}

struct YTauResult {
  double root = std::numeric_limits<double>::quiet_NaN();
  double target = 0.0;        // U'(x0)
  double std_error = 0.0;     // propagated through the inverse
  double derivative = 0.0;    // dX/dlambda at the root
  double tolerance = 0.0;
  bool bracketed = false;
  bool passed = false;
  std::string detail;
};

/// Relative floor added to the tolerance of the Y_tau inversion; covers the
/// bisection and rounding error when the standard error vanishes.
inline constexpr double kYTauFloor = 1e-12;

/// Solves E[Z~(tau)(I(lambda Z~(tau)) - V_{x0}(tau))] = x0 for lambda.
inline YTauResult y_tau_constancy(const PathBatch& batch, std::span<const std::size_t> tau, const UtilityFamily& fam,
                                  double x0) {
  const CorrectionResult c = correction_path(batch, fam, x0);
  const std::size_t np = batch.n_paths();
  std::vector<double> z(np), v(np);
  for (std::size_t p = 0; p < np; ++p) {
    z[p] = batch.z(p, tau[p]);
    v[p] = c.v(p, tau[p]);
  }
  auto samples = [&](double lambda) {
    std::vector<double> s(np);
    for (std::size_t p = 0; p < np; ++p) s[p] = z[p] * (fam.i(lambda * z[p]) - v[p]);
    return s;
  };
  auto excess = [&](double lambda) { return pairwise_sum(samples(lambda)) / static_cast<double>(np) - x0; };

  YTauResult r;
  r.target = fam.u1(x0);
  double lo = r.target / 2.0, hi = r.target * 2.0;
  for (int i = 0; i < 60 && !(excess(lo) > 0.0); ++i) lo /= 2.0;
  for (int i = 0; i < 60 && !(excess(hi) < 0.0); ++i) hi *= 2.0;
  if (!(excess(lo) > 0.0) || !(excess(hi) < 0.0)) {
    r.detail = "lambda -> X_tau(lambda) - x0 not bracketed on [" + detail::shortest(lo) + ", " +
               detail::shortest(hi) + "]";
    return r;
  }
  r.bracketed = true;
  r.root = bisect(excess, lo, hi, 0.0, 1e-15).root;
  std::vector<double> dx(np);
  for (std::size_t p = 0; p < np; ++p) dx[p] = z[p] * z[p] * fam.i1(r.root * z[p]);
  r.derivative = pairwise_sum(dx) / static_cast<double>(np);
  r.std_error = estimate(samples(r.root)).std_error / std::abs(r.derivative);
  r.tolerance = 3.0 * r.std_error + kYTauFloor * r.target;
  r.passed = std::abs(r.root - r.target) <= r.tolerance;
  return r;
}

struct SupermartingaleCell {
  std::size_t u = 0, t = 0;  // grid indices
  std::size_t cell = 0;
  McEstimate drift;  // E[Z~(t)(X(t) - X(u)) ; cell]
};

struct SupermartingaleReport {
  std::vector<SupermartingaleCell> cells;
  bool supermartingale = true;  // every cell drift <= 3 s.e.
  bool martingale = true;       // every cell |drift| <= 3 s.e.
  double max_z = 0.0;
  double min_z = 0.0;
};

/// Cell-averaged test of E~[X(t) | F_u] <= X(u). Cells are quantile bins of
/// X(u), which is F_u-measurable; within a cell, E[Z~(t)(X(t) - X(u))] is
/// zero for a Q~-martingale and nonpositive for a supermartingale.
inline SupermartingaleReport supermartingale_check(const PathBatch& batch, const PathArray& wealth,
                                                   const std::vector<std::pair<std::size_t, std::size_t>>& times,
                                                   std::size_t n_cells = 10) {
  if (wealth.n_paths() != batch.n_paths() || wealth.points() != batch.points())
    throw std::invalid_argument("supermartingale_check: wealth shape does not match the batch");
  if (n_cells == 0) throw std::invalid_argument("supermartingale_check: need at least one cell");
  const std::size_t np = batch.n_paths();
  SupermartingaleReport rep;
  bool first = true;
  for (const auto& [u, t] : times) {
    if (!(u < t) || t > batch.steps()) throw std::invalid_argument("supermartingale_check: need u < t <= N");
    std::vector<std::size_t> order(np);
    for (std::size_t p = 0; p < np; ++p) order[p] = p;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return wealth(a, u) < wealth(b, u); });
    for (std::size_t c = 0; c < n_cells; ++c) {
      const std::size_t b0 = c * np / n_cells, b1 = (c + 1) * np / n_cells;
      if (b1 <= b0) continue;
      // Ties in X(u) are split by path index, which is independent of the future.
      std::vector<double> d;
      d.reserve(b1 - b0);
      for (std::size_t i = b0; i < b1; ++i) {
        const std::size_t p = order[i];
        d.push_back(batch.z(p, t) * (wealth(p, t) - wealth(p, u)));
      }
      SupermartingaleCell cell{u, t, c, estimate(d)};
      const double zs = z_score(cell.drift, 0.0);
      if (zs > 3.0) rep.supermartingale = false;
      if (std::abs(zs) > 3.0) rep.martingale = false;
      if (first || zs > rep.max_z) rep.max_z = zs;
      if (first || zs < rep.min_z) rep.min_z = zs;
      first = false;
      rep.cells.push_back(std::move(cell));
    }
  }
  return rep;
}

/// Wealth of pi charged a proportional cost `rate` on every share traded,
/// valued at the trade price. Costs only ever lower wealth.
inline PathArray wealth_with_costs(const PathBatch& batch, const Strategy& pi, double x0, double rate) {
  PathArray x = wealth_path(batch, pi, x0).x;
  for (std::size_t p = 0; p < batch.n_paths(); ++p) {
    double cost = 0.0;
    for (std::size_t k = 0; k < batch.steps(); ++k) {
      for (std::size_t i = 0; i < batch.assets(); ++i) {
        const double prev = k == 0 ? 0.0 : pi(p, k - 1, i);
        cost += rate * std::abs(pi(p, k, i) - prev) * batch.s(p, k, i);
      }
      x(p, k + 1) -= cost;
    }
  }
  return x;
}

// ---------------------------------------------------------------- martingales

/// |E Z~(t) - 1| <= 3 s.e. at the given grid indices.
inline std::vector<Check> z_martingale_checks(const PathBatch& batch, const std::vector<std::size_t>& indices) {
  std::vector<Check> out;
  for (std::size_t k : indices) {
    const McEstimate e = estimate(batch.z_array().column(k));
    Check c{"z_mean t=" + detail::shortest(batch.time(k)), e.mean, e.std_error, 3.0 * e.std_error, false, {}};
    c.passed = std::abs(e.mean - 1.0) <= c.tolerance;
    out.push_back(std::move(c));
  }
  return out;
}

/// Q~-mean of V+bar(t) against the premium E~ V+(T) at the given indices:
/// paired difference Z~(t) V+bar(t) - Z~(T) V+(T) within 3 s.e. of zero.
inline std::vector<Check> vbar_martingale_checks(const PathBatch& batch, const PathArray& vbar,
                                                 const PathArray& v_pos, const std::vector<std::size_t>& indices) {
  const std::size_t N = batch.steps();
  std::vector<double> ref(batch.n_paths());
  for (std::size_t p = 0; p < ref.size(); ++p) ref[p] = batch.z(p, N) * v_pos(p, N);
  std::vector<Check> out;
  for (std::size_t k : indices) {
    std::vector<double> a(batch.n_paths());
    for (std::size_t p = 0; p < a.size(); ++p) a[p] = batch.z(p, k) * vbar(p, k);
    const McEstimate d = paired_difference(a, ref);
    Check c{"vbar_mean t=" + detail::shortest(batch.time(k)), d.mean, d.std_error, 3.0 * d.std_error, false, {}};
    c.passed = std::abs(d.mean) <= c.tolerance;
    out.push_back(std::move(c));
  }
  return out;
}

/// n evenly spaced grid indices in (0, N].
inline std::vector<std::size_t> spread_indices(std::size_t steps, std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t k = (i * steps + n - 1) / n;
    if (out.empty() || k != out.back()) out.push_back(std::min(k, steps));
  }
  return out;
}

}  // namespace ru
