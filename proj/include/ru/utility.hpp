#pragma once

// Utility functions on (0, inf) together with the inverse marginal utility
// I = (U')^{-1}, its derivatives, the convex dual and the correction
// function
//
//   F(z) = I''(z) z^2 / 2 + I'(z) z
//
// that drives the wealth correction process.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ru/errors.hpp"
#include "ru/roots.hpp"

namespace ru {

using ScalarFn = std::function<double(double)>;

namespace detail {
/// Shortest round-trip decimal form of a double.
inline std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
}  // namespace detail

/// A utility family: U and its first three derivatives, the inverse marginal
/// I and its first two derivatives. All members are pure and the struct is
/// freely shareable.
struct UtilityFamily {
  enum class Kind { Log, Crra, Exponential, Custom };
  std::string label;
  Kind kind = Kind::Custom;
  double parameter = 0.0;  // p for CRRA, a for exponential
  ScalarFn u, u1, u2, u3;
  ScalarFn i, i1, i2;
  /// Optional closed form of the correction function. When empty, F is
  /// evaluated from i1 and i2.
  ScalarFn f;
  bool inada_satisfied = true;
  /// Allow evaluation where I(y) <= 0 instead of raising DomainError.
  bool assume_valid = false;
};

inline UtilityFamily log_utility() {
  UtilityFamily fam;
  fam.label = "log";
  fam.kind = UtilityFamily::Kind::Log;
  fam.u = [](double x) { return std::log(x); };
  fam.u1 = [](double x) { return 1.0 / x; };
  fam.u2 = [](double x) { return -1.0 / (x * x); };
  fam.u3 = [](double x) { return 2.0 / (x * x * x); };
  fam.i = [](double y) { return 1.0 / y; };
  fam.i1 = [](double y) { return -1.0 / (y * y); };
  fam.i2 = [](double y) { return 2.0 / (y * y * y); };
  // I''z^2/2 + I'z = 1/z - 1/z vanishes identically.
  fam.f = [](double) { return 0.0; };
  return fam;
}

/// U(x) = x^p / p with p < 1, p != 0.
inline UtilityFamily crra(double p) {
  if (!(p < 1.0) || p == 0.0 || !std::isfinite(p))
    throw std::invalid_argument("crra: need p < 1 and p != 0, got " + std::to_string(p));
  const double q = 1.0 / (p - 1.0);
  UtilityFamily fam;
  fam.label = "crra:p=" + detail::shortest(p);
  fam.kind = UtilityFamily::Kind::Crra;
  fam.parameter = p;
  fam.u = [p](double x) { return std::pow(x, p) / p; };
  fam.u1 = [p](double x) { return std::pow(x, p - 1.0); };
  fam.u2 = [p](double x) { return (p - 1.0) * std::pow(x, p - 2.0); };
  fam.u3 = [p](double x) { return (p - 1.0) * (p - 2.0) * std::pow(x, p - 3.0); };
  fam.i = [q](double y) { return std::pow(y, q); };
  fam.i1 = [q](double y) { return q * std::pow(y, q - 1.0); };
  fam.i2 = [q](double y) { return q * (q - 1.0) * std::pow(y, q - 2.0); };
  return fam;
}

/// U(x) = -exp(-a x). Violates the Inada condition at 0+ and has I(y) < 0
/// for y > a; evaluation there raises DomainError unless assume_valid.
inline UtilityFamily exponential(double a, bool assume_valid = false) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("exponential: need a > 0");
  UtilityFamily fam;
  fam.label = "exp:a=" + detail::shortest(a);
  fam.kind = UtilityFamily::Kind::Exponential;
  fam.parameter = a;
  fam.u = [a](double x) { return -std::exp(-a * x); };
  fam.u1 = [a](double x) { return a * std::exp(-a * x); };
  fam.u2 = [a](double x) { return -a * a * std::exp(-a * x); };
  fam.u3 = [a](double x) { return a * a * a * std::exp(-a * x); };
  fam.i = [a](double y) { return -std::log(y / a) / a; };
  fam.i1 = [a](double y) { return -1.0 / (a * y); };
  fam.i2 = [a](double y) { return 1.0 / (a * y * y); };
  fam.inada_satisfied = false;
  fam.assume_valid = assume_valid;
  return fam;
}

/// User-supplied utility from U and U' (plus optional U'', U'''). Missing
/// derivatives fall back to central differences of U'. I is computed by
/// safeguarded Newton with bisection fallback on U'(x) = y.
inline UtilityFamily custom_utility(std::string label, ScalarFn u, ScalarFn u1, ScalarFn u2 = {}, ScalarFn u3 = {}) {
  if (!u || !u1) throw std::invalid_argument("custom_utility: U and U' are required");
  if (!u2)
    u2 = [u1](double x) {
      const double h = 1e-5 * x;
      return (u1(x + h) - u1(x - h)) / (2.0 * h);
    };
  if (!u3)
    u3 = [u1](double x) {
      const double h = 1e-4 * x;
      return (u1(x + h) - 2.0 * u1(x) + u1(x - h)) / (h * h);
    };
  UtilityFamily fam;
  fam.label = std::move(label);
  fam.u = std::move(u);
  fam.u1 = u1;
  fam.u2 = u2;
  fam.u3 = u3;
  fam.i = [u1, u2](double y) {
    if (!(y > 0.0)) throw DomainError("custom utility: I(y) needs y > 0");
    // U' is decreasing: expand [lo, hi] until U'(lo) >= y >= U'(hi).
    double lo = 1.0, hi = 1.0;
    for (int k = 0; k < 2000 && u1(lo) < y; ++k) lo *= 0.5;
    for (int k = 0; k < 2000 && u1(hi) > y; ++k) hi *= 2.0;
    if (u1(lo) < y || u1(hi) > y) throw DomainError("custom utility: cannot bracket I(" + std::to_string(y) + ")");
    // Solve in log x so the Newton step is scale free.
    auto g = [&](double s) { return u1(std::exp(s)) - y; };
    auto dg = [&](double s) { return u2(std::exp(s)) * std::exp(s); };
    return std::exp(safeguarded_newton(g, dg, std::log(lo), std::log(hi), 1e-14).root);
  };
  fam.i1 = [ii = fam.i, u2](double y) { return 1.0 / u2(ii(y)); };
  fam.i2 = [ii = fam.i, u2, u3](double y) {
    const double x = ii(y);
    const double c = u2(x);
    return -u3(x) / (c * c * c);
  };
  fam.inada_satisfied = true;
  return fam;
}

/// Parses "log", "crra:p=0.5", "exp:a=1.0".
inline UtilityFamily parse_utility(std::string_view spec, bool assume_valid = false) {
  auto name_end = spec.find(':');
  const std::string_view name = spec.substr(0, name_end);
  std::map<std::string, double, std::less<>> params;
  if (name_end != std::string_view::npos) {
    std::string_view rest = spec.substr(name_end + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos)
        throw std::invalid_argument("utility spec '" + std::string(spec) + "': expected key=value, got '" +
                                    std::string(item) + "'");
      const std::string key(item.substr(0, eq));
      const std::string value(item.substr(eq + 1));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &used);
      } catch (...) {
        used = 0;
      }
      if (used != value.size() || value.empty())
        throw std::invalid_argument("utility spec '" + std::string(spec) + "': bad number '" + value + "'");
      params[key] = v;
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  }
  auto take = [&](const char* key) {
    auto it = params.find(key);
    if (it == params.end())
      throw std::invalid_argument("utility spec '" + std::string(spec) + "': missing parameter '" + key + "'");
    const double v = it->second;
    params.erase(it);
    return v;
  };
  UtilityFamily fam;
  if (name == "log") {
    fam = log_utility();
  } else if (name == "crra") {
    fam = crra(take("p"));
  } else if (name == "exp") {
    fam = exponential(take("a"), assume_valid);
  } else {
    throw std::invalid_argument("unknown utility family '" + std::string(name) + "'");
  }
  if (!params.empty())
    throw std::invalid_argument("utility spec '" + std::string(spec) + "': unknown parameter '" +
                                params.begin()->first + "'");
  fam.assume_valid = assume_valid;
  return fam;
}

namespace detail {
inline void require_positive(double y, const char* what) {
  if (!(y > 0.0)) throw DomainError(std::string(what) + ": argument must be positive, got " + std::to_string(y));
}
}  // namespace detail

/// True when I(y) is finite and strictly positive.
inline bool inverse_in_domain(const UtilityFamily& fam, double y) {
  const double x = fam.i(y);
  return std::isfinite(x) && x > 0.0;
}

/// Convex dual U~(y) = U(I(y)) - y I(y).
inline double legendre(const UtilityFamily& fam, double y) {
  detail::require_positive(y, "legendre");
  const double x = fam.i(y);
  return fam.u(x) - y * x;
}

/// F evaluated from the derivatives of I, ignoring any closed form.
inline double f_from_inverse(const UtilityFamily& fam, double z) {
  detail::require_positive(z, "f_correction");
  return 0.5 * fam.i2(z) * z * z + fam.i1(z) * z;
}

inline double f_correction(const UtilityFamily& fam, double z) {
  if (fam.f) {
    detail::require_positive(z, "f_correction");
    return fam.f(z);
  }
  return f_from_inverse(fam, z);
}

/// F through derivatives of U at x = I(z):
///   z^2 / (2 U''^2) * [ -U'''/U'' + 2 U''/U' ]
/// i.e. prudence minus twice absolute risk aversion, scaled.
inline double f_prudence_form(const UtilityFamily& fam, double z) {
  detail::require_positive(z, "f_prudence_form");
  const double x = fam.i(z);
  const double d1 = fam.u1(x);
  const double d2 = fam.u2(x);
  const double d3 = fam.u3(x);
  return z * z / (2.0 * d2 * d2) * (-d3 / d2 + 2.0 * d2 / d1);
}

/// Prudence -U'''/U'' and absolute risk aversion -U''/U' at I(z).
struct PreferenceCoefficients {
  double prudence = 0.0;
  double risk_aversion = 0.0;
};

inline PreferenceCoefficients preference_coefficients(const UtilityFamily& fam, double z) {
  detail::require_positive(z, "preference_coefficients");
  const double x = fam.i(z);
  return {-fam.u3(x) / fam.u2(x), -fam.u2(x) / fam.u1(x)};
}

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) throw std::invalid_argument("log_grid: need 0 < lo < hi and n >= 2");
  std::vector<double> g(n);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t k = 0; k < n; ++k) g[k] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

struct GrowthReport {
  double max_scaled = 0.0;  // max_y [y^2|I''| v (-y I') v I] * y^kappa
  double argmax = 0.0;
  bool domain_violation = false;
  double first_violation = 0.0;  // first y on the grid with I(y) <= 0
  bool passed = false;
};

/// Relative slack applied to the growth bound comparison so that equality
/// cases (for example log utility with k1 = 2) survive rounding.
inline constexpr double kGrowthBoundSlack = 1e-12;

inline GrowthReport check_growth_bound(const UtilityFamily& fam, double k1, double kappa,
                                       std::span<const double> y_grid) {
  if (!(k1 > 0.0) || !(kappa > 0.0)) throw std::invalid_argument("check_growth_bound: need k1 > 0 and kappa > 0");
  GrowthReport r;
  for (double y : y_grid) {
    const double iy = fam.i(y);
    if (!(iy > 0.0) || !std::isfinite(iy)) {
      if (!r.domain_violation) r.first_violation = y;
      r.domain_violation = true;
      continue;
    }
    const double v = std::max({y * y * std::abs(fam.i2(y)), -y * fam.i1(y), iy}) * std::pow(y, kappa);
    if (v > r.max_scaled) {
      r.max_scaled = v;
      r.argmax = y;
    }
  }
  r.passed = !r.domain_violation && r.max_scaled <= k1 * (1.0 + kGrowthBoundSlack);
  return r;
}

struct InadaReport {
  double u1_near_zero = 0.0;  // U'(1e-8)
  double u1_near_inf = 0.0;   // U'(1e8)
  double slope_near_zero = 0.0;  // d log U' / d log x between 1e-8 and 1e-6
  double slope_near_inf = 0.0;   // same between 1e6 and 1e8
  bool zero_ok = false;  // U'(0+) = inf plausible
  bool inf_ok = false;   // U'(inf) = 0 plausible
  bool passed = false;
};

/// Probes U' at 1e-8 and 1e8. A limit is accepted when U' is already
/// extreme there, or when its log-log slope is bounded away from zero (power
/// law blow-up or decay).
inline InadaReport validate_inada(const UtilityFamily& fam) {
  constexpr double kSlope = 1e-3;
  InadaReport r;
  r.u1_near_zero = fam.u1(1e-8);
  r.u1_near_inf = fam.u1(1e8);
  const double u1_small = fam.u1(1e-6);
  const double u1_large = fam.u1(1e6);
  auto slope = [](double a, double b, double xa, double xb) {
    if (!(a > 0.0) || !(b > 0.0)) return 0.0;
    return (std::log(b) - std::log(a)) / (std::log(xb) - std::log(xa));
  };
  r.slope_near_zero = slope(r.u1_near_zero, u1_small, 1e-8, 1e-6);
  r.slope_near_inf = slope(u1_large, r.u1_near_inf, 1e6, 1e8);
  r.zero_ok = std::isinf(r.u1_near_zero) || r.u1_near_zero >= 1e8 ||
              (std::isfinite(r.u1_near_zero) && r.slope_near_zero < -kSlope);
  r.inf_ok = r.u1_near_inf <= 1e-8 || r.slope_near_inf < -kSlope;
  r.passed = r.zero_ok && r.inf_ok;
  return r;
}

struct IdentityReport {
  double dual_error = 0.0;        // max |U(x) - U~(U'(x)) - x U'(x)| / max(1, |U(x)|)
  double fenchel_violation = 0.0; // max (U(x) - U~(y) - x y)^+ / max(1, |U(x)|)
  double round_trip_error = 0.0;  // max |U'(I(y)) - y| / y
  double prudence_error = 0.0;    // max |F - F_prudence| / (|F| + |y I'(y)|)
  std::size_t sign_mismatches = 0;  // sign F != sign(P - 2A)
};

/// Toolkit identities: the dual relation on x_grid, the rest on y_grid.
inline IdentityReport utility_identities(const UtilityFamily& fam, std::span<const double> x_grid,
                                         std::span<const double> y_grid) {
  IdentityReport r;
  for (double x : x_grid) {
    const double ux = fam.u(x), y0 = fam.u1(x);
    const double scale = std::max(1.0, std::abs(ux));
    r.dual_error = std::max(r.dual_error, std::abs(ux - (legendre(fam, y0) + x * y0)) / scale);
    for (double y : y_grid) r.fenchel_violation = std::max(r.fenchel_violation, (ux - legendre(fam, y) - x * y) / scale);
  }
  for (double y : y_grid) {
    r.round_trip_error = std::max(r.round_trip_error, std::abs(fam.u1(fam.i(y)) - y) / y);
    const double f = f_correction(fam, y);
    const double fp = f_prudence_form(fam, y);
    const double scale = std::abs(f) + std::abs(y * fam.i1(y));
    r.prudence_error = std::max(r.prudence_error, std::abs(f - fp) / scale);
    const PreferenceCoefficients pc = preference_coefficients(fam, y);
    const double gap = pc.prudence - 2.0 * pc.risk_aversion;
    const double gap_scale = std::abs(pc.prudence) + 2.0 * std::abs(pc.risk_aversion);
    const int sf = std::abs(f) <= 1e-12 * scale ? 0 : (f > 0 ? 1 : -1);
    const int sg = std::abs(gap) <= 1e-12 * gap_scale ? 0 : (gap > 0 ? 1 : -1);
    if (sf != sg) ++r.sign_mismatches;
  }
  return r;
}

}  // namespace ru
