#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

namespace ru {

struct RootResult {
  double root = std::numeric_limits<double>::quiet_NaN();
  double lo = 0.0;
  double hi = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Bisection on [lo, hi]; f(lo) and f(hi) must differ in sign. Stops once
/// |f(mid)| <= ftol or the bracket shrinks below xtol (relative).
inline RootResult bisect(const std::function<double(double)>& f, double lo, double hi, double ftol,
                         double xtol = 1e-15, int max_iter = 200) {
  double flo = f(lo);
  double fhi = f(hi);
  RootResult r{.lo = lo, .hi = hi};
  if (flo == 0.0) return {lo, lo, lo, 0, true};
  if (fhi == 0.0) return {hi, hi, hi, 0, true};
  if ((flo > 0) == (fhi > 0)) throw std::domain_error("bisect: root is not bracketed");
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0 || std::abs(fm) <= ftol) {
      r.root = mid;
      r.converged = true;
      break;
    }
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    r.lo = lo;
    r.hi = hi;
    if (hi - lo <= xtol * std::max(std::abs(lo), std::abs(hi))) {
      r.root = 0.5 * (lo + hi);
      r.converged = true;
      break;
    }
  }
  if (!r.converged) r.root = 0.5 * (lo + hi);
  r.lo = lo;
  r.hi = hi;
  return r;
}

/// Newton's method kept inside a shrinking bisection bracket (the classic
/// rtsafe scheme). f(lo) and f(hi) must differ in sign.
inline RootResult safeguarded_newton(const std::function<double(double)>& f,
                                     const std::function<double(double)>& df, double lo, double hi,
                                     double rtol = 1e-12, int max_iter = 200) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return {lo, lo, lo, 0, true};
  if (fhi == 0.0) return {hi, hi, hi, 0, true};
  if ((flo > 0) == (fhi > 0)) throw std::domain_error("safeguarded_newton: root is not bracketed");
  // Orient so that f(xl) < 0.
  double xl = flo < 0 ? lo : hi;
  double xh = flo < 0 ? hi : lo;
  double x = 0.5 * (lo + hi);
  double dx_old = std::abs(hi - lo);
  double dx = dx_old;
  double fx = f(x);
  double dfx = df(x);
  RootResult r;
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    const bool out_of_range = ((x - xh) * dfx - fx) * ((x - xl) * dfx - fx) > 0.0;
    const bool too_slow = std::abs(2.0 * fx) > std::abs(dx_old * dfx);
    if (!std::isfinite(dfx) || dfx == 0.0 || out_of_range || too_slow) {
      dx_old = dx;
      dx = 0.5 * (xh - xl);
      x = xl + dx;
    } else {
      dx_old = dx;
      dx = fx / dfx;
      x -= dx;
    }
    if (std::abs(dx) <= rtol * std::abs(x)) {
      r.converged = true;
      break;
    }
    fx = f(x);
    dfx = df(x);
    if (fx == 0.0) {
      r.converged = true;
      break;
    }
    if (fx < 0.0)
      xl = x;
    else
      xh = x;
  }
  r.root = x;
  r.lo = std::min(xl, xh);
  r.hi = std::max(xl, xh);
  return r;
}

}  // namespace ru
