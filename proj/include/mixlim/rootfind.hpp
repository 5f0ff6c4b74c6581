#pragma once

// Scalar root finding: bracketed Newton with bisection fallback.
// All implicit equations in this project (equation of state, potential
// inversion, summed-density matching) are strictly monotone, so a sign
// bracket plus safeguarding is enough.

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace mixlim {

struct RootOptions {
  double abs_tol = 1e-13;   // |f(x)| target
  int max_iter = 100;
  bool polish = true;       // keep iterating while |f| still improves
};

// f must change sign on [lo, hi]. df may be null (secant/bisection only).
inline double find_root_bracketed(const std::function<double(double)>& f,
                                  const std::function<double(double)>& df,
                                  double lo, double hi,
                                  const RootOptions& opt = {}) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (std::signbit(flo) == std::signbit(fhi)) {
    std::ostringstream msg;
    msg << "find_root_bracketed: no sign change, f(" << lo << ")=" << flo
        << ", f(" << hi << ")=" << fhi;
    throw std::runtime_error(msg.str());
  }
  double x = 0.5 * (lo + hi);
  double fx = f(x);
  double best_x = x, best_f = std::fabs(fx);
  for (int it = 0; it < opt.max_iter; ++it) {
    if (std::fabs(fx) <= opt.abs_tol && !opt.polish) break;
    // shrink bracket
    if (std::signbit(fx) == std::signbit(flo)) { lo = x; flo = fx; }
    else { hi = x; fhi = fx; }
    double step_ok = false;
    if (df) {
      const double d = df(x);
      if (d != 0.0 && std::isfinite(d)) {
        const double xn = x - fx / d;
        if (xn > lo && xn < hi) { x = xn; step_ok = true; }
      }
    }
    if (!step_ok) x = 0.5 * (lo + hi);
    fx = f(x);
    if (std::fabs(fx) < best_f) { best_f = std::fabs(fx); best_x = x; }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                       (std::fabs(lo) + std::fabs(hi))) break;
    if (opt.polish && best_f <= opt.abs_tol * 1e-2) break;
  }
  if (best_f > opt.abs_tol) {
    std::ostringstream msg;
    msg << "find_root_bracketed: no convergence after " << opt.max_iter
        << " iterations, residual " << best_f << " at x=" << best_x;
    throw std::runtime_error(msg.str());
  }
  return best_x;
}

// Expands [lo, hi] geometrically around a seed until f changes sign.
// grow_lo/grow_hi move the respective end; both must be strictly monotone
// expansions (used for unbounded or half-open domains).
inline void expand_bracket(const std::function<double(double)>& f,
                           double& lo, double& hi,
                           const std::function<double(double)>& grow_lo,
                           const std::function<double(double)>& grow_hi,
                           int max_expand = 200) {
  double flo = f(lo), fhi = f(hi);
  for (int k = 0; k < max_expand; ++k) {
    if (std::signbit(flo) != std::signbit(fhi) || flo == 0.0 || fhi == 0.0)
      return;
    // move the end whose sign matches: equation is monotone, so only one
    // direction can fix the bracket; grow both to stay robust.
    lo = grow_lo(lo);
    hi = grow_hi(hi);
    flo = f(lo);
    fhi = f(hi);
  }
  throw std::runtime_error("expand_bracket: could not bracket a sign change");
}

}  // namespace mixlim
