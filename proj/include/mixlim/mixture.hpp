#pragma once

// Static description of an ideal multicomponent mixture and the base
// free-enthalpy family gbar_i.
//
// Default family:
//   gbar_i(s) = vbar_i * ln s                      for 0 < s <= 1,
//   gbar_i(s) = vbar_i * alpha_i * (s^(1/alpha_i) - 1)  for s >= 1.
// C^1 at the knot s = 1 with gbar_i(1) = 0 and gbar_i'(1) = vbar_i; the
// second derivative jumps at s = 1 and the right-sided value is used there.
// An optional C^2 variant blends the second derivative with a cubic on
// [1-delta, 1+delta]. A deliberately non-concave family is available as a
// negative control for the property audit.

#include <cmath>
#include <stdexcept>
#include <string>

#include "mixlim/smallmat.hpp"

namespace mixlim {

enum class GKind {
  PiecewiseLogPower,  // default
  BlendedC2,          // cubic-blended second derivative near the knot
  BrokenNonconcave,   // gbar'' > 0, violates concavity; test fixture only
};

struct GEval {
  double value;
  double d1;
  double d2;
};

struct MixtureSpec {
  int N = 2;
  Vec M;            // rescaled molar masses M̄_i (positive)
  Vec vbar;         // reference specific volumes, vbar_i = gbar_i'(1)
  Vec alpha;        // growth exponents, each > 1
  double sbar = 9.0;       // growth-transition pressure
  double RT = 1.0;         // thermal constant (1 in rescaled units)
  double eta_visc = 1e-2;  // shear viscosity, > 0
  double lambda_visc = 0.0;
  double d_ms = 1.0;       // Maxwell-Stefan coefficient
  double lambda0 = 0.1;    // uniform Onsager floor
  GKind gkind = GKind::PiecewiseLogPower;
  double blend_delta = 0.25;  // half-width of the C2 blend region

  double rho_min() const {
    double mx = vbar[0];
    for (double v : vbar) mx = std::max(mx, v);
    return 1.0 / mx;
  }
  double rho_max() const {
    double mn = vbar[0];
    for (double v : vbar) mn = std::min(mn, v);
    return 1.0 / mn;
  }
  double max_alpha() const {
    double a = alpha[0];
    for (double v : alpha) a = std::max(a, v);
    return a;
  }
  // gamma = max_alpha / (max_alpha - 1), the coercivity exponent
  double gamma_growth() const { return max_alpha() / (max_alpha() - 1.0); }

  bool vbar_parallel_ones(double tol = 1e-12) const {
    for (int i = 1; i < N; ++i)
      if (std::fabs(vbar[i] - vbar[0]) > tol * std::fabs(vbar[0])) return false;
    return true;
  }

  void validate() const {
    if (N < 2) throw std::invalid_argument("MixtureSpec: N must be >= 2");
    if ((int)M.size() != N || (int)vbar.size() != N || (int)alpha.size() != N)
      throw std::invalid_argument("MixtureSpec: species arrays must have length N");
    for (int i = 0; i < N; ++i) {
      if (!(M[i] > 0.0)) throw std::invalid_argument("MixtureSpec: M must be positive");
      if (!(vbar[i] > 0.0)) throw std::invalid_argument("MixtureSpec: vbar must be positive");
      if (!(alpha[i] > 1.0)) throw std::invalid_argument("MixtureSpec: alpha must exceed 1");
    }
    if (!(sbar > 1.0)) throw std::invalid_argument("MixtureSpec: sbar must exceed 1");
    if (!(RT > 0.0)) throw std::invalid_argument("MixtureSpec: RT must be positive");
    if (!(eta_visc > 0.0)) throw std::invalid_argument("MixtureSpec: eta_visc must be positive");
    if (lambda_visc + 2.0 * eta_visc / 3.0 < 0.0)
      throw std::invalid_argument("MixtureSpec: need lambda + 2 eta/3 >= 0");
    if (!(d_ms >= 0.0) || !(lambda0 >= 0.0))
      throw std::invalid_argument("MixtureSpec: mobility coefficients must be nonnegative");
  }
};

namespace detail {

// Cubic blend coefficients for the C2 variant: h''(s) = c0+c1 u+c2 u^2+c3 u^3
// with u = s - a on [a, b], matching g'' at both ends and reproducing the
// jumps of g' and g across the interval.
struct BlendCubic {
  double a, b;
  double c[4];
  double gp_a, g_a;  // g'(a), g(a) from the log branch
};

inline BlendCubic make_blend(double v, double al, double delta) {
  BlendCubic bc{};
  const double a = 1.0 - delta, b = 1.0 + delta, h = b - a;
  bc.a = a;
  bc.b = b;
  bc.g_a = v * std::log(a);
  bc.gp_a = v / a;
  const double g_b = v * al * (std::pow(b, 1.0 / al) - 1.0);
  const double gp_b = v * std::pow(b, 1.0 / al - 1.0);
  const double gpp_a = -v / (a * a);
  const double gpp_b = v * (1.0 / al - 1.0) * std::pow(b, 1.0 / al - 2.0);
  // Solve for cubic coefficients from the 4 matching conditions:
  //   h''(a)=gpp_a, h''(b)=gpp_b, int_a^b h'' = gp_b - gp_a,
  //   int_a^b (b-s) h''(s) ds = g_b - g_a - gp_a*h  (double integral)
  Mat A = {1, 0, 0, 0,
           1, h, h * h, h * h * h,
           h, h * h / 2, h * h * h / 3, h * h * h * h / 4,
           h * h / 2, h * h * h / 6, h * h * h * h / 12, h * h * h * h * h / 20};
  Vec rhs = {gpp_a, gpp_b, gp_b - bc.gp_a, g_b - bc.g_a - bc.gp_a * h};
  const Vec c = solve_dense(A, rhs);
  for (int i = 0; i < 4; ++i) bc.c[i] = c[i];
  return bc;
}

inline GEval eval_blend(const BlendCubic& bc, double s) {
  const double u = s - bc.a;
  const double d2 = bc.c[0] + u * (bc.c[1] + u * (bc.c[2] + u * bc.c[3]));
  const double d1 = bc.gp_a + u * (bc.c[0] + u * (bc.c[1] / 2 + u * (bc.c[2] / 3 + u * bc.c[3] / 4)));
  const double val = bc.g_a + bc.gp_a * u +
                     u * u * (bc.c[0] / 2 + u * (bc.c[1] / 6 + u * (bc.c[2] / 12 + u * bc.c[3] / 20)));
  return {val, d1, d2};
}

}  // namespace detail

// gbar_i(s) with first and second derivative. s must be positive; at the
// piecewise knot s = 1 the right-sided second derivative is returned.
inline GEval gbar_eval(const MixtureSpec& spec, int i, double s) {
  if (!(s > 0.0)) throw std::domain_error("gbar_eval: pressure argument must be positive");
  const double v = spec.vbar[i];
  const double al = spec.alpha[i];
  switch (spec.gkind) {
    case GKind::BrokenNonconcave:
      // gbar(s) = vbar*(s^2-1)/2: gbar' increasing, violates (A2). Fixture.
      return {v * (s * s - 1.0) / 2.0, v * s, v};
    case GKind::BlendedC2: {
      const double delta = spec.blend_delta;
      if (s > 1.0 - delta && s < 1.0 + delta) {
        static thread_local double cache_key[3] = {-1, -1, -1};
        static thread_local detail::BlendCubic cache;
        if (cache_key[0] != v || cache_key[1] != al || cache_key[2] != delta) {
          cache = detail::make_blend(v, al, delta);
          cache_key[0] = v; cache_key[1] = al; cache_key[2] = delta;
        }
        return detail::eval_blend(cache, s);
      }
      [[fallthrough]];
    }
    case GKind::PiecewiseLogPower:
    default:
      if (s < 1.0) return {v * std::log(s), v / s, -v / (s * s)};
      const double sp = std::pow(s, 1.0 / al);
      return {v * al * (sp - 1.0), v * sp / s, v * (1.0 / al - 1.0) * sp / (s * s)};
  }
}

// Inverse of s -> gbar_i'(s) for the default branches (used to seed EOS
// brackets; the generic solver expands if the blend moved the root).
inline double gbar_prime_inv(const MixtureSpec& spec, int i, double u) {
  if (!(u > 0.0)) throw std::domain_error("gbar_prime_inv: argument must be positive");
  const double v = spec.vbar[i];
  const double al = spec.alpha[i];
  if (u >= v) return v / u;                          // log branch, s <= 1
  return std::pow(v / u, al / (al - 1.0));           // power branch, s >= 1
}

struct Fractions {
  Vec x;     // mole fractions, sum to 1
  Vec y;     // mass fractions, sum to 1
  double n;  // total molar concentration sum(rho_i / M_i)
};

inline Fractions fractions(const MixtureSpec& spec, const Vec& rho) {
  double mass = 0.0, conc = 0.0;
  for (int i = 0; i < spec.N; ++i) {
    if (rho[i] < 0.0) throw std::domain_error("fractions: negative density");
    mass += rho[i];
    conc += rho[i] / spec.M[i];
  }
  if (!(mass > 0.0)) throw std::domain_error("fractions: all-zero density vector");
  Fractions fr;
  fr.n = conc;
  fr.x.resize(spec.N);
  fr.y.resize(spec.N);
  for (int i = 0; i < spec.N; ++i) {
    fr.x[i] = (rho[i] / spec.M[i]) / conc;
    fr.y[i] = rho[i] / mass;
  }
  return fr;
}

struct MixEntropy {
  double k;
  Vec dk;    // gradient
  Mat d2k;   // Hessian, N x N
};

// k(rho) = RT * sum (rho_i/M_i) ln x_i and its two derivatives.
// Positively 1-homogeneous: Dk.rho = k, D2k.rho = 0.
inline MixEntropy mix_entropy(const MixtureSpec& spec, const Vec& rho) {
  for (int i = 0; i < spec.N; ++i)
    if (!(rho[i] > 0.0))
      throw std::domain_error("mix_entropy: log singularity at zero density");
  const Fractions fr = fractions(spec, rho);
  MixEntropy me;
  me.k = 0.0;
  me.dk.resize(spec.N);
  me.d2k.assign((std::size_t)spec.N * spec.N, 0.0);
  for (int i = 0; i < spec.N; ++i) {
    const double lx = std::log(fr.x[i]);
    me.k += spec.RT * rho[i] / spec.M[i] * lx;
    me.dk[i] = spec.RT / spec.M[i] * lx;
    for (int j = 0; j < spec.N; ++j) {
      const double delta = (i == j) ? 1.0 / fr.x[i] : 0.0;
      me.d2k[i * spec.N + j] = spec.RT / (spec.M[i] * spec.M[j] * fr.n) * (delta - 1.0);
    }
  }
  return me;
}

}  // namespace mixlim
