#pragma once

// Rescaled free-enthalpy family gbar_i^m, equation of state, free energy,
// chemical potentials, Hessian, and the inverse map from potentials to
// densities.
//
//   gbar_i^m(pi) = m (gbar_i(1 + pi/m) - gbar_i(1)),    pi > -m,
//   (gbar_i^m)'(pi) = gbar_i'(1 + pi/m),
//   (gbar_i^m)''(pi) = gbar_i''(1 + pi/m) / m.
// The affine limit m = infinity has gbar_i^inf(pi) = vbar_i * pi.

#include <cmath>
#include <limits>
#include <optional>

#include "mixlim/mixture.hpp"
#include "mixlim/rootfind.hpp"

namespace mixlim {

struct ThermoFamily {
  MixtureSpec spec;
  double m = 1.0;  // rescaling index; infinity() selects the affine limit

  bool is_affine() const { return std::isinf(m); }

  static ThermoFamily affine(MixtureSpec s) {
    return {std::move(s), std::numeric_limits<double>::infinity()};
  }
  static ThermoFamily rescaled(MixtureSpec s, double m_index) {
    if (!(m_index > 0.0)) throw std::invalid_argument("ThermoFamily: m must be positive");
    return {std::move(s), m_index};
  }
};

inline GEval gm_eval(const ThermoFamily& fam, int i, double pi) {
  if (fam.is_affine()) return {fam.spec.vbar[i] * pi, fam.spec.vbar[i], 0.0};
  if (!(pi > -fam.m)) throw std::domain_error("gm_eval: pi must exceed -m");
  const MixtureSpec& spec = fam.spec;
  const double u = pi / fam.m;
  // Default branches evaluated in u = pi/m with log1p/expm1 so that the
  // m * (gbar(1+u) - gbar(1)) difference keeps full relative precision for
  // large m (the generic form loses m*eps absolutely).
  if (spec.gkind == GKind::PiecewiseLogPower ||
      (spec.gkind == GKind::BlendedC2 && std::fabs(u) >= spec.blend_delta)) {
    const double v = spec.vbar[i];
    if (u <= 0.0) {
      const double su = 1.0 + u;
      return {fam.m * v * std::log1p(u), v / su, -v / (su * su) / fam.m};
    }
    const double al = spec.alpha[i];
    const double t = std::expm1(std::log1p(u) / al);  // (1+u)^{1/al} - 1
    const double su = 1.0 + u;
    return {fam.m * v * al * t, v * (1.0 + t) / su,
            v * (1.0 / al - 1.0) * (1.0 + t) / (su * su) / fam.m};
  }
  const GEval g = gbar_eval(spec, i, 1.0 + u);
  const GEval g1 = gbar_eval(spec, i, 1.0);
  return {fam.m * (g.value - g1.value), g.d1, g.d2 / fam.m};
}

struct EosOptions {
  double abs_tol = 1e-12;  // |sum rho_i g_i'(p) - 1| target
  int max_iter = 100;
};

// Unique root of sum_i rho_i gbar_i'(p) = 1. The bracket comes from the
// per-species monotone bounds; for blended families it is expanded first.
inline double eos_pressure(const ThermoFamily& fam, const Vec& rho,
                           const EosOptions& opt = {}) {
  const MixtureSpec& spec = fam.spec;
  double total = 0.0;
  for (int i = 0; i < spec.N; ++i) {
    if (rho[i] < 0.0) throw std::domain_error("eos_pressure: negative density");
    total += rho[i];
  }
  if (!(total > 0.0)) throw std::domain_error("eos_pressure: all-zero density vector");
  if (fam.is_affine()) {
    // EOS degenerates to the linear constraint; meaningful only on it.
    double w = 0.0;
    for (int i = 0; i < spec.N; ++i) w += rho[i] * spec.vbar[i];
    if (std::fabs(w - 1.0) > 1e-10)
      throw std::domain_error("eos_pressure: affine family requires rho.vbar = 1");
    return 1.0;
  }
  auto F = [&](double p) {
    double s = -1.0;
    for (int i = 0; i < spec.N; ++i)
      if (rho[i] > 0.0) s += rho[i] * gbar_eval(spec, i, p).d1;
    return s;
  };
  auto dF = [&](double p) {
    double s = 0.0;
    for (int i = 0; i < spec.N; ++i)
      if (rho[i] > 0.0) s += rho[i] * gbar_eval(spec, i, p).d2;
    return s;
  };
  double lo = std::numeric_limits<double>::max(), hi = 0.0;
  for (int i = 0; i < spec.N; ++i) {
    const double q = gbar_prime_inv(spec, i, 1.0 / total);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  lo *= 0.999999;
  hi *= 1.000001;
  expand_bracket(F, lo, hi, [](double x) { return 0.5 * x; },
                 [](double x) { return 2.0 * x; });
  RootOptions ro;
  ro.abs_tol = opt.abs_tol;
  ro.max_iter = opt.max_iter;
  return find_root_bracketed(F, dF, lo, hi, ro);
}

// Rescaled pressure pi^m(rho) = m (p_hat(rho) - 1). For the affine family it
// is defined only on the constraint surface and returns 0 there.
inline double pi_m(const ThermoFamily& fam, const Vec& rho,
                   const EosOptions& opt = {}) {
  if (fam.is_affine()) {
    double w = 0.0;
    for (int i = 0; i < fam.spec.N; ++i) w += rho[i] * fam.spec.vbar[i];
    if (std::fabs(w - 1.0) > 1e-10)
      throw std::domain_error("pi_m: affine family requires rho.vbar = 1 (tol 1e-10)");
    return 0.0;
  }
  return fam.m * (eos_pressure(fam, rho, opt) - 1.0);
}

// Rescaled free energy
//   f^m(rho) = sum_i g_i^m(pi) rho_i - pi + RT sum_i (rho_i/M_i) ln x_i,
// continuously extended by f^m(0) = m. For the affine family, f = k(rho) on
// the constraint surface and is undefined (+infinity) elsewhere.
inline double free_energy(const ThermoFamily& fam, const Vec& rho) {
  const MixtureSpec& spec = fam.spec;
  double total = 0.0;
  for (int i = 0; i < spec.N; ++i) total += rho[i];
  if (total == 0.0) {
    if (fam.is_affine()) throw std::domain_error("free_energy: affine family at rho = 0");
    return fam.m;
  }
  if (fam.is_affine()) {
    double w = 0.0;
    for (int i = 0; i < spec.N; ++i) w += rho[i] * spec.vbar[i];
    if (std::fabs(w - 1.0) > 1e-10)
      throw std::domain_error("free_energy: affine family off the constraint surface");
    return mix_entropy(spec, rho).k;
  }
  const double pi = pi_m(fam, rho);
  double f = -pi;
  for (int i = 0; i < spec.N; ++i)
    if (rho[i] > 0.0) f += gm_eval(fam, i, pi).value * rho[i];
  const Fractions fr = fractions(spec, rho);
  for (int i = 0; i < spec.N; ++i)
    if (rho[i] > 0.0) f += spec.RT * rho[i] / spec.M[i] * std::log(fr.x[i]);
  return f;
}

// mu_i = g_i^m(pi^m(rho)) + (RT/M_i) ln x_i(rho)
inline Vec chemical_potentials(const ThermoFamily& fam, const Vec& rho) {
  const MixtureSpec& spec = fam.spec;
  for (int i = 0; i < spec.N; ++i)
    if (!(rho[i] > 0.0))
      throw std::domain_error("chemical_potentials: singular potential at zero density");
  if (fam.is_affine())
    throw std::domain_error(
        "chemical_potentials: affine family needs an external pressure, "
        "use mu_incompressible");
  const double pi = pi_m(fam, rho);
  const Fractions fr = fractions(spec, rho);
  Vec mu(spec.N);
  for (int i = 0; i < spec.N; ++i)
    mu[i] = gm_eval(fam, i, pi).value + spec.RT / spec.M[i] * std::log(fr.x[i]);
  return mu;
}

// Incompressible potentials mu_i = p vbar_i + (RT/M_i) ln x_i at a given
// pressure (the affine-limit gradient on the constraint surface).
inline Vec mu_incompressible(const MixtureSpec& spec, const Vec& rho, double p) {
  for (int i = 0; i < spec.N; ++i)
    if (!(rho[i] > 0.0))
      throw std::domain_error("mu_incompressible: zero density");
  const Fractions fr = fractions(spec, rho);
  Vec mu(spec.N);
  for (int i = 0; i < spec.N; ++i)
    mu[i] = p * spec.vbar[i] + spec.RT / spec.M[i] * std::log(fr.x[i]);
  return mu;
}

// Hessian D2f = K upsilon x upsilon + D2k with upsilon = (g^m)'(pi)
// and K = -1 / sum_k rho_k (g_k^m)''(pi). Symmetric positive definite.
inline Mat hessian(const ThermoFamily& fam, const Vec& rho) {
  const MixtureSpec& spec = fam.spec;
  if (fam.is_affine())
    throw std::domain_error("hessian: singular for the affine family");
  const double pi = pi_m(fam, rho);
  Vec ups(spec.N);
  double denom = 0.0;
  for (int i = 0; i < spec.N; ++i) {
    const GEval g = gm_eval(fam, i, pi);
    ups[i] = g.d1;
    denom += rho[i] * g.d2;
  }
  const double K = -1.0 / denom;
  const MixEntropy me = mix_entropy(spec, rho);
  Mat h((std::size_t)spec.N * spec.N);
  for (int i = 0; i < spec.N; ++i)
    for (int j = 0; j < spec.N; ++j)
      h[i * spec.N + j] = K * ups[i] * ups[j] + me.d2k[i * spec.N + j];
  return h;
}

// Compressibility factor K(rho) = -1 / sum_k rho_k (g_k^m)''(pi^m(rho));
// the frozen-composition acoustic speed is sqrt(K / varrho).
inline double stiffness_K(const ThermoFamily& fam, const Vec& rho) {
  if (fam.is_affine()) return std::numeric_limits<double>::infinity();
  const double pi = pi_m(fam, rho);
  double denom = 0.0;
  for (int i = 0; i < fam.spec.N; ++i)
    if (rho[i] > 0.0) denom += rho[i] * gm_eval(fam, i, pi).d2;
  return -1.0 / denom;
}

// Inverts mu = Df(rho). Solves sum_i exp(M_i/RT (mu_i - g_i^m(s))) = 1 for
// the unique s = pi (strictly decreasing in s), then recovers mole fractions
// and the molar concentration from the equation of state. The equation is
// solved in log-sum-exp form, where it is close to linear in s, so Newton
// converges globally and the exponentials cannot overflow.
inline Vec potentials_to_densities(const ThermoFamily& fam, const Vec& mu,
                                   double* pi_out = nullptr) {
  const MixtureSpec& spec = fam.spec;
  if (fam.is_affine())
    throw std::domain_error(
        "potentials_to_densities: use incompressible_invert for the affine family");
  auto G = [&](double s) {
    double a = -std::numeric_limits<double>::infinity();
    Vec e(spec.N);
    for (int i = 0; i < spec.N; ++i) {
      e[i] = spec.M[i] / spec.RT * (mu[i] - gm_eval(fam, i, s).value);
      a = std::max(a, e[i]);
    }
    double Z = 0.0;
    for (int i = 0; i < spec.N; ++i) Z += std::exp(e[i] - a);
    return a + std::log(Z);
  };
  auto dG = [&](double s) {
    double a = -std::numeric_limits<double>::infinity();
    Vec e(spec.N), d1(spec.N);
    for (int i = 0; i < spec.N; ++i) {
      const GEval g = gm_eval(fam, i, s);
      e[i] = spec.M[i] / spec.RT * (mu[i] - g.value);
      d1[i] = -spec.M[i] / spec.RT * g.d1;
      a = std::max(a, e[i]);
    }
    double Z = 0.0, W = 0.0;
    for (int i = 0; i < spec.N; ++i) {
      const double w = std::exp(e[i] - a);
      Z += w;
      W += w * d1[i];
    }
    return W / Z;
  };
  // G decreases from +inf (s -> -m) to -inf (s -> +inf).
  double lo = std::max(-0.5, -0.5 * fam.m), hi = 1.0;
  expand_bracket(G, lo, hi,
                 [&](double x) { return -fam.m + 0.5 * (x + fam.m); },
                 [](double x) { return x <= 0.0 ? 1.0 : 2.0 * x; });
  // the exponents are differences of O(|M mu|) magnitudes, which sets the
  // attainable residual in G
  double scale = 1.0;
  for (int i = 0; i < spec.N; ++i)
    scale = std::max(scale, std::fabs(spec.M[i] * mu[i] / spec.RT));
  RootOptions ro;
  ro.abs_tol = 3e-14 * scale + 1e-14;
  const double pi = find_root_bracketed(G, dG, lo, hi, ro);
  if (pi_out) *pi_out = pi;
  Vec x(spec.N);
  for (int i = 0; i < spec.N; ++i)
    x[i] = std::exp(spec.M[i] / spec.RT * (mu[i] - gm_eval(fam, i, pi).value));
  double molar_vol = 0.0;  // sum_i M_i x_i gbar_i'(1 + pi/m)
  for (int i = 0; i < spec.N; ++i)
    molar_vol += spec.M[i] * x[i] * gm_eval(fam, i, pi).d1;
  const double n = 1.0 / molar_vol;
  Vec rho(spec.N);
  for (int i = 0; i < spec.N; ++i) rho[i] = n * spec.M[i] * x[i];
  return rho;
}

// Evaluated thermodynamic state at one density vector.
struct ThermoPoint {
  Vec rho;
  double p_hat;
  double pi_m;
  Vec x;
  double f;
  Vec mu;
};

inline ThermoPoint evaluate(const ThermoFamily& fam, const Vec& rho) {
  ThermoPoint tp;
  tp.rho = rho;
  tp.p_hat = eos_pressure(fam, rho);
  tp.pi_m = fam.is_affine() ? 0.0 : fam.m * (tp.p_hat - 1.0);
  tp.x = fractions(fam.spec, rho).x;
  tp.f = free_energy(fam, rho);
  tp.mu = fam.is_affine() ? mu_incompressible(fam.spec, rho, 0.0)
                          : chemical_potentials(fam, rho);
  return tp;
}

}  // namespace mixlim
