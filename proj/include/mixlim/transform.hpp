#pragma once

// Entropic change of variables (rho_1..rho_N) <-> (varrho, q_1..q_{N-1})
// and its incompressible counterpart (varrho, q', zeta).
//
// Basis convention: xi^N = 1^N, xi^{N-1} = vbar, and xi^1..xi^{N-2} an
// orthonormal basis of span{1^N, vbar}^perp built by Gram-Schmidt over the
// canonical vectors in index order. eta^1..eta^N is the dual basis.

#include <cmath>
#include <stdexcept>

#include "mixlim/smallmat.hpp"
#include "mixlim/thermo.hpp"

namespace mixlim {

struct Basis {
  int N = 0;
  Mat xi;   // N x N, columns xi^1..xi^N (xi[i*N + k] = component i of xi^{k+1})
  Mat eta;  // N x N, rows eta^1..eta^N (eta[k*N + i])

  Vec xi_col(int k) const {  // k in [0, N)
    Vec v(N);
    for (int i = 0; i < N; ++i) v[i] = xi[i * N + k];
    return v;
  }
  Vec eta_row(int k) const {
    Vec v(N);
    for (int i = 0; i < N; ++i) v[i] = eta[k * N + i];
    return v;
  }
  // Pi q for q of length N-1 (or N-2 via prime=true, zero-padding q_{N-1})
  Vec apply_Pi(const Vec& q) const {
    Vec out(N, 0.0);
    for (int k = 0; k < (int)q.size(); ++k)
      for (int i = 0; i < N; ++i) out[i] += xi[i * N + k] * q[k];
    return out;
  }
};

struct GaugeVector {
  Vec eta_g;  // eta_g . vbar = 1, eta_g . 1 = 0
};

// Orthogonal projection onto {1^N}^perp: P xi = xi - mean(xi) 1^N.
inline Vec project_P(const Vec& v) {
  double mean = 0.0;
  for (double a : v) mean += a;
  mean /= (double)v.size();
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - mean;
  return out;
}

inline Basis make_basis(const Vec& vbar) {
  const int N = (int)vbar.size();
  // reject vbar parallel to 1^N (constant-density mode has no vbar axis)
  {
    bool parallel = true;
    for (int i = 1; i < N; ++i)
      if (std::fabs(vbar[i] - vbar[0]) > 1e-12 * std::fabs(vbar[0])) parallel = false;
    if (parallel)
      throw std::invalid_argument(
          "make_basis: vbar is parallel to 1^N; use the constant-density mode");
  }
  Basis b;
  b.N = N;
  b.xi.assign((std::size_t)N * N, 0.0);
  // last two columns are fixed
  for (int i = 0; i < N; ++i) {
    b.xi[i * N + (N - 2)] = vbar[i];
    b.xi[i * N + (N - 1)] = 1.0;
  }
  // orthonormal frame for span{1, vbar} to project against
  Vec u1(N, 1.0 / std::sqrt((double)N));
  Vec u2(N);
  {
    const double c = dot(vbar, u1);
    for (int i = 0; i < N; ++i) u2[i] = vbar[i] - c * u1[i];
    const double nn = norm2(u2);
    for (int i = 0; i < N; ++i) u2[i] /= nn;
  }
  int placed = 0;
  for (int cand = 0; cand < N && placed < N - 2; ++cand) {
    Vec w(N, 0.0);
    w[cand] = 1.0;
    double c1 = dot(w, u1), c2 = dot(w, u2);
    for (int i = 0; i < N; ++i) w[i] -= c1 * u1[i] + c2 * u2[i];
    for (int k = 0; k < placed; ++k) {
      const Vec prev = b.xi_col(k);
      const double c = dot(w, prev);
      for (int i = 0; i < N; ++i) w[i] -= c * prev[i];
    }
    const double nn = norm2(w);
    if (nn <= 1e-12) continue;  // pivot rejected
    for (int i = 0; i < N; ++i) b.xi[i * N + placed] = w[i] / nn;
    ++placed;
  }
  if (placed != N - 2)
    throw std::runtime_error("make_basis: Gram-Schmidt completion failed");
  b.eta = invert_dense(b.xi, (std::size_t)N);
  return b;
}

// q_k = eta^k . mu for k = 1..N-1; invariant under mu -> mu + t 1^N.
inline Vec q_from_mu(const Basis& basis, const Vec& mu) {
  Vec q(basis.N - 1);
  for (int k = 0; k < basis.N - 1; ++k) {
    double s = 0.0;
    for (int i = 0; i < basis.N; ++i) s += basis.eta[k * basis.N + i] * mu[i];
    q[k] = s;
  }
  return q;
}

// Implicit mean potential: the unique scalar with
// 1^N . (Df^m)^{-1}(Pi q + M 1^N) = varrho. Strictly increasing in M.
inline double solve_M(const ThermoFamily& fam, const Basis& basis,
                      double varrho, const Vec& q) {
  if (!(varrho > 0.0)) throw std::domain_error("solve_M: varrho must be positive");
  const Vec base = basis.apply_Pi(q);
  auto total_of = [&](double Mval) {
    Vec mu(base);
    for (double& v : mu) v += Mval;
    const Vec rho = potentials_to_densities(fam, mu);
    double total = 0.0;
    for (double r : rho) total += r;
    return total;
  };
  auto F = [&](double Mval) { return total_of(Mval) - varrho; };
  // d(total)/dM = 1 . (D2f)^-1 1 along mu = Pi q + M 1^N
  auto dF = [&](double Mval) {
    Vec mu(base);
    for (double& v : mu) v += Mval;
    const Vec rho = potentials_to_densities(fam, mu);
    const Vec ones(fam.spec.N, 1.0);
    const Vec dir = solve_dense(hessian(fam, rho), ones);
    double s = 0.0;
    for (double d : dir) s += d;
    return s;
  };
  double lo = -1.0, hi = 1.0;
  expand_bracket(F, lo, hi, [](double x) { return 2.0 * x - 1.0; },
                 [](double x) { return 2.0 * x + 1.0; });
  RootOptions ro;
  ro.abs_tol = 1e-11 * varrho;
  return find_root_bracketed(F, dF, lo, hi, ro);
}

struct StateFromQ {
  Vec rho;      // R(varrho, q)
  double pi;    // P_m(varrho, q)
  double Mval;  // eta^N . mu
};

// Pressure map P_m and density map R for the compressible family.
inline StateFromQ state_from_q(const ThermoFamily& fam, const Basis& basis,
                               double varrho, const Vec& q) {
  StateFromQ out;
  out.Mval = solve_M(fam, basis, varrho, q);
  Vec mu = basis.apply_Pi(q);
  for (double& v : mu) v += out.Mval;
  out.rho = potentials_to_densities(fam, mu, &out.pi);
  return out;
}

inline double P_m(const ThermoFamily& fam, const Basis& basis, double varrho,
                  const Vec& q) {
  return state_from_q(fam, basis, varrho, q).pi;
}

inline Vec R_map(const ThermoFamily& fam, const Basis& basis, double varrho,
                 const Vec& q) {
  return state_from_q(fam, basis, varrho, q).rho;
}

struct IncompInvert {
  Vec rho;   // on the constraint surface rho.vbar = 1 exactly
  double p;  // conjugate value (f^inf)*(w)
  Vec x;
};

// Conjugate of the singular incompressible free energy: solves
//   sum_i exp((M_i/RT)(w_i - p vbar_i)) = 1
// for the unique p (strictly decreasing), via the log-sum-exp form where the
// equation is piecewise nearly affine in p and Newton converges globally.
inline IncompInvert incompressible_invert(const MixtureSpec& spec, const Vec& w) {
  auto G = [&](double p) {
    double a = -std::numeric_limits<double>::infinity();
    Vec e(spec.N);
    for (int i = 0; i < spec.N; ++i) {
      e[i] = spec.M[i] / spec.RT * (w[i] - p * spec.vbar[i]);
      a = std::max(a, e[i]);
    }
    double Z = 0.0;
    for (int i = 0; i < spec.N; ++i) Z += std::exp(e[i] - a);
    return a + std::log(Z);
  };
  auto dG = [&](double p) {
    double a = -std::numeric_limits<double>::infinity();
    Vec e(spec.N);
    for (int i = 0; i < spec.N; ++i) {
      e[i] = spec.M[i] / spec.RT * (w[i] - p * spec.vbar[i]);
      a = std::max(a, e[i]);
    }
    double Z = 0.0, W = 0.0;
    for (int i = 0; i < spec.N; ++i) {
      const double wgt = std::exp(e[i] - a);
      Z += wgt;
      W -= wgt * spec.M[i] * spec.vbar[i] / spec.RT;
    }
    return W / Z;
  };
  double lo = -1.0, hi = 1.0;
  expand_bracket(G, lo, hi, [](double x) { return 2.0 * x - 1.0; },
                 [](double x) { return 2.0 * x + 1.0; });
  double scale = 1.0;
  for (int i = 0; i < spec.N; ++i)
    scale = std::max(scale, std::fabs(spec.M[i] * w[i] / spec.RT));
  RootOptions ro;
  ro.abs_tol = 1e-14 * scale + 1e-14;
  IncompInvert out;
  out.p = find_root_bracketed(G, dG, lo, hi, ro);
  out.x.resize(spec.N);
  double molar_vol = 0.0;
  for (int i = 0; i < spec.N; ++i) {
    out.x[i] = std::exp(spec.M[i] / spec.RT * (w[i] - out.p * spec.vbar[i]));
    molar_vol += spec.M[i] * out.x[i] * spec.vbar[i];
  }
  const double n = 1.0 / molar_vol;
  out.rho.resize(spec.N);
  for (int i = 0; i < spec.N; ++i) out.rho[i] = n * spec.M[i] * out.x[i];
  return out;
}

struct IncompPoint {
  Vec rho;   // R^inf(varrho, q'), with rho.vbar = 1 exactly
  double p;  // P^inf(varrho, q'), pressure head without the zeta gauge part
};

// Incompressible maps: finds M with sum_i rho_i = varrho for the state
// inverted from Pi' q' + M 1^N. varrho must lie in (rho_min, rho_max).
inline IncompPoint incompressible_state(const MixtureSpec& spec, const Basis& basis,
                                        double varrho, const Vec& qprime) {
  if ((int)qprime.size() != spec.N - 2)
    throw std::invalid_argument("incompressible_state: qprime must have length N-2");
  if (!(varrho > spec.rho_min() && varrho < spec.rho_max()))
    throw std::domain_error(
        "incompressible_state: varrho outside (rho_min, rho_max) is infeasible");
  Vec base(spec.N, 0.0);
  for (int k = 0; k < spec.N - 2; ++k)
    for (int i = 0; i < spec.N; ++i) base[i] += basis.xi[i * spec.N + k] * qprime[k];
  auto F = [&](double Mval) {
    Vec w(base);
    for (double& v : w) v += Mval;
    const IncompInvert inv = incompressible_invert(spec, w);
    double total = 0.0;
    for (double r : inv.rho) total += r;
    return total - varrho;
  };
  double lo = -1.0, hi = 1.0;
  expand_bracket(F, lo, hi, [](double x) { return 2.0 * x - 1.0; },
                 [](double x) { return 2.0 * x + 1.0; });
  RootOptions ro;
  ro.abs_tol = 1e-12 * varrho;
  const double Mval = find_root_bracketed(F, nullptr, lo, hi, ro);
  Vec w(base);
  for (double& v : w) v += Mval;
  const IncompInvert inv = incompressible_invert(spec, w);
  return {inv.rho, inv.p};
}

inline double P_inf(const MixtureSpec& spec, const Basis& basis, double varrho,
                    const Vec& qprime) {
  return incompressible_state(spec, basis, varrho, qprime).p;
}

inline Vec R_inf(const MixtureSpec& spec, const Basis& basis, double varrho,
                 const Vec& qprime) {
  return incompressible_state(spec, basis, varrho, qprime).rho;
}

// Minimum-norm eta with eta.vbar = 1 and eta.1 = 0.
inline GaugeVector gauge_eta(const Vec& vbar) {
  const int N = (int)vbar.size();
  {
    bool parallel = true;
    for (int i = 1; i < N; ++i)
      if (std::fabs(vbar[i] - vbar[0]) > 1e-12 * std::fabs(vbar[0])) parallel = false;
    if (parallel)
      throw std::invalid_argument("gauge_eta: vbar parallel to 1^N has no gauge vector");
  }
  const Vec ones(N, 1.0);
  const double vv = dot(vbar, vbar);
  const double v1 = dot(vbar, ones);
  Mat A = {vv, v1, v1, (double)N};
  const Vec lam = solve_dense(A, {1.0, 0.0});
  GaugeVector g;
  g.eta_g.resize(N);
  for (int i = 0; i < N; ++i) g.eta_g[i] = lam[0] * vbar[i] + lam[1];
  return g;
}

// Constant zeta_bar so that p + zeta_bar satisfies the mean-value rule
//   int (p + zeta_bar) dx = -RT sum_i (eta_i/M_i) int ln x_i(rho) dx
// under the midpoint quadrature of the caller's grid (fields are
// cell-centered samples, uniform spacing).
inline double gauge_shift(const MixtureSpec& spec, const GaugeVector& gauge,
                          const Vec& p_field, const std::vector<Vec>& rho_field) {
  if (p_field.size() != rho_field.size())
    throw std::invalid_argument("gauge_shift: field size mismatch");
  const std::size_t n = p_field.size();
  double target = 0.0, mean_p = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const Fractions fr = fractions(spec, rho_field[j]);
    for (int i = 0; i < spec.N; ++i)
      target -= spec.RT * gauge.eta_g[i] / spec.M[i] * std::log(fr.x[i]);
    mean_p += p_field[j];
  }
  return (target - mean_p) / (double)n;
}

}  // namespace mixlim
