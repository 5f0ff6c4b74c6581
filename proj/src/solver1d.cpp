#include "mixlim/solver1d.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mixlim {

namespace {

struct Workspace {
  Basis basis;
  GaugeVector gauge;
  double floor;  // density clip level
  double visc;   // 2 eta + lambda
  ThermoFamily fam;

  explicit Workspace(const RunConfig& cfg)
      : basis(make_basis(cfg.spec.vbar)),
        gauge(gauge_eta(cfg.spec.vbar)),
        floor(1e-12 * cfg.spec.rho_max()),
        visc(2.0 * cfg.spec.eta_visc + cfg.spec.lambda_visc),
        fam(cfg.family()) {}
};

// preallocated work buffers for the flux kernels (no per-face allocation)
struct Scratch {
  Vec cell, lnx, w, Mw, rho_face, gradq;
  Mat M;
  Vec flux;          // (n+1) * N
  Vec gmom, pface;   // n+1
  Vec drho1, dmom1;  // stage buffers
  Vec rho1, mom1, v1, mom;

  void size_for(int n, int N) {
    cell.assign(N, 0.0);
    lnx.assign(N, 0.0);
    w.assign(N, 0.0);
    Mw.assign(N, 0.0);
    rho_face.assign(N, 0.0);
    gradq.assign(std::max(1, N - 1), 0.0);
    M.assign((std::size_t)N * N, 0.0);
    flux.assign((std::size_t)(n + 1) * N, 0.0);
    gmom.assign(n + 1, 0.0);
    pface.assign(n + 1, 0.0);
  }
};

double inf_norm(const Mat& A, int n) {
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::fabs(A[(std::size_t)i * n + j]);
    best = std::max(best, s);
  }
  return best;
}

void check_finite(const Vec& a, const char* what, double t) {
  for (double x : a)
    if (!std::isfinite(x)) {
      std::ostringstream msg;
      msg << "solver blow-up: non-finite " << what << " at t=" << t;
      throw SolverBlowUp(msg.str());
    }
}

// Warm-started equation of state; falls back to the generic solve.
double eos_seeded(const ThermoFamily& fam, const Vec& rho, double seed) {
  const MixtureSpec& spec = fam.spec;
  if (seed > 0.0) {
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
    double lo = seed * 0.97, hi = seed * 1.03;
    double flo = F(lo), fhi = F(hi);
    for (int k = 0; k < 6 && std::signbit(flo) == std::signbit(fhi); ++k) {
      lo *= 0.8;
      hi *= 1.25;
      flo = F(lo);
      fhi = F(hi);
    }
    if (std::signbit(flo) != std::signbit(fhi)) {
      RootOptions ro;
      ro.abs_tol = 1e-12;
      return find_root_bracketed(F, dF, lo, hi, ro);
    }
  }
  return eos_pressure(fam, rho);
}

// Per-cell thermodynamic evaluation of one density/velocity field. Shared by
// the flux assembly, the stability estimate, the energy budget and the
// snapshot writer, so the equation of state is solved once per cell.
struct CellEval {
  int n = 0, N = 0;
  bool incompressible = false;
  Vec pi;               // rescaled pressure pi^m, or P^inf + zeta (gauged)
  Vec Pinf;             // incompressible pressure head (before zeta)
  Vec zeta;             // incompressible elliptic part (gauged)
  double gauge_value = 0.0;
  Vec K;                // stiffness -1/sum rho_i (g_i^m)''
  Vec f;                // free energy density
  Vec varrho;
  std::vector<Vec> q;   // entropic variables: N-1 (compressible), N-2 (q')
  std::vector<Vec> mu;  // chemical potentials
  std::vector<Vec> x;   // mole fractions
  Vec molar;            // total molar concentration
  Vec p_seed;           // EOS warm starts

  void size_for(int n_, int N_, bool inc) {
    if (n == n_ && N == N_ && incompressible == inc) return;
    n = n_;
    N = N_;
    incompressible = inc;
    pi.assign(n, 0.0);
    Pinf.assign(n, 0.0);
    zeta.assign(n, 0.0);
    K.assign(n, 0.0);
    f.assign(n, 0.0);
    varrho.assign(n, 0.0);
    q.assign(n, Vec(inc ? std::max(0, N - 2) : N - 1, 0.0));
    mu.assign(n, Vec(N, 0.0));
    x.assign(n, Vec(N, 0.0));
    molar.assign(n, 0.0);
    if ((int)p_seed.size() != n) p_seed.assign(n, 1.0);
  }
};

void eval_cells_compressible(const RunConfig& cfg, const Workspace& ws,
                             const Vec& rho, CellEval& ce, Scratch& sc) {
  const int n = cfg.grid.n, N = cfg.spec.N;
  ce.size_for(n, N, false);
  for (int j = 0; j < n; ++j) {
    double varrho = 0.0, molar = 0.0;
    for (int i = 0; i < N; ++i) {
      sc.cell[i] = rho[(std::size_t)j * N + i];
      varrho += sc.cell[i];
      molar += sc.cell[i] / cfg.spec.M[i];
    }
    const double p = eos_seeded(ws.fam, sc.cell, ce.p_seed[j]);
    ce.p_seed[j] = p;
    const double pi = cfg.m * (p - 1.0);
    ce.pi[j] = pi;
    ce.varrho[j] = varrho;
    ce.molar[j] = molar;
    double denom = 0.0, fval = -pi;
    for (int i = 0; i < N; ++i) {
      const double xi = sc.cell[i] / (cfg.spec.M[i] * molar);
      ce.x[j][i] = xi;
      const GEval g = gm_eval(ws.fam, i, pi);
      denom += sc.cell[i] * g.d2;
      const double ki = cfg.spec.RT / cfg.spec.M[i] * std::log(xi);
      ce.mu[j][i] = g.value + ki;
      fval += sc.cell[i] * (g.value + ki);
    }
    ce.K[j] = -1.0 / denom;
    ce.f[j] = fval;
    for (int k = 0; k < N - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i < N; ++i) s += ws.basis.eta[k * N + i] * ce.mu[j][i];
      ce.q[j][k] = s;
    }
  }
}

// Incompressible counterpart; also solves the face closure for zeta and
// applies the mean-value gauge. The reduced entropic coordinates are
// (q'_1..q'_{N-2}); the elliptic direction is carried by zeta.
void eval_cells_incompressible(const RunConfig& cfg, const Workspace& ws,
                               const Vec& rho, const Vec& v, CellEval& ce,
                               Scratch& sc) {
  const int n = cfg.grid.n, N = cfg.spec.N;
  const double dx = cfg.grid.dx();
  ce.size_for(n, N, true);
  for (int j = 0; j < n; ++j) {
    double varrho = 0.0, molar = 0.0;
    for (int i = 0; i < N; ++i) {
      sc.cell[i] = rho[(std::size_t)j * N + i];
      if (!(sc.cell[i] > 0.0))
        throw SolverBlowUp(
            "step_incompressible: density left the positive cone "
            "(constraint-infeasible state)");
      varrho += sc.cell[i];
      molar += sc.cell[i] / cfg.spec.M[i];
    }
    ce.varrho[j] = varrho;
    ce.molar[j] = molar;
    double fval = 0.0;
    for (int i = 0; i < N; ++i) {
      const double xi = sc.cell[i] / (cfg.spec.M[i] * molar);
      ce.x[j][i] = xi;
      sc.lnx[i] = cfg.spec.RT / cfg.spec.M[i] * std::log(xi);
      fval += sc.cell[i] * sc.lnx[i];
    }
    ce.f[j] = fval;
    for (int k = 0; k < N - 2; ++k) {
      double s = 0.0;
      for (int i = 0; i < N; ++i) s += ws.basis.eta[k * N + i] * sc.lnx[i];
      ce.q[j][k] = s;
    }
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += ws.basis.eta[(N - 2) * N + i] * sc.lnx[i];
    ce.Pinf[j] = -s;
  }
  // face closure  d dzeta/dx = v_face - sum_l A_l dq'_l/dx  -> zeta
  ce.zeta[0] = 0.0;
  for (int f = 1; f < n; ++f) {
    const int jL = f - 1, jR = f;
    const double vface = 0.5 * (v[jL] + v[jR]);
    for (int i = 0; i < N; ++i)
      sc.rho_face[i] =
          0.5 * (rho[(std::size_t)jL * N + i] + rho[(std::size_t)jR * N + i]);
    mobility_into(cfg.mobility, sc.rho_face, sc.M);
    double d = 0.0;
    for (int a = 0; a < N; ++a) {
      double s = 0.0;
      for (int b = 0; b < N; ++b) s += sc.M[(std::size_t)a * N + b] * cfg.spec.vbar[b];
      sc.Mw[a] = s;  // M vbar
      d += cfg.spec.vbar[a] * s;
    }
    if (!(d > 1e-300))
      throw SolverBlowUp("step_incompressible: degenerate volume mobility d = 0");
    double volrest = 0.0;
    for (int k = 0; k < N - 2; ++k) {
      double xMv = 0.0;
      for (int i = 0; i < N; ++i) xMv += ws.basis.xi[i * N + k] * sc.Mw[i];
      volrest += xMv * (ce.q[jR][k] - ce.q[jL][k]) / dx;
    }
    ce.zeta[f] = ce.zeta[f - 1] + dx * (vface - volrest) / d;
  }
  // mean-value gauge on the reported pressure P^inf + zeta
  double target = 0.0, mean_p = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < N; ++i)
      target -= cfg.spec.RT * ws.gauge.eta_g[i] / cfg.spec.M[i] *
                std::log(ce.x[j][i]);
    mean_p += ce.Pinf[j] + ce.zeta[j];
  }
  ce.gauge_value = (target - mean_p) / (double)n;
  for (int j = 0; j < n; ++j) {
    ce.zeta[j] += ce.gauge_value;
    ce.pi[j] = ce.Pinf[j] + ce.zeta[j];
    for (int i = 0; i < N; ++i)
      ce.mu[j][i] = ce.pi[j] * cfg.spec.vbar[i] +
                    cfg.spec.RT / cfg.spec.M[i] * std::log(ce.x[j][i]);
  }
}

// ---------------------------------------------------------------------------
// flux assembly (forward-Euler stage right-hand sides)
// ---------------------------------------------------------------------------

void rhs_compressible(const RunConfig& cfg, const Workspace& ws, const Vec& rho,
                      const Vec& v, const CellEval& ce, Scratch& sc, Vec& drho,
                      Vec& dmom) {
  const int n = cfg.grid.n, N = cfg.spec.N;
  const double dx = cfg.grid.dx();
  for (int f = 1; f < n; ++f) {
    const int jL = f - 1, jR = f;
    const double vface = 0.5 * (v[jL] + v[jR]);
    const int up = vface >= 0.0 ? jL : jR;
    for (int i = 0; i < N; ++i)
      sc.rho_face[i] =
          0.5 * (rho[(std::size_t)jL * N + i] + rho[(std::size_t)jR * N + i]);
    // w = Pi grad q, diffusive flux J = -M w
    for (int i = 0; i < N; ++i) {
      double s = 0.0;
      for (int k = 0; k < N - 1; ++k)
        s += ws.basis.xi[i * N + k] * (ce.q[jR][k] - ce.q[jL][k]);
      sc.w[i] = s / dx;
    }
    mobility_into(cfg.mobility, sc.rho_face, sc.M);
    for (int i = 0; i < N; ++i) {
      double s = 0.0;
      for (int b = 0; b < N; ++b) s += sc.M[(std::size_t)i * N + b] * sc.w[b];
      sc.flux[(std::size_t)f * N + i] = vface * rho[(std::size_t)up * N + i] - s;
    }
    sc.gmom[f] = vface * ce.varrho[up] * v[up] - ws.visc * (v[jR] - v[jL]) / dx;
    sc.pface[f] = 0.5 * (ce.pi[jL] + ce.pi[jR]);
  }
  for (int i = 0; i < N; ++i) {
    sc.flux[i] = 0.0;
    sc.flux[(std::size_t)n * N + i] = 0.0;
  }
  sc.gmom[0] = -ws.visc * (2.0 * v[0]) / dx;      // ghost v = -v[0]
  sc.gmom[n] = ws.visc * (2.0 * v[n - 1]) / dx;   // ghost v = -v[n-1]
  sc.pface[0] = ce.pi[0];
  sc.pface[n] = ce.pi[n - 1];

  drho.resize((std::size_t)n * N);
  dmom.resize(n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < N; ++i)
      drho[(std::size_t)j * N + i] = -(sc.flux[(std::size_t)(j + 1) * N + i] -
                                       sc.flux[(std::size_t)j * N + i]) /
                                     dx;
    dmom[j] = -(sc.gmom[j + 1] - sc.gmom[j]) / dx -
              (sc.pface[j + 1] - sc.pface[j]) / dx + ce.varrho[j] * cfg.body_force;
  }
}

// Species fluxes carry rho_upw * v + J with J = -M (Pi' grad q' + vbar dzeta);
// the face closure makes the vbar-weighted flux vanish identically, so the
// per-cell constraint rho . vbar = 1 is transported exactly.
void rhs_incompressible(const RunConfig& cfg, const Workspace& ws, const Vec& rho,
                        const Vec& v, const CellEval& ce, Scratch& sc, Vec& drho,
                        Vec& dmom) {
  const int n = cfg.grid.n, N = cfg.spec.N;
  const double dx = cfg.grid.dx();
  for (int f = 1; f < n; ++f) {
    const int jL = f - 1, jR = f;
    const double vface = 0.5 * (v[jL] + v[jR]);
    const int up = vface >= 0.0 ? jL : jR;
    for (int i = 0; i < N; ++i)
      sc.rho_face[i] =
          0.5 * (rho[(std::size_t)jL * N + i] + rho[(std::size_t)jR * N + i]);
    mobility_into(cfg.mobility, sc.rho_face, sc.M);
    const double dzeta = (ce.zeta[jR] - ce.zeta[jL]) / dx;
    for (int i = 0; i < N; ++i) {
      double s = cfg.spec.vbar[i] * dzeta;
      for (int k = 0; k < N - 2; ++k)
        s += ws.basis.xi[i * N + k] * (ce.q[jR][k] - ce.q[jL][k]) / dx;
      sc.w[i] = s;
    }
    for (int i = 0; i < N; ++i) {
      double s = 0.0;
      for (int b = 0; b < N; ++b) s += sc.M[(std::size_t)i * N + b] * sc.w[b];
      sc.flux[(std::size_t)f * N + i] = vface * rho[(std::size_t)up * N + i] - s;
    }
    sc.gmom[f] = vface * ce.varrho[up] * v[up] - ws.visc * (v[jR] - v[jL]) / dx;
    sc.pface[f] = 0.5 * (ce.pi[jL] + ce.pi[jR]);
  }
  for (int i = 0; i < N; ++i) {
    sc.flux[i] = 0.0;
    sc.flux[(std::size_t)n * N + i] = 0.0;
  }
  sc.gmom[0] = -ws.visc * (2.0 * v[0]) / dx;
  sc.gmom[n] = ws.visc * (2.0 * v[n - 1]) / dx;
  sc.pface[0] = ce.pi[0];
  sc.pface[n] = ce.pi[n - 1];

  drho.resize((std::size_t)n * N);
  dmom.resize(n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < N; ++i)
      drho[(std::size_t)j * N + i] = -(sc.flux[(std::size_t)(j + 1) * N + i] -
                                       sc.flux[(std::size_t)j * N + i]) /
                                     dx;
    dmom[j] = -(sc.gmom[j + 1] - sc.gmom[j]) / dx -
              (sc.pface[j + 1] - sc.pface[j]) / dx + ce.varrho[j] * cfg.body_force;
  }
}

long clip_densities(Vec& rho, double floor) {
  long clips = 0;
  for (double& r : rho)
    if (r < floor) {
      r = floor;
      ++clips;
    }
  return clips;
}

void primitive_v(const Vec& rho, const Vec& mom, int n, int N, Vec& v) {
  v.resize(n);
  for (int j = 0; j < n; ++j) {
    double varrho = 0.0;
    for (int i = 0; i < N; ++i) varrho += rho[(std::size_t)j * N + i];
    v[j] = mom[j] / varrho;
  }
}

// ---------------------------------------------------------------------------
// stability estimates
// ---------------------------------------------------------------------------

double dt_from_eval_compressible(const RunConfig& cfg, const Workspace& ws,
                                 const Vec& v, const CellEval& ce) {
  const int n = ce.n, N = ce.N;
  const double dx = cfg.grid.dx();
  double vmax = 0.0, c2max = 0.0, diff_max = 0.0;
  double varrho_floor = std::numeric_limits<double>::max();
  Vec cell(N), ups(N);
  Mat h((std::size_t)N * N);
  for (int j = 0; j < n; ++j) {
    vmax = std::max(vmax, std::fabs(v[j]));
    varrho_floor = std::min(varrho_floor, ce.varrho[j]);
    c2max = std::max(c2max, ce.K[j] / ce.varrho[j]);
    for (int i = 0; i < N; ++i) {
      ups[i] = gm_eval(ws.fam, i, ce.pi[j]).d1;
      cell[i] = ce.x[j][i] * cfg.spec.M[i] * ce.molar[j];
    }
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        const double delta = (a == b) ? 1.0 / ce.x[j][a] : 0.0;
        h[(std::size_t)a * N + b] =
            ce.K[j] * ups[a] * ups[b] +
            cfg.spec.RT / (cfg.spec.M[a] * cfg.spec.M[b] * ce.molar[j]) *
                (delta - 1.0);
      }
    const Mat Mt = onsager_reduced(ws.basis, cfg.mobility, cell);
    diff_max = std::max(diff_max, inf_norm(Mt, N - 1) * inf_norm(h, N));
  }
  const double t_ac = dx / (vmax + std::sqrt(c2max));
  const double t_diff = diff_max > 0.0
                            ? dx * dx * varrho_floor / (2.0 * diff_max)
                            : std::numeric_limits<double>::max();
  const double t_visc = dx * dx * varrho_floor / (2.0 * ws.visc);
  return cfg.cfl * std::min({t_ac, t_diff, t_visc});
}

double dt_from_eval_incompressible(const RunConfig& cfg, const Workspace& ws,
                                   const Vec& rho, const Vec& v,
                                   const CellEval& ce) {
  const int n = ce.n, N = ce.N;
  const double dx = cfg.grid.dx();
  double vmax = 0.0, c2max = 0.0, diff_max = 0.0, amp_max = 1.0;
  double varrho_floor = std::numeric_limits<double>::max();
  double d_min = std::numeric_limits<double>::max();
  Vec cell(N);
  for (int j = 0; j < n; ++j) {
    vmax = std::max(vmax, std::fabs(v[j]));
    varrho_floor = std::min(varrho_floor, ce.varrho[j]);
    for (int i = 0; i < N; ++i) cell[i] = rho[(std::size_t)j * N + i];
    // composition wave speed: along fixed q', differentiating the conjugate
    // relations gives dP^inf/dvarrho = varrho B / sum M_i^2 x_i (1-varrho vbar_i)^2/RT
    // with B = sum M_i x_i vbar_i
    {
      const double varrho = ce.varrho[j];
      double B = 0.0, S = 0.0;
      for (int i = 0; i < N; ++i) {
        B += cfg.spec.M[i] * ce.x[j][i] * cfg.spec.vbar[i];
        const double dev = 1.0 - varrho * cfg.spec.vbar[i];
        S += cfg.spec.M[i] * cfg.spec.M[i] * ce.x[j][i] * dev * dev / cfg.spec.RT;
      }
      if (S > 0.0) c2max = std::max(c2max, varrho * B / S);
    }
    // species diffusion through the reduced mobility, composition part only
    const Mat Mt = onsager_reduced(ws.basis, cfg.mobility, cell);
    const Mat d2k = mix_entropy(cfg.spec, cell).d2k;
    diff_max = std::max(diff_max, inf_norm(Mt, N - 1) * inf_norm(d2k, N));
    // zeta-coupled species transport amplifies the advective speed
    const Mat M = mobility(cfg.mobility, cell);
    const Vec Mv = matvec(M, cfg.spec.vbar);
    const double d = dot(cfg.spec.vbar, Mv);
    d_min = std::min(d_min, d);
    double mvmax = 0.0;
    for (double xx : Mv) mvmax = std::max(mvmax, std::fabs(xx));
    if (d > 0.0) amp_max = std::max(amp_max, 1.0 + mvmax / d);
  }
  const double t_ac = dx / (amp_max * vmax + std::sqrt(c2max));
  const double t_diff = diff_max > 0.0
                            ? dx * dx * varrho_floor / (2.0 * diff_max)
                            : std::numeric_limits<double>::max();
  const double t_visc = dx * dx * varrho_floor / (2.0 * ws.visc);
  // the zeta closure contributes a -v/d drag to momentum with relaxation
  // time varrho * d, an extra explicit step limit
  const double t_drag = varrho_floor * d_min;
  return cfg.cfl * std::min({t_ac, t_diff, t_visc, t_drag});
}

// ---------------------------------------------------------------------------
// energy budget rates computed from a cell evaluation
// ---------------------------------------------------------------------------

struct BudgetRates {
  double E_tot = 0.0;
  double D_visc = 0.0;
  double D_diff = 0.0;
  double work = 0.0;
};

BudgetRates budget_from_eval(const RunConfig& cfg, const Workspace& ws,
                             const Vec& rho, const Vec& v, const CellEval& ce,
                             Scratch& sc) {
  const int n = ce.n, N = ce.N;
  const double dx = cfg.grid.dx();
  BudgetRates br;
  for (int j = 0; j < n; ++j) {
    br.E_tot += dx * (0.5 * ce.varrho[j] * v[j] * v[j] + ce.f[j]);
    br.work += dx * ce.varrho[j] * cfg.body_force * v[j];
  }
  const double wall0 = 2.0 * v[0] / dx, wall1 = 2.0 * v[n - 1] / dx;
  br.D_visc += 0.5 * ws.visc * dx * (wall0 * wall0 + wall1 * wall1);
  for (int f = 1; f < n; ++f) {
    const int jL = f - 1, jR = f;
    const double dv = (v[jR] - v[jL]) / dx;
    br.D_visc += ws.visc * dv * dv * dx;
    for (int i = 0; i < N; ++i)
      sc.rho_face[i] = 0.5 * (std::max(rho[(std::size_t)jL * N + i], ws.floor) +
                              std::max(rho[(std::size_t)jR * N + i], ws.floor));
    // w = Pi grad of the full (N-1)-dim entropic gradient; for the
    // incompressible run the elliptic direction carries grad zeta
    if (ce.incompressible) {
      const double dzeta = (ce.zeta[jR] - ce.zeta[jL]) / dx;
      for (int i = 0; i < N; ++i) {
        double s = cfg.spec.vbar[i] * dzeta;
        for (int k = 0; k < N - 2; ++k)
          s += ws.basis.xi[i * N + k] * (ce.q[jR][k] - ce.q[jL][k]) / dx;
        sc.w[i] = s;
      }
    } else {
      for (int i = 0; i < N; ++i) {
        double s = 0.0;
        for (int k = 0; k < N - 1; ++k)
          s += ws.basis.xi[i * N + k] * (ce.q[jR][k] - ce.q[jL][k]);
        sc.w[i] = s / dx;
      }
    }
    mobility_into(cfg.mobility, sc.rho_face, sc.M);
    double diss = 0.0;
    for (int a = 0; a < N; ++a) {
      double s = 0.0;
      for (int b = 0; b < N; ++b) s += sc.M[(std::size_t)a * N + b] * sc.w[b];
      diss += sc.w[a] * s;
    }
    br.D_diff += diss * dx;
  }
  return br;
}

// post-step integrity of the incompressible state
struct IncompResiduals {
  double constraint = 0.0;
  double gauge = 0.0;
  double div_closure = 0.0;
};

IncompResiduals incompressible_residuals(const RunConfig& cfg, const Workspace& ws,
                                         const Vec& rho, const Vec& v,
                                         const CellEval& ce, Scratch& sc) {
  const int n = ce.n, N = ce.N;
  const double dx = cfg.grid.dx();
  IncompResiduals res;
  for (int j = 0; j < n; ++j) {
    double wsum = 0.0;
    for (int i = 0; i < N; ++i)
      wsum += rho[(std::size_t)j * N + i] * cfg.spec.vbar[i];
    res.constraint = std::max(res.constraint, std::fabs(wsum - 1.0));
  }
  double target = 0.0, mean_p = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < N; ++i)
      target -= cfg.spec.RT * ws.gauge.eta_g[i] / cfg.spec.M[i] *
                std::log(ce.x[j][i]);
    mean_p += ce.pi[j];
  }
  res.gauge = std::fabs(mean_p - target) * dx;
  // cell-centered consistency of div v = d/dx (d dzeta/dx + sum A dq'/dx);
  // stencils independent of the face construction, so this reports the
  // O(dx) discretization gap rather than the built-in identity
  auto volflux_face = [&](int f) {
    const int jL = f - 1, jR = f;
    for (int i = 0; i < N; ++i)
      sc.rho_face[i] =
          0.5 * (rho[(std::size_t)jL * N + i] + rho[(std::size_t)jR * N + i]);
    mobility_into(cfg.mobility, sc.rho_face, sc.M);
    for (int a = 0; a < N; ++a) {
      double s = 0.0;
      for (int b = 0; b < N; ++b)
        s += sc.M[(std::size_t)a * N + b] * cfg.spec.vbar[b];
      sc.Mw[a] = s;
    }
    double s = 0.0;
    for (int a = 0; a < N; ++a) s += cfg.spec.vbar[a] * sc.Mw[a];
    s *= (ce.zeta[jR] - ce.zeta[jL]) / dx;
    for (int k = 0; k < N - 2; ++k) {
      double xMv = 0.0;
      for (int i = 0; i < N; ++i) xMv += ws.basis.xi[i * N + k] * sc.Mw[i];
      s += xMv * (ce.q[jR][k] - ce.q[jL][k]) / dx;
    }
    return s;
  };
  double prev = volflux_face(1);
  for (int j = 1; j + 1 < n; ++j) {
    const double dv = (v[j + 1] - v[j - 1]) / (2.0 * dx);
    const double next = volflux_face(j + 1);
    const double dvol = (next - prev) / dx;
    prev = next;
    res.div_closure = std::max(res.div_closure, std::fabs(dv - dvol));
  }
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------
// public surface
// ---------------------------------------------------------------------------

Vec well_prepared_initial(const MixtureSpec& spec, const Grid1D& grid,
                          double amplitude, int mode) {
  spec.validate();
  grid.validate();
  if (amplitude < 0.0 || amplitude >= 1.0 / (double)spec.N)
    throw std::invalid_argument(
        "well_prepared_initial: amplitude must lie in [0, 1/N) to keep "
        "densities positive");
  const int n = grid.n, N = spec.N;
  Vec rho((std::size_t)n * N);
  for (int j = 0; j < n; ++j) {
    const double c = std::cos(2.0 * M_PI * mode * grid.x_center(j) / grid.L);
    for (int i = 0; i < N; ++i) {
      double ci = 0.0;
      if (i == 0) ci = 1.0;
      if (i == N - 1) ci = -1.0;
      const double phi = 1.0 / (double)N + amplitude * ci * c;  // volume fraction
      rho[(std::size_t)j * N + i] = phi / spec.vbar[i];
    }
  }
  return rho;
}

FieldState make_compressible_state(const RunConfig& cfg) {
  FieldState s;
  s.n = cfg.grid.n;
  s.N = cfg.spec.N;
  s.rho = well_prepared_initial(cfg.spec, cfg.grid, cfg.initial.amplitude,
                                cfg.initial.mode);
  s.v.assign(s.n, 0.0);
  return s;
}

IncompState make_incompressible_state(const RunConfig& cfg) {
  IncompState s;
  s.n = cfg.grid.n;
  s.N = cfg.spec.N;
  s.rho = well_prepared_initial(cfg.spec, cfg.grid, cfg.initial.amplitude,
                                cfg.initial.mode);
  s.v.assign(s.n, 0.0);
  s.zeta.assign(s.n, 0.0);
  return s;
}

double dt_stable(const RunConfig& cfg, const FieldState& state) {
  const Workspace ws(cfg);
  check_finite(state.rho, "density", state.t);
  check_finite(state.v, "velocity", state.t);
  Scratch sc;
  sc.size_for(state.n, state.N);
  CellEval ce;
  Vec clipped = state.rho;
  clip_densities(clipped, ws.floor);
  eval_cells_compressible(cfg, ws, clipped, ce, sc);
  return dt_from_eval_compressible(cfg, ws, state.v, ce);
}

double dt_stable_incompressible(const RunConfig& cfg, const IncompState& state) {
  const Workspace ws(cfg);
  check_finite(state.rho, "density", state.t);
  check_finite(state.v, "velocity", state.t);
  Scratch sc;
  sc.size_for(state.n, state.N);
  CellEval ce;
  eval_cells_incompressible(cfg, ws, state.rho, state.v, ce, sc);
  return dt_from_eval_incompressible(cfg, ws, state.rho, state.v, ce);
}

namespace {

void step_compressible_ws(const RunConfig& cfg, const Workspace& ws,
                          FieldState& state, CellEval& ce, Scratch& sc,
                          double dt) {
  const int n = state.n, N = state.N;
  sc.mom.resize(n);
  for (int j = 0; j < n; ++j) sc.mom[j] = ce.varrho[j] * state.v[j];
  rhs_compressible(cfg, ws, state.rho, state.v, ce, sc, sc.drho1, sc.dmom1);
  sc.rho1 = state.rho;
  sc.mom1 = sc.mom;
  for (std::size_t k = 0; k < sc.rho1.size(); ++k) sc.rho1[k] += dt * sc.drho1[k];
  for (int j = 0; j < n; ++j) sc.mom1[j] += dt * sc.dmom1[j];
  state.clip_count += clip_densities(sc.rho1, ws.floor);
  primitive_v(sc.rho1, sc.mom1, n, N, sc.v1);
  eval_cells_compressible(cfg, ws, sc.rho1, ce, sc);
  rhs_compressible(cfg, ws, sc.rho1, sc.v1, ce, sc, sc.drho1, sc.dmom1);
  for (std::size_t k = 0; k < sc.rho1.size(); ++k)
    state.rho[k] = 0.5 * (state.rho[k] + sc.rho1[k] + dt * sc.drho1[k]);
  for (int j = 0; j < n; ++j)
    sc.mom[j] = 0.5 * (sc.mom[j] + sc.mom1[j] + dt * sc.dmom1[j]);
  state.clip_count += clip_densities(state.rho, ws.floor);
  primitive_v(state.rho, sc.mom, n, N, state.v);
  state.t += dt;
  state.last_dt = dt;
  check_finite(state.rho, "density", state.t);
  check_finite(state.v, "velocity", state.t);
  eval_cells_compressible(cfg, ws, state.rho, ce, sc);  // fresh view
}

void step_incompressible_ws(const RunConfig& cfg, const Workspace& ws,
                            IncompState& state, CellEval& ce, Scratch& sc,
                            double dt) {
  const int n = state.n, N = state.N;
  sc.mom.resize(n);
  for (int j = 0; j < n; ++j) sc.mom[j] = ce.varrho[j] * state.v[j];
  rhs_incompressible(cfg, ws, state.rho, state.v, ce, sc, sc.drho1, sc.dmom1);
  sc.rho1 = state.rho;
  sc.mom1 = sc.mom;
  for (std::size_t k = 0; k < sc.rho1.size(); ++k) sc.rho1[k] += dt * sc.drho1[k];
  for (int j = 0; j < n; ++j) sc.mom1[j] += dt * sc.dmom1[j];
  primitive_v(sc.rho1, sc.mom1, n, N, sc.v1);
  eval_cells_incompressible(cfg, ws, sc.rho1, sc.v1, ce, sc);
  rhs_incompressible(cfg, ws, sc.rho1, sc.v1, ce, sc, sc.drho1, sc.dmom1);
  for (std::size_t k = 0; k < sc.rho1.size(); ++k)
    state.rho[k] = 0.5 * (state.rho[k] + sc.rho1[k] + dt * sc.drho1[k]);
  for (int j = 0; j < n; ++j)
    sc.mom[j] = 0.5 * (sc.mom[j] + sc.mom1[j] + dt * sc.dmom1[j]);
  primitive_v(state.rho, sc.mom, n, N, state.v);
  state.t += dt;
  state.last_dt = dt;
  check_finite(state.rho, "density", state.t);
  check_finite(state.v, "velocity", state.t);
  eval_cells_incompressible(cfg, ws, state.rho, state.v, ce, sc);
  state.zeta = ce.zeta;
  state.gauge_value = ce.gauge_value;
}

Snapshot snapshot_from_eval(double t, const Vec& rho, const Vec& v,
                            const CellEval& ce) {
  Snapshot s;
  s.t = t;
  s.v = v;
  const int n = ce.n, N = ce.N;
  s.rho.resize(n);
  s.p.resize(n);
  s.mu = ce.mu;
  for (int j = 0; j < n; ++j) {
    s.rho[j] = Vec(rho.begin() + (std::size_t)j * N,
                   rho.begin() + (std::size_t)(j + 1) * N);
    s.p[j] = ce.pi[j];
  }
  return s;
}

}  // namespace

void step_compressible(const RunConfig& cfg, FieldState& state) {
  const Workspace ws(cfg);
  Scratch sc;
  sc.size_for(state.n, state.N);
  CellEval ce;
  state.clip_count += clip_densities(state.rho, ws.floor);
  eval_cells_compressible(cfg, ws, state.rho, ce, sc);
  const double dt = cfg.dt_override
                        ? *cfg.dt_override
                        : dt_from_eval_compressible(cfg, ws, state.v, ce);
  step_compressible_ws(cfg, ws, state, ce, sc, dt);
}

void step_incompressible(const RunConfig& cfg, IncompState& state) {
  const Workspace ws(cfg);
  Scratch sc;
  sc.size_for(state.n, state.N);
  CellEval ce;
  eval_cells_incompressible(cfg, ws, state.rho, state.v, ce, sc);
  const double dt =
      cfg.dt_override
          ? *cfg.dt_override
          : dt_from_eval_incompressible(cfg, ws, state.rho, state.v, ce);
  step_incompressible_ws(cfg, ws, state, ce, sc, dt);
}

Snapshot snapshot_compressible(const RunConfig& cfg, const FieldState& state) {
  const Workspace ws(cfg);
  Scratch sc;
  sc.size_for(state.n, state.N);
  CellEval ce;
  eval_cells_compressible(cfg, ws, state.rho, ce, sc);
  return snapshot_from_eval(state.t, state.rho, state.v, ce);
}

Snapshot snapshot_incompressible(const RunConfig& cfg, const IncompState& state) {
  const Workspace ws(cfg);
  Scratch sc;
  sc.size_for(state.n, state.N);
  CellEval ce;
  eval_cells_incompressible(cfg, ws, state.rho, state.v, ce, sc);
  return snapshot_from_eval(state.t, state.rho, state.v, ce);
}

RunResult run(const RunConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const Workspace ws(cfg);
  RunResult out;
  const double snap_every =
      cfg.snapshot_every > 0.0 ? cfg.snapshot_every : std::max(cfg.t_end, 1e-300);
  const int dt_refresh = 8;  // stability estimate reused for a few steps

  double E0 = 0.0, Dv_cum = 0.0, Dd_cum = 0.0, work_cum = 0.0;
  bool have_E0 = false;
  auto push_energy = [&](double t, double E_tot) {
    if (!have_E0) {
      E0 = E_tot;
      have_E0 = true;
    }
    EnergyRow row;
    row.t = t;
    row.E_tot = E_tot;
    row.D_visc_cum = Dv_cum;
    row.D_diff_cum = Dd_cum;
    row.work_cum = work_cum;
    row.residual = E_tot + Dv_cum + Dd_cum - E0 - work_cum;
    out.energy.push_back(row);
  };

  const bool inc = cfg.incompressible();
  FieldState cst;
  IncompState ist;
  CellEval ce;
  Scratch sc;
  sc.size_for(cfg.grid.n, cfg.spec.N);
  if (inc) {
    ist = make_incompressible_state(cfg);
    eval_cells_incompressible(cfg, ws, ist.rho, ist.v, ce, sc);
    ist.zeta = ce.zeta;
    ist.gauge_value = ce.gauge_value;
  } else {
    cst = make_compressible_state(cfg);
    eval_cells_compressible(cfg, ws, cst.rho, ce, sc);
  }
  auto cur_t = [&]() { return inc ? ist.t : cst.t; };
  auto cur_rho = [&]() -> const Vec& { return inc ? ist.rho : cst.rho; };
  auto cur_v = [&]() -> const Vec& { return inc ? ist.v : cst.v; };

  out.snaps.push_back(snapshot_from_eval(cur_t(), cur_rho(), cur_v(), ce));
  push_energy(cur_t(), budget_from_eval(cfg, ws, cur_rho(), cur_v(), ce, sc).E_tot);

  double next_snap = snap_every;
  double dt_cached = 0.0;
  long since_refresh = dt_refresh;
  const double t_eps = 1e-14 * std::max(1.0, cfg.t_end);
  while (cur_t() < cfg.t_end - t_eps) {
    if (!cfg.dt_override && since_refresh >= dt_refresh) {
      dt_cached = inc
                      ? dt_from_eval_incompressible(cfg, ws, ist.rho, ist.v, ce)
                      : dt_from_eval_compressible(cfg, ws, cst.v, ce);
      since_refresh = 0;
    }
    ++since_refresh;
    double dt = cfg.dt_override ? *cfg.dt_override : dt_cached;
    dt = std::min(dt, cfg.t_end - cur_t());
    const BudgetRates br = budget_from_eval(cfg, ws, cur_rho(), cur_v(), ce, sc);
    if (inc)
      step_incompressible_ws(cfg, ws, ist, ce, sc, dt);
    else
      step_compressible_ws(cfg, ws, cst, ce, sc, dt);
    Dv_cum += dt * br.D_visc;
    Dd_cum += dt * br.D_diff;
    work_cum += dt * br.work;
    ++out.steps;
    if (inc) {
      const IncompResiduals res =
          incompressible_residuals(cfg, ws, ist.rho, ist.v, ce, sc);
      out.constraint_resid_max = std::max(out.constraint_resid_max, res.constraint);
      out.gauge_resid_max = std::max(out.gauge_resid_max, res.gauge);
      out.div_closure_resid_max =
          std::max(out.div_closure_resid_max, res.div_closure);
    }
    if (cur_t() >= next_snap - 1e-12 || cur_t() >= cfg.t_end - t_eps) {
      out.snaps.push_back(snapshot_from_eval(cur_t(), cur_rho(), cur_v(), ce));
      push_energy(cur_t(),
                  budget_from_eval(cfg, ws, cur_rho(), cur_v(), ce, sc).E_tot);
      while (next_snap <= cur_t() + 1e-12) next_snap += snap_every;
    }
  }
  if (out.snaps.back().t < cur_t() - t_eps) {
    out.snaps.push_back(snapshot_from_eval(cur_t(), cur_rho(), cur_v(), ce));
    push_energy(cur_t(),
                budget_from_eval(cfg, ws, cur_rho(), cur_v(), ce, sc).E_tot);
  }
  if (!inc) out.clip_count = cst.clip_count;
  out.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t_start).count();
  return out;
}

}  // namespace mixlim
