#include "mixlim/audit.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace mixlim {

namespace {

std::string state_string(const Vec& rho) {
  std::ostringstream os;
  os.precision(17);
  os << "rho=[";
  for (std::size_t i = 0; i < rho.size(); ++i) os << (i ? "," : "") << rho[i];
  os << "]";
  return os.str();
}

// uniform sample on the simplex with a 2% floor per component
Vec sample_simplex(std::mt19937_64& rng, int N) {
  std::uniform_real_distribution<double> u(1e-12, 1.0);
  Vec x(N);
  double s = 0.0;
  for (int i = 0; i < N; ++i) {
    x[i] = -std::log(u(rng));
    s += x[i];
  }
  for (int i = 0; i < N; ++i) x[i] = 0.02 + (1.0 - 0.02 * N) * x[i] / s;
  return x;
}

double inf_norm_mat(const Mat& A, int n) {
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    double rs = 0.0;
    for (int j = 0; j < n; ++j) rs += std::fabs(A[(std::size_t)i * n + j]);
    best = std::max(best, rs);
  }
  return best;
}

// density vector with prescribed pressure p and mole fractions x:
// rho_i = M_i x_i / sum_j M_j x_j gbar_j'(p), so that p_hat(rho) = p exactly.
Vec state_at_pressure(const MixtureSpec& spec, const Vec& x, double p) {
  double molar_vol = 0.0;
  for (int i = 0; i < spec.N; ++i)
    molar_vol += spec.M[i] * x[i] * gbar_eval(spec, i, p).d1;
  Vec rho(spec.N);
  for (int i = 0; i < spec.N; ++i) rho[i] = spec.M[i] * x[i] / molar_vol;
  return rho;
}

double norm_inf(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

struct WorstTracker {
  double worst = 0.0;
  std::string state;
  void update(double val, const Vec& rho) {
    if (val > worst) {
      worst = val;
      state = state_string(rho);
    }
  }
};

AuditCheck finish(const std::string& name, long samples, const WorstTracker& wt,
                  double tol) {
  AuditCheck c;
  c.name = name;
  c.samples = samples;
  c.worst = wt.worst;
  c.tol = tol;
  c.pass = wt.worst <= tol;
  c.worst_state = wt.state;
  return c;
}

}  // namespace

AuditReport thermo_audit(const MixtureSpec& spec, long samples, std::uint64_t seed) {
  spec.validate();
  AuditReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ulog(std::log(0.2), std::log(50.0));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const ThermoFamily fam = ThermoFamily::rescaled(spec, 100.0);

  // 1. monotonicity of s -> sum rho_i gbar_i'(s): sampled finite differences
  {
    WorstTracker wt;
    long count = 0;
    const long ns = std::max<long>(64, samples / 16);
    for (long k = 0; k < ns; ++k) {
      const Vec x = sample_simplex(rng, spec.N);
      const Vec rho = state_at_pressure(spec, x, std::exp(ulog(rng)));
      double s_prev = 0.0, F_prev = 0.0;
      for (int g = 0; g <= 24; ++g) {
        const double s = 0.05 * std::pow(40.0 / 0.05, g / 24.0);
        double F = 0.0;
        for (int i = 0; i < spec.N; ++i) F += rho[i] * gbar_eval(spec, i, s).d1;
        if (g > 0) {
          const double slope = (F - F_prev) / (s - s_prev);
          wt.update(slope >= 0.0 ? slope + 1.0 : 0.0, rho);  // any >= 0 slope fails
          ++count;
        }
        s_prev = s;
        F_prev = F;
      }
    }
    rep.add(finish("eos-monotonicity", count, wt, 0.0));
  }
  if (!rep.all_pass) return rep;  // non-monotone family: later checks meaningless

  // common-alpha closed-form oracle available?
  bool common_alpha = true;
  for (int i = 1; i < spec.N; ++i)
    if (spec.alpha[i] != spec.alpha[0]) common_alpha = false;
  common_alpha = common_alpha && spec.gkind == GKind::PiecewiseLogPower;

  WorstTracker gd, homo1, homo2, eosrel, gradfd, hessfd, roundtrip, eigfloor;
  WorstTracker affine;
  // eigenvalue floor: lambda1 fitted on a fixed deterministic calibration set
  const double theta0 = [&] {
    double beta = spec.alpha[0] * (1.0 - std::pow(spec.sbar, -1.0 / spec.alpha[0]));
    for (int i = 1; i < spec.N; ++i)
      beta = std::min(beta,
                      spec.alpha[i] * (1.0 - std::pow(spec.sbar, -1.0 / spec.alpha[i])));
    return 2.0 * beta * (1.0 / beta - 1.0 / spec.max_alpha()) / (beta - 1.0);
  }();
  double lambda1_fit = std::numeric_limits<double>::max();
  {
    std::mt19937_64 cal(0x5eedc0de);
    for (int k = 0; k < 256; ++k) {
      const Vec x = sample_simplex(cal, spec.N);
      std::uniform_real_distribution<double> ul(std::log(0.2), std::log(50.0));
      const Vec rho = state_at_pressure(spec, x, std::exp(ul(cal)));
      double varrho = 0.0;
      for (double r : rho) varrho += r;
      const double lam = min_eigenvalue_sym(hessian(fam, rho), spec.N);
      lambda1_fit = std::min(lambda1_fit, lam * varrho * std::pow(1.0 + varrho, theta0));
    }
  }

  for (long k = 0; k < samples; ++k) {
    const Vec x = sample_simplex(rng, spec.N);
    const double p = std::exp(ulog(rng));
    const Vec rho = state_at_pressure(spec, x, p);
    double varrho = 0.0;
    for (double r : rho) varrho += r;

    const double pi = pi_m(fam, rho);
    const double f = free_energy(fam, rho);
    const Vec mu = chemical_potentials(fam, rho);

    // Gibbs-Duhem: -f + rho.mu = pi
    {
      double s = -f;
      for (int i = 0; i < spec.N; ++i) s += rho[i] * mu[i];
      gd.update(std::fabs(s - pi) / (1.0 + std::fabs(pi)), rho);
    }
    // homogeneity of the mixing entropy
    {
      const MixEntropy me = mix_entropy(spec, rho);
      double dk_rho = 0.0;
      for (int i = 0; i < spec.N; ++i) dk_rho += me.dk[i] * rho[i];
      homo1.update(std::fabs(dk_rho - me.k) / (1.0 + std::fabs(me.k)), rho);
      const Vec d2k_rho = matvec(me.d2k, rho);
      homo2.update(norm_inf(d2k_rho), rho);
    }
    // EOS generic solver vs closed form (common alpha)
    if (common_alpha) {
      double w = 0.0;
      for (int i = 0; i < spec.N; ++i) w += rho[i] * spec.vbar[i];
      const double al = spec.alpha[0];
      const double p_oracle = w <= 1.0 ? w : std::pow(w, al / (al - 1.0));
      const double p_solved = eos_pressure(fam, rho);
      eosrel.update(std::fabs(p_solved - p_oracle) / p_oracle, rho);
    }
    // gradient vs central finite differences of the free energy; stencils
    // must not straddle the one-sided C2 knot at p_hat = 1
    if (k % 8 == 0 && std::fabs(p - 1.0) > 0.05) {
      const double h = 1e-5;
      double err = 0.0;
      for (int i = 0; i < spec.N; ++i) {
        Vec rp = rho, rm = rho;
        rp[i] += h * rho[i];
        rm[i] -= h * rho[i];
        const double fd =
            (free_energy(fam, rp) - free_energy(fam, rm)) / (rp[i] - rm[i]);
        err = std::max(err, std::fabs(mu[i] - fd) / (1.0 + std::fabs(mu[i])));
      }
      gradfd.update(err, rho);
    }
    // Hessian vs second differences of the free energy (same knot window)
    if (k % 16 == 0 && std::fabs(p - 1.0) > 0.05) {
      const Mat h2 = hessian(fam, rho);
      const double h = 1e-3;
      double err = 0.0;
      for (int i = 0; i < spec.N; ++i)
        for (int j = i; j < spec.N; ++j) {
          const double hi = h * rho[i];
          const double hj = h * rho[j];
          Vec rpp = rho, rpm = rho, rmp = rho, rmm = rho;
          rpp[i] += hi; rpp[j] += hj;
          rpm[i] += hi; rpm[j] -= hj;
          rmp[i] -= hi; rmp[j] += hj;
          rmm[i] -= hi; rmm[j] -= hj;
          const double fd = (free_energy(fam, rpp) - free_energy(fam, rpm) -
                             free_energy(fam, rmp) + free_energy(fam, rmm)) /
                            (4.0 * hi * hj);
          const double ref = h2[(std::size_t)i * spec.N + j];
          err = std::max(err, std::fabs(ref - fd) / (1.0 + std::fabs(ref)));
        }
      hessfd.update(err, rho);
    }
    // potentials -> densities round trip
    {
      const Vec back = potentials_to_densities(fam, mu);
      double err = 0.0;
      for (int i = 0; i < spec.N; ++i)
        err = std::max(err, std::fabs(back[i] - rho[i]) / rho[i]);
      roundtrip.update(err, rho);
    }
    // Hessian eigenvalue floor with the fitted lambda1 (structure check)
    {
      const double lam = min_eigenvalue_sym(hessian(fam, rho), spec.N);
      const double floor =
          0.5 * lambda1_fit / (varrho * std::pow(1.0 + varrho, theta0));
      eigfloor.update(lam < floor ? (floor - lam) / floor : 0.0, rho);
    }
    // affine-limit bound on the window varrho in [0.55, 0.95]
    if (k % 4 == 0) {
      std::uniform_real_distribution<double> uv(0.55, 0.95);
      const double target = uv(rng);
      Vec y = sample_simplex(rng, spec.N);
      Vec rr(spec.N);
      for (int i = 0; i < spec.N; ++i) rr[i] = target * y[i];
      // bracket of the normalized pressure over the window
      double p_lo = std::numeric_limits<double>::max(), p_hi = 0.0;
      for (int i = 0; i < spec.N; ++i) {
        p_lo = std::min(p_lo, gbar_prime_inv(spec, i, 1.0 / 0.55));
        p_hi = std::max(p_hi, gbar_prime_inv(spec, i, 1.0 / 0.95));
      }
      for (double mm : {10.0, 100.0, 1000.0}) {
        const ThermoFamily fm = ThermoFamily::rescaled(spec, mm);
        const double pim = pi_m(fm, rr);
        for (int i = 0; i < spec.N; ++i) {
          double sup2 = 0.0;
          for (int g = 0; g <= 32; ++g) {
            const double s = p_lo * std::pow(p_hi / p_lo, g / 32.0);
            sup2 = std::max(sup2, std::fabs(gbar_eval(spec, i, s).d2));
          }
          const double lhs =
              std::fabs(gm_eval(fm, i, pim).value - spec.vbar[i] * pim);
          const double bound = 0.5 * sup2 * pim * pim / mm;
          affine.update(lhs > bound + 1e-13 ? (lhs - bound) : 0.0, rr);
        }
      }
    }
  }
  rep.add(finish("gibbs-duhem", samples, gd, 1e-9));
  rep.add(finish("homogeneity-gradient", samples, homo1, 1e-10));
  rep.add(finish("homogeneity-hessian", samples, homo2, 1e-10));
  if (common_alpha) rep.add(finish("eos-closed-form", samples, eosrel, 1e-10));
  rep.add(finish("gradient-fd", samples / 8, gradfd, 1e-6));
  rep.add(finish("hessian-fd", samples / 16, hessfd, 1e-5));
  rep.add(finish("potential-round-trip", samples, roundtrip, 1e-8));
  rep.add(finish("hessian-eigenvalue-floor", samples, eigfloor, 0.0));
  rep.add(finish("affine-limit-bound", samples / 4, affine, 0.0));
  return rep;
}

AuditReport transform_audit(const MixtureSpec& spec, long samples,
                            std::uint64_t seed) {
  spec.validate();
  AuditReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ulog(std::log(0.2), std::log(50.0));
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  const Basis basis = make_basis(spec.vbar);
  const ThermoFamily fam = ThermoFamily::rescaled(spec, 100.0);

  // basis duality and gauge conditions
  {
    WorstTracker wt;
    for (int k = 0; k < spec.N; ++k)
      for (int l = 0; l < spec.N; ++l) {
        const double d = dot(basis.eta_row(k), basis.xi_col(l));
        wt.update(std::fabs(d - (k == l ? 1.0 : 0.0)), spec.vbar);
      }
    const GaugeVector g = gauge_eta(spec.vbar);
    wt.update(std::fabs(dot(g.eta_g, spec.vbar) - 1.0), spec.vbar);
    const Vec ones(spec.N, 1.0);
    wt.update(std::fabs(dot(g.eta_g, ones)), spec.vbar);
    rep.add(finish("basis-duality-and-gauge", spec.N * spec.N + 2, wt, 1e-12));
  }

  WorstTracker rt, pmono, ashift, pmcons;
  for (long k = 0; k < samples; ++k) {
    const Vec x = sample_simplex(rng, spec.N);
    const Vec rho = state_at_pressure(spec, x, std::exp(ulog(rng)));
    double varrho = 0.0;
    for (double r : rho) varrho += r;
    const Vec mu = chemical_potentials(fam, rho);
    const Vec q = q_from_mu(basis, mu);

    // round trip (varrho, q) -> rho and P_m consistency
    {
      const StateFromQ st = state_from_q(fam, basis, varrho, q);
      double err = 0.0;
      for (int i = 0; i < spec.N; ++i)
        err = std::max(err, std::fabs(st.rho[i] - rho[i]) / rho[i]);
      rt.update(err, rho);
      const double pim = pi_m(fam, rho);
      pmcons.update(std::fabs(st.pi - pim) / (1.0 + std::fabs(pim)), rho);
    }
    // P_m strictly increasing in varrho (sampled finite differences)
    if (k % 16 == 0) {
      double prev = 0.0;
      bool first = true;
      for (int g = 0; g <= 8; ++g) {
        const double vr = varrho * (0.7 + 0.6 * g / 8.0);
        const double P = P_m(fam, basis, vr, q);
        if (!first) pmono.update(P <= prev ? (prev - P) + 1.0 : 0.0, rho);
        prev = P;
        first = false;
      }
    }
    // incompressible affine shift: invert(w + t vbar) = (same rho, p + t)
    if (k % 8 == 0) {
      Vec w(spec.N);
      for (int i = 0; i < spec.N; ++i) w[i] = 3.0 * un(rng);
      const IncompInvert base = incompressible_invert(spec, w);
      for (double t : {-3.0, 0.7, 12.0}) {
        Vec wt_(spec.N);
        for (int i = 0; i < spec.N; ++i) wt_[i] = w[i] + t * spec.vbar[i];
        const IncompInvert shifted = incompressible_invert(spec, wt_);
        double err = std::fabs(shifted.p - base.p - t);
        for (int i = 0; i < spec.N; ++i)
          err = std::max(err, std::fabs(shifted.rho[i] - base.rho[i]));
        ashift.update(err, w);
      }
    }
  }
  rep.add(finish("state-round-trip", samples, rt, 1e-8));
  rep.add(finish("pressure-map-consistency", samples, pmcons, 1e-8));
  rep.add(finish("pressure-map-monotone", samples / 16, pmono, 0.0));
  rep.add(finish("incompressible-affine-shift", samples / 8, ashift, 1e-10));

  // m -> infinity: P_m(varrho, q) - q_{N-1} approaches P^inf(varrho, q'),
  // nonincreasing gap over the sampled m ladder
  {
    WorstTracker wt;
    std::mt19937_64 rng2(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> uvr(0.05, 0.95);
    const long ns = std::min<long>(20, std::max<long>(4, samples / 64));
    for (long k = 0; k < ns; ++k) {
      const double lo = spec.rho_min(), hi = spec.rho_max();
      const double varrho = lo + (0.2 + 0.6 * uvr(rng2)) * (hi - lo);
      Vec q(spec.N - 1);
      for (int i = 0; i < spec.N - 1; ++i) q[i] = 0.5 * un(rng2);
      Vec qp(q.begin(), q.end() - 1);
      const double Pinf = P_inf(spec, basis, varrho, qp);
      double prev_gap = std::numeric_limits<double>::max();
      for (double mm : {10.0, 100.0, 1000.0, 10000.0}) {
        const ThermoFamily fm = ThermoFamily::rescaled(spec, mm);
        const double gap =
            std::fabs(P_m(fm, basis, varrho, q) - q[spec.N - 2] - Pinf);
        wt.update(gap > prev_gap * (1.0 + 1e-9) ? gap - prev_gap : 0.0, q);
        prev_gap = gap;
      }
    }
    rep.add(finish("pressure-map-limit-trend", ns * 4, wt, 0.0));
  }
  return rep;
}

AuditReport mobility_audit(const MixtureSpec& spec, long samples,
                           std::uint64_t seed) {
  spec.validate();
  AuditReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ulog(std::log(0.2), std::log(50.0));
  const Basis basis = make_basis(spec.vbar);
  double c_eta = 0.0;  // Cauchy-Schwarz constant sum_k |eta^k|_2^2
  for (int k = 0; k < spec.N - 1; ++k) {
    const Vec e = basis.eta_row(k);
    c_eta += dot(e, e);
  }

  for (MobilityVariant variant : {MobilityVariant::UniformProjection,
                                  MobilityVariant::MaxwellStefanToy,
                                  MobilityVariant::Sum}) {
    MobilityKind kind;
    kind.variant = variant;
    kind.lambda0 = spec.lambda0;
    kind.d = spec.d_ms;
    const char* tag = variant == MobilityVariant::UniformProjection
                          ? "uniform"
                          : variant == MobilityVariant::MaxwellStefanToy
                                ? "maxwell-stefan"
                                : "sum";
    WorstTracker sym, rowsum, psd, floor_perp, lip, reduced_floor;
    Vec prev_rho;
    Mat prev_M;
    for (long k = 0; k < samples; ++k) {
      const Vec x = sample_simplex(rng, spec.N);
      const Vec rho = state_at_pressure(spec, x, std::exp(ulog(rng)));
      const Mat M = mobility(kind, rho);
      const int N = spec.N;
      const double scale = inf_norm_mat(M, N);
      for (int i = 0; i < N; ++i) {
        double rs = 0.0;
        for (int j = 0; j < N; ++j) {
          rs += M[(std::size_t)i * N + j];
          sym.update(std::fabs(M[(std::size_t)i * N + j] - M[(std::size_t)j * N + i]),
                     rho);
        }
        rowsum.update(std::fabs(rs) / std::max(1.0, scale), rho);
      }
      const double mineig = min_eigenvalue_sym(M, N);
      psd.update(std::max(0.0, -mineig - 1e-12 * std::max(1.0, scale)), rho);
      if (kind.uniformly_positive()) {
        // restricted to {1^N}^perp the spectrum must clear lambda0
        Mat P((std::size_t)N * N, 0.0);
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < N; ++j)
            P[(std::size_t)i * N + j] = (i == j ? 1.0 : 0.0) - 1.0 / N;
        // eigenvalues of M + lambda0 * (I - P): shifts the kernel away
        Mat shifted = M;
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < N; ++j)
            shifted[(std::size_t)i * N + j] += spec.lambda0 / N;
        const double lam = min_eigenvalue_sym(shifted, N);
        floor_perp.update(std::max(0.0, spec.lambda0 - lam - 1e-10), rho);
        const Mat Mt = onsager_reduced(basis, kind, rho);
        const double lam_t = min_eigenvalue_sym(Mt, N - 1);
        reduced_floor.update(std::max(0.0, spec.lambda0 / c_eta - lam_t - 1e-10), rho);
      }
      if (!prev_rho.empty()) {
        double dr = 0.0, dM = 0.0;
        for (int i = 0; i < N; ++i) dr = std::max(dr, std::fabs(rho[i] - prev_rho[i]));
        for (std::size_t idx = 0; idx < M.size(); ++idx)
          dM = std::max(dM, std::fabs(M[idx] - prev_M[idx]));
        const double L = kind.d * 3.0 + 1.0;  // Lipschitz budget of the toy form
        lip.update(dM > L * dr ? dM - L * dr : 0.0, rho);
      }
      prev_rho = rho;
      prev_M = M;
    }
    rep.add(finish(std::string("mobility-symmetry-") + tag, samples, sym, 1e-14));
    rep.add(finish(std::string("mobility-rowsum-") + tag, samples, rowsum, 1e-14));
    rep.add(finish(std::string("mobility-psd-") + tag, samples, psd, 0.0));
    if (kind.uniformly_positive()) {
      rep.add(finish(std::string("mobility-floor-") + tag, samples, floor_perp, 0.0));
      rep.add(finish(std::string("onsager-reduced-floor-") + tag, samples,
                     reduced_floor, 0.0));
    }
    rep.add(finish(std::string("mobility-lipschitz-") + tag, samples - 1, lip, 0.0));
  }
  return rep;
}

std::string format_report(const AuditReport& report) {
  std::ostringstream os;
  for (const AuditCheck& c : report.checks) {
    os << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": worst=" << c.worst
       << " tol=" << c.tol << " samples=" << c.samples;
    if (!c.pass && !c.worst_state.empty()) os << "  worst at " << c.worst_state;
    os << "\n";
  }
  os << (report.all_pass ? "ALL CHECKS PASSED" : "CHECK FAILURES PRESENT") << "\n";
  return os.str();
}

}  // namespace mixlim
