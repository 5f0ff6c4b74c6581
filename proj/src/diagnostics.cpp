#include "mixlim/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace mixlim {

namespace {

struct InterpSnap {
  std::vector<Vec> rho;
  Vec v;
  Vec p;
  std::vector<Vec> mu;
};

// linear interpolation of reference snapshots in time, clamped at the ends
InterpSnap interp_reference(const RunResult& ref, double t) {
  const auto& snaps = ref.snaps;
  if (snaps.empty()) throw std::invalid_argument("interp_reference: empty reference");
  std::size_t hi = 0;
  while (hi + 1 < snaps.size() && snaps[hi].t < t) ++hi;
  const std::size_t lo = hi > 0 ? hi - 1 : 0;
  const Snapshot& a = snaps[lo];
  const Snapshot& b = snaps[hi];
  double w = 0.0;
  if (b.t > a.t) w = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
  InterpSnap out;
  const std::size_t n = a.rho.size();
  const std::size_t N = a.rho[0].size();
  out.rho.assign(n, Vec(N));
  out.mu.assign(n, Vec(N));
  out.v.resize(n);
  out.p.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < N; ++i) {
      out.rho[j][i] = (1.0 - w) * a.rho[j][i] + w * b.rho[j][i];
      out.mu[j][i] = (1.0 - w) * a.mu[j][i] + w * b.mu[j][i];
    }
    out.v[j] = (1.0 - w) * a.v[j] + w * b.v[j];
    out.p[j] = (1.0 - w) * a.p[j] + w * b.p[j];
  }
  return out;
}

double trapezoid(const Vec& t, const Vec& y) {
  double s = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k)
    s += 0.5 * (y[k] + y[k - 1]) * (t[k] - t[k - 1]);
  return s;
}

}  // namespace

double relative_energy(const ThermoFamily& fam, const Grid1D& grid,
                       const std::vector<Vec>& rhoA, const Vec& vA,
                       const std::vector<Vec>& rhoB, const Vec& vB,
                       const std::vector<Vec>& muB) {
  const std::size_t n = rhoA.size();
  if (rhoB.size() != n || vA.size() != n || vB.size() != n || muB.size() != n)
    throw std::invalid_argument("relative_energy: grid mismatch between fields");
  const double dx = grid.dx();
  double E = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double varrho = 0.0;
    for (double r : rhoA[j]) varrho += r;
    const double dv = vA[j] - vB[j];
    double cell = 0.5 * varrho * dv * dv;
    cell += free_energy(fam, rhoA[j]) - free_energy(fam, rhoB[j]);
    for (std::size_t i = 0; i < rhoA[j].size(); ++i)
      cell -= muB[j][i] * (rhoA[j][i] - rhoB[j][i]);
    E += dx * cell;
  }
  return E;
}

double dissipation_viscous(const MixtureSpec& spec, const Vec& vA, const Vec& vB,
                           const Grid1D& grid) {
  if (vA.size() != vB.size())
    throw std::invalid_argument("dissipation_viscous: grid mismatch");
  const double dx = grid.dx();
  const double visc = 2.0 * spec.eta_visc + spec.lambda_visc;
  const std::size_t n = vA.size();
  double D = 0.0;
  for (std::size_t f = 1; f < n; ++f) {
    const double g = ((vA[f] - vB[f]) - (vA[f - 1] - vB[f - 1])) / dx;
    D += g * g * dx;
  }
  // one-sided boundary half-cells keep affine profiles exact
  const double gl = ((vA[1] - vB[1]) - (vA[0] - vB[0])) / dx;
  const double gr = ((vA[n - 1] - vB[n - 1]) - (vA[n - 2] - vB[n - 2])) / dx;
  D += 0.5 * dx * (gl * gl + gr * gr);
  return visc * D;
}

double dissipation_diffusive(const Basis& basis, const MobilityKind& kind,
                             const std::vector<Vec>& rhoField,
                             const std::vector<Vec>& qA, const std::vector<Vec>& qB,
                             const Grid1D& grid) {
  const std::size_t n = rhoField.size();
  if (qA.size() != n || qB.size() != n)
    throw std::invalid_argument("dissipation_diffusive: grid mismatch");
  const int N = basis.N;
  const double dx = grid.dx();
  double D = 0.0;
  Vec rho_face(N), grad(N - 1);
  for (std::size_t f = 1; f < n; ++f) {
    for (int i = 0; i < N; ++i)
      rho_face[i] = 0.5 * (rhoField[f - 1][i] + rhoField[f][i]);
    for (int k = 0; k < N - 1; ++k)
      grad[k] = ((qA[f][k] - qB[f][k]) - (qA[f - 1][k] - qB[f - 1][k])) / dx;
    const Mat Mt = onsager_reduced(basis, kind, rho_face);
    double diss = 0.0;
    for (int a = 0; a < N - 1; ++a)
      for (int b = 0; b < N - 1; ++b)
        diss += Mt[(std::size_t)a * (N - 1) + b] * grad[a] * grad[b];
    D += diss * dx;
  }
  return D;
}

std::pair<double, double> constraint_deviation(const MixtureSpec& spec,
                                               const std::vector<Vec>& rhoField,
                                               const Grid1D& grid) {
  const double dx = grid.dx();
  double L1 = 0.0, Linf = 0.0;
  for (const Vec& rho : rhoField) {
    double w = -1.0;
    for (int i = 0; i < spec.N; ++i) w += rho[i] * spec.vbar[i];
    L1 += std::fabs(w) * dx;
    Linf = std::max(Linf, std::fabs(w));
  }
  return {L1, Linf};
}

GaugedPressure gauged_pressure(const MixtureSpec& spec, const GaugeVector& gauge,
                               const Snapshot& snap) {
  const std::size_t n = snap.p.size();
  GaugedPressure out;
  double mean = 0.0;
  std::size_t at_floor = 0;
  const double floor = 1e-12 * spec.rho_max();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < spec.N; ++i) s += gauge.eta_g[i] * snap.mu[j][i];
    mean += s;
    for (int i = 0; i < spec.N; ++i)
      if (snap.rho[j][i] <= floor * 1.0000001) {
        ++at_floor;
        break;
      }
  }
  out.zeta_bar = -mean / (double)n;
  out.p_star.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.p_star[j] = snap.p[j] + out.zeta_bar;
  out.unreliable = at_floor * 100 > n;
  return out;
}

std::vector<RelEnergyReport> relative_energy_series(const RunConfig& member_cfg,
                                                    const RunResult& member,
                                                    const RunResult& reference) {
  const ThermoFamily fam = member_cfg.family();
  std::vector<RelEnergyReport> out;
  double sup = 0.0;
  std::vector<Vec> mu_breg((std::size_t)member_cfg.grid.n);
  for (const Snapshot& s : member.snaps) {
    const InterpSnap r = interp_reference(reference, s.t);
    for (std::size_t j = 0; j < mu_breg.size(); ++j)
      mu_breg[j] = chemical_potentials(fam, r.rho[j]);
    RelEnergyReport rep;
    rep.t = s.t;
    rep.E_rel = relative_energy(fam, member_cfg.grid, s.rho, s.v, r.rho, r.v, mu_breg);
    sup = std::max(sup, rep.E_rel);
    rep.E_sup_running = sup;
    out.push_back(rep);
  }
  return out;
}

namespace {

StudyMember study_one_member(const RunConfig& base, double m,
                             const RunResult& reference, RunResult& run_out) {
  StudyMember sm;
  sm.m = m;
  RunConfig cfg = base;
  cfg.m = m;
  try {
    run_out = run(cfg);
  } catch (const SolverBlowUp& e) {
    sm.failed = true;
    sm.error = e.what();
    return sm;
  }
  const ThermoFamily fam = cfg.family();
  const Basis basis = make_basis(cfg.spec.vbar);
  const GaugeVector gauge = gauge_eta(cfg.spec.vbar);
  const std::size_t n = (std::size_t)cfg.grid.n;
  const double dx = cfg.grid.dx();

  Vec times, visc_rate, diff_rate, pgap_rate;
  std::vector<Vec> mu_breg((std::size_t)cfg.grid.n);
  for (const Snapshot& s : run_out.snaps) {
    const InterpSnap r = interp_reference(reference, s.t);
    // Bregman form: the reference potentials are Df^m(r), evaluated with the
    // member family, so convexity keeps the functional nonnegative
    for (std::size_t j = 0; j < n; ++j)
      mu_breg[j] = chemical_potentials(fam, r.rho[j]);
    const double Erel =
        relative_energy(fam, cfg.grid, s.rho, s.v, r.rho, r.v, mu_breg);
    sm.sup_relative_energy = std::max(sm.sup_relative_energy, Erel);

    times.push_back(s.t);
    visc_rate.push_back(dissipation_viscous(cfg.spec, s.v, r.v, cfg.grid));

    std::vector<Vec> qm(n), qr(n);
    for (std::size_t j = 0; j < n; ++j) {
      qm[j] = q_from_mu(basis, s.mu[j]);
      qr[j] = q_from_mu(basis, r.mu[j]);
    }
    diff_rate.push_back(
        dissipation_diffusive(basis, cfg.mobility, s.rho, qm, qr, cfg.grid));

    sm.constraint_L1inf = std::max(
        sm.constraint_L1inf, constraint_deviation(cfg.spec, s.rho, cfg.grid).first);

    const GaugedPressure gp = gauged_pressure(cfg.spec, gauge, s);
    double gap = 0.0;
    for (std::size_t j = 0; j < n; ++j) gap += std::fabs(gp.p_star[j] - r.p[j]) * dx;
    pgap_rate.push_back(gap);
  }
  sm.visc_dissipation_gap = trapezoid(times, visc_rate);
  sm.diff_dissipation_gap = trapezoid(times, diff_rate);
  sm.pressure_L1_gap = trapezoid(times, pgap_rate);
  sm.steps = run_out.steps;
  sm.clip_count = run_out.clip_count;
  sm.wall_time_s = run_out.wall_time_s;
  return sm;
}

}  // namespace

StudyResult limit_study(const RunConfig& base, const std::vector<double>& m_list,
                        int threads) {
  if (m_list.empty())
    throw std::invalid_argument("limit_study: empty m list");
  base.validate();
  StudyResult out;
  RunConfig ref_cfg = base;
  ref_cfg.m = std::numeric_limits<double>::infinity();
  out.reference = run(ref_cfg);

  out.members.resize(m_list.size());
  out.member_runs.resize(m_list.size());
  if (threads <= 1) {
    for (std::size_t k = 0; k < m_list.size(); ++k)
      out.members[k] =
          study_one_member(base, m_list[k], out.reference, out.member_runs[k]);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::mutex mtx;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&]() {
        for (;;) {
          std::size_t k;
          {
            std::lock_guard<std::mutex> lock(mtx);
            if (next >= m_list.size()) return;
            k = next++;
          }
          out.members[k] =
              study_one_member(base, m_list[k], out.reference, out.member_runs[k]);
        }
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// deep audit of the relative-energy inequality (reported residual only)
// ---------------------------------------------------------------------------

namespace {

double simpson01(const std::function<double(double)>& f) {
  // 9-node composite Simpson on [0,1]
  const int segs = 4;
  double s = 0.0;
  const double h = 1.0 / segs;
  for (int k = 0; k < segs; ++k) {
    const double a = k * h;
    s += h / 6.0 * (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h));
  }
  return s;
}

}  // namespace

std::vector<DeepAuditRow> deep_audit(const RunConfig& member_cfg,
                                     const RunResult& member,
                                     const RunResult& reference) {
  const ThermoFamily fam = member_cfg.family();
  const MixtureSpec& spec = member_cfg.spec;
  const Basis basis = make_basis(spec.vbar);
  const int N = spec.N;
  const std::size_t n = (std::size_t)member_cfg.grid.n;
  const double dx = member_cfg.grid.dx();
  const double m = member_cfg.m;

  // reference density window and positivity floor for the audit sets
  double r_min = std::numeric_limits<double>::max(), r_max = 0.0, r0 = r_min;
  for (const Snapshot& s : reference.snaps)
    for (const Vec& rho : s.rho) {
      double varrho = 0.0, mn = std::numeric_limits<double>::max();
      for (double x : rho) {
        varrho += x;
        mn = std::min(mn, x);
      }
      r_min = std::min(r_min, varrho);
      r_max = std::max(r_max, varrho);
      r0 = std::min(r0, mn);
    }
  const double delta0 = 0.05 * (r_max - r_min) + 1e-6;
  const double a0 = r_min - delta0, b0 = r_max + delta0;
  const double s0 = 0.5 * r0;
  const double theta0 = [&] {
    // theta_0 = 2 beta (1/beta - 1/max_alpha)/(beta - 1) with
    // beta = alpha (1 - sbar^{-1/alpha}) for the default family
    const double al = spec.max_alpha();
    const double beta = al * (1.0 - std::pow(spec.sbar, -1.0 / al));
    return 2.0 * beta * (1.0 / beta - 1.0 / al) / (beta - 1.0);
  }();

  std::vector<DeepAuditRow> rows;
  double diss_cum = 0.0, coup_cum = 0.0, rem_cum = 0.0;
  double E0 = 0.0, boundary0 = 0.0;
  double prev_diss_ = 0.0;

  for (std::size_t si = 0; si < member.snaps.size(); ++si) {
    const Snapshot& s = member.snaps[si];
    const InterpSnap r = interp_reference(reference, s.t);
    // time derivatives of the reference by centered differences on the
    // member snapshot times
    const double tm = si > 0 ? member.snaps[si - 1].t : s.t;
    const double tp = si + 1 < member.snaps.size() ? member.snaps[si + 1].t : s.t;
    const InterpSnap rm = interp_reference(reference, tm);
    const InterpSnap rp = interp_reference(reference, tp);
    const double dt_fd = std::max(tp - tm, 1e-300);

    DeepAuditRow row;
    row.t = s.t;
    row.E_rel = relative_energy(fam, member_cfg.grid, s.rho, s.v, r.rho, r.v, r.mu);
    if (si == 0) E0 = row.E_rel;

    double R1 = 0.0, R2 = 0.0, R3 = 0.0, R4 = 0.0, coup = 0.0, bterm = 0.0;
    double phi_min = std::numeric_limits<double>::max(), phi_max = 0.0;
    double omega_max = 0.0, meas_ab = 0.0, meas_B = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t jl = j > 0 ? j - 1 : j;
      const std::size_t jr = j + 1 < n ? j + 1 : j;
      const double ddx = (jr - jl) * dx;
      double varrho_m = 0.0, varrho_r = 0.0, minrho_m = 1e300;
      for (int i = 0; i < N; ++i) {
        varrho_m += s.rho[j][i];
        varrho_r += r.rho[j][i];
        minrho_m = std::min(minrho_m, s.rho[j][i]);
      }
      const double dvel = r.v[j] - s.v[j];
      // R1: inertial remainder
      const double dtv = (rp.v[j] - rm.v[j]) / dt_fd;
      const double gradv_r = (r.v[jr] - r.v[jl]) / ddx;
      R1 += dx * ((varrho_m - varrho_r) * (dtv + s.v[j] * gradv_r) +
                  varrho_r * (s.v[j] - r.v[j]) * gradv_r) * dvel;
      // R2: drift against reference potential gradients and body force
      for (int i = 0; i < N; ++i) {
        const double gmu = (r.mu[jr][i] - r.mu[jl][i]) / ddx;
        R2 += dx * dvel * (s.rho[j][i] - r.rho[j][i]) *
              (gmu + member_cfg.body_force);
      }
      // R3: mobility mismatch
      {
        const Mat Mm = mobility(member_cfg.mobility, s.rho[j]);
        const Mat Mr = mobility(member_cfg.mobility, r.rho[j]);
        Vec gmu_r(N), gdmu(N);
        for (int i = 0; i < N; ++i) {
          gmu_r[i] = (r.mu[jr][i] - r.mu[jl][i]) / ddx;
          gdmu[i] = ((s.mu[jr][i] - r.mu[jr][i]) - (s.mu[jl][i] - r.mu[jl][i])) / ddx;
        }
        const Vec pg = project_P(gdmu);
        for (int a = 0; a < N; ++a)
          for (int b = 0; b < N; ++b)
            R3 -= dx * (Mm[(std::size_t)a * N + b] - Mr[(std::size_t)a * N + b]) *
                  gmu_r[b] * pg[a];
      }
      // R4: mixing-entropy curvature remainder against reference transport
      {
        const MixEntropy ker = mix_entropy(spec, r.rho[j]);
        const MixEntropy kem = mix_entropy(spec, s.rho[j]);
        for (int i = 0; i < N; ++i) {
          const double dtr = (rp.rho[j][i] - rm.rho[j][i]) / dt_fd;
          const double divr =
              ((r.rho[jr][i] * r.v[jr]) - (r.rho[jl][i] * r.v[jl])) / ddx;
          double bracket = kem.dk[i] - ker.dk[i];
          for (int l = 0; l < N; ++l)
            bracket -= ker.d2k[(std::size_t)i * N + l] * (s.rho[j][l] - r.rho[j][l]);
          R4 += dx * (dtr + divr) * bracket;
        }
      }
      // pressure coupling terms
      {
        const double pi_j = s.p[j];
        double wdev = -1.0;
        for (int i = 0; i < N; ++i) wdev += s.rho[j][i] * spec.vbar[i];
        const double dtp = (rp.p[j] - rm.p[j]) / dt_fd;
        const double gradp = (r.p[jr] - r.p[jl]) / ddx;
        for (int i = 0; i < N; ++i) {
          const double dtr = (rp.rho[j][i] - rm.rho[j][i]) / dt_fd;
          const double divr =
              ((r.rho[jr][i] * r.v[jr]) - (r.rho[jl][i] * r.v[jl])) / ddx;
          const double gdev = gm_eval(fam, i, pi_j).value - spec.vbar[i] * pi_j;
          coup += dx * (dtr + divr) * gdev;
        }
        coup -= dx * wdev * (dtp + r.v[j] * gradp);
        bterm += dx * r.p[j] * wdev;
      }
      // audit fields
      {
        const double pi_j = s.p[j];
        double phi = 0.0;
        for (int i = 0; i < N; ++i) {
          const double rho_i = s.rho[j][i];
          phi -= rho_i * simpson01([&](double th) {
            return gbar_eval(spec, i, 1.0 + th * pi_j / m).d2;
          });
        }
        phi_min = std::min(phi_min, phi);
        phi_max = std::max(phi_max, phi);
        const double mx = std::max(varrho_m, varrho_r);
        omega_max = std::max(omega_max, mx * std::pow(1.0 + mx, theta0));
        if (varrho_m >= a0 && varrho_m <= b0) {
          meas_ab += dx;
          if (minrho_m >= s0) meas_B += dx;
        }
      }
    }
    if (si == 0) boundary0 = bterm;

    // accumulate the time integrals (trapezoid with the previous row)
    if (!rows.empty()) {
      const DeepAuditRow& prev = rows.back();
      const double dt = s.t - prev.t;
      const InterpSnap rprev = interp_reference(reference, prev.t);
      const Snapshot& sprev = member.snaps[si - 1];
      const double dvisc =
          dissipation_viscous(spec, s.v, r.v, member_cfg.grid);
      std::vector<Vec> qm(n), qr(n);
      for (std::size_t j = 0; j < n; ++j) {
        qm[j] = q_from_mu(basis, s.mu[j]);
        qr[j] = q_from_mu(basis, r.mu[j]);
      }
      const double ddiff = dissipation_diffusive(basis, member_cfg.mobility, s.rho,
                                                 qm, qr, member_cfg.grid);
      diss_cum += dt * 0.5 * (dvisc + ddiff + prev_diss_);
      coup_cum += dt * 0.5 * (coup + prev.coupling_rate);
      rem_cum += dt * 0.5 * ((R1 + R2 + R3 + R4) +
                             (prev.R1 + prev.R2 + prev.R3 + prev.R4));
      prev_diss_ = dvisc + ddiff;
      (void)rprev;
      (void)sprev;
    } else {
      std::vector<Vec> qm(n), qr(n);
      for (std::size_t j = 0; j < n; ++j) {
        qm[j] = q_from_mu(basis, s.mu[j]);
        qr[j] = q_from_mu(basis, r.mu[j]);
      }
      prev_diss_ = dissipation_viscous(spec, s.v, r.v, member_cfg.grid) +
                   dissipation_diffusive(basis, member_cfg.mobility, s.rho, qm, qr,
                                         member_cfg.grid);
    }

    row.R1 = R1;
    row.R2 = R2;
    row.R3 = R3;
    row.R4 = R4;
    row.coupling_rate = coup;
    row.lhs = row.E_rel + diss_cum;
    row.rhs = E0 + coup_cum + (bterm - boundary0) + rem_cum;
    row.residual = row.lhs - row.rhs;
    row.phi_min = phi_min;
    row.phi_max = phi_max;
    row.omega_max = omega_max;
    row.meas_omega_ab = meas_ab;
    row.meas_B_s0 = meas_B;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mixlim
