#pragma once

// Functionals evaluated along trajectories (relative energy, dissipation
// gaps, constraint deviation, gauged pressure distance) and the Mach-sweep
// convergence study against the incompressible reference run.

#include <string>
#include <utility>
#include <vector>

#include "mixlim/solver1d.hpp"

namespace mixlim {

struct RelEnergyReport {
  double t = 0.0;
  double E_rel = 0.0;
  double E_sup_running = 0.0;
};

struct StudyMember {
  double m = 0.0;
  double sup_relative_energy = 0.0;
  double visc_dissipation_gap = 0.0;   // int D^visc(v^m | v^inf) dt
  double diff_dissipation_gap = 0.0;   // int Mt grad(q^m - q^inf) : grad(...) dxdt
  double constraint_L1inf = 0.0;       // sup_t  int |rho.vbar - 1| dx
  double pressure_L1_gap = 0.0;        // || p*_m - p^inf ||_{L1(Q)}
  long steps = 0;
  double wall_time_s = 0.0;
  long clip_count = 0;
  bool failed = false;
  std::string error;
};

struct StudyResult {
  RunResult reference;
  std::vector<StudyMember> members;
  std::vector<RunResult> member_runs;  // same order as members
};

// Bregman-type relative energy between field A and reference B:
//   sum_j dx [ varrho_A/2 (vA-vB)^2 + f^m(rhoA) - f^m(rhoB) - muB.(rhoA-rhoB) ].
// muB carries the reference potentials; for an incompressible reference these
// are the affine-limit potentials built with the gauged pressure.
double relative_energy(const ThermoFamily& fam, const Grid1D& grid,
                       const std::vector<Vec>& rhoA, const Vec& vA,
                       const std::vector<Vec>& rhoB, const Vec& vB,
                       const std::vector<Vec>& muB);

// (2 eta + lambda) int |dx(vA - vB)|^2, interior faces plus one-sided
// boundary half-cells; exact for affine difference profiles.
double dissipation_viscous(const MixtureSpec& spec, const Vec& vA, const Vec& vB,
                           const Grid1D& grid);

// int Mt(rho) grad(qA - qB) : grad(qA - qB) with face-averaged mobility.
double dissipation_diffusive(const Basis& basis, const MobilityKind& kind,
                             const std::vector<Vec>& rhoField,
                             const std::vector<Vec>& qA, const std::vector<Vec>& qB,
                             const Grid1D& grid);

// (L1, Linf) of rho.vbar - 1 over the domain.
std::pair<double, double> constraint_deviation(const MixtureSpec& spec,
                                               const std::vector<Vec>& rhoField,
                                               const Grid1D& grid);

struct GaugedPressure {
  Vec p_star;
  double zeta_bar = 0.0;
  bool unreliable = false;  // more than 1% of cells at the density floor
};

// p* = p + zeta_bar with zeta_bar = -(1/|Omega|) int eta_g . mu dx.
GaugedPressure gauged_pressure(const MixtureSpec& spec, const GaugeVector& gauge,
                               const Snapshot& snap);

// Relative-energy series of a member run against a reference run
// (reference fields linearly interpolated in time).
std::vector<RelEnergyReport> relative_energy_series(const RunConfig& member_cfg,
                                                    const RunResult& member,
                                                    const RunResult& reference);

// Runs the incompressible reference, then one compressible member per m.
// Any member blow-up is recorded as a failed row instead of aborting.
StudyResult limit_study(const RunConfig& base, const std::vector<double>& m_list,
                        int threads = 1);

// Optional deep audit: evaluates both sides of the relative-energy
// inequality along a member run, including the quadratic remainder terms,
// as a reported residual (no assertion; discrete violations are expected
// at the discretization order).
struct DeepAuditRow {
  double t = 0.0;
  double lhs = 0.0;       // E_rel(t) + accumulated relative dissipations
  double rhs = 0.0;       // E_rel(0) + coupling + boundary + remainders
  double residual = 0.0;  // lhs - rhs
  double E_rel = 0.0;
  double R1 = 0.0, R2 = 0.0, R3 = 0.0, R4 = 0.0;  // remainder rates
  double coupling_rate = 0.0;
  double phi_min = 0.0, phi_max = 0.0;   // Phi^m field range
  double omega_max = 0.0;                // weight omega(varrho, varrho_inf)
  double meas_omega_ab = 0.0;            // |{a0 <= varrho <= b0}|
  double meas_B_s0 = 0.0;                // |{min_i rho_i >= s0} inside it|
};

std::vector<DeepAuditRow> deep_audit(const RunConfig& member_cfg,
                                     const RunResult& member,
                                     const RunResult& reference);

}  // namespace mixlim
