#pragma once

// Finite-volume time integration on a 1D interval with no-flux / no-slip
// boundaries, for
//   - the rescaled compressible system (index m): first-order upwind
//     convection, central diffusive fluxes -M Pi grad q, central pressure
//     gradient, SSP-RK2 in time;
//   - the quasi-incompressible limit system: same discretization, with the
//     pressure split P^inf(varrho, q') + zeta and zeta recovered each stage
//     from the velocity-divergence closure so that the per-cell constraint
//     rho . vbar = 1 is preserved exactly.

#include <optional>
#include <string>
#include <vector>

#include "mixlim/mobility.hpp"
#include "mixlim/thermo.hpp"
#include "mixlim/transform.hpp"

namespace mixlim {

struct Grid1D {
  double L = 1.0;
  int n = 100;

  double dx() const { return L / (double)n; }
  double x_center(int j) const { return (j + 0.5) * dx(); }
  void validate() const {
    if (n < 8) throw std::invalid_argument("Grid1D: need n >= 8");
    if (!(L > 0.0)) throw std::invalid_argument("Grid1D: need L > 0");
  }
};

struct InitialData {
  double amplitude = 0.05;
  int mode = 1;
};

struct RunConfig {
  MixtureSpec spec;
  double m = 100.0;  // rescaling index; infinity() runs the incompressible solver
  MobilityKind mobility;
  Grid1D grid;
  double t_end = 0.1;
  double cfl = 0.4;
  double body_force = 0.0;
  double snapshot_every = 0.0;  // <= 0: only initial and final snapshots
  InitialData initial;
  std::optional<double> dt_override;  // fixed step for refinement studies

  ThermoFamily family() const { return ThermoFamily{spec, m}; }
  bool incompressible() const { return std::isinf(m); }
  void validate() const {
    spec.validate();
    grid.validate();
    if (!(m > 0.0)) throw std::invalid_argument("RunConfig: m must be positive");
    if (!(cfl > 0.0 && cfl <= 0.5))
      throw std::invalid_argument("RunConfig: need 0 < cfl <= 0.5");
    if (t_end < 0.0) throw std::invalid_argument("RunConfig: t_end must be >= 0");
    if (dt_override && !(*dt_override > 0.0))
      throw std::invalid_argument("RunConfig: dt_override must be positive");
  }
};

// Compressible solver state: cell-centered densities and velocity.
struct FieldState {
  double t = 0.0;
  int n = 0, N = 0;
  Vec rho;  // n*N, rho[j*N + i]
  Vec v;    // n
  long clip_count = 0;
  double last_dt = 0.0;

  Vec rho_cell(int j) const { return Vec(rho.begin() + (std::size_t)j * N,
                                         rho.begin() + (std::size_t)(j + 1) * N); }
  double varrho(int j) const {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += rho[(std::size_t)j * N + i];
    return s;
  }
};

// Incompressible solver state. Densities are kept as the primal unknowns,
// exactly on the constraint surface; (varrho, q') are coordinate views of
// the same data and zeta is the elliptic pressure part refreshed per step.
struct IncompState {
  double t = 0.0;
  int n = 0, N = 0;
  Vec rho;    // n*N, with rho_j . vbar = 1 per cell
  Vec v;      // n
  Vec zeta;   // n, gauged
  double gauge_value = 0.0;  // shift applied at the last step
  double last_dt = 0.0;

  Vec rho_cell(int j) const { return Vec(rho.begin() + (std::size_t)j * N,
                                         rho.begin() + (std::size_t)(j + 1) * N); }
  double varrho(int j) const {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += rho[(std::size_t)j * N + i];
    return s;
  }
};

struct Snapshot {
  double t = 0.0;
  std::vector<Vec> rho;  // per cell
  Vec v;
  Vec p;                 // pi^m, or P^inf + zeta (gauged) for incompressible
  std::vector<Vec> mu;   // per-cell chemical potentials
};

struct EnergyRow {
  double t = 0.0;
  double E_tot = 0.0;
  double D_visc_cum = 0.0;
  double D_diff_cum = 0.0;
  double work_cum = 0.0;
  double residual = 0.0;  // E(t) + D_cum - E(0) - work_cum
};

struct RunResult {
  std::vector<Snapshot> snaps;
  std::vector<EnergyRow> energy;
  long steps = 0;
  long clip_count = 0;
  // incompressible integrity maxima over the run
  double constraint_resid_max = 0.0;
  double gauge_resid_max = 0.0;
  double div_closure_resid_max = 0.0;
  double wall_time_s = 0.0;
};

struct SolverBlowUp : std::runtime_error {
  explicit SolverBlowUp(const std::string& what) : std::runtime_error(what) {}
};

// Well-prepared initial densities: volume fractions perturbed about the
// uniform state by a cosine of the given mode, so that rho . vbar = 1 holds
// exactly per cell and pi^m(rho0) = 0 for every m. Velocity starts at zero.
Vec well_prepared_initial(const MixtureSpec& spec, const Grid1D& grid,
                          double amplitude, int mode);

FieldState make_compressible_state(const RunConfig& cfg);
IncompState make_incompressible_state(const RunConfig& cfg);

double dt_stable(const RunConfig& cfg, const FieldState& state);
double dt_stable_incompressible(const RunConfig& cfg, const IncompState& state);

// One SSP-RK2 step; dt chosen by dt_stable unless cfg.dt_override is set.
void step_compressible(const RunConfig& cfg, FieldState& state);
void step_incompressible(const RunConfig& cfg, IncompState& state);

RunResult run(const RunConfig& cfg);

// Snapshot extraction (also used by the run loop).
Snapshot snapshot_compressible(const RunConfig& cfg, const FieldState& state);
Snapshot snapshot_incompressible(const RunConfig& cfg, const IncompState& state);

}  // namespace mixlim
