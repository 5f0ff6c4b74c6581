#pragma once

// JSON configuration ingestion (strict schema: unknown keys rejected) and
// the physical-to-dimensionless rescaling.

#include <optional>
#include <string>

#include "mixlim/diagnostics.hpp"
#include "mixlim/solver1d.hpp"

namespace mixlim {

struct PhysicalRefs {
  double p_ref = 1.0;    // reference pressure
  double rho_ref = 1.0;  // reference density
  double v_ref = 1.0;    // reference velocity modulus
  double g_accel = 1.0;  // gravitational acceleration
};

struct RescaleResult {
  double Ma = 1.0;
  double m = 1.0;       // round(Ma^-2)
  double t_ref = 1.0;   // v_ref / g
  double L_ref = 1.0;   // v_ref^2 / g
  double c_ref = 1.0;   // sqrt(p_ref / rho_ref)
  MixtureSpec rescaled; // dimensionless spec: RT = 1, Mbar, vbar scaled
  bool subsonic = true; // Ma < 1; a warning, not an error, otherwise
};

// Appendix-style rescaling: t_ref = v/g, L_ref = v^2/g, c = sqrt(p/rho),
// Ma = v/c, m = round(Ma^-2), Mbar_j = M_j v^2/(RT), vbar -> rho_ref * vbar.
RescaleResult rescale_physical(const MixtureSpec& physical_spec,
                               const PhysicalRefs& refs);

struct ConfigFile {
  MixtureSpec mixture;
  MobilityKind mobility;
  Grid1D grid;
  double t_end = 0.1;
  double cfl = 0.4;
  double snapshot_every = 0.0;
  double body_force = 0.0;
  InitialData initial;
  std::vector<double> m_list;
  std::optional<PhysicalRefs> physical;

  RunConfig run_config(double m) const;
};

// Parses and validates a config document; throws std::invalid_argument with
// a readable message on schema or constraint violations.
ConfigFile load_config(const std::string& path);
ConfigFile parse_config(const std::string& json_text);

// Canonical re-serialization (used by the round-trip check and summaries).
std::string serialize_config(const ConfigFile& cfg);

}  // namespace mixlim
