#pragma once

// Seeded property audits of the thermodynamic and transform layers:
// Gibbs-Duhem, homogeneity, equation-of-state oracle agreement,
// finite-difference gradient/Hessian consistency, potential round trips,
// monotonicity, eigenvalue floors, affine-limit bounds, mobility structure,
// and the entropic-variable round trips with pressure-map monotonicity.

#include <cstdint>
#include <string>
#include <vector>

#include "mixlim/mobility.hpp"
#include "mixlim/thermo.hpp"
#include "mixlim/transform.hpp"

namespace mixlim {

struct AuditCheck {
  std::string name;
  long samples = 0;
  double worst = 0.0;      // worst-case residual (check-specific meaning)
  double tol = 0.0;
  bool pass = false;
  std::string worst_state;  // serialized state reproducing the worst residual
};

struct AuditReport {
  std::vector<AuditCheck> checks;
  bool all_pass = true;

  void add(AuditCheck c) {
    all_pass = all_pass && c.pass;
    checks.push_back(std::move(c));
  }
};

// Thermodynamic audit on `samples` seeded-random states with p_hat spread
// log-uniformly over [0.2, 50].
AuditReport thermo_audit(const MixtureSpec& spec, long samples, std::uint64_t seed);

// Transform audit: (varrho, q) round trips, P_m monotonicity in varrho,
// incompressible affine-shift identity, gauge-vector conditions, and the
// m -> infinity trend of P_m - q_{N-1} toward P^inf.
AuditReport transform_audit(const MixtureSpec& spec, long samples,
                            std::uint64_t seed);

// Mobility audit of the structural assumptions for all variants.
AuditReport mobility_audit(const MixtureSpec& spec, long samples,
                           std::uint64_t seed);

std::string format_report(const AuditReport& report);

}  // namespace mixlim
