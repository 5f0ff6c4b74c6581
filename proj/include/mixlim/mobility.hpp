#pragma once

// Onsager mobility matrices: symmetric, rows summing to zero, kernel
// containing 1^N. Two concrete closures plus their sum:
//   UniformProjection: M = lambda0 (I - (1/N) 1 x 1), uniformly positive
//                      on {1^N}^perp,
//   MaxwellStefanToy:  M = d P^T R P with R = diag(rho) and
//                      P = I - 1^N x y(rho), i.e. M_ij = d rho_i (d_ij - y_j);
//                      degenerates when densities vanish.

#include <stdexcept>

#include "mixlim/mixture.hpp"
#include "mixlim/transform.hpp"

namespace mixlim {

enum class MobilityVariant { UniformProjection, MaxwellStefanToy, Sum };

struct MobilityKind {
  MobilityVariant variant = MobilityVariant::UniformProjection;
  double lambda0 = 0.1;  // floor for the projection part
  double d = 1.0;        // Maxwell-Stefan coefficient

  bool uniformly_positive() const {
    return variant != MobilityVariant::MaxwellStefanToy;
  }
};

// writes M(rho) into a caller-provided buffer (resized as needed)
inline void mobility_into(const MobilityKind& kind, const Vec& rho, Mat& M) {
  const int N = (int)rho.size();
  double total = 0.0;
  for (double r : rho) {
    if (r < 0.0) throw std::domain_error("mobility: negative density");
    total += r;
  }
  if (!(total > 0.0)) throw std::domain_error("mobility: all-zero density vector");
  M.assign((std::size_t)N * N, 0.0);
  if (kind.variant == MobilityVariant::UniformProjection ||
      kind.variant == MobilityVariant::Sum) {
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        M[i * N + j] += kind.lambda0 * ((i == j ? 1.0 : 0.0) - 1.0 / (double)N);
  }
  if (kind.variant == MobilityVariant::MaxwellStefanToy ||
      kind.variant == MobilityVariant::Sum) {
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        M[i * N + j] += kind.d * rho[i] * ((i == j ? 1.0 : 0.0) - rho[j] / total);
  }
}

inline Mat mobility(const MobilityKind& kind, const Vec& rho) {
  const int N = (int)rho.size();
  double total = 0.0;
  for (double r : rho) {
    if (r < 0.0) throw std::domain_error("mobility: negative density");
    total += r;
  }
  if (!(total > 0.0)) throw std::domain_error("mobility: all-zero density vector");
  Mat M((std::size_t)N * N, 0.0);
  if (kind.variant == MobilityVariant::UniformProjection ||
      kind.variant == MobilityVariant::Sum) {
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        M[i * N + j] += kind.lambda0 * ((i == j ? 1.0 : 0.0) - 1.0 / (double)N);
  }
  if (kind.variant == MobilityVariant::MaxwellStefanToy ||
      kind.variant == MobilityVariant::Sum) {
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        M[i * N + j] += kind.d * rho[i] * ((i == j ? 1.0 : 0.0) - rho[j] / total);
  }
  return M;
}

// Reduced Onsager matrix Mtilde = Pi^T M(rho) Pi, (N-1) x (N-1).
inline Mat onsager_reduced(const Basis& basis, const MobilityKind& kind,
                           const Vec& rho) {
  const int N = basis.N;
  const Mat M = mobility(kind, rho);
  Mat Mt((std::size_t)(N - 1) * (N - 1), 0.0);
  for (int k = 0; k < N - 1; ++k) {
    const Vec xk = basis.xi_col(k);
    const Vec Mxk = matvec(M, xk);
    for (int l = 0; l < N - 1; ++l) {
      const Vec xl = basis.xi_col(l);
      Mt[k * (N - 1) + l] = dot(xl, Mxk);
    }
  }
  return Mt;
}

// Diffusion flux from entropic-variable gradients: J = -M(rho) Pi grad q.
// In 1D grad q is the (N-1)-vector of spatial derivatives; J has length N
// and sums to zero exactly by the row-sum constraint.
inline Vec flux_from_gradq(const Basis& basis, const MobilityKind& kind,
                           const Vec& rho, const Vec& gradq) {
  const Mat M = mobility(kind, rho);
  const Vec pig = basis.apply_Pi(gradq);
  Vec J = matvec(M, pig);
  for (double& v : J) v = -v;
  return J;
}

}  // namespace mixlim
