#pragma once

#include "pdmp/asymptotics.hpp"
#include "pdmp/density_grid.hpp"
#include "pdmp/system_model.hpp"

namespace pdmp {

struct RepresentationResult {
  double lhs = 0.0;  // rho_k(eta), or the representation value for the integration-by-parts check
  double rhs = 0.0;
  double residual = 0.0;  // |rhs - lhs| / |lhs|, or |rhs| when lhs is zero
  double upper_limit = 0.0;  // local coordinate where the integral was cut
  bool truncated = false;    // cut before the upstream limit
  double tail_bound = 0.0;   // bound on the dropped part, from tail_mass
};

/// rho_k(eta) against
///   (eta^{mu-1}/a + r(eta) eta^mu) * int_eta^vartheta zeta^{-mu} rhobar(zeta) E(eta, zeta) dzeta
/// with mu = lambda_k / a, rhobar = sum_{j != k} lambda_jk rho_j and E = exp(-lambda_k int r).
/// Densities vanish outside `support`; `tail_mass` bounds the mass of rhobar
/// beyond the cut when the upstream limit lies outside support and window.
RepresentationResult representation_check(const SwitchingSystem& system, const DensityFunction& rho,
                                          const LinearizationData& lin, double eta, Interval support,
                                          double tail_mass = 0.0);

/// The same integral with rhobar replaced by (lambda_k + u_k') rho_k + u_k rho_k',
/// split into its two parts, against the representation value.
RepresentationResult appendix_identity_check(const SwitchingSystem& system, const DensityFunction& rho,
                                             const DensityFunction& drho, const LinearizationData& lin, double eta,
                                             Interval support, double tail_mass = 0.0);

/// Piecewise cubic interpolants of a grid that never straddle a critical
/// point; zero outside the grid interval.
DensityFunction grid_density(const SwitchingSystem& system, const DensityGrid& grid);
DensityFunction grid_derivative(const SwitchingSystem& system, const DensityGrid& grid);

RepresentationResult representation_check(const SwitchingSystem& system, const DensityGrid& grid,
                                          const LinearizationData& lin, double eta);
RepresentationResult appendix_identity_check(const SwitchingSystem& system, const DensityGrid& grid,
                                             const LinearizationData& lin, double eta);

}  // namespace pdmp
