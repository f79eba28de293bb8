#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pdmp/density_grid.hpp"
#include "pdmp/frobenius.hpp"
#include "pdmp/invariant_structure.hpp"
#include "pdmp/system_model.hpp"

namespace pdmp {

struct FluxSolveOptions {
  MeshSpec mesh;
  int frobenius_order = 8;
  double rtol = 1e-12;
  double atol = 1e-14;
  double resonance_tol = 1e-9;
  /// Fraction of the gap to the next break point used as the safe radius delta.
  double delta_fraction = 0.99;
  /// Matching radius epsilon as a fraction of delta, capped by the validity radius.
  double epsilon_fraction = 0.5;
};

/// Local solution phi(eta) = F(eta) w on 0 < eta <= epsilon next to a critical
/// point, eta = sigma * (x - xi).
struct LocalPatch {
  FrobeniusExpansion<double> expansion;
  Eigen::VectorXd w;
  Eigen::VectorXd mass;  // per-state integral of rho over the patch
  double xi() const { return expansion.local.xi; }
  int sigma() const { return expansion.local.sigma; }
  double epsilon() const { return expansion.epsilon; }
  bool covers(double x) const;
  Eigen::VectorXd flux(double eta) const;
  Eigen::VectorXd rho(double eta) const;
};

struct FluxDiagnostics {
  double flux_sum_deviation = 0.0;  // max |sum phi| / max |phi| over nodes
  Eigen::VectorXd singular_values;  // of [W_left, -W_right] at the anchor
  double anchor = 0.0;
  int left_dimension = 0;
  int right_dimension = 0;
  double tail_mass_estimate = 0.0;  // beyond truncated ends
  double min_interior_density = 0.0;
  bool frobenius_fallback = false;  // some expansion is order 0
  std::vector<std::string> warnings;
};

class FluxSolution {
 public:
  DensityGrid grid;
  std::vector<LocalPatch> patches;
  std::vector<double> break_points;
  FluxDiagnostics diagnostics;

  FluxSolution(SwitchingSystem system) : system_(std::move(system)) {}
  /// Flux vector at x; near a critical point from the local expansion,
  /// elsewhere by integrating from the nearest stored station.
  Eigen::VectorXd flux_at(double x) const;
  double rho_at(int i, double x) const;
  /// Density callable for cross-checks.
  DensityFunction density() const;
  const SwitchingSystem& system() const { return system_; }

  std::vector<double> station_x;
  std::vector<Eigen::VectorXd> station_phi;
  double rtol = 1e-12;

 private:
  SwitchingSystem system_;
};

/// Stationary flux system phi' = Lambda diag(1/u) phi on one minimal invariant
/// interval, shot from both ends toward an interior anchor and normalized to
/// unit total mass.
FluxSolution solve_flux_ode(const SwitchingSystem& system, const MinimalInvariantSet& set,
                            const FluxSolveOptions& options = {});

}  // namespace pdmp
