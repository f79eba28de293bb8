#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdmp/density_grid.hpp"
#include "pdmp/flux_solver.hpp"
#include "pdmp/invariant_structure.hpp"
#include "pdmp/system_model.hpp"

namespace pdmp {

/// Linear data of the critical field k at xi, seen from one side in the local
/// coordinate eta = sigma * (x - xi).
struct LinearizationData {
  double xi = 0.0;
  int sigma = 1;
  int field_index = -1;
  double a = 0.0;      // u_k(xi + sigma eta) = -a sigma eta + O(eta^2)
  double delta = 0.0;  // no other break point in (0, delta], u_k != 0 there
  /// Upstream limit of the backward u_k flow from small eta, in local
  /// coordinates: 0 when repelling, the next root of u_k or +infinity otherwise.
  Endpoint vartheta;
  double r_inf = 0.0;  // max of |-1/u~_k(eta) - 1/(a eta)| over (0, delta]
  std::optional<double> rho_bar0;
  /// Ascending coefficients of q with u~_k(eta) = eta q(eta); empty for
  /// tabulated fields.
  std::vector<double> q;

  double local_u(const SwitchingSystem& system, double eta) const;
  /// r(eta) = -1/u~_k(eta) - 1/(a eta), free of cancellation when q is known.
  double r(const SwitchingSystem& system, double eta) const;
  /// Integral of r over [eta, zeta] inside [0, vartheta).
  double integral_r(const SwitchingSystem& system, double eta, double zeta) const;
};

LinearizationData linearize_at_critical(const SwitchingSystem& system, double xi, Side side = Side::right,
                                        double delta_fraction = 0.99);

enum class AsymptoticKind { power, constant, log, log_bounded_band, zero };

struct AsymptoticForm {
  AsymptoticKind kind = AsymptoticKind::zero;
  double exponent = 0.0;  // lambda_1 / a - 1 for power laws
  std::optional<double> limit;  // rho_bar(0) / (lambda_1 - a) when known
  /// Empty when the theory makes no boundedness statement.
  std::optional<bool> bounded;
  CriticalCase kase = CriticalCase::B;
  bool resonant_critical = false;  // lambda_1 == a
  bool inconclusive = false;
  std::string note;
};

/// Decision table for the behaviour of rho_k as eta -> 0+.
AsymptoticForm classify_asymptotics(double lambda1, double a, CriticalCase kase, bool analytic,
                                    std::optional<double> rho_bar0 = {}, double resonance_tol = 1e-9);

struct ExponentFit {
  double exponent = 0.0;  // slope of ln rho against ln eta
  double exponent_stderr = 0.0;
  double prefactor = 0.0;  // exp(intercept)
  int used = 0;
  int excluded = 0;  // nonpositive or non-finite samples dropped
  double power_rms = 0.0;  // relative residuals of both models
  double log_rms = 0.0;
  double log_slope = 0.0;  // rho = c0 + c (-ln eta): c
  double log_intercept = 0.0;
  bool log_preferred = false;
  double slope_drift = 0.0;  // slope difference between window halves
  bool unstable = false;
};

/// Fits both a power law and a logarithmic law to samples with eta in [lo, hi].
ExponentFit fit_exponent(std::span<const double> eta, std::span<const double> rho, double lo, double hi);
/// Same on the nodes of a grid on the sigma side of xi.
ExponentFit fit_exponent(const DensityGrid& grid, int state, double xi, int sigma, double lo, double hi);

/// Limit as h -> 0 of f(h) from f(h), f(h/2), f(h/4) assuming an expansion in
/// integer powers of h.
double richardson_limit(const std::function<double(double)>& f, double h);

struct AsymptoticsOptions {
  double fit_lo = 1e-4;
  double fit_hi = 1e-2;
  double richardson_h = 1e-7;  // relative to delta
  double delta_fraction = 0.99;
};

/// Full analysis of one side of one critical point against a solved density.
struct CriticalPointReport {
  LinearizationData linearization;
  CriticalCase kase = CriticalCase::A;
  double lambda1 = 0.0;
  AsymptoticForm form;
  std::optional<ExponentFit> fit;
  std::optional<double> limit_extrapolated;  // rho_k(0+)
  std::optional<double> prefactor_expansion;  // coefficient of eta^{mu-1} from the local expansion
  int frobenius_order = 0;
  bool frobenius_resonant = false;
  double frobenius_epsilon = 0.0;
  double frobenius_validity_radius = 0.0;
  double mu = 0.0;
  std::vector<std::string> notes;
};

CriticalPointReport analyze_critical_point(const SwitchingSystem& system, const FluxSolution& solution,
                                           const std::vector<MinimalInvariantSet>& sets, double xi, Side side,
                                           const AsymptoticsOptions& options = {});

const char* to_string(AsymptoticKind k);

}  // namespace pdmp
