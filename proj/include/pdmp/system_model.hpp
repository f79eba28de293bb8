#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pdmp/errors.hpp"
#include "pdmp/numerics/polynomial.hpp"

namespace pdmp {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double center() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
  bool operator==(const Interval&) const = default;
};

enum class FieldKind { affine, polynomial, tabulated };

/// One driving vector field u_i. Affine and polynomial fields carry exact
/// coefficients; tabulated fields wrap value and derivative callables.
class VectorField {
 public:
  static VectorField affine(double slope, double intercept);
  static VectorField polynomial(std::vector<double> ascending_coefficients);
  static VectorField tabulated(std::function<double(double)> value, std::function<double(double)> derivative,
                               int smoothness_class);

  /// Declared global Lipschitz exponent alpha with |D Phi^t| <= exp(-alpha t).
  VectorField& with_contraction_rate(double alpha);

  FieldKind kind() const { return kind_; }
  bool analytic() const { return kind_ != FieldKind::tabulated; }
  /// Affine in the strict sense: degree <= 1, closed-form flows apply.
  bool is_affine() const { return analytic() && poly_.degree() <= 1; }
  double operator()(double x) const;
  double derivative(double x) const;
  const numerics::Polynomial<double>& polynomial() const;
  std::optional<double> contraction_rate() const { return contraction_rate_; }
  int smoothness_class() const { return smoothness_; }
  /// Slope s and intercept b of u(x) = s x + b; only for affine fields.
  double slope() const;
  double intercept() const;

 private:
  FieldKind kind_ = FieldKind::affine;
  numerics::Polynomial<double> poly_;
  numerics::Polynomial<double> dpoly_;
  std::function<double(double)> value_;
  std::function<double(double)> deriv_;
  int smoothness_ = -1;  // -1: analytic
  std::optional<double> contraction_rate_;
};

/// Off-diagonal switching intensities lambda_{i,j} >= 0 with zero diagonal.
class SwitchingRates {
 public:
  explicit SwitchingRates(Eigen::MatrixXd off_diagonal);

  int n() const { return static_cast<int>(rates_.rows()); }
  double rate(int i, int j) const { return rates_(i, j); }
  double total(int i) const { return totals_(i); }
  const Eigen::MatrixXd& matrix() const { return rates_; }
  const Eigen::VectorXd& totals() const { return totals_; }
  /// Generator Q of the jump chain: Q_ij = lambda_ij, Q_ii = -lambda_i.
  Eigen::MatrixXd generator() const;
  /// Flux matrix Lambda = Q^T: columns sum to zero.
  Eigen::MatrixXd flux_matrix() const { return generator().transpose(); }

 private:
  Eigen::MatrixXd rates_;
  Eigen::VectorXd totals_;
};

enum class FlowStatus { interior, hit_window_boundary, backward_blowup };

struct FlowResult {
  double endpoint = 0.0;
  FlowStatus status = FlowStatus::interior;
  double elapsed = 0.0;
};

/// Roots of one field inside a window plus the sign of the field on each
/// complementary open subinterval (signs.size() == roots.size() + 1 unless a
/// root sits on the window boundary, in which case that empty piece is dropped).
struct RootReport {
  std::vector<double> roots;
  std::vector<double> breaks;  // lo, roots..., hi with empty pieces dropped
  std::vector<int> signs;      // one per (breaks[k], breaks[k+1])
};

struct ModelOptions {
  double tabulated_rtol = 1e-10;
  double tabulated_atol = 1e-12;
  double polynomial_rtol = 1e-13;
  double polynomial_atol = 1e-15;
  double blowup_factor = 1e3;
  int scan_points = 4096;
  double root_tol = 1e-13;
  double zero_tol = 1e-12;
};

class SwitchingSystem {
 public:
  SwitchingSystem(std::vector<VectorField> fields, SwitchingRates rates, Interval window, ModelOptions options = {});

  int n() const { return static_cast<int>(fields_.size()); }
  const VectorField& field(int i) const;
  const SwitchingRates& rates() const { return rates_; }
  const Interval& window() const { return window_; }
  const ModelOptions& options() const { return options_; }
  bool all_analytic() const;
  /// Lambda as used by the flux system.
  const Eigen::MatrixXd& flux_matrix() const { return flux_matrix_; }

  double eval_field(int i, double x) const;
  double eval_derivative(int i, double x) const;
  /// Scale used for relative zero tests of u_i near x.
  double field_scale(int i, double x) const;

  RootReport critical_points(int i, Interval window) const;
  /// Cached roots of u_i in the analysis window.
  const std::vector<double>& critical_points(int i) const { return roots_.at(i); }
  /// Sorted union of all fields' roots in the analysis window.
  std::vector<double> all_critical_points() const;
  /// Roots over the whole real line for polynomial fields, window roots for
  /// tabulated ones. The flag reports whether the result is exhaustive.
  std::vector<double> global_critical_points(bool* exhaustive = nullptr) const;
  /// Fields vanishing at x within the relative zero tolerance.
  std::vector<int> fields_critical_at(double x) const;

  FlowResult flow(int i, double x0, double t) const;
  FlowResult backward_flow(int i, double x, double t) const;
  /// D Phi_i^t(x0) = u_i(Phi_i^t(x0)) / u_i(x0).
  double flow_derivative(int i, double x0, double t) const;
  /// Integral of 1/u_i from a to b; u_i must not vanish on [a, b].
  double transit_time(int i, double a, double b) const;

 private:
  FlowResult flow_signed(int i, double x0, double t, bool backward) const;
  void require_state(int i) const;

  std::vector<VectorField> fields_;
  SwitchingRates rates_;
  Interval window_;
  ModelOptions options_;
  Eigen::MatrixXd flux_matrix_;
  std::vector<std::vector<double>> roots_;
};

const char* to_string(FlowStatus s);

}  // namespace pdmp
