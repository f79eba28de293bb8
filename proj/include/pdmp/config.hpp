#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdmp/density_grid.hpp"
#include "pdmp/simulator.hpp"
#include "pdmp/system_model.hpp"

namespace pdmp {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

struct FieldSpec {
  std::string type = "affine";  // affine | polynomial
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> coefficients;  // ascending powers, polynomial only

  VectorField build() const;
  bool operator==(const FieldSpec&) const = default;
};

struct SimulateBlock {
  std::uint64_t seed = 42;
  double t_max = 1e4;
  double burn_in = 0.0;
  std::uint64_t max_switches = 1000000;
  int replicas = 1;
  std::optional<double> x0;  // default: centre of the first invariant interval
  int i0 = 0;
  int linear_bins = 200;
  int log_bins_per_decade = 10;
  double bin_min_offset = 1e-6;
  double bin_graded_zone = 0.05;
  std::optional<Interval> range;  // default: working interval of the set containing x0

  bool operator==(const SimulateBlock&) const = default;
};

struct SolveBlock {
  double mesh_ratio = 1.05;
  double mesh_min_offset = 1e-8;
  double mesh_max_spacing = 1.0 / 200;
  double rtol = 1e-12;
  double atol = 1e-14;
  double pf_horizon = 0.0;  // 0: 1.5 / mean exit rate
  double pf_tol = 1e-10;
  int max_iters = 200;
  double certificate_tol = 1e-10;
  int certificate_nodes = 400;
  int residual_nodes = 200;
  // Reporting thresholds of the residual JSON.
  double flux_sum_tol = 1e-10;
  double integral_residual_tol = 1e-6;
  double representation_tol = 1e-4;
  double route_l1_tol = 1e-5;

  MeshSpec mesh() const { return {mesh_ratio, mesh_min_offset, mesh_max_spacing}; }
  bool operator==(const SolveBlock&) const = default;
};

struct AsymptoticsBlock {
  int K = 8;
  double epsilon_fraction = 0.5;  // matching radius relative to delta
  double delta_fraction = 0.99;
  double resonance_tol = 1e-9;
  double fit_lo = 1e-4;
  double fit_hi = 1e-2;
  double richardson_h = 1e-7;

  bool operator==(const AsymptoticsBlock&) const = default;
};

struct ValidateBlock {
  double exponent_rel_tol = 0.03;
  double limit_rel_tol = 0.01;
  double log_ratio_tol = 0.05;
  double log_lo = 1e-6;
  double log_hi = 1e-3;
  double approach_tol = 0.02;  // rho_k near 0 against its extrapolated limit
  double density_rel_tol = 1e-6;  // supplied density against the solved one
  double node_residual_tol = 1e-6;  // one integral-equation step, relative to max rho
  double mc_l1_tol = 0.02;
  double pf_l1_tol = 1e-5;
  bool monte_carlo = true;

  bool operator==(const ValidateBlock&) const = default;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::vector<FieldSpec> fields;
  Eigen::MatrixXd rates;
  Interval window;
  SimulateBlock simulate;
  SolveBlock solve;
  AsymptoticsBlock asymptotics;
  ValidateBlock validate;
  std::string output = "out";

  SwitchingSystem build_system() const;
  bool operator==(const RunConfig& o) const;
};

/// Parses a config document; unknown keys at any level raise ConfigError.
RunConfig parse_config(const json& doc);
RunConfig load_config(const std::string& path);
/// Full document with every default spelled out; parse_config inverts it.
json to_json(const RunConfig& config);

/// Serializes with every double printed to 17 significant digits and
/// non-finite values as the strings "inf", "-inf" and "nan".
std::string dump_json(const json& doc, int indent = 2);
/// Formats a double to 17 significant digits.
std::string format_double(double v);

}  // namespace pdmp
