#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdmp/system_model.hpp"

namespace pdmp {

/// Extended-real endpoint; infinities are tags, never large floats.
struct Endpoint {
  enum class Kind { finite, neg_infinity, pos_infinity };
  Kind kind = Kind::finite;
  double value = 0.0;

  static Endpoint at(double x) { return {Kind::finite, x}; }
  static Endpoint neg_inf() { return {Kind::neg_infinity, 0.0}; }
  static Endpoint pos_inf() { return {Kind::pos_infinity, 0.0}; }
  bool is_finite() const { return kind == Kind::finite; }
  /// Position for ordering: infinities map to +-inf doubles.
  double order_key() const;
};

enum class SetKind { open_interval, singleton };

struct MinimalInvariantSet {
  SetKind kind = SetKind::open_interval;
  Endpoint left;
  Endpoint right;
  double point = 0.0;  // singleton position
  bool left_critical = false;
  bool right_critical = false;
  /// Some endpoint is unbounded or lies beyond the analysis window.
  bool window_truncated = false;

  bool contains(double x) const;
  /// Interval clipped to the analysis window (singletons give [p, p]).
  Interval working_interval(const Interval& window) const;
};

/// Label of one critical point produced by step (2) of the labelling.
struct LabelledPoint {
  double position = 0.0;
  bool l = false;
  bool r = false;
  bool uniformly_critical() const { return l && r; }
};

enum class CriticalCase { A, B, C };
enum class Side { right, left };
enum class Placement { support_gap, interior, endpoint };

struct CriticalPointCase {
  double point = 0.0;
  int field_index = -1;
  CriticalCase kase = CriticalCase::A;
  Placement placement = Placement::support_gap;
  Side side = Side::right;  // direction the classification looks into
};

struct StructureOptions {
  double zero_tol = 1e-12;
  int witness_depth = 20;
  double endpoint_match_tol = 1e-9;
};

std::vector<LabelledPoint> label_critical_points(const SwitchingSystem& system, const StructureOptions& opts = {});

/// Minimal invariant sets from the three-step labelling, sorted left to right.
std::vector<MinimalInvariantSet> minimal_invariant_sets(const SwitchingSystem& system,
                                                        const StructureOptions& opts = {});

/// Trichotomy at xi looking to the given side: A if a support gap starts
/// there, B if xi is interior to a set, C if xi is the near endpoint of one.
CriticalPointCase classify_critical_point(const SwitchingSystem& system, double xi,
                                          const std::vector<MinimalInvariantSet>& sets, Side side = Side::right,
                                          const StructureOptions& opts = {});

/// Two-sided summary: B if interior, C if an endpoint on either side
/// (side = left marks the mirrored case), A otherwise.
CriticalPointCase principal_case(const SwitchingSystem& system, double xi,
                                 const std::vector<MinimalInvariantSet>& sets, const StructureOptions& opts = {});

struct ExistenceReport {
  Eigen::VectorXd jump_chain_stationary;
  std::vector<std::optional<double>> contraction_coefficients;
  std::optional<double> mean_contraction;
  bool conclusive = false;
  bool exists = false;
  std::string note;
};

/// Stationary vector nu of the continuous-time chain: nu Q = 0, sum nu = 1.
Eigen::VectorXd stationary_distribution(const SwitchingRates& rates);

ExistenceReport existence_criterion(const SwitchingSystem& system);

struct ReachabilityOptions {
  int replicas = 256;
  double t_min = 1e-3;
  double t_max = 1e2;
  int strata = 16;
  int threads = 0;  // 0: hardware concurrency
};

/// Randomised search for a composed flow from `from` that passes through the
/// open interval `to_window`. Sound but incomplete: true means a witness path
/// was found.
bool reachability_oracle(const SwitchingSystem& system, double from, Interval to_window, int budget,
                         std::uint64_t rng_seed, const ReachabilityOptions& opts = {});

const char* to_string(CriticalCase c);
const char* to_string(Placement p);
const char* to_string(Side s);

}  // namespace pdmp
