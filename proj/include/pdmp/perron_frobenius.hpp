#pragma once

#include <string>
#include <vector>

#include "pdmp/density_grid.hpp"
#include "pdmp/system_model.hpp"

namespace pdmp {

enum class KernelMode {
  truncated,  // rho_i <- Pbar^T_i rho_i + sum_j lambda_ji Phat^T_i rho_j
  infinite,   // rho_i <- sum_j lambda_ji Pbar_i rho_j, horizon cut at the tail tolerance
};

/// Discretized integral operator on the nodes of a grid. Each row is a
/// contiguous band of node weights from Gauss-Legendre quadrature per cell
/// along the backward flow of one state; densities vanish outside the
/// working interval.
class PerronFrobeniusOperator {
 public:
  /// Rows at every node. In infinite mode `horizon` is the tail tolerance.
  PerronFrobeniusOperator(const SwitchingSystem& system, const std::vector<double>& nodes, Interval interval,
                          double horizon, KernelMode mode = KernelMode::truncated, int threads = 0);
  /// Rows only at the node indices in `targets` (sorted).
  PerronFrobeniusOperator(const SwitchingSystem& system, const std::vector<double>& nodes, Interval interval,
                          double horizon, KernelMode mode, int threads, std::vector<int> targets);

  /// Image at the target nodes; masses are recomputed, no normalization.
  DensityGrid apply(const DensityGrid& grid) const;
  /// Input restricted to the target nodes, for comparison with apply().
  DensityGrid restrict(const DensityGrid& grid) const;
  double horizon() const { return horizon_; }
  KernelMode mode() const { return mode_; }
  /// Rows whose backward flow reaches an end of the working interval before
  /// the horizon; exact when that end bounds the support, a tail cut otherwise.
  int truncated_rows() const { return truncated_rows_; }

 private:
  struct Row {
    int first = 0;
    std::vector<double> own;    // acts on rho_i
    std::vector<double> other;  // acts on rho_j, j != i
  };
  const SwitchingSystem* system_;
  std::vector<double> nodes_;
  std::vector<int> targets_;
  std::vector<double> target_nodes_;
  Interval interval_;
  double horizon_;
  KernelMode mode_;
  std::vector<std::vector<Row>> rows_;  // state x node
  std::vector<double> mass_weights_;
  int truncated_rows_ = 0;
};

/// 1.5 divided by the mean total exit rate.
double default_horizon(const SwitchingSystem& system);

/// One application of the truncated-horizon operator.
DensityGrid perron_frobenius_step(const SwitchingSystem& system, const DensityGrid& grid, double horizon);

/// Sum over states of the weighted L1 norm of a - b on shared nodes.
double l1_change(const DensityGrid& a, const DensityGrid& b);

/// At most `count` node indices spread evenly over the grid, ends included.
std::vector<int> subsample(int size, int count);

/// Uniform density on the nodes with unit total mass.
DensityGrid uniform_density(int states, const std::vector<double>& nodes, Interval interval);

struct FixedPointOptions {
  double horizon = 0.0;  // 0: default_horizon
  double tol = 1e-10;
  int max_iters = 200;
  int threads = 0;
  /// Tail tolerance of the infinite-horizon certificate.
  double certificate_tol = 1e-10;
  int certificate_nodes = 400;
};

struct FixedPointResult {
  DensityGrid grid;
  int iterations = 0;
  double last_change = 0.0;
  bool converged = false;
  double horizon = 0.0;
  int truncated_rows = 0;
  std::vector<double> history;
  double truncated_residual = 0.0;  // L1 of grid - step(grid)
  double infinite_residual = 0.0;   // L1 of grid - infinite-horizon image
  std::vector<std::string> warnings;
};

/// Repeated steps with renormalization until the L1 change drops below tol.
FixedPointResult iterate_to_fixed_point(const SwitchingSystem& system, const DensityGrid& initial,
                                        const FixedPointOptions& options = {});

/// Weighted L1 residual of the integral equation for a callable density,
/// relative to its total mass on the nodes. Integrals by adaptive quadrature.
double integral_equation_residual(const SwitchingSystem& system, const DensityFunction& rho,
                                  const std::vector<double>& nodes, Interval interval, double horizon,
                                  KernelMode mode);

/// Horizon of the infinite-horizon operator for state i: exp(-lambda_i T) = tol / 10.
double infinite_horizon(const SwitchingSystem& system, int state, double tol);

}  // namespace pdmp
