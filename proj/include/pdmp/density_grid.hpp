#pragma once

#include <Eigen/Dense>
#include <functional>
#include <ostream>
#include <vector>

#include "pdmp/numerics/interpolation.hpp"
#include "pdmp/system_model.hpp"

namespace pdmp {

/// Per-state densities and fluxes on a node set inside one invariant interval.
struct DensityGrid {
  Interval interval;
  std::vector<double> nodes;  // strictly increasing, never on a critical point
  Eigen::MatrixXd rho;        // states x nodes
  Eigen::MatrixXd flux;       // states x nodes, flux = rho * u
  Eigen::VectorXd mass;       // per-state integral of rho
  double normalization = 0.0;  // sum of mass

  int states() const { return static_cast<int>(rho.rows()); }
  int size() const { return static_cast<int>(nodes.size()); }
};

/// Density of state i at x.
using DensityFunction = std::function<double(int, double)>;

struct MeshSpec {
  double ratio = 1.05;             // geometric growth of offsets from a critical point
  double min_offset = 1e-8;        // first offset, relative to the interval length
  double max_spacing = 1.0 / 200;  // relative to the interval length
};

/// Graded nodes on [lo, hi]: geometric offsets away from each listed critical
/// point (endpoints included), uniform spacing elsewhere and toward open ends.
/// Critical points themselves are never nodes; non-critical ends are.
std::vector<double> graded_mesh(Interval interval, const std::vector<double>& critical_points, const MeshSpec& spec = {});

/// Weights w with sum_j w_j f(nodes_j) equal to the integral of the piecewise
/// cubic Lagrange interpolant of f over [nodes.front(), nodes.back()].
std::vector<double> interpolant_weights(const std::vector<double>& nodes);

/// Integration weights on [interval.lo, interval.hi] that never interpolate
/// across a break point: cubic Lagrange within each piece between breaks,
/// constant from the outermost node of a piece to the piece boundary.
std::vector<double> piecewise_weights(const std::vector<double>& nodes, Interval interval,
                                      const std::vector<double>& breaks);

/// Stencil for the value at x using only nodes in the piece containing x;
/// constant beyond the outermost nodes of that piece.
numerics::Stencil piecewise_stencil(const std::vector<double>& nodes, const std::vector<double>& breaks, double x);

/// Cubic interpolation of state i on the grid (constant beyond the end nodes).
double interpolate(const DensityGrid& grid, int state, double x);

/// Sum over states of the weighted L1 distance between grid values and f.
double l1_distance(const DensityGrid& grid, const DensityFunction& f);

/// Scale so that the summed mass is one; mass must be filled in.
void normalize(DensityGrid& grid);

/// CSV with columns state,eta,rho,flux.
void write_density_csv(std::ostream& os, const DensityGrid& grid);

}  // namespace pdmp
