#include "pdmp/density_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pdmp/errors.hpp"
#include "pdmp/numerics/interpolation.hpp"
#include "pdmp/numerics/quadrature.hpp"

namespace pdmp {

std::vector<double> graded_mesh(Interval interval, const std::vector<double>& critical_points, const MeshSpec& spec) {
  const double L = interval.width();
  if (!(L > 0)) throw DomainError("graded_mesh: empty interval");
  if (!(spec.ratio > 1) || !(spec.min_offset > 0) || !(spec.max_spacing > 0))
    throw DomainError("graded_mesh: invalid mesh specification");
  const double h0 = spec.min_offset * L, hmax = spec.max_spacing * L;

  std::vector<double> cuts{interval.lo};
  std::vector<bool> crit{false};
  for (double c : critical_points) {
    if (c > interval.lo && c < interval.hi) {
      cuts.push_back(c);
      crit.push_back(true);
    }
  }
  cuts.push_back(interval.hi);
  crit.push_back(false);
  for (double c : critical_points) {
    if (c == interval.lo) crit.front() = true;
    if (c == interval.hi) crit.back() = true;
  }

  // Geometric offsets up to the point where spacing reaches hmax.
  std::vector<double> offsets;
  for (double o = h0; o * (spec.ratio - 1) < hmax; o *= spec.ratio) offsets.push_back(o);
  const double graded_reach = offsets.empty() ? 0.0 : offsets.back();

  std::vector<double> nodes;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double a = cuts[p], b = cuts[p + 1], w = b - a;
    double lo = a, hi = b;
    const bool ca = crit[p], cb = crit[p + 1];
    if (ca) {
      for (double o : offsets)
        if (o < 0.5 * w) nodes.push_back(a + o);
      lo = a + std::min(graded_reach, 0.5 * w);
    } else {
      nodes.push_back(a);
    }
    if (cb) {
      for (double o : offsets)
        if (o < 0.5 * w) nodes.push_back(b - o);
      hi = b - std::min(graded_reach, 0.5 * w);
    } else {
      nodes.push_back(b);
    }
    if (hi > lo) {
      const int m = std::max(1, static_cast<int>(std::ceil((hi - lo) / hmax)));
      for (int j = 1; j < m; ++j) nodes.push_back(lo + (hi - lo) * j / m);
      if (ca) nodes.push_back(lo);
      if (cb) nodes.push_back(hi);
    }
  }
  std::sort(nodes.begin(), nodes.end());
  std::vector<double> out;
  for (double x : nodes)
    if (out.empty() || x - out.back() > 1e-3 * h0) out.push_back(x);
  return out;
}

std::vector<double> interpolant_weights(const std::vector<double>& nodes) {
  const int n = static_cast<int>(nodes.size());
  if (n < 2) throw DomainError("interpolant_weights: need at least two nodes");
  std::vector<double> w(n, 0.0);
  const auto& g = numerics::gauss_legendre_16();
  for (int j = 0; j + 1 < n; ++j) {
    const double a = nodes[j], b = nodes[j + 1], half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t q = 0; q < g.nodes.size(); ++q) {
      const double x = mid + half * g.nodes[q];
      auto s = numerics::lagrange_stencil(nodes, x);
      for (int c = 0; c < s.count; ++c) w[s.first + c] += half * g.weights[q] * s.w[c];
    }
  }
  return w;
}

numerics::Stencil piecewise_stencil(const std::vector<double>& nodes, const std::vector<double>& breaks, double x) {
  // Node range [b, e) of the piece containing x.
  const auto cut = std::upper_bound(breaks.begin(), breaks.end(), x);
  const double lo = cut == breaks.begin() ? -INFINITY : *(cut - 1);
  const double hi = cut == breaks.end() ? INFINITY : *cut;
  const int b = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), lo) - nodes.begin());
  const int e = static_cast<int>(std::lower_bound(nodes.begin(), nodes.end(), hi) - nodes.begin());
  numerics::Stencil s;
  if (e <= b) return s;  // no node in this piece
  if (e - b == 1 || x <= nodes[b] || x >= nodes[e - 1]) {
    s.first = x >= nodes[e - 1] ? e - 1 : b;
    s.count = 1;
    s.w[0] = 1.0;
    return s;
  }
  s = numerics::lagrange_stencil(std::span<const double>(nodes.data() + b, e - b), x);
  s.first += b;
  return s;
}

std::vector<double> piecewise_weights(const std::vector<double>& nodes, Interval interval,
                                      const std::vector<double>& breaks) {
  const int n = static_cast<int>(nodes.size());
  std::vector<double> w(n, 0.0);
  std::vector<double> cuts{interval.lo};
  for (double c : breaks)
    if (c > interval.lo && c < interval.hi) cuts.push_back(c);
  cuts.push_back(interval.hi);
  const auto& g = numerics::gauss_legendre_16();
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const int b = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), cuts[p]) - nodes.begin());
    int e = static_cast<int>(std::lower_bound(nodes.begin(), nodes.end(), cuts[p + 1]) - nodes.begin());
    // Non-critical interval ends are nodes themselves.
    const int b0 = (b > 0 && nodes[b - 1] == cuts[p]) ? b - 1 : b;
    if (e < n && nodes[e] == cuts[p + 1]) ++e;
    if (e <= b0) continue;
    w[b0] += nodes[b0] - cuts[p];
    w[e - 1] += cuts[p + 1] - nodes[e - 1];
    if (e - b0 == 1) continue;
    const std::span<const double> z(nodes.data() + b0, e - b0);
    for (int j = b0; j + 1 < e; ++j) {
      const double lo = nodes[j], hi = nodes[j + 1], half = 0.5 * (hi - lo), mid = 0.5 * (lo + hi);
      for (std::size_t q = 0; q < g.nodes.size(); ++q) {
        auto s = numerics::lagrange_stencil(z, mid + half * g.nodes[q]);
        for (int c = 0; c < s.count; ++c) w[b0 + s.first + c] += half * g.weights[q] * s.w[c];
      }
    }
  }
  return w;
}

double interpolate(const DensityGrid& grid, int state, double x) {
  const auto& z = grid.nodes;
  if (x <= z.front()) return grid.rho(state, 0);
  if (x >= z.back()) return grid.rho(state, grid.size() - 1);
  const auto s = numerics::lagrange_stencil(z, x);
  double acc = 0;
  for (int c = 0; c < s.count; ++c) acc += s.w[c] * grid.rho(state, s.first + c);
  return acc;
}

double l1_distance(const DensityGrid& grid, const DensityFunction& f) {
  const auto w = interpolant_weights(grid.nodes);
  double acc = 0;
  for (int i = 0; i < grid.states(); ++i)
    for (int j = 0; j < grid.size(); ++j) acc += w[j] * std::abs(grid.rho(i, j) - f(i, grid.nodes[j]));
  return acc;
}

void normalize(DensityGrid& grid) {
  const double total = grid.mass.sum();
  if (!(std::abs(total) > 0) || !std::isfinite(total)) throw NumericalError("normalize: zero or non-finite total mass");
  grid.rho /= total;
  grid.flux /= total;
  grid.mass /= total;
  grid.normalization = grid.mass.sum();
}

void write_density_csv(std::ostream& os, const DensityGrid& grid) {
  os << "state,eta,rho,flux\n";
  char buf[128];
  for (int i = 0; i < grid.states(); ++i)
    for (int j = 0; j < grid.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", i, grid.nodes[j], grid.rho(i, j), grid.flux(i, j));
      os << buf;
    }
}

}  // namespace pdmp
