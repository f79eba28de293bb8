#pragma once

#include <algorithm>
#include <array>
#include <span>
#include <stdexcept>

namespace pdmp::numerics {

/// Weights of a local (up to) four-point Lagrange stencil: value or first
/// derivative at x equals sum_k w[k] * f(nodes[first + k]) for k < count.
struct Stencil {
  int first = 0;
  int count = 0;
  std::array<double, 4> w{};
};

/// Index j with nodes[j] <= x < nodes[j + 1], clamped to [0, N - 2].
inline int locate_cell(std::span<const double> nodes, double x) {
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
  const int j = static_cast<int>(it - nodes.begin()) - 1;
  return std::clamp(j, 0, static_cast<int>(nodes.size()) - 2);
}

/// Cubic Lagrange stencil centred on the cell containing x.
inline Stencil lagrange_stencil(std::span<const double> nodes, double x, int derivative = 0) {
  const int n = static_cast<int>(nodes.size());
  if (n < 2) throw std::invalid_argument("lagrange_stencil: need at least two nodes");
  Stencil s;
  s.count = std::min(4, n);
  const int j = locate_cell(nodes, x);
  s.first = std::clamp(j - 1, 0, n - s.count);
  const double* z = nodes.data() + s.first;
  for (int a = 0; a < s.count; ++a) {
    double denom = 1.0;
    for (int b = 0; b < s.count; ++b)
      if (b != a) denom *= z[a] - z[b];
    if (derivative == 0) {
      double num = 1.0;
      for (int b = 0; b < s.count; ++b)
        if (b != a) num *= x - z[b];
      s.w[a] = num / denom;
    } else {
      double num = 0.0;
      for (int c = 0; c < s.count; ++c) {
        if (c == a) continue;
        double prod = 1.0;
        for (int b = 0; b < s.count; ++b)
          if (b != a && b != c) prod *= x - z[b];
        num += prod;
      }
      s.w[a] = num / denom;
    }
  }
  return s;
}

template <typename Values>
double apply_stencil(const Stencil& s, const Values& values) {
  double acc = 0.0;
  for (int k = 0; k < s.count; ++k) acc += s.w[k] * values[s.first + k];
  return acc;
}

}  // namespace pdmp::numerics
