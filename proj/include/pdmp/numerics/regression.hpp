#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

namespace pdmp::numerics {

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double rms_residual = 0.0;
  int count = 0;
};

/// Ordinary least squares for y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need at least two paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw std::invalid_argument("fit_line: degenerate abscissae");
  LineFit fit;
  fit.count = static_cast<int>(x.size());
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    ss += r * r;
  }
  fit.rms_residual = std::sqrt(ss / n);
  fit.slope_stderr = x.size() > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
  return fit;
}

}  // namespace pdmp::numerics
