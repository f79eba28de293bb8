#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace pdmp::numerics {

/// Gauss–Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss–Legendre rule: Golub–Welsch for starting values, then
/// Newton polishing on the Legendre recurrence for full double precision.
inline GaussRule gauss_legendre(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()(i);
    double dp = 1.0;
    for (int it = 0; it < 5; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = x;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      x -= p1 / dp;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

inline const GaussRule& gauss_legendre_16() {
  static const GaussRule rule = gauss_legendre(16);
  return rule;
}

/// Fixed-order Gauss–Legendre on [a, b].
template <typename F>
double integrate_gauss(F&& f, double a, double b, const GaussRule& rule = gauss_legendre_16()) {
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) acc += rule.weights[k] * f(mid + half * rule.nodes[k]);
  return acc * half;
}

namespace detail {

// Kronrod 15 / Gauss 7 abscissae and weights on [-1, 1].
inline constexpr std::array<double, 8> kXgk{0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk{0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg{0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <typename F>
void gk15(F& f, double a, double b, double& result, double& error) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double rk = fc * kWgk[7];
  double rg = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[j];
    const double f1 = f(c - dx), f2 = f(c + dx);
    rk += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) rg += kWg[j / 2] * (f1 + f2);
  }
  result = rk * h;
  error = std::abs((rk - rg) * h);
}

template <typename F>
double gk_adaptive(F& f, double a, double b, double whole, double abs_tol, double rel_tol, int depth, double& err_acc) {
  const double m = 0.5 * (a + b);
  double left, el, right, er;
  gk15(f, a, m, left, el);
  gk15(f, m, b, right, er);
  const double sum = left + right;
  const double err = el + er;
  if (depth <= 0 || err <= std::max(abs_tol, rel_tol * std::abs(sum)) || std::abs(sum - whole) <= 1e-15 * std::abs(sum)) {
    err_acc += err;
    return sum;
  }
  return gk_adaptive(f, a, m, left, 0.5 * abs_tol, rel_tol, depth - 1, err_acc) +
         gk_adaptive(f, m, b, right, 0.5 * abs_tol, rel_tol, depth - 1, err_acc);
}

}  // namespace detail

/// Adaptive Gauss–Kronrod (7/15) quadrature of a smooth integrand on [a, b].
template <typename F>
double integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-13, double abs_tol = 0.0, int max_depth = 40) {
  if (a == b) return 0.0;
  double whole, err;
  detail::gk15(f, a, b, whole, err);
  if (err <= std::max(abs_tol, rel_tol * std::abs(whole))) return whole;
  double acc = 0.0;
  return detail::gk_adaptive(f, a, b, whole, abs_tol, rel_tol, max_depth, acc);
}

/// Tanh–sinh quadrature on [a, b]; tolerant of integrable algebraic or
/// logarithmic endpoint singularities. The integrand receives (x, distance
/// to the nearer endpoint) so callers can evaluate singular factors without
/// cancellation.
template <typename F>
double integrate_tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-12, int max_levels = 10) {
  if (a == b) return 0.0;
  if (a > b) return -integrate_tanh_sinh(f, b, a, rel_tol, max_levels);
  const double h2 = 0.5 * (b - a);
  constexpr double half_pi = std::numbers::pi / 2.0;
  auto term = [&](double t) {
    const double s = half_pi * std::sinh(t);
    const double ch = std::cosh(s);
    const double w = half_pi * std::cosh(t) / (ch * ch);
    // 1 - |tanh(s)| computed without cancellation.
    const double comp = 1.0 / (std::exp(2.0 * std::abs(s)) + 1.0) * 2.0;
    const double dist = h2 * comp;
    if (!(dist > 0.0) || w == 0.0) return 0.0;
    const double x = (s >= 0) ? b - dist : a + dist;
    return w * f(x, dist);
  };
  const double t_max = 6.5;
  double step = 0.5;
  double sum = term(0.0);
  for (double t = step; t <= t_max; t += step) sum += term(t) + term(-t);
  double estimate = sum * step;
  for (int level = 1; level < max_levels; ++level) {
    step *= 0.5;
    double extra = 0.0;
    for (double t = step; t <= t_max; t += 2.0 * step) extra += term(t) + term(-t);
    sum += extra;
    const double next = sum * step;
    const bool done = std::abs(next - estimate) <= rel_tol * std::abs(next);
    estimate = next;
    if (done && level >= 3) break;
  }
  return estimate * h2;
}

}  // namespace pdmp::numerics
