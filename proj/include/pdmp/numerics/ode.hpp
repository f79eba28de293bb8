#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace pdmp::numerics {

struct OdeTolerances {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_min = 1e-14;  // relative to |t1 - t0|
  long max_steps = 2000000;
};

enum class OdeStatus { completed, step_underflow, guard_stop, max_steps };

template <typename State>
struct OdeOutcome {
  State y;
  double t = 0.0;
  OdeStatus status = OdeStatus::completed;
  long steps = 0;
  long rejected = 0;
  double last_h = 0.0;
};

namespace detail {

inline double scaled_error(double err, double y0, double y1, const OdeTolerances& tol) {
  const double sc = tol.atol + tol.rtol * std::max(std::abs(y0), std::abs(y1));
  return std::abs(err) / sc;
}

template <typename D0, typename D1, typename D2>
double scaled_error(const Eigen::MatrixBase<D0>& err, const Eigen::MatrixBase<D1>& y0, const Eigen::MatrixBase<D2>& y1,
                    const OdeTolerances& tol) {
  const auto sc = (tol.atol + tol.rtol * y0.array().abs().max(y1.array().abs())).eval();
  return (err.array().abs() / sc).maxCoeff();
}

inline bool all_finite(double y) { return std::isfinite(y); }
inline bool same_state(double a, double b) { return a == b; }
template <typename D0, typename D1>
bool same_state(const Eigen::MatrixBase<D0>& a, const Eigen::MatrixBase<D1>& b) {
  return (a.array() == b.array()).all();
}
template <typename D>
bool all_finite(const Eigen::MatrixBase<D>& y) {
  return y.allFinite();
}

}  // namespace detail

/// Dormand–Prince 5(4) with FSAL and PI-free elementary step control.
/// `guard(y)` returning false marks a state as unacceptable; such trial steps
/// are shrunk until the step falls below h_min, then the last accepted state
/// is returned with status guard_stop. `observer(t, y)` sees accepted steps.
template <typename State, typename Rhs, typename Guard, typename Observer>
OdeOutcome<State> dormand_prince(Rhs&& f, double t0, const State& y0, double t1, const OdeTolerances& tol, Guard&& guard,
                                 Observer&& observer, double h_init = 0.0) {
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                   e7 = -1.0 / 40;

  OdeOutcome<State> out{y0, t0};
  const double span = t1 - t0;
  if (span == 0.0) return out;
  const double dir = span > 0 ? 1.0 : -1.0;
  const double h_min = tol.h_min * std::abs(span);

  State y = y0;
  double t = t0;
  State k1 = f(t, y);
  double h = h_init > 0 ? h_init : std::min(std::abs(span), 1e-3 * std::max(std::abs(span), 1e-300));
  if (h_init <= 0) {
    // Rough first step from the size of the derivative.
    const double d0 = detail::scaled_error(y, y, y, tol);
    const double d1 = detail::scaled_error(k1, y, y, tol);
    if (d0 > 1e-5 && d1 > 1e-5) h = std::min(h * 10, 0.01 * d0 / d1);
    h = std::max(h, h_min * 10);
  }

  bool guard_hit = false;
  while (dir * (t1 - t) > 0) {
    if (out.steps >= tol.max_steps) {
      out.status = OdeStatus::max_steps;
      break;
    }
    h = std::min(h, std::abs(t1 - t));
    const double hs = dir * h;
    const State k2 = f(t + c2 * hs, State(y + hs * (a21 * k1)));
    const State k3 = f(t + c3 * hs, State(y + hs * (a31 * k1 + a32 * k2)));
    const State k4 = f(t + c4 * hs, State(y + hs * (a41 * k1 + a42 * k2 + a43 * k3)));
    const State k5 = f(t + c5 * hs, State(y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    const State k6 = f(t + hs, State(y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
    const State y5 = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const bool finite = detail::all_finite(y5);
    const bool acceptable = finite && guard(y5);
    State k7 = acceptable ? f(t + hs, y5) : k1;
    double err = std::numeric_limits<double>::infinity();
    if (acceptable) {
      const State e = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      err = detail::scaled_error(e, y, y5, tol);
    }
    if (acceptable && err <= 1.0) {
      // Pinned against the guard: accepted steps no longer move y.
      if (guard_hit && detail::same_state(y5, y)) {
        out.status = OdeStatus::guard_stop;
        break;
      }
      guard_hit = false;
      t = (std::abs(t1 - (t + hs)) <= 1e-15 * std::abs(span)) ? t1 : t + hs;
      y = y5;
      k1 = k7;
      ++out.steps;
      out.last_h = h;
      observer(t, y);
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      ++out.rejected;
      if (!acceptable) {
        h *= 0.5;
        guard_hit = true;
        if (h < h_min) {
          out.status = OdeStatus::guard_stop;
          break;
        }
      } else {
        h *= std::clamp(0.9 * std::pow(err, -0.25), 0.1, 0.9);
        if (h < h_min) {
          out.status = OdeStatus::step_underflow;
          break;
        }
      }
    }
  }
  out.y = y;
  out.t = t;
  return out;
}

template <typename State, typename Rhs>
OdeOutcome<State> dormand_prince(Rhs&& f, double t0, const State& y0, double t1, const OdeTolerances& tol) {
  return dormand_prince(
      std::forward<Rhs>(f), t0, y0, t1, tol, [](const State&) { return true; }, [](double, const State&) {});
}

}  // namespace pdmp::numerics
