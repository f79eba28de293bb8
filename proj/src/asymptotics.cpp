#include "pdmp/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pdmp/errors.hpp"
#include "pdmp/frobenius.hpp"
#include "pdmp/numerics/quadrature.hpp"
#include "pdmp/numerics/regression.hpp"

namespace pdmp {

double LinearizationData::local_u(const SwitchingSystem& system, double eta) const {
  return sigma * system.eval_field(field_index, xi + sigma * eta);
}

double LinearizationData::r(const SwitchingSystem& system, double eta) const {
  if (q.empty()) {
    // Tabulated field: below a floor the cancellation is worse than the variation of r.
    const double floor = 1e-6 * delta;
    const double e = std::max(eta, floor);
    return -1.0 / local_u(system, e) - 1.0 / (a * e);
  }
  // r = -(q(eta) - q(0)) / (eta a q(eta)).
  double qv = 0, q1 = 0;
  for (std::size_t k = q.size(); k-- > 0;) {
    qv = qv * eta + q[k];
    if (k >= 1) q1 = q1 * eta + q[k];
  }
  return -q1 / (a * qv);
}

double LinearizationData::integral_r(const SwitchingSystem& system, double eta, double zeta) const {
  return numerics::integrate_adaptive([&](double x) { return r(system, x); }, eta, zeta, 1e-13, 1e-300);
}

LinearizationData linearize_at_critical(const SwitchingSystem& system, double xi, Side side, double delta_fraction) {
  const auto crit = system.fields_critical_at(xi);
  if (crit.empty()) throw DomainError("linearize_at_critical: point is not critical for any field");
  if (crit.size() > 1) throw UnsupportedConfiguration("point is critical for more than one field");
  LinearizationData d;
  d.xi = xi;
  d.sigma = side == Side::right ? 1 : -1;
  d.field_index = crit.front();
  const int k = d.field_index;
  d.a = -system.eval_derivative(k, xi);
  if (system.field(k).analytic()) d.q = local_system<double>(system, xi, d.sigma).q.coefficients();
  if (std::abs(d.a) <= system.options().zero_tol * std::max(1.0, system.field_scale(k, xi)))
    throw UnsupportedConfiguration("degenerate tangency: the critical field has zero slope");

  // Gap to the next break point in the looking direction.
  const Interval W = system.window();
  double gap = d.sigma > 0 ? W.hi - xi : xi - W.lo;
  for (double c : system.all_critical_points()) {
    const double e = d.sigma * (c - xi);
    if (e > 1e-12 * std::max(1.0, std::abs(xi))) gap = std::min(gap, e);
  }
  if (!(gap > 0)) throw DomainError("linearize_at_critical: critical point sits on the window edge");
  d.delta = delta_fraction * gap;

  if (d.a < 0) {
    d.vartheta = Endpoint::at(0.0);
  } else {
    bool exhaustive = true;
    const auto roots = system.global_critical_points(&exhaustive);
    std::optional<double> next;
    for (double c : roots) {
      const double e = d.sigma * (c - xi);
      if (e <= 1e-12 * std::max(1.0, std::abs(xi))) continue;
      if (std::abs(system.eval_field(k, c)) > 1e-9 * system.field_scale(k, c)) continue;
      if (!next || e < *next) next = e;
    }
    if (next) {
      d.vartheta = Endpoint::at(*next);
    } else if (exhaustive) {
      d.vartheta = Endpoint::pos_inf();
    } else {
      // Tabulated field without a root inside the window: treat the window edge as the upstream limit.
      d.vartheta = Endpoint::at(gap);
    }
  }

  const int samples = 2000;
  const double lo = std::log(d.delta * 1e-8), hi = std::log(d.delta);
  for (int j = 0; j <= samples; ++j) {
    const double eta = std::exp(lo + (hi - lo) * j / samples);
    const double r = std::abs(d.r(system, eta));
    if (std::isfinite(r)) d.r_inf = std::max(d.r_inf, r);
  }
  return d;
}

AsymptoticForm classify_asymptotics(double lambda1, double a, CriticalCase kase, bool analytic,
                                    std::optional<double> rho_bar0, double resonance_tol) {
  if (!(a != 0)) throw UnsupportedConfiguration("classify_asymptotics: a = 0 is a degenerate tangency");
  if (!(lambda1 > 0)) throw DomainError("classify_asymptotics: the critical state needs a positive exit rate");
  AsymptoticForm f;
  f.kase = kase;
  if (kase == CriticalCase::A) {
    f.kind = AsymptoticKind::zero;
    f.bounded = true;
    f.limit = 0.0;
    f.note = "support gap: density vanishes identically";
    return f;
  }
  auto constant_limit = [&] {
    f.kind = AsymptoticKind::constant;
    f.bounded = true;
    if (rho_bar0) f.limit = *rho_bar0 / (lambda1 - a);
  };
  if (a < 0) {
    if (kase == CriticalCase::C)
      throw UnsupportedConfiguration("a repelling critical point cannot be an endpoint of an invariant interval");
    constant_limit();
    f.note = "repelling point inside the support";
    return f;
  }
  const double ratio = lambda1 / a;
  f.exponent = ratio - 1;
  if (std::abs(ratio - 1) <= resonance_tol) {
    f.resonant_critical = true;
    f.exponent = 0.0;
    if (kase == CriticalCase::B) {
      f.kind = analytic ? AsymptoticKind::log : AsymptoticKind::log_bounded_band;
      f.bounded = false;
    } else if (analytic) {
      f.kind = AsymptoticKind::constant;
      f.bounded = true;
      f.note = "positive one-sided limit";
    } else {
      f.kind = AsymptoticKind::log_bounded_band;
      f.inconclusive = true;
      f.note = "only an upper logarithmic bound is available";
    }
    return f;
  }
  if (ratio < 1) {
    f.kind = AsymptoticKind::power;
    f.bounded = false;
    return f;
  }
  if (kase == CriticalCase::B) {
    constant_limit();
    f.exponent = 0.0;
  } else if (analytic) {
    f.kind = AsymptoticKind::power;
    f.bounded = true;
    f.limit = 0.0;
  } else {
    f.kind = AsymptoticKind::zero;
    f.exponent = 0.0;
    f.bounded = true;
    f.limit = 0.0;
  }
  return f;
}

ExponentFit fit_exponent(std::span<const double> eta, std::span<const double> rho, double lo, double hi) {
  if (eta.size() != rho.size()) throw DomainError("fit_exponent: size mismatch");
  std::vector<double> x, y, r, e;
  ExponentFit fit;
  for (std::size_t j = 0; j < eta.size(); ++j) {
    if (!(eta[j] >= lo && eta[j] <= hi)) continue;
    if (!(rho[j] > 0) || !std::isfinite(rho[j])) {
      ++fit.excluded;
      continue;
    }
    e.push_back(eta[j]);
    x.push_back(std::log(eta[j]));
    y.push_back(std::log(rho[j]));
    r.push_back(rho[j]);
  }
  if (x.size() < 10) throw DomainError("fit_exponent: fewer than 10 usable samples in the fit window");
  fit.used = static_cast<int>(x.size());
  const auto power = numerics::fit_line(x, y);
  fit.exponent = power.slope;
  fit.exponent_stderr = power.slope_stderr;
  fit.prefactor = std::exp(power.intercept);

  std::vector<double> mlog(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) mlog[j] = -x[j];
  const auto logfit = numerics::fit_line(mlog, r);
  fit.log_slope = logfit.slope;
  fit.log_intercept = logfit.intercept;
  double sp = 0, sl = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double pp = std::exp(power.intercept + power.slope * x[j]);
    const double pl = logfit.intercept + logfit.slope * mlog[j];
    sp += std::pow((pp - r[j]) / r[j], 2);
    sl += std::pow((pl - r[j]) / r[j], 2);
  }
  fit.power_rms = std::sqrt(sp / x.size());
  fit.log_rms = std::sqrt(sl / x.size());
  fit.log_preferred = fit.log_rms < fit.power_rms;

  // Split at the midpoint in ln eta.
  const double mid = 0.5 * (std::log(lo) + std::log(hi));
  std::vector<double> x1, y1, x2, y2;
  for (std::size_t j = 0; j < x.size(); ++j) (x[j] < mid ? x1 : x2).push_back(x[j]), (x[j] < mid ? y1 : y2).push_back(y[j]);
  if (x1.size() >= 3 && x2.size() >= 3) {
    fit.slope_drift = std::abs(numerics::fit_line(x1, y1).slope - numerics::fit_line(x2, y2).slope);
    fit.unstable = fit.slope_drift > 0.1 * std::abs(fit.exponent) + 0.01;
  }
  return fit;
}

ExponentFit fit_exponent(const DensityGrid& grid, int state, double xi, int sigma, double lo, double hi) {
  std::vector<double> eta, rho;
  for (int j = 0; j < grid.size(); ++j) {
    const double e = sigma * (grid.nodes[j] - xi);
    if (e > 0) {
      eta.push_back(e);
      rho.push_back(grid.rho(state, j));
    }
  }
  return fit_exponent(eta, rho, lo, hi);
}

double richardson_limit(const std::function<double(double)>& f, double h) {
  const double f1 = f(h), f2 = f(h / 2), f4 = f(h / 4);
  // Two levels of elimination for the O(h) and O(h^2) terms.
  const double g1 = 2 * f2 - f1, g2 = 2 * f4 - f2;
  return (4 * g2 - g1) / 3;
}

CriticalPointReport analyze_critical_point(const SwitchingSystem& system, const FluxSolution& solution,
                                           const std::vector<MinimalInvariantSet>& sets, double xi, Side side,
                                           const AsymptoticsOptions& opts) {
  CriticalPointReport rep;
  rep.linearization = linearize_at_critical(system, xi, side, opts.delta_fraction);
  auto& lin = rep.linearization;
  const int k = lin.field_index, sigma = lin.sigma;
  rep.kase = classify_critical_point(system, xi, sets, side).kase;
  rep.lambda1 = system.rates().total(k);

  const LocalPatch* patch = nullptr;
  for (const auto& p : solution.patches)
    if (std::abs(p.xi() - xi) <= 1e-12 * std::max(1.0, std::abs(xi)) && p.sigma() == sigma) patch = &p;

  const double h = opts.richardson_h * lin.delta;
  auto at = [&](int i, double eta) { return solution.rho_at(i, xi + sigma * eta); };
  if (rep.kase != CriticalCase::A) {
    double bar = 0;
    for (int j = 0; j < system.n(); ++j)
      if (j != k) bar += system.rates().rate(j, k) * richardson_limit([&](double e) { return at(j, e); }, h);
    lin.rho_bar0 = bar;
  }
  try {
    rep.form = classify_asymptotics(rep.lambda1, lin.a, rep.kase, system.all_analytic(), lin.rho_bar0);
  } catch (const UnsupportedConfiguration& e) {
    rep.notes.emplace_back(e.what());
    rep.form.inconclusive = true;
  }
  if (rep.kase != CriticalCase::A && rep.form.bounded.value_or(false))
    rep.limit_extrapolated = richardson_limit([&](double e) { return at(k, e); }, h);

  if (patch) {
    const auto& fe = patch->expansion;
    rep.frobenius_order = fe.K;
    rep.frobenius_resonant = fe.normal.resonant;
    rep.frobenius_epsilon = fe.epsilon;
    rep.frobenius_validity_radius = fe.validity_radius;
    rep.mu = fe.eig.mu;
    // Coefficient of eta^{mu - 1} in rho_k, leading when mu < 1 or in case C.
    if (fe.eig.mu < 1 || rep.kase == CriticalCase::C) rep.prefactor_expansion = -sigma * patch->w(k) * rep.lambda1 / lin.a;
  } else if (rep.kase != CriticalCase::A) {
    rep.notes.emplace_back("no local expansion at this point");
  }

  if (rep.kase != CriticalCase::A) {
    try {
      rep.fit = fit_exponent(solution.grid, k, xi, sigma, opts.fit_lo, opts.fit_hi);
    } catch (const DomainError& e) {
      rep.notes.emplace_back(e.what());
    }
  }
  return rep;
}

const char* to_string(AsymptoticKind k) {
  switch (k) {
    case AsymptoticKind::power: return "power";
    case AsymptoticKind::constant: return "constant";
    case AsymptoticKind::log: return "log";
    case AsymptoticKind::log_bounded_band: return "log_bounded_band";
    case AsymptoticKind::zero: return "zero";
  }
  return "?";
}

}  // namespace pdmp
