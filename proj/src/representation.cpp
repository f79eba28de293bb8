#include "pdmp/representation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pdmp/errors.hpp"
#include "pdmp/numerics/quadrature.hpp"

namespace pdmp {

namespace {

struct Setup {
  int k = 0;
  double lam = 0, mu = 0, x_eta = 0;
  std::vector<double> cuts;  // local coordinates from eta to the upper limit
  bool truncated = false;
  double prefactor = 0;  // eta^{mu-1}/a + r(eta) eta^mu
};

Setup prepare(const SwitchingSystem& system, const LinearizationData& lin, double eta, Interval support) {
  if (!(eta > 0 && eta < lin.delta)) throw DomainError("representation_check: eta must lie in (0, delta)");
  Setup s;
  s.k = lin.field_index;
  s.lam = system.rates().total(s.k);
  s.mu = s.lam / lin.a;
  s.x_eta = lin.xi + lin.sigma * eta;

  // Where densities are known, in local coordinates.
  const Interval W = system.window();
  const double lo = std::max(support.lo, W.lo), hi = std::min(support.hi, W.hi);
  const double reach = lin.sigma > 0 ? hi - lin.xi : lin.xi - lo;
  double up;
  if (lin.vartheta.is_finite()) {
    up = lin.vartheta.value;
    if (up > reach) up = reach, s.truncated = true;
  } else {
    up = reach;
    s.truncated = true;
  }
  // A support edge inside the window is exact: densities vanish beyond it.
  const double support_reach = lin.sigma > 0 ? support.hi - lin.xi : lin.xi - support.lo;
  const double window_reach = lin.sigma > 0 ? W.hi - lin.xi : lin.xi - W.lo;
  if (s.truncated && support_reach < window_reach) s.truncated = false;

  s.cuts.push_back(eta);
  for (double c : system.all_critical_points()) {
    const double e = lin.sigma * (c - lin.xi);
    if ((e - eta) * (up - eta) > 0 && std::abs(e - eta) < std::abs(up - eta)) s.cuts.push_back(e);
  }
  s.cuts.push_back(up);
  std::sort(s.cuts.begin(), s.cuts.end(), [&](double a, double b) { return (a - b) * (up - eta) < 0; });
  s.prefactor = std::pow(eta, s.mu - 1) / lin.a + lin.r(system, eta) * std::pow(eta, s.mu);
  return s;
}

double E(const SwitchingSystem& system, const LinearizationData& lin, const Setup& s, double eta, double zeta) {
  return std::exp(-s.lam * lin.integral_r(system, eta, zeta));
}

template <typename F>
double integrate(const Setup& s, F&& f) {
  double acc = 0;
  for (std::size_t p = 0; p + 1 < s.cuts.size(); ++p)
    acc += numerics::integrate_tanh_sinh([&](double z, double) { return f(z); }, s.cuts[p], s.cuts[p + 1], 1e-13);
  return acc;
}

double tail(const SwitchingSystem& system, const LinearizationData& lin, const Setup& s, double tail_mass) {
  if (!s.truncated || lin.a <= 0) return 0.0;
  const double l = system.rates().total(s.k);
  return std::abs(s.prefactor) * std::exp(l * lin.delta * lin.r_inf) * std::pow(lin.delta, -s.mu) * tail_mass;
}

double relative(double lhs, double rhs) { return lhs != 0 ? std::abs(rhs - lhs) / std::abs(lhs) : std::abs(rhs); }

}  // namespace

RepresentationResult representation_check(const SwitchingSystem& system, const DensityFunction& rho,
                                          const LinearizationData& lin, double eta, Interval support,
                                          double tail_mass) {
  const Setup s = prepare(system, lin, eta, support);
  auto value = [&](int j, double x) { return (x <= support.lo || x >= support.hi) ? 0.0 : rho(j, x); };
  auto integrand = [&](double z) {
    const double x = lin.xi + lin.sigma * z;
    double bar = 0;
    for (int j = 0; j < system.n(); ++j)
      if (j != s.k) bar += system.rates().rate(j, s.k) * value(j, x);
    if (bar == 0) return 0.0;
    return std::pow(z, -s.mu) * bar * E(system, lin, s, eta, z);
  };
  RepresentationResult res;
  res.lhs = value(s.k, s.x_eta);
  res.rhs = s.prefactor * integrate(s, integrand);
  res.residual = relative(res.lhs, res.rhs);
  res.upper_limit = s.cuts.back();
  res.truncated = s.truncated;
  res.tail_bound = tail(system, lin, s, tail_mass);
  return res;
}

RepresentationResult appendix_identity_check(const SwitchingSystem& system, const DensityFunction& rho,
                                             const DensityFunction& drho, const LinearizationData& lin, double eta,
                                             Interval support, double tail_mass) {
  const Setup s = prepare(system, lin, eta, support);
  const double u_eta = lin.local_u(system, eta);
  auto inside = [&](double x) { return x > support.lo && x < support.hi; };
  // exp(lambda int_eta^zeta dx/u~) = (eta/zeta)^mu E(eta, zeta).
  auto kernel = [&](double z) { return std::pow(eta / z, s.mu) * E(system, lin, s, eta, z); };
  auto fp1 = [&](double z) {
    const double x = lin.xi + lin.sigma * z;
    if (!inside(x)) return 0.0;
    return (s.lam + system.eval_derivative(s.k, x)) * rho(s.k, x) * kernel(z);
  };
  auto fp2 = [&](double z) {
    const double x = lin.xi + lin.sigma * z;
    if (!inside(x)) return 0.0;
    // u~ d rho~/d eta = u drho/dx.
    return system.eval_field(s.k, x) * drho(s.k, x) * kernel(z);
  };
  RepresentationResult rep = representation_check(system, rho, lin, eta, support, tail_mass);
  RepresentationResult res = rep;
  res.lhs = rep.rhs;
  res.rhs = -(integrate(s, fp1) + integrate(s, fp2)) / u_eta;
  res.residual = relative(res.lhs, res.rhs);
  return res;
}

DensityFunction grid_density(const SwitchingSystem& system, const DensityGrid& grid) {
  auto g = std::make_shared<DensityGrid>(grid);
  auto breaks = std::make_shared<std::vector<double>>(system.all_critical_points());
  return [g, breaks](int i, double x) {
    if (x < g->interval.lo || x > g->interval.hi) return 0.0;
    const auto st = piecewise_stencil(g->nodes, *breaks, x);
    double acc = 0;
    for (int c = 0; c < st.count; ++c) acc += st.w[c] * g->rho(i, st.first + c);
    return acc;
  };
}

DensityFunction grid_derivative(const SwitchingSystem& system, const DensityGrid& grid) {
  auto g = std::make_shared<DensityGrid>(grid);
  auto breaks = std::make_shared<std::vector<double>>(system.all_critical_points());
  return [g, breaks](int i, double x) {
    if (x < g->interval.lo || x > g->interval.hi) return 0.0;
    auto st = piecewise_stencil(g->nodes, *breaks, x);
    if (st.count < 2) return 0.0;
    st = numerics::lagrange_stencil(std::span<const double>(g->nodes.data() + st.first, st.count), x, 1);
    double acc = 0;
    const auto base = piecewise_stencil(g->nodes, *breaks, x).first;
    for (int c = 0; c < st.count; ++c) acc += st.w[c] * g->rho(i, base + st.first + c);
    return acc;
  };
}

RepresentationResult representation_check(const SwitchingSystem& system, const DensityGrid& grid,
                                          const LinearizationData& lin, double eta) {
  return representation_check(system, grid_density(system, grid), lin, eta, grid.interval);
}

RepresentationResult appendix_identity_check(const SwitchingSystem& system, const DensityGrid& grid,
                                             const LinearizationData& lin, double eta) {
  return appendix_identity_check(system, grid_density(system, grid), grid_derivative(system, grid), lin, eta,
                                 grid.interval);
}

}  // namespace pdmp
