// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "pdmp/asymptotics.hpp"
#include "pdmp/flux_solver.hpp"
#include "pdmp/frobenius.hpp"
#include "pdmp/invariant_structure.hpp"
#include "pdmp/numerics/ode.hpp"
#include "pdmp/numerics/quadrature.hpp"
#include "pdmp/numerics/regression.hpp"
#include "pdmp/numerics/rng.hpp"
#include "pdmp/perron_frobenius.hpp"
#include "pdmp/pipeline.hpp"
#include "pdmp/representation.hpp"
#include "pdmp/simulator.hpp"
#include "systems.hpp"

using namespace pdmp;
using Vec = Eigen::VectorXd;

namespace {

int failures = 0;

void verdict(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double beta(double a, double b) { return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)); }

// Hand-solved two-state density for u1 = -x, u2 = 1 - x:
// rho_1 = c x^(l1-1) (1-x)^l2, rho_2 = c x^l1 (1-x)^(l2-1).
struct TwoStateOracle {
  double l1, l2, c;
  TwoStateOracle(double a, double b) : l1(a), l2(b), c(1.0 / (beta(a, b + 1) + beta(a + 1, b))) {}
  double rho(int i, double x) const {
    return i == 0 ? c * std::pow(x, l1 - 1) * std::pow(1 - x, l2) : c * std::pow(x, l1) * std::pow(1 - x, l2 - 1);
  }
  double drho0(double x) const {
    return c * ((l1 - 1) * std::pow(x, l1 - 2) * std::pow(1 - x, l2) - l2 * std::pow(x, l1 - 1) * std::pow(1 - x, l2 - 1));
  }
  DensityFunction fn() const {
    return [o = *this](int i, double x) { return (x <= 0 || x >= 1) ? 0.0 : o.rho(i, x); };
  }
};

MinimalInvariantSet only_interval(const SwitchingSystem& sys) {
  for (const auto& s : minimal_invariant_sets(sys))
    if (s.kind == SetKind::open_interval) return s;
  throw std::runtime_error("no invariant interval");
}

double worst_flux_sum = 0;
void record(const FluxSolution& s) { worst_flux_sum = std::max(worst_flux_sum, s.diagnostics.flux_sum_deviation); }

OccupationRun mc_run(const SwitchingSystem& sys, double x0, std::uint64_t switches, const std::vector<double>& edges,
                     std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.max_switches = switches;
  cfg.replicas = 1;
  return occupation_density(sys, x0, 0, cfg, edges);
}

void ac1_ac2_ac3() {
  const TwoStateOracle o(2, 3);
  const auto sys = testing::two_state(2, 3);

  auto t0 = std::chrono::steady_clock::now();
  const auto sol = solve_flux_ode(sys, only_interval(sys));
  const double t_solve = seconds_since(t0);
  record(sol);
  double worst = 0;
  for (int j = 0; j < sol.grid.size(); ++j) {
    const double x = sol.grid.nodes[j];
    if (x < 0.01 || x > 0.99) continue;
    worst = std::max(worst, std::abs(sol.grid.rho(0, j) / o.rho(0, x) - 1));
  }
  for (int k = 0; k <= 98; ++k) {
    const double x = 0.01 + 0.98 * (k + 0.37) / 99.0;  // between nodes
    worst = std::max(worst, std::abs(sol.rho_at(0, x) / o.rho(0, x) - 1));
  }
  verdict("AC1", worst <= 1e-6 && t_solve < 1.0,
          fmt("max relative error %.3g on [0.01, 0.99], solve time %.3f s", worst, t_solve));

  // Fixed-point route from a flat start on the same nodes.
  const auto init = uniform_density(2, sol.grid.nodes, sol.grid.interval);
  FixedPointOptions fo;
  fo.tol = 1e-10;
  fo.max_iters = 200;
  const auto fp = iterate_to_fixed_point(sys, init, fo);
  const double l1 = l1_distance(fp.grid, o.fn());
  // One step applied to the oracle.
  DensityGrid og = sol.grid;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < og.size(); ++j) og.rho(i, j) = o.rho(i, og.nodes[j]);
  const auto img = perron_frobenius_step(sys, og, default_horizon(sys));
  const double step = l1_change(img, og);
  verdict("AC2", fp.converged && fp.iterations <= 200 && l1 <= 1e-5 && step <= 1e-8,
          fmt("%d sweeps, L1 to oracle %.3g, one-step residual on the oracle %.3g", fp.iterations, l1, step));

  // Monte Carlo route.
  const auto edges = graded_bin_edges({0, 1}, {0, 1}, BinSpec{});
  t0 = std::chrono::steady_clock::now();
  const auto run = mc_run(sys, 0.5, 10000000, edges, 2024);
  const double t_mc = seconds_since(t0);
  const auto d = run.histogram.density();
  double e[2] = {0, 0};
  for (int i = 0; i < 2; ++i)
    for (int b = 0; b < run.histogram.bins(); ++b) {
      const double lo = edges[b], hi = edges[b + 1];
      const double mass = numerics::integrate_gauss([&](double x) { return o.rho(i, x); }, lo, hi);
      e[i] += std::abs(d(i, b) * (hi - lo) - mass);
    }
  verdict("AC3", run.total_switches == 10000000 && t_mc < 60 && e[0] <= 0.02 && e[1] <= 0.02,
          fmt("%llu switches in %.1f s, per-state L1 %.3g and %.3g", static_cast<unsigned long long>(run.total_switches),
              t_mc, e[0], e[1]));
}

struct RouteExponents {
  double flux, pf, mc;
};

RouteExponents three_routes(const SwitchingSystem& sys, const std::vector<double>& edges, double x0,
                            std::uint64_t switches) {
  const auto sol = solve_flux_ode(sys, only_interval(sys));
  record(sol);
  RouteExponents r{};
  r.flux = fit_exponent(sol.grid, 0, 0.0, 1, 1e-4, 1e-2).exponent;
  const auto fp = iterate_to_fixed_point(sys, uniform_density(sys.n(), sol.grid.nodes, sol.grid.interval));
  r.pf = fit_exponent(fp.grid, 0, 0.0, 1, 1e-4, 1e-2).exponent;
  const auto run = mc_run(sys, x0, switches, edges, 99);
  const auto s = histogram_local_samples(run.histogram, 0, 0.0, 1);
  r.mc = fit_exponent(s.eta, s.rho, 1e-4, 1e-2).exponent;
  return r;
}

void ac4() {
  // Case B: critical point interior to the invariant line, lambda_1 = 0.5.
  const auto line = testing::three_state_line(0.25, 0.25, 0.25);
  const auto eb = three_routes(line, graded_bin_edges({-40, 40}, {0}, BinSpec{400, 10, 1e-6, 0.01}), 0.0, 3000000);
  // Case C: critical point at the end of (0, 1).
  const auto two = testing::two_state(0.5, 1.0);
  const auto ec = three_routes(two, graded_bin_edges({0, 1}, {0, 1}, BinSpec{}), 0.5, 3000000);
  bool ok = true;
  for (double s : {eb.flux, eb.pf, eb.mc, ec.flux, ec.pf, ec.mc}) ok = ok && std::abs(s + 0.5) <= 0.02;
  verdict("AC4", ok,
          fmt("case B flux %.4f fixed-point %.4f MC %.4f; case C flux %.4f fixed-point %.4f MC %.4f", eb.flux, eb.pf,
              eb.mc, ec.flux, ec.pf, ec.mc));
}

void ac5() {
  const auto sys = testing::three_state_line(1, 1);
  const auto sets = minimal_invariant_sets(sys);
  const auto sol = solve_flux_ode(sys, only_interval(sys));
  record(sol);
  const auto rep = analyze_critical_point(sys, sol, sets, 0.0, Side::right);
  const bool ok = rep.form.kind == AsymptoticKind::constant && rep.limit_extrapolated && rep.form.limit &&
                  std::abs(*rep.limit_extrapolated / *rep.form.limit - 1) <= 0.01;
  verdict("AC5", ok,
          fmt("extrapolated rho_1(0+) %.10g, rho_bar(0)/(lambda_1 - a) %.10g", rep.limit_extrapolated.value_or(NAN),
              rep.form.limit.value_or(NAN)));
}

void ac6() {
  // Case B: lambda_1 = a = 1 on the line.
  const auto line = testing::three_state_line(0.5, 0.5);
  const auto sb = solve_flux_ode(line, only_interval(line));
  record(sb);
  double lo = INFINITY, hi = -INFINITY;
  for (int k = 0; k <= 12; ++k) {
    const double eta = 1e-6 * std::pow(10.0, k / 4.0);
    const double q = sb.rho_at(0, eta) / -std::log(eta);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  const double spread = hi / lo - 1;
  const auto form_b = classify_asymptotics(1.0, 1.0, CriticalCase::B, true);

  // Case C: two-state with lambda_1 = 1; the closed form gives rho_1(0+) = c.
  const TwoStateOracle o(1, 2);
  const auto two = testing::two_state(1, 2);
  const auto sets = minimal_invariant_sets(two);
  const auto sc = solve_flux_ode(two, only_interval(two));
  record(sc);
  const auto rep = analyze_critical_point(two, sc, sets, 0.0, Side::right);
  const double limit = rep.limit_extrapolated.value_or(NAN);
  double approach = 0;
  for (double eta : {1e-4, 1e-5, 1e-6}) approach = std::max(approach, std::abs(sc.rho_at(0, eta) / limit - 1));
  const bool ok_b = form_b.kind == AsymptoticKind::log && spread <= 0.05;
  const bool ok_c = rep.form.kind == AsymptoticKind::constant && limit > 0 && approach <= 0.02 &&
                    std::abs(limit / o.c - 1) <= 0.02;
  verdict("AC6", ok_b && ok_c,
          fmt("case B rho_1/(-ln eta) spread %.2f%% on [1e-6, 1e-3]; case C limit %.8g (closed form %.8g), "
              "deviation %.2g for eta <= 1e-4",
              100 * spread, limit, o.c, approach));
}

void ac7() {
  const auto sys = testing::repelling_three_state(0.75, 0.75);
  const auto sets = minimal_invariant_sets(sys);
  const auto sol = solve_flux_ode(sys, only_interval(sys));
  record(sol);
  bool ok = true;
  std::string detail;
  for (Side side : {Side::right, Side::left}) {
    const auto rep = analyze_critical_point(sys, sol, sets, 0.0, side);
    const bool pass = rep.kase == CriticalCase::B && rep.linearization.a < 0 && rep.limit_extrapolated &&
                      rep.form.limit && std::abs(*rep.limit_extrapolated / *rep.form.limit - 1) <= 0.01;
    ok = ok && pass;
    detail += fmt("%s: a %.3g limit %.10g predicted %.10g; ", to_string(side), rep.linearization.a,
                  rep.limit_extrapolated.value_or(NAN), rep.form.limit.value_or(NAN));
  }
  bool rejected = false;
  try {
    classify_asymptotics(1.5, -1.0, CriticalCase::C, true);
  } catch (const UnsupportedConfiguration&) {
    rejected = true;
  }
  verdict("AC7", ok && rejected, detail + (rejected ? "case C rejected" : "case C NOT rejected"));
}

void ac8() {
  const auto sys = testing::two_state(2, 3);
  const auto sol = solve_flux_ode(sys, only_interval(sys));
  record(sol);
  const double peak = sol.grid.flux.row(0).cwiseAbs().maxCoeff();
  const Vec near = sol.flux_at(1e-6);
  const double phi1 = std::abs(near(0)) / peak;
  const double vec_norm = near.cwiseAbs().maxCoeff() / sol.grid.flux.cwiseAbs().maxCoeff();
  // Case B: only the first component has to vanish.
  const auto line = testing::three_state_line(1, 1);
  const auto sb = solve_flux_ode(line, only_interval(line));
  record(sb);
  const double phi1_b = std::abs(sb.flux_at(1e-6)(0)) / sb.grid.flux.row(0).cwiseAbs().maxCoeff();
  verdict("AC8", worst_flux_sum <= 1e-10 && phi1 <= 1e-4 && vec_norm <= 1e-4 && phi1_b <= 1e-4,
          fmt("max flux-sum deviation %.3g over all solved grids; |phi_1(1e-6)|/max %.3g (case C), %.3g (case B); "
              "case C |phi(1e-6)|/max %.3g",
              worst_flux_sum, phi1, phi1_b, vec_norm));
}

Vec integrate_flux(const SwitchingSystem& sys, Vec phi, double x0, double x1) {
  numerics::OdeTolerances tol;
  tol.rtol = 1e-13;
  tol.atol = 1e-300;
  auto rhs = [&](double x, const Vec& y) {
    Vec g(sys.n());
    for (int i = 0; i < sys.n(); ++i) g(i) = y(i) / sys.eval_field(i, x);
    return Vec(sys.flux_matrix() * g);
  };
  return numerics::dormand_prince(rhs, x0, phi, x1, tol).y;
}

void ac9() {
  // Eigen-residuals of B0.
  double eig_res = 0;
  for (const auto& sys : {testing::three_state_line(1, 1), testing::two_state(3, 1), testing::two_state(0.5, 2)}) {
    const auto ls = local_system<double>(sys, 0.0);
    const auto B = taylor_B(ls, 0);
    const auto e = b0_eigensystem<double>(B[0], ls.k, sys.rates().total(ls.k), ls.a);
    eig_res = std::max(eig_res, e.residual);
  }
  // Normal-equation residual order for K = 8.
  const auto two = testing::two_state(0.5, 2);
  const auto fe8 = frobenius_expansion<long double>(two, 0.0, 1, 8, 0.99);
  std::vector<double> x, y;
  for (int j = 0; j <= 20; ++j) {
    const double eta = 0.05 * std::pow(4.0, j / 20.0);
    x.push_back(std::log(eta));
    y.push_back(std::log(static_cast<double>(normal_equation_residual(fe8, (long double)eta))));
  }
  const double slope = numerics::fit_line(x, y).slope;
  // Resonant algebra.
  const auto res = frobenius_expansion<double>(testing::two_state(1, 1.7), 0.0, 1, 8, 0.99);
  const double y2 = (res.normal.Y * res.normal.Y).norm(), yl = (res.normal.Y * res.eig.lambda).norm();
  // Reconstruction against direct integration.
  const auto fe = frobenius_expansion<double>(two, 0.0, 1, 8, 0.99);
  const double eps = fe.epsilon;
  Vec pe(2);
  pe << -0.2, 0.2;
  double rec = 0;
  for (double eta : {eps / 10, eps / 100, eps / 1000, 1e-6}) {
    const Vec ode = integrate_flux(two, pe, eps, eta);
    rec = std::max(rec, (reconstruct_flux(fe, pe, eta) - ode).norm() / ode.norm());
  }
  const bool ok = eig_res <= 1e-12 && slope >= 8.5 && res.normal.resonant && y2 == 0.0 && yl == 0.0 && rec <= 1e-6;
  verdict("AC9", ok,
          fmt("B0 eigen-residual %.3g; K=8 residual slope %.2f; resonant |Y^2| %.3g |Y lambda| %.3g; "
              "reconstruction error %.3g",
              eig_res, slope, y2, yl, rec));
}

SwitchingSystem random_system(numerics::CounterRng& rng, Interval window) {
  const int n = 2 + static_cast<int>(rng() % 3);
  std::vector<VectorField> fields;
  for (int i = 0; i < n; ++i) {
    const int degree = static_cast<int>(rng() % 4);
    // u = s * prod (x - r_k) with roots spread over the inner window.
    std::vector<double> c{rng.uniform() < 0.5 ? -1.0 : 1.0};
    if (degree == 0) c[0] *= 0.5 + rng.uniform();
    for (int k = 0; k < degree; ++k) {
      const double r = window.lo + 0.1 * window.width() + 0.8 * window.width() * rng.uniform();
      std::vector<double> next(c.size() + 1, 0.0);
      for (std::size_t m = 0; m < c.size(); ++m) {
        next[m] -= r * c[m];
        next[m + 1] += c[m];
      }
      c = next;
    }
    fields.push_back(VectorField::polynomial(c));
  }
  Eigen::MatrixXd rates(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) rates(i, j) = i == j ? 0.0 : 0.2 + 2 * rng.uniform();
  return SwitchingSystem(std::move(fields), SwitchingRates(rates), window);
}

void ac10() {
  numerics::CounterRng rng(20241016);
  int agree = 0, systems = 0, intervals = 0;
  std::string first_problem;
  const Interval window{-3, 3};
  for (int s = 0; s < 50; ++s) {
    const auto sys = random_system(rng, window);
    ++systems;
    bool ok = true;
    std::string problem;
    const auto sets = minimal_invariant_sets(sys);
    for (const auto& set : sets) {
      if (set.kind != SetKind::open_interval) continue;
      ++intervals;
      const Interval I = set.working_interval(window);
      const double h = 1e-3 * I.width();
      std::vector<double> probes;
      for (int k = 1; k <= 5; ++k) probes.push_back(I.lo + I.width() * k / 6.0);
      // Every probe reaches a neighbourhood of every other probe.
      for (double p : probes)
        for (double q : probes)
          if (p != q && !reachability_oracle(sys, p, {q - h, q + h}, 24, 7 + s)) {
            ok = false;
            problem = fmt("system %d: %.4g does not reach %.4g inside (%.4g, %.4g)", s, p, q, I.lo, I.hi);
          }
      // Nothing leaves through a finite endpoint inside the window.
      std::vector<Interval> outside;
      if (set.left.is_finite() && set.left.value > window.lo)
        outside.push_back({std::max(window.lo, set.left.value - 0.5), set.left.value - 1e-9});
      if (set.right.is_finite() && set.right.value < window.hi)
        outside.push_back({set.right.value + 1e-9, std::min(window.hi, set.right.value + 0.5)});
      for (const auto& out : outside)
        for (double p : probes)
          if (reachability_oracle(sys, p, out, 24, 11 + s)) {
            ok = false;
            problem = fmt("system %d: %.4g escapes (%.4g, %.4g) into (%.4g, %.4g)", s, p, I.lo, I.hi, out.lo, out.hi);
          }
    }
    if (ok) {
      ++agree;
    } else if (first_problem.empty()) {
      first_problem = problem;
    }
  }
  verdict("AC10", agree == systems,
          fmt("%d/%d random systems agree with the reachability oracle (%d intervals)%s%s", agree, systems, intervals,
              first_problem.empty() ? "" : "; ", first_problem.c_str()));
}

void ac11() {
  const TwoStateOracle o(2, 3);
  const auto sys = testing::two_state(2, 3);
  const auto lin = linearize_at_critical(sys, 0.0);
  DensityFunction drho = [&](int, double x) { return o.drho0(x); };
  double worst = 0;
  for (int k = 1; k <= 20; ++k) {
    const double eta = lin.delta * (k - 0.5) / 20.0;
    worst = std::max(worst, appendix_identity_check(sys, o.fn(), drho, lin, eta, {0, 1}).residual);
  }
  verdict("AC11", worst <= 1e-8, fmt("max relative residual %.3g over 20 values of eta in (0, delta)", worst));
}

void ac12() {
  const auto sys = testing::two_state(2, 3);
  const auto sol = solve_flux_ode(sys, only_interval(sys));
  record(sol);
  double worst = 0;
  int ratios = 0;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k <= 6; ++k) {
      const double x = 0.2 + 0.1 * k;
      auto f = [&](double z) { return sol.rho_at(i, z); };
      auto d1 = [&](double h) { return (f(x + h) - f(x - h)) / (2 * h); };
      auto d2 = [&](double h) { return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h); };
      for (const auto& D : {std::function<double(double)>(d1), std::function<double(double)>(d2)}) {
        const double h = 0.04;
        const double c1 = std::abs(D(h / 2) - D(h)), c2 = std::abs(D(h / 4) - D(h / 2));
        // Changes at rounding level carry no convergence information.
        if (c1 <= 1e-8 * std::max(1.0, std::abs(D(h)))) continue;
        worst = std::max(worst, c2 / c1);
        ++ratios;
      }
    }
  verdict("AC12", worst <= 0.6 && ratios >= 20,
          fmt("largest ratio of successive changes %.3f over %d first and second differences on [0.2, 0.8]", worst,
              ratios));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<const char*, std::function<void()>>> steps = {
      {"AC1-AC3", ac1_ac2_ac3}, {"AC4", ac4},   {"AC5", ac5},   {"AC6", ac6},   {"AC7", ac7},
      {"AC9", ac9},             {"AC10", ac10}, {"AC11", ac11}, {"AC12", ac12}, {"AC8", ac8}};
  for (const auto& [id, run] : steps) {
    try {
      run();
    } catch (const std::exception& e) {
      verdict(id, false, std::string("exception: ") + e.what());
    }
  }
  std::printf("acceptance: %d failure(s), %.1f s\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
