#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pdmp/flux_solver.hpp"
#include "pdmp/invariant_structure.hpp"
#include "systems.hpp"

using namespace pdmp;

namespace {

MinimalInvariantSet only_interval(const SwitchingSystem& sys) {
  for (const auto& s : minimal_invariant_sets(sys))
    if (s.kind == SetKind::open_interval) return s;
  throw std::runtime_error("no invariant interval");
}

double beta(double a, double b) { return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)); }

// Normalized two-state densities on (0, 1).
double oracle(int i, double x, double l1, double l2) {
  const double total = beta(l1, l2 + 1) + beta(l1 + 1, l2);
  return i == 0 ? std::pow(x, l1 - 1) * std::pow(1 - x, l2) / total : std::pow(x, l1) * std::pow(1 - x, l2 - 1) / total;
}

}  // namespace

TEST_CASE("two-state flux solution matches the closed form") {
  const double l1 = 2, l2 = 3;
  auto sys = testing::two_state(l1, l2);
  auto sol = solve_flux_ode(sys, only_interval(sys));
  double worst = 0;
  for (int i = 0; i < 2; ++i)
    for (double x = 0.01; x <= 0.99; x += 0.0049) worst = std::max(worst, std::abs(sol.rho_at(i, x) / oracle(i, x, l1, l2) - 1));
  CHECK(worst < 1e-6);
  CHECK(sol.grid.normalization == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sol.grid.mass(0) == doctest::Approx(l2 / (l1 + l2)).epsilon(1e-9));
  CHECK(sol.diagnostics.flux_sum_deviation < 1e-10);
  CHECK(sol.diagnostics.warnings.empty());
  for (int j = 0; j < sol.grid.size(); ++j) {
    CHECK(sol.grid.rho(0, j) > 0);
    CHECK(sol.grid.rho(1, j) > 0);
  }
}

TEST_CASE("grid values agree with the oracle at graded nodes") {
  const double l1 = 0.5, l2 = 1.5;
  auto sys = testing::two_state(l1, l2);
  auto sol = solve_flux_ode(sys, only_interval(sys));
  double worst = 0;
  for (int j = 0; j < sol.grid.size(); ++j) {
    const double x = sol.grid.nodes[j];
    worst = std::max(worst, std::abs(sol.grid.rho(0, j) / oracle(0, x, l1, l2) - 1));
  }
  CHECK(worst < 1e-6);
  CHECK(sol.grid.nodes.front() > 0);
  CHECK(sol.grid.nodes.front() < 1e-7);
}

TEST_CASE("mirror symmetry with equal rates") {
  auto sys = testing::two_state(1.3, 1.3);
  auto sol = solve_flux_ode(sys, only_interval(sys));
  for (double x : {1e-5, 0.03, 0.2, 0.41, 0.5})
    CHECK(sol.rho_at(0, x) == doctest::Approx(sol.rho_at(1, 1 - x)).epsilon(1e-9));
}

TEST_CASE("vanishing flux at an attracting endpoint") {
  auto sys = testing::two_state(2, 3);
  auto sol = solve_flux_ode(sys, only_interval(sys));
  const double peak = sol.grid.flux.row(0).cwiseAbs().maxCoeff();
  CHECK(std::abs(sol.flux_at(1e-6)(0)) < 1e-4 * peak);
  auto slow = testing::two_state(0.5, 0.5);
  auto sol_slow = solve_flux_ode(slow, only_interval(slow));
  CHECK(sol_slow.flux_at(1e-9).norm() < 1.01e-3 * sol_slow.flux_at(1e-3).norm());
}

TEST_CASE("interior attracting point with a finite limit") {
  auto sys = testing::three_state_line(1, 1);
  auto sol = solve_flux_ode(sys, only_interval(sys));
  const double eta = 1e-7;
  const double bar = sol.rho_at(1, eta) + sol.rho_at(2, eta);
  CHECK(sol.rho_at(0, eta) == doctest::Approx(bar / (2.0 - 1.0)).epsilon(1e-4));
  CHECK(sol.rho_at(0, eta) == doctest::Approx(sol.rho_at(0, -eta)).epsilon(1e-9));
  CHECK(sol.diagnostics.tail_mass_estimate < 1e-8);
  CHECK(sol.diagnostics.flux_sum_deviation < 1e-10);
  CHECK_THROWS_AS(sol.rho_at(0, 0.0), DomainError);
}

TEST_CASE("repelling interior point") {
  auto sys = testing::repelling_three_state(0.75, 0.75);
  auto sol = solve_flux_ode(sys, only_interval(sys));
  const double bar = sol.rho_at(1, 1e-8) + sol.rho_at(2, 1e-8);
  // a = -1 for u1 = x - x^3 at 0.
  CHECK(sol.rho_at(0, 1e-8) == doctest::Approx(bar / (1.5 + 1.0)).epsilon(1e-5));
  CHECK(sol.grid.mass.sum() == doctest::Approx(1.0));
  CHECK((sol.grid.rho.array() > 0).all());
}
