#include <doctest.h>

#include <cmath>

#include "pdmp/flux_solver.hpp"
#include "pdmp/representation.hpp"
#include "systems.hpp"

using namespace pdmp;

namespace {

double beta(double a, double b) { return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)); }

struct Oracle {
  double l1, l2, total;
  Oracle(double a, double b) : l1(a), l2(b), total(beta(a, b + 1) + beta(a + 1, b)) {}
  DensityFunction rho() const {
    return [*this](int i, double x) {
      return (i == 0 ? std::pow(x, l1 - 1) * std::pow(1 - x, l2) : std::pow(x, l1) * std::pow(1 - x, l2 - 1)) / total;
    };
  }
  DensityFunction drho() const {
    return [*this](int i, double x) {
      if (i != 0) throw std::logic_error("only state 0 is differentiated");
      return ((l1 - 1) * std::pow(x, l1 - 2) * std::pow(1 - x, l2) - l2 * std::pow(x, l1 - 1) * std::pow(1 - x, l2 - 1)) /
             total;
    };
  }
};

MinimalInvariantSet only_interval(const SwitchingSystem& sys) {
  for (const auto& s : minimal_invariant_sets(sys))
    if (s.kind == SetKind::open_interval) return s;
  throw std::runtime_error("no invariant interval");
}

}  // namespace

TEST_CASE("representation and integration-by-parts identity on the closed form") {
  Oracle o(2, 3);
  auto sys = testing::two_state(o.l1, o.l2);
  auto lin = linearize_at_critical(sys, 0.0);
  auto r = representation_check(sys, o.rho(), lin, 0.05, {0, 1});
  CHECK(r.residual < 1e-6);
  CHECK(!r.truncated);
  for (int k = 1; k <= 20; ++k) {
    const double eta = 0.9 * k / 20.0 - 0.04;
    CHECK(appendix_identity_check(sys, o.rho(), o.drho(), lin, eta, {0, 1}).residual < 1e-8);
  }
  CHECK_THROWS_AS(representation_check(sys, o.rho(), lin, 0.995, {0, 1}), DomainError);
}

TEST_CASE("zero neighbour densities give a zero integral") {
  auto sys = testing::two_state(2, 3);
  auto lin = linearize_at_critical(sys, 0.0);
  DensityFunction only_first = [](int i, double x) { return i == 0 ? x : 0.0; };
  auto r = representation_check(sys, only_first, lin, 0.2, {0, 1});
  CHECK(r.rhs == 0.0);
}

TEST_CASE("representation against solved densities") {
  auto sys = testing::three_state_line(1, 1);
  auto sol = solve_flux_ode(sys, only_interval(sys));
  auto lin = linearize_at_critical(sys, 0.0);
  auto r = representation_check(sys, sol.density(), lin, lin.delta / 2, sol.grid.interval,
                                sol.diagnostics.tail_mass_estimate);
  CHECK(r.residual < 1e-4);
  CHECK(r.truncated);
  CHECK(representation_check(sys, sol.density(), lin, 1e-3, sol.grid.interval).residual < 1e-8);

  auto rep = testing::repelling_three_state(0.75, 0.75);
  auto sr = solve_flux_ode(rep, only_interval(rep));
  auto lr = linearize_at_critical(rep, 0.0, Side::left);
  CHECK(representation_check(rep, sr.density(), lr, 0.2, sr.grid.interval).residual < 1e-8);
}

TEST_CASE("representation with a nonlinear critical field") {
  Eigen::MatrixXd rates(2, 2);
  rates << 0, 1.5, 1, 0;
  SwitchingSystem sys({VectorField::polynomial({0, -2, 3}), VectorField::affine(-1, 0.5)}, SwitchingRates(rates), {-0.5, 1.5});
  auto sol = solve_flux_ode(sys, only_interval(sys));
  auto lin = linearize_at_critical(sys, 0.0);
  CHECK(lin.vartheta.value == doctest::Approx(2.0 / 3.0));
  CHECK(lin.r(sys, 1e-9) == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(lin.integral_r(sys, 0.1, 0.2) ==
        doctest::Approx(-(std::log(0.2 / 0.1) / 2 + sys.transit_time(0, 0.1, 0.2))).epsilon(1e-10));
  for (double eta : {1e-3, 0.1, 0.3, 0.45})
    CHECK(representation_check(sys, sol.density(), lin, eta, sol.grid.interval).residual < 1e-8);
}

TEST_CASE("integration-by-parts identity on a grid is sensitive to a perturbed node") {
  Oracle o(2, 3);
  auto sys = testing::two_state(o.l1, o.l2);
  auto sol = solve_flux_ode(sys, only_interval(sys));
  auto lin = linearize_at_critical(sys, 0.0);
  const double clean = appendix_identity_check(sys, sol.grid, lin, 0.1).residual;
  auto bad = sol.grid;
  int j = 0;
  while (bad.nodes[j] < 0.3) ++j;
  bad.rho(0, j) *= 1.01;
  const double dirty = appendix_identity_check(sys, bad, lin, 0.1).residual;
  CHECK(clean < 1e-6);
  CHECK(dirty > 10 * clean);
}
