#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "pdmp/numerics/interpolation.hpp"
#include "pdmp/numerics/ode.hpp"
#include "pdmp/numerics/polynomial.hpp"
#include "pdmp/numerics/quadrature.hpp"
#include "pdmp/numerics/regression.hpp"
#include "pdmp/numerics/rng.hpp"

using namespace pdmp::numerics;

TEST_CASE("polynomial evaluation, shift and reflection") {
  const Polynomial<double> p({0.0, -1.0, 0.0, 1.0});  // x^3 - x
  CHECK(p(2.0) == doctest::Approx(6.0));
  const auto s = p.taylor_shift(1.0);  // (1+h)^3 - (1+h) = 2h + 3h^2 + h^3
  REQUIRE(s.coefficients().size() == 4);
  CHECK(s.coefficients()[0] == doctest::Approx(0.0));
  CHECK(s.coefficients()[1] == doctest::Approx(2.0));
  CHECK(s.coefficients()[2] == doctest::Approx(3.0));
  CHECK(s.coefficients()[3] == doctest::Approx(1.0));
  const auto r = p.reflected(1.0);  // -p(1 - s)
  for (double v : {0.1, 0.3, 0.7}) CHECK(r(v) == doctest::Approx(-p(1.0 - v)));
}

TEST_CASE("series reciprocal of 1 - x is the geometric series") {
  const auto g = series_reciprocal<double>({1.0, -1.0}, 6);
  for (double c : g) CHECK(c == doctest::Approx(1.0));
}

TEST_CASE("real roots of x^3 - x and a double root") {
  const auto roots = real_roots(Polynomial<double>({0.0, -1.0, 0.0, 1.0}), -2.0, 2.0);
  REQUIRE(roots.size() == 3);
  CHECK(roots[0] == doctest::Approx(-1.0).epsilon(1e-13));
  CHECK(roots[1] == doctest::Approx(0.0));
  CHECK(roots[2] == doctest::Approx(1.0).epsilon(1e-13));
  const auto dbl = real_roots(Polynomial<double>({0.25, -1.0, 1.0}), -2.0, 2.0);  // (x - 1/2)^2
  REQUIRE(dbl.size() == 1);
  CHECK(dbl[0] == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("quadrature rules") {
  const auto& g = gauss_legendre_16();
  double w = 0.0;
  for (double v : g.weights) w += v;
  CHECK(w == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(integrate_gauss([](double x) { return std::pow(x, 31); }, 0.0, 1.0) == doctest::Approx(1.0 / 32).epsilon(1e-14));
  CHECK(integrate_adaptive([](double x) { return std::exp(x); }, 0.0, 2.0) ==
        doctest::Approx(std::exp(2.0) - 1.0).epsilon(1e-13));
  // Endpoint singularity x^{-1/2}.
  const double v = integrate_tanh_sinh([](double x, double) { return 1.0 / std::sqrt(x); }, 0.0, 1.0);
  CHECK(v == doctest::Approx(2.0).epsilon(1e-10));
  const double lg = integrate_tanh_sinh([](double x, double) { return std::log(x); }, 0.0, 1.0);
  CHECK(lg == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("Dormand-Prince on exponential decay, scalar and vector") {
  OdeTolerances tol;
  tol.rtol = 1e-12;
  tol.atol = 1e-14;
  const auto out = dormand_prince([](double, double y) { return -y; }, 0.0, 1.0, 3.0, tol);
  CHECK(out.status == OdeStatus::completed);
  CHECK(out.y == doctest::Approx(std::exp(-3.0)).epsilon(1e-10));
  Eigen::Vector2d y0(1.0, 0.0);
  const auto rot = dormand_prince(
      [](double, const Eigen::Vector2d& y) { return Eigen::Vector2d(-y(1), y(0)); }, 0.0, y0, std::numbers::pi, tol);
  CHECK(rot.y(0) == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(std::abs(rot.y(1)) < 1e-10);
}

TEST_CASE("guard stop returns last accepted state") {
  OdeTolerances tol;
  const auto out = dormand_prince([](double, double) { return 1.0; }, 0.0, 0.0, 5.0, tol,
                                  [](double y) { return y <= 2.0; }, [](double, double) {});
  CHECK(out.status == OdeStatus::guard_stop);
  CHECK(out.y <= 2.0);
  CHECK(out.y > 1.99);
}

TEST_CASE("a state pinned on the guard boundary ends with a guard stop") {
  OdeTolerances tol;
  tol.rtol = 1e-10;
  tol.max_steps = 1000;
  auto f = [](double, double x) { return -(0.2 + 1.2 * x + x * x); };
  auto out = dormand_prince(f, 0.0, -2.9999, 1e-3, tol, [](double x) { return x >= -3.0; }, [](double, double) {});
  CHECK(out.status == OdeStatus::guard_stop);
  CHECK(out.y >= -3.0);
  CHECK(out.y < -2.99999);
}

TEST_CASE("cubic Lagrange stencil reproduces cubics and their derivative") {
  std::vector<double> nodes{0.0, 0.1, 0.3, 0.35, 0.6, 1.0};
  std::vector<double> vals;
  auto f = [](double x) { return 1 - 2 * x + 3 * x * x - x * x * x; };
  for (double x : nodes) vals.push_back(f(x));
  for (double x : {0.05, 0.32, 0.5, 0.99}) {
    CHECK(apply_stencil(lagrange_stencil(nodes, x), vals) == doctest::Approx(f(x)).epsilon(1e-13));
    CHECK(apply_stencil(lagrange_stencil(nodes, x, 1), vals) ==
          doctest::Approx(-2 + 6 * x - 3 * x * x).epsilon(1e-12));
  }
}

TEST_CASE("line fit recovers an exact power law") {
  std::vector<double> x, y;
  for (int k = 0; k < 20; ++k) {
    const double eta = std::pow(10.0, -4 + 2.0 * k / 19);
    x.push_back(std::log(eta));
    y.push_back(std::log(std::pow(eta, -0.5)));
  }
  const auto fit = fit_line(x, y);
  CHECK(std::abs(fit.slope + 0.5) < 1e-12);
}

TEST_CASE("counter RNG streams are reproducible and distinct") {
  CounterRng a(42, 0), b(42, 0), c(42, 1);
  for (int k = 0; k < 100; ++k) {
    const auto va = a();
    CHECK(va == b());
    CHECK(va != c());
  }
  CounterRng u(7);
  double mean = 0;
  const int m = 200000;
  for (int k = 0; k < m; ++k) {
    const double v = u.uniform();
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
    mean += v;
  }
  CHECK(mean / m == doctest::Approx(0.5).epsilon(0.01));
}
