#include <doctest.h>

#include <cmath>
#include <vector>

#include "pdmp/frobenius.hpp"
#include "pdmp/numerics/ode.hpp"
#include "pdmp/numerics/regression.hpp"
#include "systems.hpp"

using namespace pdmp;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

namespace {

// phi' = Lambda diag(1/u(x)) phi integrated from x0 to x1.
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

double beta(double a, double b) { return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)); }

}  // namespace

TEST_CASE("taylor coefficients of B for the two-state system") {
  const double l1 = 0.7, l2 = 1.9;
  auto sys = testing::two_state(l1, l2);
  auto ls = local_system<double>(sys, 0.0);
  CHECK(ls.a == 1.0);
  auto B = taylor_B(ls, 3);
  Mat B0(2, 2), B1(2, 2);
  B0 << l1, 0, -l1, 0;
  B1 << 0, l2, 0, -l2;
  CHECK((B[0] - B0).norm() < 1e-15);
  CHECK((B[1] - B1).norm() < 1e-15);
  CHECK((B[2] - B1).norm() < 1e-15);  // eta/(1-eta) has unit coefficients
  CHECK((B_at(ls, 0.0) - B0).norm() < 1e-15);
}

TEST_CASE("eigensystem of B0") {
  auto ex = testing::three_state_line(1, 1);
  auto ls = local_system<double>(ex, 0.0);
  auto B = taylor_B(ls, 2);
  auto e = b0_eigensystem<double>(B[0], ls.k, 2.0, ls.a);
  CHECK(e.mu == 2.0);
  CHECK(e.lambda(0) == 2.0);
  CHECK(e.lambda(1) == -1.0);
  CHECK(e.lambda(2) == -1.0);
  CHECK(e.residual <= 1e-12);
  CHECK((B[0] * Vec::Unit(3, 1)).norm() == 0);
  CHECK((e.P * e.P_inv - Mat::Identity(3, 3)).norm() < 1e-15);

  auto two = testing::two_state(3, 1);
  auto l2 = local_system<double>(two, 0.0);
  auto e2 = b0_eigensystem<double>(taylor_B(l2, 0)[0], 0, 3.0, 1.0);
  CHECK(e2.mu == 3.0);
  CHECK(e2.lambda(0) == 3.0);
  CHECK(e2.lambda(1) == -3.0);
}

TEST_CASE("constant coefficients give V = I") {
  Mat B0(2, 2);
  B0 << 0.5, 0, -0.5, 0;
  std::vector<Mat> B{B0, Mat::Zero(2, 2), Mat::Zero(2, 2)};
  auto e = b0_eigensystem<double>(B0, 0, 0.5, 1.0);
  auto s = solve_normal_equation(B, e);
  CHECK(!s.resonant);
  for (std::size_t j = 1; j < s.V.size(); ++j) CHECK(s.V[j].norm() == 0);
}

TEST_CASE("resonant two-state expansion") {
  const double l2 = 1.7;
  auto sys = testing::two_state(1, l2);
  auto fe = frobenius_expansion<double>(sys, 0.0, 1, 8, 0.99);
  REQUIRE(fe.normal.resonant);
  CHECK(fe.normal.m == 1);
  Mat Y(2, 2);
  Y << l2, l2, -l2, -l2;
  CHECK((fe.normal.Y - Y).norm() < 1e-14);
  CHECK((fe.normal.Y * fe.normal.Y).norm() < 1e-14);
  CHECK((fe.normal.Y * fe.eig.lambda).norm() < 1e-14);
  // Y y~ lies in the mu-eigenspace and has a nonzero first component.
  Vec yt(2);
  yt << 0, 1;
  Vec Yy = fe.normal.Y * yt;
  CHECK(std::abs(Yy(0)) > 0.1);
  CHECK((fe.B[0] * Yy - fe.eig.mu * Yy).norm() < 1e-14);
}

TEST_CASE("normal-equation residual order") {
  for (double l1 : {0.5, 1.0}) {
    auto sys = testing::two_state(l1, 2.0);
    for (int K : {1, 8}) {
      auto fe = frobenius_expansion<long double>(sys, 0.0, 1, K, 0.99);
      std::vector<double> x, y;
      const double lo = K == 1 ? 1e-3 : 0.05, hi = K == 1 ? 1e-1 : 0.2;
      for (int j = 0; j <= 20; ++j) {
        const double eta = lo * std::pow(hi / lo, j / 20.0);
        x.push_back(std::log(eta));
        y.push_back(std::log(static_cast<double>(normal_equation_residual(fe, (long double)eta))));
      }
      const auto fit = numerics::fit_line(x, y);
      CAPTURE(l1);
      CAPTURE(K);
      CHECK(fit.slope >= K + 0.5);
    }
  }
}

TEST_CASE("reconstructed flux matches the closed form and direct integration") {
  const double l2 = 2.0;
  for (double l1 : {0.5, 1.0, 2.0}) {
    auto sys = testing::two_state(l1, l2);
    auto fe = frobenius_expansion<double>(sys, 0.0, 1, 8, 0.99);
    const double eps = fe.epsilon;
    auto phi1 = [&](double x) { return -std::pow(x, l1) * std::pow(1 - x, l2) / beta(l1, l2); };
    Vec pe(2);
    pe << phi1(eps), -phi1(eps);
    CHECK((reconstruct_flux(fe, pe, eps) - pe).norm() <= 1e-15 * pe.norm());
    for (double eta : {eps / 10, eps / 100, 1e-4, 1e-6}) {
      const Vec r = reconstruct_flux(fe, pe, eta);
      CAPTURE(l1);
      CAPTURE(eta);
      CHECK(std::abs(r(0) / phi1(eta) - 1) < 1e-6);
      CHECK(std::abs(r(0) + r(1)) < 1e-14);
    }
  }

  auto ex = testing::three_state_line(0.25, 0.25);
  auto fe = frobenius_expansion<double>(ex, 0.0, 1, 8, 0.99);
  const double eps = fe.epsilon;
  Vec pe(3);
  pe << -0.01, 0.3, -0.29;
  for (double eta : {eps / 10, eps / 1000}) {
    const Vec ode = integrate_flux(ex, pe, eps, eta);
    const Vec r = reconstruct_flux(fe, pe, eta);
    CHECK((r - ode).norm() <= 1e-6 * ode.norm());
  }
}

TEST_CASE("left-side expansion of a repelling point") {
  auto sys = testing::repelling_three_state(0.75, 0.75);
  auto right = frobenius_expansion<double>(sys, 0.0, 1, 8, 0.49);
  auto left = frobenius_expansion<double>(sys, 0.0, -1, 8, 0.49);
  CHECK(right.local.a == doctest::Approx(-1.0));
  CHECK(left.local.a == doctest::Approx(-1.0));
  CHECK(right.eig.mu == doctest::Approx(-1.5));
  CHECK((right.B[0] - left.B[0]).norm() < 1e-14);
  Vec pe(3);
  pe << 0.0, 0.2, -0.2;
  const double eps = left.epsilon;
  const Vec ode = integrate_flux(sys, pe, -eps, -eps / 20);
  const Vec r = reconstruct_flux(left, pe, eps / 20);
  CHECK((r - ode).norm() <= 1e-6 * ode.norm());
}
