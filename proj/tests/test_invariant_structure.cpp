#include <cmath>

#include "doctest.h"
#include "pdmp/invariant_structure.hpp"
#include "systems.hpp"

using namespace pdmp;

namespace {

SwitchingSystem make(std::vector<VectorField> f, Interval w) {
  const int n = static_cast<int>(f.size());
  Eigen::MatrixXd r = Eigen::MatrixXd::Ones(n, n);
  r.diagonal().setZero();
  return SwitchingSystem(std::move(f), SwitchingRates(r), w);
}

}  // namespace

TEST_CASE("minimal invariant sets of the reference examples") {
  const auto ex33 = testing::three_state_line(1, 1);
  const auto s33 = minimal_invariant_sets(ex33);
  REQUIRE(s33.size() == 1);
  CHECK(s33[0].kind == SetKind::open_interval);
  CHECK(s33[0].left.kind == Endpoint::Kind::neg_infinity);
  CHECK(s33[0].right.kind == Endpoint::Kind::pos_infinity);
  CHECK(s33[0].window_truncated);

  const auto ex34 = testing::two_state(1, 1);
  const auto s34 = minimal_invariant_sets(ex34);
  REQUIRE(s34.size() == 1);
  CHECK(s34[0].left.value == doctest::Approx(0.0));
  CHECK(s34[0].right.value == doctest::Approx(1.0));
  CHECK(s34[0].left_critical);
  CHECK(!s34[0].window_truncated);

  const auto sing = minimal_invariant_sets(make({VectorField::affine(-1, 0), VectorField::affine(-2, 0)}, {-1, 1}));
  REQUIRE(sing.size() == 1);
  CHECK(sing[0].kind == SetKind::singleton);
  CHECK(sing[0].point == 0.0);

  const auto rep = minimal_invariant_sets(testing::repelling_three_state(0.75, 0.75));
  REQUIRE(rep.size() == 1);
  CHECK(rep[0].left.value == doctest::Approx(-1.0));
  CHECK(rep[0].right.value == doctest::Approx(1.0));
}

TEST_CASE("endpoint sign conditions hold for returned intervals") {
  const auto sys = testing::repelling_three_state(0.75, 0.75);
  for (const auto& s : minimal_invariant_sets(sys)) {
    if (s.kind != SetKind::open_interval) continue;
    for (int i = 0; i < sys.n(); ++i) {
      if (s.left.is_finite()) CHECK(sys.field(i)(s.left.value) >= -1e-12);
      if (s.right.is_finite()) CHECK(sys.field(i)(s.right.value) <= 1e-12);
    }
  }
}

TEST_CASE("critical point trichotomy") {
  const auto ex33 = testing::three_state_line(1, 1);
  CHECK(classify_critical_point(ex33, 0.0, minimal_invariant_sets(ex33)).kase == CriticalCase::B);
  const auto ex34 = testing::two_state(1, 1);
  const auto s34 = minimal_invariant_sets(ex34);
  CHECK(classify_critical_point(ex34, 0.0, s34).kase == CriticalCase::C);
  CHECK(classify_critical_point(ex34, 1.0, s34).kase == CriticalCase::A);
  const auto p1 = principal_case(ex34, 1.0, s34);
  CHECK(p1.kase == CriticalCase::C);
  CHECK(p1.side == Side::left);
  const auto gap = make({VectorField::affine(-1, 0), VectorField::affine(0, -1)}, {-2, 2});
  CHECK(classify_critical_point(gap, 0.0, minimal_invariant_sets(gap)).kase == CriticalCase::A);
  const auto dbl = make({VectorField::affine(-1, 0), VectorField::affine(-2, 0), VectorField::affine(0, 1)}, {-1, 1});
  CHECK_THROWS_AS(classify_critical_point(dbl, 0.0, minimal_invariant_sets(dbl)), UnsupportedConfiguration);
}

TEST_CASE("existence criterion examples") {
  const auto r33 = existence_criterion(testing::three_state_line(1, 1));
  CHECK(r33.conclusive);
  CHECK(r33.exists);
  for (int i = 0; i < 3; ++i) CHECK(r33.jump_chain_stationary(i) == doctest::Approx(1.0 / 3));
  CHECK(*r33.mean_contraction == doctest::Approx(1.0 / 3));

  const auto r34 = existence_criterion(testing::two_state(0.7, 2.3));
  CHECK(*r34.mean_contraction == doctest::Approx(1.0));

  Eigen::MatrixXd r(2, 2);
  r << 0, 1, 3, 0;
  const SwitchingSystem pm({VectorField::affine(-1, 0), VectorField::affine(1, 0)}, SwitchingRates(r), {-1, 1});
  const auto rpm = existence_criterion(pm);
  CHECK(rpm.jump_chain_stationary(0) == doctest::Approx(0.75));
  CHECK(*rpm.contraction_coefficients[1] == doctest::Approx(-1.0));
  CHECK(*rpm.mean_contraction == doctest::Approx(0.5));
  CHECK(rpm.exists);

  const SwitchingSystem poly({VectorField::polynomial({0, -1, 0, -1}), VectorField::affine(0, 1)}, SwitchingRates(r),
                             {-1, 1});
  CHECK(!existence_criterion(poly).conclusive);
}

TEST_CASE("reachability oracle examples") {
  const auto ex34 = testing::two_state(1, 1);
  CHECK(reachability_oracle(ex34, 0.5, {0.9, 0.95}, 8, 1));
  CHECK(!reachability_oracle(ex34, 0.5, {1.1, 1.2}, 8, 1));
  const auto ex33 = testing::three_state_line(1, 1, 1.0, 10.0);
  CHECK(reachability_oracle(ex33, -5.0, {4.9, 5.1}, 16, 3));
}
