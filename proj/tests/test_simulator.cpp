#include <doctest.h>

#include <cmath>
#include <vector>

#include "pdmp/simulator.hpp"
#include "systems.hpp"

using namespace pdmp;

namespace {

SwitchingSystem rates_system(const Eigen::MatrixXd& r) {
  std::vector<VectorField> f;
  for (int i = 0; i < r.rows(); ++i) f.push_back(VectorField::affine(-1, static_cast<double>(i)));
  return SwitchingSystem(f, SwitchingRates(r), {-10, 10});
}

}  // namespace

TEST_CASE("holding times") {
  auto sys = testing::two_state(2, 1);
  CHECK(holding_time_from_uniform(sys, 0, 0.5) == doctest::Approx(-std::log(0.5) / 2).epsilon(1e-15));
  CHECK(holding_time_from_uniform(sys, 0, std::nextafter(1.0, 0.0)) < 1e-15);
  CHECK(holding_time_from_uniform(sys, 0, std::nextafter(1.0, 0.0)) > 0);

  auto unit = testing::two_state(1, 1);
  numerics::CounterRng rng(7, 0);
  double sum = 0;
  const int n = 1000000;
  for (int k = 0; k < n; ++k) sum += sample_holding_time(unit, 0, rng);
  CHECK(std::abs(sum / n - 1.0) < 0.003);
}

TEST_CASE("next state frequencies") {
  Eigen::MatrixXd r = Eigen::MatrixXd::Ones(4, 4);
  r.diagonal().setZero();
  r(0, 3) = 2;
  auto sys = rates_system(r);
  numerics::CounterRng rng(11, 3);
  std::vector<int> count(4, 0);
  const int n = 1000000;
  for (int k = 0; k < n; ++k) ++count[next_state(sys, 0, rng)];
  CHECK(count[0] == 0);
  CHECK(std::abs(count[1] / double(n) - 0.25) < 0.002);
  CHECK(std::abs(count[2] / double(n) - 0.25) < 0.002);
  CHECK(std::abs(count[3] / double(n) - 0.50) < 0.002);

  Eigen::MatrixXd r3(3, 3);
  r3 << 0, 2, 1, 1, 0, 1, 1, 1, 0;
  auto sys3 = rates_system(r3);
  std::vector<int> c3(3, 0);
  for (int k = 0; k < n; ++k) ++c3[next_state(sys3, 0, rng)];
  CHECK(std::abs(c3[1] / double(n) - 2.0 / 3) < 0.002);

  auto two = testing::two_state(1, 1);
  for (int k = 0; k < 100; ++k) {
    CHECK(next_state(two, 0, rng) == 1);
    CHECK(next_state(two, 1, rng) == 0);
  }
}

TEST_CASE("no switch before t_max") {
  auto sys = testing::two_state(1e-9, 1e-9);
  SimConfig cfg;
  cfg.t_max = 0.3;
  int events = 0;
  auto s = simulate(sys, 0.5, 1, cfg, [&](const SwitchEvent&) { ++events; }, nullptr);
  CHECK(events == 0);
  CHECK(s.termination == Termination::time_limit);
  CHECK(s.final_position == doctest::Approx(sys.flow(1, 0.5, 0.3).endpoint).epsilon(1e-14));
}

TEST_CASE("trajectory stays in the invariant interval and is reproducible") {
  auto sys = testing::two_state(1, 1);
  SimConfig cfg;
  cfg.max_switches = 100000;
  std::vector<SwitchEvent> a, b;
  double prev_t = -1, prev_x = 0.5;
  bool confined = true, continuous = true, increasing = true;
  simulate(sys, 0.5, 0, cfg, [&](const SwitchEvent& e) { a.push_back(e); }, [&](const FlowSegment& s) {
    confined = confined && s.x1 > 0 && s.x1 < 1;
    continuous = continuous && s.x0 == prev_x;
    increasing = increasing && s.t0 > prev_t;
    prev_t = s.t0;
    prev_x = s.x1;
  });
  simulate(sys, 0.5, 0, cfg, [&](const SwitchEvent& e) { b.push_back(e); }, nullptr);
  CHECK(confined);
  CHECK(continuous);
  CHECK(increasing);
  REQUIRE(a.size() == b.size());
  bool same = true;
  for (std::size_t k = 0; k < a.size(); ++k)
    same = same && a[k].time == b[k].time && a[k].position == b[k].position && a[k].state_after == b[k].state_after;
  CHECK(same);
  for (std::size_t k = 1; k < a.size(); ++k) REQUIRE(a[k].time > a[k - 1].time);
}

TEST_CASE("window exit is reported") {
  Eigen::MatrixXd r(2, 2);
  r << 0, 1e-9, 1e-9, 0;
  SwitchingSystem sys({VectorField::affine(0, 1), VectorField::affine(0, -1)}, SwitchingRates(r), {-1, 1});
  SimConfig cfg;
  cfg.t_max = 10;
  SwitchEvent last{};
  auto s = simulate(sys, 0, 0, cfg, [&](const SwitchEvent& e) { last = e; }, nullptr);
  CHECK(s.termination == Termination::window_exit);
  CHECK(last.state_after == -1);
  CHECK(s.final_time == doctest::Approx(1.0));
}

TEST_CASE("exact occupation of a uniform segment") {
  Eigen::MatrixXd r(2, 2);
  r << 0, 1, 1, 0;
  SwitchingSystem sys({VectorField::affine(0, 1), VectorField::affine(0, -1)}, SwitchingRates(r), {-1, 2});
  std::vector<double> edges;
  for (int k = 0; k <= 10; ++k) edges.push_back(0.1 * k);
  OccupationHistogram h(2, edges);
  h.add_segment(sys, {0, 0.0, 1.0, 0.0, 1.0}, 0.0);
  for (int b = 0; b < 10; ++b) CHECK(h.occupation()(0, b) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(h.occupation().row(1).sum() == 0);
  CHECK(h.total_time() == 1.0);

  OccupationHistogram g(2, edges);
  g.add_segment(sys, {0, 0.0, 1.0, 0.0, 1.0}, 1.0);
  CHECK(g.total_time() == 0);

  OccupationHistogram o(2, edges);
  o.add_segment(sys, {1, 0.0, 1.5, 1.2, -0.3}, 0.0);
  CHECK(o.total_time() == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(o.overflow()(1) == doctest::Approx(0.2));
  CHECK(o.underflow()(1) == doctest::Approx(0.3));
}

TEST_CASE("burn-in and total time") {
  auto sys = testing::two_state(1, 1);
  SimConfig cfg;
  cfg.t_max = 200;
  cfg.burn_in = 50;
  cfg.replicas = 4;
  cfg.max_switches = 1u << 30;
  auto edges = graded_bin_edges({0, 1}, {0, 1}, {});
  auto run = occupation_density(sys, 0.5, 0, cfg, edges);
  CHECK(run.histogram.total_time() == doctest::Approx(4 * 150.0).epsilon(1e-12));
  cfg.burn_in = cfg.t_max;
  auto empty = occupation_density(sys, 0.5, 0, cfg, edges);
  CHECK(empty.histogram.total_time() == 0);
}

TEST_CASE("graded bins resolve decades near critical points") {
  auto e = graded_bin_edges({0, 1}, {0}, {});
  int in_decade = 0;
  for (double x : e) in_decade += (x > 1e-4 && x < 1e-3);
  CHECK(in_decade >= 9);
  for (std::size_t k = 1; k < e.size(); ++k) REQUIRE(e[k] > e[k - 1]);
  CHECK(e.front() == 0);
  CHECK(e.back() == 1);
}

TEST_CASE("two-state histogram matches the closed-form density") {
  auto sys = testing::two_state(1, 1);
  SimConfig cfg;
  cfg.seed = 42;
  cfg.replicas = 8;
  cfg.max_switches = 125000;
  cfg.burn_in = 10;
  std::vector<double> edges;
  for (int k = 0; k <= 100; ++k) edges.push_back(0.01 * k);
  auto run = occupation_density(sys, 0.5, 0, cfg, edges);
  auto d = run.histogram.density();
  // rho_1 = 1 - x, rho_2 = x with lambda_1 = lambda_2 = 1; bin averages are exact.
  double l1 = 0;
  for (int b = 0; b < 100; ++b) {
    const double m = 0.5 * (edges[b] + edges[b + 1]);
    l1 += (std::abs(d(0, b) - (1 - m)) + std::abs(d(1, b) - m)) * 0.01;
  }
  CHECK(l1 < 0.02);
  CHECK(run.window_exits == 0);

  auto again = occupation_density(sys, 0.5, 0, cfg, edges);
  CHECK(again.histogram.occupation() == run.histogram.occupation());
}
