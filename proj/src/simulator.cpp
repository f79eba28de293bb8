#include "pdmp/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace pdmp {

double holding_time_from_uniform(const SwitchingSystem& system, int i, double u) {
  return -std::log(u) / system.rates().total(i);
}

double sample_holding_time(const SwitchingSystem& system, int i, numerics::CounterRng& rng) {
  return holding_time_from_uniform(system, i, rng.uniform());
}

int next_state(const SwitchingSystem& system, int i, numerics::CounterRng& rng) {
  const auto& r = system.rates();
  const double target = rng.uniform() * r.total(i);
  double acc = 0.0;
  int last = -1;
  for (int j = 0; j < system.n(); ++j) {
    if (j == i || r.rate(i, j) <= 0) continue;
    acc += r.rate(i, j);
    last = j;
    if (target < acc) return j;
  }
  return last;
}

SimSummary simulate(const SwitchingSystem& system, double x0, int i0, const SimConfig& config, const EventSink& on_event,
                    const SegmentSink& on_segment, std::uint64_t stream) {
  if (!system.window().contains(x0)) throw DomainError("simulate: start position outside the analysis window");
  if (i0 < 0 || i0 >= system.n()) throw DomainError("simulate: initial state out of range");
  numerics::CounterRng rng(config.seed, stream);
  SimSummary s;
  double t = 0.0, x = x0;
  int i = i0;
  for (;;) {
    const double h = sample_holding_time(system, i, rng);
    const double t_end = std::min(t + h, config.t_max);
    const FlowResult fr = system.flow(i, x, t_end - t);
    if (fr.status == FlowStatus::hit_window_boundary) {
      const double t_exit = t + fr.elapsed;
      if (on_segment) on_segment({i, t, t_exit, x, fr.endpoint});
      if (on_event) on_event({t_exit, i, -1, fr.endpoint});
      s = {t_exit, fr.endpoint, i, s.switches, Termination::window_exit};
      return s;
    }
    if (on_segment) on_segment({i, t, t_end, x, fr.endpoint});
    t = t_end;
    x = fr.endpoint;
    if (t >= config.t_max) {
      s.termination = Termination::time_limit;
      break;
    }
    if (s.switches >= config.max_switches) {
      s.termination = Termination::switch_limit;
      break;
    }
    const int j = next_state(system, i, rng);
    if (on_event) on_event({t, i, j, x});
    ++s.switches;
    i = j;
  }
  s.final_time = t;
  s.final_position = x;
  s.final_state = i;
  return s;
}

std::vector<double> graded_bin_edges(Interval range, const std::vector<double>& critical_points, const BinSpec& spec) {
  if (!(range.lo < range.hi)) throw DomainError("graded_bin_edges: empty range");
  const double w = range.width();
  const double zone = spec.graded_zone * w;
  std::vector<double> near;
  for (double c : critical_points)
    if (c >= range.lo - zone && c <= range.hi + zone) near.push_back(c);
  auto in_zone = [&](double x) {
    return std::any_of(near.begin(), near.end(), [&](double c) { return std::abs(x - c) < zone; });
  };
  std::vector<double> e;
  for (int k = 0; k <= spec.linear_bins; ++k) {
    const double x = range.lo + w * k / spec.linear_bins;
    if (k == 0 || k == spec.linear_bins || near.empty() || !in_zone(x)) e.push_back(x);
  }
  if (spec.log_bins_per_decade > 0 && spec.min_offset > 0 && spec.min_offset < zone) {
    const int decades_steps = static_cast<int>(std::ceil(std::log10(zone / spec.min_offset) * spec.log_bins_per_decade));
    for (double c : near) {
      if (c > range.lo && c < range.hi) e.push_back(c);
      for (int k = 0; k <= decades_steps; ++k) {
        const double d = std::min(zone, spec.min_offset * std::pow(10.0, static_cast<double>(k) / spec.log_bins_per_decade));
        for (double x : {c - d, c + d})
          if (x > range.lo && x < range.hi) e.push_back(x);
      }
    }
  }
  std::sort(e.begin(), e.end());
  std::vector<double> out;
  for (double x : e)
    if (out.empty() || x - out.back() > 1e-14 * w) out.push_back(x);
  return out;
}

OccupationHistogram::OccupationHistogram(int states, std::vector<double> edges)
    : edges_(std::move(edges)),
      occupation_(Eigen::MatrixXd::Zero(states, std::max<int>(0, static_cast<int>(edges_.size()) - 1))),
      underflow_(Eigen::VectorXd::Zero(states)),
      overflow_(Eigen::VectorXd::Zero(states)) {
  if (edges_.size() < 2) throw DomainError("histogram needs at least two edges");
  for (std::size_t k = 1; k < edges_.size(); ++k)
    if (!(edges_[k] > edges_[k - 1])) throw DomainError("histogram edges must increase strictly");
}

void OccupationHistogram::deposit(int state, double x, double dt) {
  if (x < edges_.front()) {
    underflow_(state) += dt;
  } else if (x >= edges_.back()) {
    overflow_(state) += dt;
  } else {
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    occupation_(state, static_cast<int>(it - edges_.begin()) - 1) += dt;
  }
  total_ += dt;
}

void OccupationHistogram::add_segment(const SwitchingSystem& system, const FlowSegment& seg, double burn_in) {
  if (seg.t1 <= burn_in || seg.t1 <= seg.t0) return;
  double x0 = seg.x0, t0 = seg.t0;
  if (t0 < burn_in) {
    x0 = system.flow(seg.state, seg.x0, burn_in - t0).endpoint;
    t0 = burn_in;
  }
  const double duration = seg.t1 - t0;
  const double x1 = seg.x1;
  if (x0 == x1) {
    deposit(seg.state, x0, duration);
    return;
  }
  // Cut points: bin edges strictly between x0 and x1, in travel order. The
  // last piece receives the remainder so the deposited total is exact.
  const bool up = x1 > x0;
  std::vector<double> cuts{x0};
  if (up) {
    for (auto it = std::upper_bound(edges_.begin(), edges_.end(), x0); it != edges_.end() && *it < x1; ++it)
      cuts.push_back(*it);
  } else {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), x0);
    while (it != edges_.begin()) {
      --it;
      if (*it <= x1) break;
      cuts.push_back(*it);
    }
  }
  cuts.push_back(x1);
  double used = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    const double mid = 0.5 * (a + b);
    double dt;
    if (k + 2 == cuts.size()) {
      dt = std::max(0.0, duration - used);
    } else {
      dt = std::abs(system.transit_time(seg.state, a, b));
      dt = std::min(dt, duration - used);
    }
    used += dt;
    deposit(seg.state, mid, dt);
  }
}

void OccupationHistogram::merge(const OccupationHistogram& other) {
  if (other.edges_ != edges_ || other.states() != states()) throw DomainError("histogram merge: incompatible bins");
  occupation_ += other.occupation_;
  underflow_ += other.underflow_;
  overflow_ += other.overflow_;
  total_ += other.total_;
}

Eigen::MatrixXd OccupationHistogram::density() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(states(), bins());
  if (total_ <= 0) return d;
  for (int b = 0; b < bins(); ++b) d.col(b) = occupation_.col(b) / (total_ * (edges_[b + 1] - edges_[b]));
  return d;
}

OccupationRun occupation_density(const SwitchingSystem& system, double x0, int i0, const SimConfig& config,
                                 const std::vector<double>& edges) {
  if (config.replicas < 1) throw DomainError("occupation_density: replicas must be at least 1");
  if (!(config.burn_in <= config.t_max)) throw DomainError("occupation_density: burn_in exceeds t_max");
  const int R = config.replicas;
  std::vector<OccupationHistogram> hists(R, OccupationHistogram(system.n(), edges));
  std::vector<SimSummary> sums(R);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= R) return;
      auto& h = hists[r];
      sums[r] = simulate(system, x0, i0, config, nullptr,
                         [&](const FlowSegment& seg) { h.add_segment(system, seg, config.burn_in); },
                         static_cast<std::uint64_t>(r));
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int threads = std::clamp(config.threads > 0 ? config.threads : static_cast<int>(hw), 1, R);
  std::vector<std::thread> pool;
  for (int k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  OccupationRun run{OccupationHistogram(system.n(), edges), sums, 0, 0};
  for (int r = 0; r < R; ++r) {
    run.histogram.merge(hists[r]);
    run.total_switches += sums[r].switches;
    run.window_exits += sums[r].termination == Termination::window_exit ? 1 : 0;
  }
  return run;
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::time_limit:
      return "time_limit";
    case Termination::switch_limit:
      return "switch_limit";
    case Termination::window_exit:
      return "window_exit";
  }
  return "?";
}

}  // namespace pdmp
