#include "pdmp/invariant_structure.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "pdmp/numerics/rng.hpp"

namespace pdmp {

double Endpoint::order_key() const {
  switch (kind) {
    case Kind::neg_infinity:
      return -std::numeric_limits<double>::infinity();
    case Kind::pos_infinity:
      return std::numeric_limits<double>::infinity();
    case Kind::finite:
      break;
  }
  return value;
}

bool MinimalInvariantSet::contains(double x) const {
  if (kind == SetKind::singleton) return x == point;
  return x > left.order_key() && x < right.order_key();
}

Interval MinimalInvariantSet::working_interval(const Interval& window) const {
  if (kind == SetKind::singleton) return {point, point};
  return {std::max(left.order_key(), window.lo), std::min(right.order_key(), window.hi)};
}

namespace {

int sign_of(const SwitchingSystem& s, int i, double x, double tol) {
  const double v = s.field(i)(x);
  if (std::abs(v) <= tol * s.field_scale(i, x)) return 0;
  return v > 0 ? 1 : -1;
}

// Searches (a, b) for a positive and a negative field value: midpoints of the
// pieces cut by known critical points first, then dyadic refinement.
void find_witnesses(const SwitchingSystem& s, double a, double b, const std::vector<double>& cuts, int depth,
                    double tol, bool& pos, bool& neg) {
  std::vector<double> pts{a};
  for (double c : cuts)
    if (c > a && c < b) pts.push_back(c);
  pts.push_back(b);
  auto probe = [&](double x) {
    for (int i = 0; i < s.n() && !(pos && neg); ++i) {
      const int sg = sign_of(s, i, x, tol);
      pos = pos || sg > 0;
      neg = neg || sg < 0;
    }
  };
  for (std::size_t k = 0; k + 1 < pts.size() && !(pos && neg); ++k) probe(0.5 * (pts[k] + pts[k + 1]));
  for (int level = 1; level <= depth && !(pos && neg); ++level) {
    const long cells = 1L << level;
    for (std::size_t k = 0; k + 1 < pts.size() && !(pos && neg); ++k) {
      const double lo = pts[k], hi = pts[k + 1];
      // Odd multiples only; even ones were visited at coarser levels.
      for (long j = 1; j < cells && !(pos && neg); j += 2) probe(lo + (hi - lo) * (static_cast<double>(j) / cells));
    }
  }
}

}  // namespace

std::vector<LabelledPoint> label_critical_points(const SwitchingSystem& system, const StructureOptions& opts) {
  std::vector<LabelledPoint> out;
  for (double xi : system.global_critical_points()) {
    bool all_nonneg = true, all_nonpos = true;
    for (int i = 0; i < system.n(); ++i) {
      const int sg = sign_of(system, i, xi, opts.zero_tol);
      all_nonneg = all_nonneg && sg >= 0;
      all_nonpos = all_nonpos && sg <= 0;
    }
    out.push_back({xi, all_nonneg, all_nonpos});
  }
  return out;
}

std::vector<MinimalInvariantSet> minimal_invariant_sets(const SwitchingSystem& system, const StructureOptions& opts) {
  bool exhaustive = true;
  const std::vector<double> crit = system.global_critical_points(&exhaustive);
  const auto labels = label_critical_points(system, opts);
  const Interval& w = system.window();

  struct Mark {
    Endpoint where;
    bool l, r;
  };
  std::vector<Mark> marks;
  marks.push_back({Endpoint::neg_inf(), true, false});
  for (const auto& p : labels)
    if (p.l || p.r) marks.push_back({Endpoint::at(p.position), p.l, p.r});
  marks.push_back({Endpoint::pos_inf(), false, true});

  std::vector<MinimalInvariantSet> sets;
  for (const auto& m : marks)
    if (m.where.is_finite() && m.l && m.r) {
      MinimalInvariantSet s;
      s.kind = SetKind::singleton;
      s.point = m.where.value;
      s.left = s.right = m.where;
      s.left_critical = s.right_critical = true;
      s.window_truncated = !w.contains(s.point);
      sets.push_back(s);
    }

  const double span = std::max(1.0, w.width());
  for (std::size_t p = 0; p + 1 < marks.size(); ++p) {
    if (!marks[p].l || !marks[p + 1].r) continue;
    const Endpoint L = marks[p].where, R = marks[p + 1].where;
    // Finite proxies for unbounded ends; every critical point is known, so
    // fields keep their sign beyond the outermost one.
    double a = L.is_finite() ? L.value : std::min(w.lo, (R.is_finite() ? R.value : w.hi)) - span;
    double b = R.is_finite() ? R.value : std::max(w.hi, (L.is_finite() ? L.value : w.lo)) + span;
    for (double c : crit) {
      if (!L.is_finite() && c < b) a = std::min(a, c - span);
      if (!R.is_finite() && c > a) b = std::max(b, c + span);
    }
    bool pos = false, neg = false;
    // With an exhaustive root list each field has constant sign between cuts,
    // so the midpoint probes are already complete.
    find_witnesses(system, a, b, crit, exhaustive ? 0 : opts.witness_depth, opts.zero_tol, pos, neg);
    if (!(pos && neg)) continue;
    MinimalInvariantSet s;
    s.kind = SetKind::open_interval;
    s.left = L;
    s.right = R;
    s.left_critical = L.is_finite();
    s.right_critical = R.is_finite();
    s.window_truncated = !L.is_finite() || !R.is_finite() || (L.is_finite() && L.value < w.lo) ||
                         (R.is_finite() && R.value > w.hi) || !exhaustive;
    sets.push_back(s);
  }
  std::sort(sets.begin(), sets.end(), [](const MinimalInvariantSet& x, const MinimalInvariantSet& y) {
    return x.left.order_key() < y.left.order_key();
  });
  return sets;
}

namespace {

CriticalPointCase classify_impl(const SwitchingSystem& system, double xi, const std::vector<MinimalInvariantSet>& sets,
                                Side side, const StructureOptions& opts) {
  const auto crit = system.fields_critical_at(xi);
  if (crit.empty()) throw DomainError("classify_critical_point: point is not critical for any field");
  if (crit.size() > 1) throw UnsupportedConfiguration("point is critical for more than one field");
  CriticalPointCase out;
  out.point = xi;
  out.field_index = crit.front();
  out.side = side;
  const double tol = opts.endpoint_match_tol * std::max(1.0, std::abs(xi));
  auto same = [&](const Endpoint& e) { return e.is_finite() && std::abs(e.value - xi) <= tol; };
  for (const auto& s : sets) {
    if (s.kind != SetKind::open_interval) continue;
    if (xi > s.left.order_key() + tol && xi < s.right.order_key() - tol) {
      out.kase = CriticalCase::B;
      out.placement = Placement::interior;
      return out;
    }
  }
  for (const auto& s : sets) {
    if (s.kind != SetKind::open_interval) continue;
    if ((side == Side::right && same(s.left)) || (side == Side::left && same(s.right))) {
      out.kase = CriticalCase::C;
      out.placement = Placement::endpoint;
      return out;
    }
  }
  out.kase = CriticalCase::A;
  out.placement = Placement::support_gap;
  return out;
}

}  // namespace

CriticalPointCase classify_critical_point(const SwitchingSystem& system, double xi,
                                          const std::vector<MinimalInvariantSet>& sets, Side side,
                                          const StructureOptions& opts) {
  return classify_impl(system, xi, sets, side, opts);
}

CriticalPointCase principal_case(const SwitchingSystem& system, double xi,
                                 const std::vector<MinimalInvariantSet>& sets, const StructureOptions& opts) {
  const auto right = classify_impl(system, xi, sets, Side::right, opts);
  if (right.kase != CriticalCase::A) return right;
  const auto left = classify_impl(system, xi, sets, Side::left, opts);
  return left.kase == CriticalCase::C ? left : right;
}

Eigen::VectorXd stationary_distribution(const SwitchingRates& rates) {
  const int n = rates.n();
  Eigen::MatrixXd a = rates.generator().transpose();
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::VectorXd nu = a.fullPivLu().solve(rhs);
  for (int i = 0; i < n; ++i) nu(i) = std::max(0.0, nu(i));
  return nu / nu.sum();
}

ExistenceReport existence_criterion(const SwitchingSystem& system) {
  ExistenceReport rep;
  rep.jump_chain_stationary = stationary_distribution(system.rates());
  bool complete = true;
  double mean = 0.0;
  for (int i = 0; i < system.n(); ++i) {
    const auto& f = system.field(i);
    std::optional<double> alpha = f.contraction_rate();
    if (!alpha && f.is_affine()) alpha = -f.slope();
    rep.contraction_coefficients.push_back(alpha);
    if (alpha)
      mean += rep.jump_chain_stationary(i) * *alpha;
    else
      complete = false;
  }
  rep.conclusive = complete;
  if (complete) {
    rep.mean_contraction = mean;
    rep.exists = mean > 0;
    rep.note = rep.exists ? "mean contraction positive: invariant measure exists"
                          : "mean contraction not positive: criterion does not apply";
  } else {
    rep.note = "criterion inconclusive: non-affine field without a declared contraction rate";
  }
  return rep;
}

bool reachability_oracle(const SwitchingSystem& system, double from, Interval to, int budget, std::uint64_t seed,
                         const ReachabilityOptions& opts) {
  if (budget < 1) throw DomainError("reachability_oracle: budget must be at least 1");
  if (from > to.lo && from < to.hi) return true;
  const int replicas = std::max(1, opts.replicas);
  const double log_lo = std::log(opts.t_min), log_hi = std::log(opts.t_max);
  std::atomic<bool> found{false};
  std::atomic<int> next{0};

  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= replicas || found.load(std::memory_order_relaxed)) return;
      numerics::CounterRng rng(seed, static_cast<std::uint64_t>(r));
      double x = from;
      for (int step = 0; step < budget; ++step) {
        const int i = static_cast<int>(rng() % static_cast<std::uint64_t>(system.n()));
        const int stratum = (r + step) % opts.strata;
        const double t = std::exp(log_lo + (stratum + rng.uniform()) / opts.strata * (log_hi - log_lo));
        const FlowResult fr = system.flow(i, x, t);
        // The monotone segment sweeps every point between x and the endpoint.
        const double lo = std::min(x, fr.endpoint), hi = std::max(x, fr.endpoint);
        if (lo < to.hi && hi > to.lo) {
          found.store(true);
          return;
        }
        x = fr.endpoint;
        if (fr.status != FlowStatus::interior) break;
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int threads = std::clamp(opts.threads > 0 ? opts.threads : static_cast<int>(hw), 1, replicas);
  std::vector<std::thread> pool;
  for (int k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return found.load();
}

const char* to_string(CriticalCase c) {
  switch (c) {
    case CriticalCase::A:
      return "A";
    case CriticalCase::B:
      return "B";
    case CriticalCase::C:
      return "C";
  }
  return "?";
}

const char* to_string(Placement p) {
  switch (p) {
    case Placement::support_gap:
      return "support_gap";
    case Placement::interior:
      return "interior";
    case Placement::endpoint:
      return "endpoint";
  }
  return "?";
}

const char* to_string(Side s) { return s == Side::right ? "right" : "left"; }

}  // namespace pdmp
