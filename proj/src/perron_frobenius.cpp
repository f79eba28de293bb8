#include "pdmp/perron_frobenius.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pdmp/errors.hpp"
#include "pdmp/numerics/parallel.hpp"
#include "pdmp/numerics/quadrature.hpp"

namespace pdmp {

namespace {

std::vector<double> interior_breaks(const SwitchingSystem& system, Interval I) {
  std::vector<double> out;
  for (double c : system.all_critical_points())
    if (c >= I.lo && c <= I.hi) out.push_back(c);
  return out;
}

// Time to flow from a to b under u_i; u_i has no root on [a, b].
double transit(const SwitchingSystem& system, int i, double a, double b) {
  const auto& f = system.field(i);
  if (f.is_affine()) return system.transit_time(i, a, b);
  return numerics::integrate_gauss([&](double x) { return 1.0 / f(x); }, a, b);
}

// Dense accumulator over node columns; only the touched band is kept.
struct RowBuilder {
  int first = std::numeric_limits<int>::max();
  int last = -1;
  std::vector<double> own, other;
  explicit RowBuilder(int N) : own(N, 0.0), other(N, 0.0) {}
  void add(const numerics::Stencil& s, double w_own, double w_other) {
    first = std::min(first, s.first);
    last = std::max(last, s.first + s.count - 1);
    for (int c = 0; c < s.count; ++c) {
      own[s.first + c] += w_own * s.w[c];
      other[s.first + c] += w_other * s.w[c];
    }
  }
};

}  // namespace

double default_horizon(const SwitchingSystem& system) { return 1.5 / system.rates().totals().mean(); }

double infinite_horizon(const SwitchingSystem& system, int state, double tol) {
  const double l = system.rates().total(state);
  if (!(l > 0)) throw DomainError("infinite_horizon: state has zero exit rate");
  return std::log(10.0 / tol) / l;
}

std::vector<int> subsample(int size, int count) {
  std::vector<int> out;
  if (size <= count) {
    for (int j = 0; j < size; ++j) out.push_back(j);
    return out;
  }
  for (int k = 0; k < count; ++k) {
    const int j = static_cast<int>(std::llround(static_cast<double>(k) * (size - 1) / (count - 1)));
    if (out.empty() || j != out.back()) out.push_back(j);
  }
  return out;
}

PerronFrobeniusOperator::PerronFrobeniusOperator(const SwitchingSystem& system, const std::vector<double>& nodes,
                                                 Interval interval, double horizon, KernelMode mode, int threads)
    : PerronFrobeniusOperator(system, nodes, interval, horizon, mode, threads,
                              subsample(static_cast<int>(nodes.size()), static_cast<int>(nodes.size()))) {}

PerronFrobeniusOperator::PerronFrobeniusOperator(const SwitchingSystem& system, const std::vector<double>& nodes,
                                                 Interval interval, double horizon, KernelMode mode, int threads,
                                                 std::vector<int> targets)
    : system_(&system), nodes_(nodes), targets_(std::move(targets)), interval_(interval), horizon_(horizon),
      mode_(mode) {
  if (!(horizon > 0) || !std::isfinite(horizon)) throw DomainError("PerronFrobeniusOperator: horizon must be positive");
  if (nodes.size() < 2 || !std::is_sorted(nodes.begin(), nodes.end()))
    throw DomainError("PerronFrobeniusOperator: need at least two increasing nodes");
  const int n = system.n(), N = static_cast<int>(nodes.size());
  const int M = static_cast<int>(targets_.size());
  for (int m : targets_)
    if (m < 0 || m >= N) throw DomainError("PerronFrobeniusOperator: target index out of range");
  for (int m : targets_) target_nodes_.push_back(nodes_[m]);
  const auto breaks = interior_breaks(system, interval);
  mass_weights_ = piecewise_weights(target_nodes_, interval_, breaks);
  const auto& g = numerics::gauss_legendre_16();
  rows_.assign(n, std::vector<Row>(M));
  std::vector<int> truncated(static_cast<std::size_t>(n) * M, 0);

  // Per cell [nodes_j, nodes_j+1]: Gauss points, their stencils and, per
  // state, the partial integrals of 1/u_i from nodes_j (NaN across a root).
  const int Q = static_cast<int>(g.nodes.size());
  std::vector<double> gz(static_cast<std::size_t>(N - 1) * Q), gw(gz.size());
  std::vector<numerics::Stencil> gs(gz.size());
  std::vector<double> part(static_cast<std::size_t>(n) * gz.size()), whole(static_cast<std::size_t>(n) * (N - 1));
  for (int j = 0; j + 1 < N; ++j) {
    const double a = nodes_[j], b = nodes_[j + 1], half = 0.5 * (b - a), mid = 0.5 * (a + b);
    const bool split = std::any_of(breaks.begin(), breaks.end(), [&](double c) { return c > a && c < b; });
    for (int q = 0; q < Q; ++q) {
      const std::size_t k = static_cast<std::size_t>(j) * Q + q;
      gz[k] = mid + half * g.nodes[q];
      gw[k] = half * g.weights[q];
      gs[k] = piecewise_stencil(nodes_, breaks, gz[k]);
    }
    for (int i = 0; i < n; ++i) {
      const bool root = split && system.eval_field(i, a) * system.eval_field(i, b) <= 0;
      whole[static_cast<std::size_t>(i) * (N - 1) + j] = root ? NAN : transit(system, i, a, b);
      for (int q = 0; q < Q; ++q) {
        const std::size_t k = static_cast<std::size_t>(j) * Q + q;
        part[static_cast<std::size_t>(i) * gz.size() + k] = root ? NAN : transit(system, i, a, gz[k]);
      }
    }
  }

  numerics::parallel_for(n * M, threads, [&](int job) {
    const int i = job / M, mt = job % M, m = targets_[mt];
    const double eta = nodes_[m];
    const double u0 = system.eval_field(i, eta);
    const double lam = system.rates().total(i);
    const double T = mode_ == KernelMode::infinite ? infinite_horizon(system, i, horizon_) : horizon_;
    if (u0 == 0.0) throw DomainError("PerronFrobeniusOperator: node on a critical point");
    const int dir = u0 < 0 ? 1 : -1;  // backward flow direction
    const double inv_u = 1.0 / std::abs(u0);
    const double scale = mode_ == KernelMode::truncated ? inv_u / T : inv_u;

    RowBuilder rb(N);
    auto add_point = [&](const numerics::Stencil& st, double t, double w) {
      const double k = std::exp(-lam * t) * scale * w;
      if (mode_ == KernelMode::truncated)
        rb.add(st, k, k * (T - t));
      else
        rb.add(st, 0.0, k);
    };

    // Whole cells while the accumulated time stays below the horizon.
    double t0 = 0.0;  // time from the current cell boundary to eta
    int c = m;        // current boundary node
    while (true) {
      const int j = dir > 0 ? c : c - 1;  // cell index
      if (j < 0 || j >= N - 1) break;
      const double w_all = whole[static_cast<std::size_t>(i) * (N - 1) + j];
      if (std::isnan(w_all) || t0 + std::abs(w_all) > T) break;
      for (int q = 0; q < Q; ++q) {
        const std::size_t k = static_cast<std::size_t>(j) * Q + q;
        const double p = part[static_cast<std::size_t>(i) * gz.size() + k];
        add_point(gs[k], t0 + std::abs(dir > 0 ? p : w_all - p), gw[k]);
      }
      t0 += std::abs(w_all);
      c += dir;
    }

    // Partial piece from nodes_[c] toward the next node, break point or interval end.
    const double a = nodes_[c];
    double far = dir > 0 ? interval_.hi : interval_.lo;
    if (c + dir >= 0 && c + dir < N) far = nodes_[c + dir];
    for (double b : breaks)
      if ((b - a) * dir > 0 && (far - b) * dir > 0) far = b;
    const bool far_is_root = std::abs(system.eval_field(i, far)) <= system.options().zero_tol * system.field_scale(i, far);
    double end = far;
    const double span_time = far_is_root ? INFINITY : std::abs(transit(system, i, a, far));
    if (t0 + span_time > T) {
      // Bisection for the point reached after the remaining time.
      double lo = a, hi = far;
      for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (t0 + std::abs(transit(system, i, a, mid)) > T ? hi : lo) = mid;
      }
      end = 0.5 * (lo + hi);
    } else if (far == (dir > 0 ? interval_.hi : interval_.lo)) {
      truncated[job] = 1;
    }
    if (end != a) {
      const double half = 0.5 * (end - a), mid = 0.5 * (a + end);
      for (int q = 0; q < Q; ++q) {
        const double z = mid + half * g.nodes[q];
        add_point(piecewise_stencil(nodes_, breaks, z), t0 + std::abs(transit(system, i, a, z)), std::abs(half) * g.weights[q]);
      }
    }

    Row& row = rows_[i][mt];
    if (rb.last < 0) return;
    row.first = rb.first;
    if (mode_ == KernelMode::truncated) row.own.assign(rb.own.begin() + rb.first, rb.own.begin() + rb.last + 1);
    row.other.assign(rb.other.begin() + rb.first, rb.other.begin() + rb.last + 1);
  });
  for (int v : truncated) truncated_rows_ += v;
}

DensityGrid PerronFrobeniusOperator::apply(const DensityGrid& grid) const {
  const int n = system_->n(), N = static_cast<int>(nodes_.size()), M = static_cast<int>(targets_.size());
  if (grid.states() != n || grid.size() != N) throw DomainError("PerronFrobeniusOperator: grid shape mismatch");
  const Eigen::MatrixXd& rho = grid.rho;
  Eigen::MatrixXd mixed = system_->rates().flux_matrix() * rho;  // row i: sum_j lambda_ji rho_j - lambda_i rho_i
  for (int i = 0; i < n; ++i) mixed.row(i) += system_->rates().total(i) * rho.row(i);
  DensityGrid out;
  out.interval = grid.interval;
  out.nodes = target_nodes_;
  out.rho.resize(n, M);
  out.flux.resize(n, M);
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < M; ++m) {
      const Row& r = rows_[i][m];
      double acc = 0;
      for (std::size_t c = 0; c < r.own.size(); ++c) acc += r.own[c] * rho(i, r.first + c);
      for (std::size_t c = 0; c < r.other.size(); ++c) acc += r.other[c] * mixed(i, r.first + c);
      out.rho(i, m) = acc;
      out.flux(i, m) = acc * system_->eval_field(i, target_nodes_[m]);
    }
  out.mass.resize(n);
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int m = 0; m < M; ++m) s += mass_weights_[m] * out.rho(i, m);
    out.mass(i) = s;
  }
  out.normalization = out.mass.sum();
  return out;
}

DensityGrid PerronFrobeniusOperator::restrict(const DensityGrid& grid) const {
  DensityGrid out;
  out.interval = grid.interval;
  out.nodes = target_nodes_;
  const int n = grid.states(), M = static_cast<int>(targets_.size());
  out.rho.resize(n, M);
  out.flux.resize(n, M);
  for (int m = 0; m < M; ++m) {
    out.rho.col(m) = grid.rho.col(targets_[m]);
    out.flux.col(m) = grid.flux.col(targets_[m]);
  }
  out.mass.resize(n);
  for (int i = 0; i < n; ++i) out.mass(i) = Eigen::Map<const Eigen::VectorXd>(mass_weights_.data(), M).dot(out.rho.row(i));
  out.normalization = out.mass.sum();
  return out;
}

DensityGrid perron_frobenius_step(const SwitchingSystem& system, const DensityGrid& grid, double horizon) {
  return PerronFrobeniusOperator(system, grid.nodes, grid.interval, horizon).apply(grid);
}

double l1_change(const DensityGrid& a, const DensityGrid& b) {
  if (a.nodes != b.nodes || a.states() != b.states()) throw DomainError("l1_change: grids differ");
  const auto w = piecewise_weights(a.nodes, a.interval, {});
  double acc = 0;
  for (int i = 0; i < a.states(); ++i)
    for (int j = 0; j < a.size(); ++j) acc += std::abs(w[j]) * std::abs(a.rho(i, j) - b.rho(i, j));
  return acc;
}

DensityGrid uniform_density(int states, const std::vector<double>& nodes, Interval interval) {
  DensityGrid g;
  g.interval = interval;
  g.nodes = nodes;
  const double v = 1.0 / (states * interval.width());
  g.rho = Eigen::MatrixXd::Constant(states, nodes.size(), v);
  g.flux = Eigen::MatrixXd::Zero(states, nodes.size());
  g.mass = Eigen::VectorXd::Constant(states, 1.0 / states);
  g.normalization = 1.0;
  return g;
}

FixedPointResult iterate_to_fixed_point(const SwitchingSystem& system, const DensityGrid& initial,
                                        const FixedPointOptions& opts) {
  FixedPointResult res;
  res.grid = initial;
  res.horizon = opts.horizon > 0 ? opts.horizon : default_horizon(system);
  if (!(opts.tol < std::numeric_limits<double>::infinity())) {
    res.converged = true;
    return res;
  }
  if ((initial.rho.array() < 0).any()) throw DomainError("iterate_to_fixed_point: initial density has negative values");
  PerronFrobeniusOperator op(system, initial.nodes, initial.interval, res.horizon, KernelMode::truncated, opts.threads);
  res.truncated_rows = op.truncated_rows();
  DensityGrid cur = initial;
  for (res.iterations = 0; res.iterations < opts.max_iters;) {
    DensityGrid next = op.apply(cur);
    normalize(next);
    res.last_change = l1_change(next, cur);
    res.history.push_back(res.last_change);
    cur = std::move(next);
    ++res.iterations;
    if (res.last_change < opts.tol) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged)
    res.warnings.push_back("no convergence within " + std::to_string(opts.max_iters) + " sweeps; last change " +
                           std::to_string(res.last_change));
  res.truncated_residual = l1_change(op.apply(cur), cur);
  PerronFrobeniusOperator inf(system, initial.nodes, initial.interval, opts.certificate_tol, KernelMode::infinite,
                              opts.threads, subsample(cur.size(), opts.certificate_nodes));
  res.infinite_residual = l1_change(inf.apply(cur), inf.restrict(cur));
  res.grid = std::move(cur);
  return res;
}

double integral_equation_residual(const SwitchingSystem& system, const DensityFunction& rho,
                                  const std::vector<double>& nodes, Interval interval, double horizon,
                                  KernelMode mode) {
  const int n = system.n(), N = static_cast<int>(nodes.size());
  const auto breaks = interior_breaks(system, interval);
  const auto w = piecewise_weights(nodes, interval, breaks);
  // Break points and ends carry no mass; quadrature nodes may round onto them.
  auto value = [&](int j, double z) {
    if (z <= interval.lo || z >= interval.hi || std::binary_search(breaks.begin(), breaks.end(), z)) return 0.0;
    return rho(j, z);
  };
  double num = 0, den = 0;
  for (int i = 0; i < n; ++i) {
    const double lam = system.rates().total(i);
    const double T = mode == KernelMode::infinite ? infinite_horizon(system, i, horizon) : horizon;
    for (int m = 0; m < N; ++m) {
      const double eta = nodes[m];
      const double u0 = system.eval_field(i, eta);
      auto fr = system.backward_flow(i, eta, T);
      double end = fr.endpoint;
      const int dir = u0 < 0 ? 1 : -1;
      if (fr.status == FlowStatus::backward_blowup || !std::isfinite(end)) end = dir > 0 ? interval.hi : interval.lo;
      end = std::clamp(end, interval.lo, interval.hi);
      // Split the range at break points where the integrand may be singular.
      std::vector<double> cuts{eta};
      for (double c : breaks)
        if ((c - eta) * dir > 0 && (end - c) * dir > 0) cuts.push_back(c);
      cuts.push_back(end);
      std::sort(cuts.begin(), cuts.end(), [&](double a, double b) { return (a - b) * dir < 0; });
      double rhs = 0;
      for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        auto f = [&](double z, double) {
          const double t = system.transit_time(i, z, eta);
          const double k = std::exp(-lam * t) / std::abs(u0);
          double own = 0, other = 0;
          for (int j = 0; j < n; ++j)
            if (j != i) other += system.rates().rate(j, i) * value(j, z);
          if (mode == KernelMode::truncated) {
            own = value(i, z);
            return k * (own + (T - t) * other) / T;
          }
          return k * other;
        };
        rhs += numerics::integrate_tanh_sinh(f, std::min(cuts[s], cuts[s + 1]), std::max(cuts[s], cuts[s + 1]), 1e-13);
      }
      const double r = rho(i, eta);
      num += w[m] * std::abs(r - rhs);
      den += w[m] * std::abs(r);
    }
  }
  return num / den;
}

}  // namespace pdmp
