#include "pdmp/flux_solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "pdmp/numerics/ode.hpp"
#include "pdmp/numerics/quadrature.hpp"

namespace pdmp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

bool LocalPatch::covers(double x) const {
  const double eta = sigma() * (x - xi());
  return eta > 0 && eta < epsilon();
}

Vec LocalPatch::flux(double eta) const { return local_flux(expansion, eta, w); }

Vec LocalPatch::rho(double eta) const {
  const Vec phi = flux(eta);
  const auto& ls = expansion.local;
  Vec r(phi.size());
  for (int i = 0; i < phi.size(); ++i) {
    const double u = i == ls.k ? eta * ls.q(eta) : ls.u[i](eta);
    r(i) = ls.sigma * phi(i) / u;
  }
  return r;
}

namespace {

struct Station {
  double x = 0.0;
  Mat W;      // orthonormal basis of admissible fluxes at x
  Mat G;      // alpha at the previous station = G * alpha here
  Mat dM;     // mass accumulated since the previous station, acting on its alpha
  int patch = -1;
  Mat C;      // patch coefficients w = C * alpha
};

struct Ortho {
  Mat Q;
  Mat R_inv;
};

// Total flux is conserved exactly; the projection removes roundoff that
// orthonormalization would otherwise amplify once the subspace is large.
Ortho orthonormalize(const Mat& raw) {
  const int d = static_cast<int>(raw.cols());
  const Mat A = raw.rowwise() - raw.colwise().mean();
  Eigen::HouseholderQR<Mat> qr(A);
  Mat Q = qr.householderQ() * Mat::Identity(A.rows(), d);
  Mat R = qr.matrixQR().topLeftCorner(d, d).triangularView<Eigen::Upper>();
  const double scale = R.diagonal().cwiseAbs().maxCoeff();
  if (!(R.diagonal().cwiseAbs().minCoeff() > 1e-300 + 1e-15 * scale))
    throw NumericalError("flux solver: admissible basis became linearly dependent");
  Mat R_inv = R.triangularView<Eigen::Upper>().solve(Mat::Identity(d, d));
  return {Q, R_inv};
}

class Shooter {
 public:
  Shooter(const SwitchingSystem& sys, const FluxSolveOptions& opts) : sys_(sys), n_(sys.n()) {
    tol_.rtol = opts.rtol;
    tol_.atol = opts.atol;
    tol_.max_steps = 200000;
  }

  /// Integrates the basis W from x0 to x1 together with the mass rows.
  std::pair<Mat, Mat> step(const Mat& W, double x0, double x1) {
    const int d = static_cast<int>(W.cols());
    Mat Y0 = Mat::Zero(2 * n_, d);
    Y0.topRows(n_) = W;
    const Mat& Lambda = sys_.flux_matrix();
    auto rhs = [&](double x, const Mat& Y) {
      Mat g(n_, d);
      for (int i = 0; i < n_; ++i) g.row(i) = Y.row(i) / sys_.field(i)(x);
      Mat out(2 * n_, d);
      out.topRows(n_) = Lambda * g;
      out.bottomRows(n_) = g;
      return out;
    };
    const double h0 = last_h_ > 0 ? std::min(last_h_, std::abs(x1 - x0)) : 0.0;
    auto res = numerics::dormand_prince(
        rhs, x0, Y0, x1, tol_, [](const Mat&) { return true; }, [](double, const Mat&) {}, h0);
    if (res.status != numerics::OdeStatus::completed)
      throw NumericalError("flux solver: integration failed between " + std::to_string(x0) + " and " +
                           std::to_string(x1));
    last_h_ = res.last_h;
    const double orient = x1 >= x0 ? 1.0 : -1.0;
    return {res.y.topRows(n_), orient * res.y.bottomRows(n_)};
  }

  void reset() { last_h_ = 0; }

 private:
  const SwitchingSystem& sys_;
  int n_;
  numerics::OdeTolerances tol_;
  double last_h_ = 0.0;
};

Mat null_space_of_row(const Eigen::RowVectorXd& row) {
  const int d = static_cast<int>(row.size());
  Eigen::JacobiSVD<Mat> svd(Mat(row), Eigen::ComputeFullV);
  if (row.norm() == 0) return Mat::Identity(d, d);
  return svd.matrixV().rightCols(d - 1);
}

}  // namespace

Vec FluxSolution::flux_at(double x) const {
  if (std::find(break_points.begin(), break_points.end(), x) != break_points.end() &&
      (x != break_points.front() || station_x.empty() || station_x.front() != x) &&
      (x != break_points.back() || station_x.empty() || station_x.back() != x))
    throw DomainError("flux_at: position is a critical point; only one-sided limits exist there");
  for (const auto& p : patches)
    if (p.covers(x)) return p.flux(p.sigma() * (x - p.xi()));
  // Points between the last station and a patch edge integrate from the nearest station.
  if (station_x.empty() || x < grid.interval.lo || x > grid.interval.hi)
    throw DomainError("flux_at: position outside the solved interval");
  const auto it = std::lower_bound(station_x.begin(), station_x.end(), x);
  std::size_t j = static_cast<std::size_t>(it - station_x.begin());
  if (j < station_x.size() && station_x[j] == x) return station_phi[j];
  if (j > 0 && (j == station_x.size() || x - station_x[j - 1] < station_x[j] - x)) --j;
  const int n = system_.n();
  const Mat& Lambda = system_.flux_matrix();
  auto rhs = [&](double t, const Vec& phi) {
    Vec g(n);
    for (int i = 0; i < n; ++i) g(i) = phi(i) / system_.field(i)(t);
    return Vec(Lambda * g);
  };
  numerics::OdeTolerances tol;
  tol.rtol = rtol;
  tol.atol = 1e-300;
  auto res = numerics::dormand_prince(rhs, station_x[j], station_phi[j], x, tol);
  if (res.status != numerics::OdeStatus::completed) throw NumericalError("flux_at: integration failed");
  return res.y;
}

double FluxSolution::rho_at(int i, double x) const {
  for (const auto& p : patches)
    if (p.covers(x)) return p.rho(p.sigma() * (x - p.xi()))(i);
  return flux_at(x)(i) / system_.field(i)(x);
}

DensityFunction FluxSolution::density() const {
  return [this](int i, double x) { return rho_at(i, x); };
}

FluxSolution solve_flux_ode(const SwitchingSystem& system, const MinimalInvariantSet& set,
                            const FluxSolveOptions& opts) {
  if (set.kind != SetKind::open_interval) throw DomainError("solve_flux_ode: needs an open invariant interval");
  const int n = system.n();
  const Interval I = set.working_interval(system.window());
  if (!(I.hi > I.lo)) throw DomainError("solve_flux_ode: invariant interval does not meet the window");

  // Break points: ends and interior critical points.
  std::vector<double> breaks{I.lo};
  std::vector<bool> crit{set.left.is_finite() && set.left.value == I.lo};
  for (double c : system.all_critical_points())
    if (c > I.lo && c < I.hi && c - breaks.back() > 1e-12 * I.width()) {
      breaks.push_back(c);
      crit.push_back(true);
    }
  breaks.push_back(I.hi);
  crit.push_back(set.right.is_finite() && set.right.value == I.hi);
  const int B = static_cast<int>(breaks.size());

  std::vector<double> crit_points;
  for (int p = 0; p < B; ++p)
    if (crit[p]) crit_points.push_back(breaks[p]);
  const std::vector<double> mesh = graded_mesh(I, crit_points, opts.mesh);

  FluxSolution sol(system);
  sol.break_points = breaks;
  sol.rtol = opts.rtol;
  auto& diag = sol.diagnostics;

  // Local expansions: patch_id[p][0] looks left (sigma = -1), [1] looks right.
  std::vector<std::array<int, 2>> patch_id(B, {-1, -1});
  for (int p = 0; p < B; ++p) {
    if (!crit[p]) continue;
    for (int sigma : {-1, 1}) {
      if ((p == 0 && sigma < 0) || (p == B - 1 && sigma > 0)) continue;
      const double gap = sigma > 0 ? breaks[p + 1] - breaks[p] : breaks[p] - breaks[p - 1];
      LocalPatch patch;
      patch.expansion =
          frobenius_expansion<double>(system, breaks[p], sigma, opts.frobenius_order, opts.delta_fraction * gap,
                                      opts.resonance_tol, opts.epsilon_fraction);
      if (!patch.expansion.local.exact) diag.frobenius_fallback = true;
      if ((p == 0 || p == B - 1) && !(patch.expansion.local.a > 0))
        throw UnsupportedConfiguration("repelling critical point at an endpoint of an invariant interval");
      patch_id[p][sigma > 0] = static_cast<int>(sol.patches.size());
      sol.patches.push_back(std::move(patch));
    }
  }
  auto eps_at = [&](int p, int sigma) { return crit[p] ? sol.patches[patch_id[p][sigma > 0]].epsilon() : 0.0; };
  auto ode_end = [&](int p, int sigma) { return breaks[p] + sigma * eps_at(p, sigma); };

  // Anchor: mesh node nearest the middle of the longest ODE region.
  int p_star = 0;
  double best = -1;
  for (int p = 0; p + 1 < B; ++p) {
    const double len = ode_end(p + 1, -1) - ode_end(p, 1);
    if (len > best) {
      best = len;
      p_star = p;
    }
  }
  if (!(best > 0)) throw NumericalError("solve_flux_ode: no room between local expansions");
  const double reg_lo = ode_end(p_star, 1), reg_hi = ode_end(p_star + 1, -1);
  double anchor = 0.5 * (reg_lo + reg_hi);
  {
    double dist = std::numeric_limits<double>::infinity();
    for (double x : mesh)
      if (x > reg_lo && x < reg_hi && std::abs(x - 0.5 * (reg_lo + reg_hi)) < dist) {
        dist = std::abs(x - 0.5 * (reg_lo + reg_hi));
        anchor = x;
      }
  }
  diag.anchor = anchor;

  Shooter shooter(system, opts);
  std::vector<double> decay_rates(2, 0.0);

  auto sweep = [&](int dir) {
    std::vector<Station> st;
    shooter.reset();
    const int p0 = dir > 0 ? 0 : B - 1;
    if (crit[p0]) {
      const int pid = patch_id[p0][dir > 0];
      const auto& fe = sol.patches[pid].expansion;
      const Mat F = fundamental_matrix(fe, fe.epsilon);
      const Ortho o = orthonormalize(F.col(fe.local.k));
      Station s;
      s.x = breaks[p0] + dir * fe.epsilon;
      s.W = o.Q;
      s.patch = pid;
      s.C = Mat::Zero(n, 1);
      s.C.row(fe.local.k) = o.R_inv.row(0);
      st.push_back(std::move(s));
    } else {
      // Modes that grow into the interval, i.e. decay outward.
      Vec inv_u(n);
      for (int i = 0; i < n; ++i) {
        const double u = system.field(i)(breaks[p0]);
        if (u == 0) throw NumericalError("solve_flux_ode: field vanishes at a truncated end");
        inv_u(i) = 1.0 / (dir * u);
      }
      const Mat A = system.flux_matrix() * inv_u.asDiagonal();
      Eigen::EigenSolver<Mat> es(A);
      const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
      std::vector<Vec> cols;
      double decay = std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) {
        const auto ev = es.eigenvalues()(j);
        if (!(ev.real() > 1e-9 * scale)) continue;
        decay = std::min(decay, ev.real());
        const auto v = es.eigenvectors().col(j);
        if (std::abs(ev.imag()) <= 1e-12 * scale) {
          cols.push_back(v.real());
        } else if (ev.imag() > 0) {
          cols.push_back(v.real());
          cols.push_back(v.imag());
        }
      }
      if (cols.empty()) throw NumericalError("solve_flux_ode: no decaying mode at a truncated end");
      decay_rates[dir > 0 ? 0 : 1] = decay;
      Mat W0(n, static_cast<int>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) W0.col(static_cast<int>(c)) = cols[c];
      Station s;
      s.x = breaks[p0];
      s.W = orthonormalize(W0).Q;
      st.push_back(std::move(s));
    }

    auto advance_to = [&](double target) {
      std::vector<double> xs;
      const double from = st.back().x;
      for (double x : mesh)
        if (dir * (x - from) > 0 && dir * (target - x) > 0) xs.push_back(x);
      if (dir < 0) std::reverse(xs.begin(), xs.end());
      xs.push_back(target);
      for (double x : xs) {
        auto [raw, dM] = shooter.step(st.back().W, st.back().x, x);
        const Ortho o = orthonormalize(raw);
        Station s;
        s.x = x;
        s.W = o.Q;
        s.G = o.R_inv;
        s.dM = dM;
        st.push_back(std::move(s));
      }
    };

    for (int p = p0 + dir;; p += dir) {
      const bool reached_anchor = dir > 0 ? p > p_star : p <= p_star;
      if (reached_anchor) {
        advance_to(anchor);
        break;
      }
      advance_to(ode_end(p, -dir));
      // Transfer across the critical point at breaks[p].
      const int pin = patch_id[p][dir < 0], pout = patch_id[p][dir > 0];
      const auto& fin = sol.patches[pin].expansion;
      const auto& fout = sol.patches[pout].expansion;
      const int k = fin.local.k;
      Station& last = st.back();
      const Mat CL = fundamental_matrix(fin, fin.epsilon).partialPivLu().solve(last.W);
      last.patch = pin;
      last.C = CL;
      const int d = static_cast<int>(CL.cols());
      Mat CR, Gt;
      if (fin.local.a > 0) {
        CR = Mat::Zero(n, d + 1);
        CR.leftCols(d) = CL;
        CR.block(k, 0, 1, d).setZero();
        CR(k, d) = 1.0;
        Gt = Mat::Zero(d, d + 1);
        Gt.leftCols(d).setIdentity();
      } else {
        if (d < 2) throw NumericalError("solve_flux_ode: no admissible solution crosses a repelling point");
        Gt = null_space_of_row(CL.row(k));
        CR = CL * Gt;
        CR.row(k).setZero();
      }
      const Ortho o = orthonormalize(fundamental_matrix(fout, fout.epsilon) * CR);
      Station s;
      s.x = breaks[p] + dir * fout.epsilon;
      s.W = o.Q;
      s.G = Gt * o.R_inv;
      s.patch = pout;
      s.C = CR * o.R_inv;
      st.push_back(std::move(s));
      shooter.reset();
    }
    return st;
  };

  std::vector<Station> left = sweep(1), right = sweep(-1);
  const int dL = static_cast<int>(left.back().W.cols()), dR = static_cast<int>(right.back().W.cols());
  diag.left_dimension = dL;
  diag.right_dimension = dR;
  Mat M(n, dL + dR);
  M << left.back().W, -right.back().W;
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
  diag.singular_values = svd.singularValues();
  const Vec v = svd.matrixV().col(dL + dR - 1);
  const double smax = diag.singular_values(0);
  const double smin = dL + dR > n ? 0.0 : diag.singular_values(dL + dR - 1);
  if (dL + dR != n) diag.warnings.push_back("admissible dimensions do not add up to the number of states");
  if (smin > 1e-8 * smax) throw NumericalError("solve_flux_ode: boundary subspaces do not intersect");
  if (dL + dR >= 2 && diag.singular_values(std::min(dL + dR, n) - 2) < 1e-8 * smax)
    diag.warnings.push_back("stationary flux is not unique");

  // Back-propagate coefficients, accumulate mass, assemble stations.
  struct Node {
    double x;
    Vec phi;
  };
  std::vector<Node> nodes;
  Vec mass = Vec::Zero(n);
  std::vector<Vec> patch_w(sol.patches.size());
  auto unwind = [&](std::vector<Station>& st, Vec alpha, bool keep_last) {
    for (int s = static_cast<int>(st.size()) - 1; s >= 0; --s) {
      const Station& S = st[s];
      if (keep_last || s + 1 < static_cast<int>(st.size())) nodes.push_back({S.x, S.W * alpha});
      if (S.patch >= 0) patch_w[S.patch] = S.C * alpha;
      if (s == 0) break;
      const Vec prev = S.G * alpha;
      if (S.dM.size() > 0) mass += S.dM * prev;
      alpha = prev;
    }
  };
  unwind(left, v.head(dL), true);
  unwind(right, v.tail(dR), false);

  for (std::size_t p = 0; p < sol.patches.size(); ++p) {
    auto& patch = sol.patches[p];
    patch.w = patch_w[p];
    // Integrability at a repelling point removes the eta^mu mode.
    if (patch.expansion.local.a < 0) patch.w(patch.expansion.local.k) = 0.0;
    patch.mass = Vec::Zero(n);
    for (int i = 0; i < n; ++i)
      patch.mass(i) = numerics::integrate_tanh_sinh([&](double eta, double) { return patch.rho(eta)(i); }, 0.0,
                                                    patch.epsilon(), 1e-12);
    mass += patch.mass;
  }
  double total = mass.sum();
  if (!(std::abs(total) > 0) || !std::isfinite(total)) throw NumericalError("solve_flux_ode: zero total mass");
  for (auto& nd : nodes) nd.phi /= total;
  for (auto& patch : sol.patches) {
    patch.w /= total;
    patch.mass /= total;
  }
  mass /= total;

  for (double x : mesh)
    for (const auto& patch : sol.patches)
      if (patch.covers(x)) nodes.push_back({x, patch.flux(patch.sigma() * (x - patch.xi()))});
  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.x < b.x; });

  DensityGrid& g = sol.grid;
  g.interval = I;
  g.rho.resize(n, static_cast<int>(nodes.size()));
  g.flux.resize(n, static_cast<int>(nodes.size()));
  for (int j = 0; j < static_cast<int>(nodes.size()); ++j) {
    const double x = nodes[j].x;
    g.nodes.push_back(x);
    g.flux.col(j) = nodes[j].phi;
    const LocalPatch* owner = nullptr;
    for (const auto& patch : sol.patches)
      if (patch.covers(x)) owner = &patch;
    if (owner) {
      g.rho.col(j) = owner->rho(owner->sigma() * (x - owner->xi()));
    } else {
      for (int i = 0; i < n; ++i) g.rho(i, j) = nodes[j].phi(i) / system.field(i)(x);
    }
  }
  g.mass = mass;
  g.normalization = mass.sum();

  for (const auto& nd : nodes) {
    const bool in_patch = std::any_of(sol.patches.begin(), sol.patches.end(),
                                      [&](const LocalPatch& p) { return p.covers(nd.x); });
    if (!in_patch) {
      sol.station_x.push_back(nd.x);
      sol.station_phi.push_back(nd.phi);
    }
  }

  double max_phi = g.flux.cwiseAbs().maxCoeff(), dev = 0;
  for (int j = 0; j < g.size(); ++j) dev = std::max(dev, std::abs(g.flux.col(j).sum()));
  diag.flux_sum_deviation = max_phi > 0 ? dev / max_phi : 0.0;
  double min_rho = std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.size(); ++j)
    for (int i = 0; i < n; ++i)
      if (system.field(i)(g.nodes[j]) != 0) min_rho = std::min(min_rho, g.rho(i, j));
  diag.min_interior_density = min_rho;
  if (min_rho < 0) diag.warnings.push_back("negative density values on the grid");
  if (!crit.front() && decay_rates[0] > 0) diag.tail_mass_estimate += g.rho.col(0).cwiseAbs().sum() / decay_rates[0];
  if (!crit.back() && decay_rates[1] > 0)
    diag.tail_mass_estimate += g.rho.col(g.size() - 1).cwiseAbs().sum() / decay_rates[1];
  return sol;
}

}  // namespace pdmp
