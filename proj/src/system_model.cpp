#include "pdmp/system_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

#include "pdmp/numerics/ode.hpp"
#include "pdmp/numerics/quadrature.hpp"

namespace pdmp {

namespace {

std::string state_label(int i) { return "state " + std::to_string(i); }

// Strong connectivity of the directed graph i -> j iff rates(i, j) > 0.
bool strongly_connected(const Eigen::MatrixXd& r) {
  const int n = static_cast<int>(r.rows());
  auto reach_all = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      const int i = q.front();
      q.pop();
      for (int j = 0; j < n; ++j) {
        const double w = transpose ? r(j, i) : r(i, j);
        if (w > 0 && !seen[j]) {
          seen[j] = 1;
          q.push(j);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach_all(false) && reach_all(true);
}

}  // namespace

// ---------------------------------------------------------------- VectorField

VectorField VectorField::affine(double slope, double intercept) {
  if (!std::isfinite(slope) || !std::isfinite(intercept)) throw ConfigError("affine field: non-finite coefficient");
  VectorField f;
  f.kind_ = FieldKind::affine;
  f.poly_ = numerics::Polynomial<double>({intercept, slope});
  if (f.poly_.is_zero()) throw ConfigError("vector field vanishes identically");
  f.dpoly_ = f.poly_.derivative();
  return f;
}

VectorField VectorField::polynomial(std::vector<double> c) {
  for (double v : c)
    if (!std::isfinite(v)) throw ConfigError("polynomial field: non-finite coefficient");
  VectorField f;
  f.kind_ = FieldKind::polynomial;
  f.poly_ = numerics::Polynomial<double>(std::move(c));
  if (f.poly_.is_zero()) throw ConfigError("vector field vanishes identically");
  f.dpoly_ = f.poly_.derivative();
  return f;
}

VectorField VectorField::tabulated(std::function<double(double)> value, std::function<double(double)> derivative,
                                   int smoothness_class) {
  if (!value || !derivative) throw ConfigError("tabulated field: missing value or derivative handle");
  if (smoothness_class < 1) throw ConfigError("tabulated field: smoothness class must be at least C^1");
  VectorField f;
  f.kind_ = FieldKind::tabulated;
  f.value_ = std::move(value);
  f.deriv_ = std::move(derivative);
  f.smoothness_ = smoothness_class;
  return f;
}

VectorField& VectorField::with_contraction_rate(double alpha) {
  contraction_rate_ = alpha;
  return *this;
}

double VectorField::operator()(double x) const { return analytic() ? poly_(x) : value_(x); }

double VectorField::derivative(double x) const { return analytic() ? dpoly_(x) : deriv_(x); }

const numerics::Polynomial<double>& VectorField::polynomial() const {
  if (!analytic()) throw UnsupportedConfiguration("tabulated field has no polynomial representation");
  return poly_;
}

double VectorField::slope() const {
  if (!is_affine()) throw DomainError("slope(): field is not affine");
  return poly_.coefficients().size() > 1 ? poly_.coefficients()[1] : 0.0;
}

double VectorField::intercept() const {
  if (!is_affine()) throw DomainError("intercept(): field is not affine");
  return poly_.coefficients().empty() ? 0.0 : poly_.coefficients()[0];
}

// ------------------------------------------------------------- SwitchingRates

SwitchingRates::SwitchingRates(Eigen::MatrixXd m) : rates_(std::move(m)) {
  if (rates_.rows() != rates_.cols()) throw ConfigError("rate matrix must be square");
  if (rates_.rows() < 2) throw ConfigError("at least two states are required");
  const int n = static_cast<int>(rates_.rows());
  totals_.resize(n);
  for (int i = 0; i < n; ++i) {
    if (rates_(i, i) != 0.0) throw ConfigError("rate matrix diagonal must be zero (" + state_label(i) + ")");
    for (int j = 0; j < n; ++j)
      if (!std::isfinite(rates_(i, j)) || rates_(i, j) < 0)
        throw ConfigError("switching rates must be finite and nonnegative");
    totals_(i) = rates_.row(i).sum();
    if (!(totals_(i) > 0)) throw ConfigError(state_label(i) + " has zero total switching rate");
  }
  if (!strongly_connected(rates_)) throw ConfigError("switching graph is not strongly connected");
}

Eigen::MatrixXd SwitchingRates::generator() const {
  Eigen::MatrixXd q = rates_;
  for (int i = 0; i < n(); ++i) q(i, i) = -totals_(i);
  return q;
}

// ------------------------------------------------------------ SwitchingSystem

SwitchingSystem::SwitchingSystem(std::vector<VectorField> fields, SwitchingRates rates, Interval window,
                                 ModelOptions options)
    : fields_(std::move(fields)), rates_(std::move(rates)), window_(window), options_(options) {
  if (static_cast<int>(fields_.size()) != rates_.n())
    throw ConfigError("number of fields does not match the rate matrix");
  if (!(window_.lo < window_.hi) || !std::isfinite(window_.lo) || !std::isfinite(window_.hi))
    throw ConfigError("analysis window must be a finite interval with lo < hi");
  flux_matrix_ = rates_.flux_matrix();
  roots_.reserve(fields_.size());
  for (int i = 0; i < n(); ++i) roots_.push_back(critical_points(i, window_).roots);
}

const VectorField& SwitchingSystem::field(int i) const {
  require_state(i);
  return fields_[i];
}

void SwitchingSystem::require_state(int i) const {
  if (i < 0 || i >= n()) throw DomainError("state index out of range: " + std::to_string(i));
}

bool SwitchingSystem::all_analytic() const {
  return std::all_of(fields_.begin(), fields_.end(), [](const VectorField& f) { return f.analytic(); });
}

double SwitchingSystem::eval_field(int i, double x) const {
  require_state(i);
  if (!window_.contains(x)) {
    std::ostringstream os;
    os << "position " << x << " outside the analysis window [" << window_.lo << ", " << window_.hi << "]";
    throw DomainError(os.str());
  }
  return fields_[i](x);
}

double SwitchingSystem::eval_derivative(int i, double x) const {
  require_state(i);
  return fields_[i].derivative(x);
}

double SwitchingSystem::field_scale(int i, double x) const {
  const auto& f = field(i);
  if (f.analytic()) return std::max(f.polynomial().scale_at(x), std::numeric_limits<double>::min());
  return std::max({std::abs(f(x)), std::abs(f.derivative(x)) * std::max(1.0, window_.width()),
                   std::numeric_limits<double>::min()});
}

RootReport SwitchingSystem::critical_points(int i, Interval w) const {
  const auto& f = field(i);
  if (!(w.lo <= w.hi)) throw DomainError("critical_points: empty window");
  RootReport rep;
  if (f.analytic()) {
    rep.roots = numerics::real_roots(f.polynomial(), w.lo, w.hi, options_.root_tol);
  } else {
    const int m = std::max(options_.scan_points, 16);
    std::vector<double> xs(m + 1), vs(m + 1);
    double vmax = 0.0;
    for (int k = 0; k <= m; ++k) {
      xs[k] = w.lo + (w.hi - w.lo) * k / m;
      vs[k] = f(xs[k]);
      if (!std::isfinite(vs[k])) throw NumericalError("tabulated field is not finite at a scan point");
      vmax = std::max(vmax, std::abs(vs[k]));
    }
    if (vmax == 0.0) throw ConfigError("vector field vanishes identically on the window");
    for (int k = 0; k < m; ++k)
      if (vs[k] == 0.0 && vs[k + 1] == 0.0) throw ConfigError("vector field vanishes on a subinterval");
    auto bisect = [&](double a, double b, double fa) {
      for (int it = 0; it < 200 && b - a > options_.root_tol; ++it) {
        const double c = 0.5 * (a + b);
        const double fc = f(c);
        if (fc == 0.0) return c;
        if ((fc < 0) == (fa < 0)) {
          a = c;
          fa = fc;
        } else {
          b = c;
        }
      }
      return 0.5 * (a + b);
    };
    const double near = 1e-8 * vmax;
    for (int k = 0; k <= m; ++k) {
      if (vs[k] == 0.0) {
        const bool left_neg = k > 0 && vs[k - 1] < 0, left_pos = k > 0 && vs[k - 1] > 0;
        const bool right_neg = k < m && vs[k + 1] < 0, right_pos = k < m && vs[k + 1] > 0;
        const bool crossing = (left_neg && right_pos) || (left_pos && right_neg) || k == 0 || k == m;
        if (!crossing) throw NumericalError("tabulated field touches zero without a sign change; cannot bracket");
        rep.roots.push_back(xs[k]);
        continue;
      }
      if (k < m && vs[k + 1] != 0.0 && (vs[k] < 0) != (vs[k + 1] < 0)) {
        rep.roots.push_back(bisect(xs[k], xs[k + 1], vs[k]));
        continue;
      }
      // A local minimum of |u| whose parabolic vertex reaches zero hides a
      // root pair (or a tangency) below the scan resolution.
      if (k > 0 && k < m && (vs[k - 1] < 0) == (vs[k] < 0) && (vs[k + 1] < 0) == (vs[k] < 0) &&
          std::abs(vs[k]) <= std::abs(vs[k - 1]) && std::abs(vs[k]) <= std::abs(vs[k + 1])) {
        const double curv = vs[k + 1] - 2 * vs[k] + vs[k - 1];
        double vertex = vs[k];
        if (curv != 0.0) vertex -= (vs[k + 1] - vs[k - 1]) * (vs[k + 1] - vs[k - 1]) / (8 * curv);
        if ((vertex < 0) != (vs[k] < 0) || std::abs(vertex) <= near)
          throw NumericalError("tabulated field has an unbracketable near-zero; refine the scan grid");
      }
    }
    std::sort(rep.roots.begin(), rep.roots.end());
    rep.roots.erase(std::unique(rep.roots.begin(), rep.roots.end(),
                                [&](double a, double b) { return std::abs(a - b) <= 10 * options_.root_tol; }),
                    rep.roots.end());
  }
  rep.breaks.push_back(w.lo);
  for (double r : rep.roots)
    if (r > rep.breaks.back()) rep.breaks.push_back(r);
  if (w.hi > rep.breaks.back()) rep.breaks.push_back(w.hi);
  for (std::size_t k = 0; k + 1 < rep.breaks.size(); ++k) {
    const double v = f(0.5 * (rep.breaks[k] + rep.breaks[k + 1]));
    rep.signs.push_back(v > 0 ? 1 : (v < 0 ? -1 : 0));
  }
  return rep;
}

std::vector<double> SwitchingSystem::all_critical_points() const {
  std::vector<double> all;
  for (const auto& r : roots_) all.insert(all.end(), r.begin(), r.end());
  std::sort(all.begin(), all.end());
  const double tol = 10 * options_.root_tol * std::max(1.0, window_.width());
  all.erase(std::unique(all.begin(), all.end(), [&](double a, double b) { return std::abs(a - b) <= tol; }),
            all.end());
  return all;
}

std::vector<double> SwitchingSystem::global_critical_points(bool* exhaustive) const {
  std::vector<double> all;
  bool complete = true;
  for (int i = 0; i < n(); ++i) {
    const auto& f = fields_[i];
    if (f.analytic()) {
      const auto& c = f.polynomial().coefficients();
      double bound = 1.0;
      for (std::size_t k = 0; k + 1 < c.size(); ++k) bound = std::max(bound, 1.0 + std::abs(c[k] / c.back()));
      bound = std::max({bound, std::abs(window_.lo) + 1.0, std::abs(window_.hi) + 1.0});
      const auto r = numerics::real_roots(f.polynomial(), -bound, bound, options_.root_tol);
      all.insert(all.end(), r.begin(), r.end());
    } else {
      complete = false;
      all.insert(all.end(), roots_[i].begin(), roots_[i].end());
    }
  }
  std::sort(all.begin(), all.end());
  const double tol = 10 * options_.root_tol * std::max(1.0, window_.width());
  all.erase(std::unique(all.begin(), all.end(), [&](double a, double b) { return std::abs(a - b) <= tol; }),
            all.end());
  if (exhaustive) *exhaustive = complete;
  return all;
}

std::vector<int> SwitchingSystem::fields_critical_at(double x) const {
  std::vector<int> out;
  for (int i = 0; i < n(); ++i)
    if (std::abs(fields_[i](x)) <= options_.zero_tol * field_scale(i, x)) out.push_back(i);
  return out;
}

FlowResult SwitchingSystem::flow(int i, double x0, double t) const {
  if (!(t >= 0)) throw DomainError("flow: duration must be nonnegative");
  return flow_signed(i, x0, t, false);
}

FlowResult SwitchingSystem::backward_flow(int i, double x, double t) const {
  if (!(t >= 0)) throw DomainError("backward_flow: duration must be nonnegative");
  return flow_signed(i, x, t, true);
}

FlowResult SwitchingSystem::flow_signed(int i, double x0, double t, bool backward) const {
  const auto& f = field(i);
  if (!window_.contains(x0)) throw DomainError("flow: start position outside the analysis window");
  if (t == 0.0) return {x0, FlowStatus::interior, 0.0};
  // Forward flows stop at the analysis window; backward flows are allowed to
  // leave it and only fail once they escape the extended window.
  const double reach = options_.blowup_factor * window_.width();
  const Interval box = backward ? Interval{window_.center() - reach, window_.center() + reach} : window_;
  const FlowStatus exit_status = backward ? FlowStatus::backward_blowup : FlowStatus::hit_window_boundary;
  const double sgn = backward ? -1.0 : 1.0;

  if (f.is_affine()) {
    const double s = sgn * f.slope(), b = sgn * f.intercept();
    const double u0 = s * x0 + b;
    if (u0 == 0.0) return {x0, FlowStatus::interior, t};
    const double bd = u0 > 0 ? box.hi : box.lo;
    double t_exit = std::numeric_limits<double>::infinity();
    if (s == 0.0) {
      t_exit = (bd - x0) / b;
    } else {
      // u(x) = u0 + s (x - x0); time to reach bd is log(u(bd)/u0)/s when defined.
      const double ratio = 1.0 + s * (bd - x0) / u0;
      if (ratio > 0) {
        const double te = std::log1p(s * (bd - x0) / u0) / s;
        if (te >= 0) t_exit = te;
      }
    }
    if (t_exit <= t) return {bd, exit_status, t_exit};
    const double x = (s == 0.0) ? x0 + b * t : x0 + u0 * std::expm1(s * t) / s;
    return {x, FlowStatus::interior, t};
  }

  numerics::OdeTolerances tol;
  if (f.kind() == FieldKind::tabulated) {
    tol.rtol = options_.tabulated_rtol;
    tol.atol = options_.tabulated_atol;
  } else {
    tol.rtol = options_.polynomial_rtol;
    tol.atol = options_.polynomial_atol * std::max(1.0, window_.width());
  }
  tol.h_min = 1e-15;
  auto rhs = [&](double, double x) { return sgn * f(x); };
  auto guard = [&](double x) { return box.contains(x); };
  const auto out = numerics::dormand_prince(rhs, 0.0, x0, t, tol, guard, [](double, double) {});
  if (out.status == numerics::OdeStatus::completed) return {out.y, FlowStatus::interior, t};
  if (out.status == numerics::OdeStatus::max_steps) throw NumericalError("flow: step budget exhausted");
  if (backward) return {out.y, FlowStatus::backward_blowup, out.t};
  // Forward exit: report the boundary reached and the exact remaining transit time.
  const double bd = rhs(0.0, out.y) > 0 ? box.hi : box.lo;
  double elapsed = out.t;
  if (out.status == numerics::OdeStatus::guard_stop && std::abs(f(bd)) > 0) {
    const double rest = transit_time(i, out.y, bd);
    if (std::isfinite(rest) && rest >= 0) elapsed += rest;
    return {bd, FlowStatus::hit_window_boundary, std::min(elapsed, t)};
  }
  return {out.y, FlowStatus::hit_window_boundary, elapsed};
}

double SwitchingSystem::flow_derivative(int i, double x0, double t) const {
  const auto& f = field(i);
  const double u0 = f(x0);
  if (std::abs(u0) <= options_.zero_tol * field_scale(i, x0))
    throw DomainError("flow_derivative: start point is critical; route around it");
  if (f.is_affine()) return std::exp(f.slope() * t);
  const FlowResult r = flow(i, x0, t);
  return f(r.endpoint) / u0;
}

double SwitchingSystem::transit_time(int i, double a, double b) const {
  const auto& f = field(i);
  if (a == b) return 0.0;
  const double ua = f(a), ub = f(b);
  if (ua == 0.0 || ub == 0.0 || (ua < 0) != (ub < 0))
    throw DomainError("transit_time: field vanishes on the integration interval");
  if (f.is_affine()) {
    const double s = f.slope();
    if (s == 0.0) return (b - a) / ua;
    return std::log1p(s * (b - a) / ua) / s;
  }
  return numerics::integrate_adaptive([&](double x) { return 1.0 / f(x); }, a, b, 1e-14);
}

const char* to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::interior:
      return "interior";
    case FlowStatus::hit_window_boundary:
      return "hit_window_boundary";
    case FlowStatus::backward_blowup:
      return "backward_blowup";
  }
  return "unknown";
}

}  // namespace pdmp
