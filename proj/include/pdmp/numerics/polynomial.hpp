#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pdmp::numerics {

/// Dense univariate polynomial with coefficients in ascending degree.
template <typename Scalar>
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<Scalar> coefficients) : c_(std::move(coefficients)) { trim(); }

  const std::vector<Scalar>& coefficients() const { return c_; }
  int degree() const { return static_cast<int>(c_.size()) - 1; }
  bool is_zero() const { return c_.empty(); }

  Scalar operator()(Scalar x) const {
    Scalar acc(0);
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  Polynomial derivative() const {
    if (c_.size() <= 1) return Polynomial();
    std::vector<Scalar> d(c_.size() - 1);
    for (std::size_t k = 1; k < c_.size(); ++k) d[k - 1] = Scalar(k) * c_[k];
    return Polynomial(std::move(d));
  }

  /// Coefficients of h -> p(xi + h).
  Polynomial taylor_shift(Scalar xi) const {
    std::vector<Scalar> a = c_;
    const std::size_t n = a.size();
    // Repeated synthetic division by (x - xi).
    for (std::size_t k = 0; k + 1 < n; ++k)
      for (std::size_t j = n - 1; j > k; --j) a[j - 1] += xi * a[j];
    return Polynomial(std::move(a));
  }

  /// Coefficients of s -> -p(xi - s): the field seen from the left of xi
  /// in the mirrored coordinate s = xi - x.
  Polynomial reflected(Scalar xi) const {
    std::vector<Scalar> a = taylor_shift(xi).c_;
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = (k % 2 == 0) ? -a[k] : a[k];
    return Polynomial(std::move(a));
  }

  /// Magnitude scale used for relative zero tests at x.
  Scalar scale_at(Scalar x) const {
    using std::abs;
    Scalar s(0), p(1);
    const Scalar ax = abs(x);
    for (const auto& ck : c_) {
      s += abs(ck) * p;
      p *= ax;
    }
    return s;
  }

  template <typename Other>
  Polynomial<Other> cast() const {
    std::vector<Other> out(c_.begin(), c_.end());
    return Polynomial<Other>(std::move(out));
  }

 private:
  void trim() {
    while (!c_.empty() && c_.back() == Scalar(0)) c_.pop_back();
  }
  std::vector<Scalar> c_;
};

/// First `order + 1` coefficients of 1 / f for a power series f with f[0] != 0.
template <typename Scalar>
std::vector<Scalar> series_reciprocal(const std::vector<Scalar>& f, int order) {
  if (f.empty() || f[0] == Scalar(0)) throw std::domain_error("series_reciprocal: zero constant term");
  std::vector<Scalar> g(static_cast<std::size_t>(order) + 1, Scalar(0));
  g[0] = Scalar(1) / f[0];
  for (int k = 1; k <= order; ++k) {
    Scalar acc(0);
    for (int j = 1; j <= k && j < static_cast<int>(f.size()); ++j) acc += f[j] * g[k - j];
    g[k] = -acc / f[0];
  }
  return g;
}

namespace detail {

inline double bisect_root(const Polynomial<double>& p, double a, double b, double tol) {
  double fa = p(a);
  for (int it = 0; it < 200 && b - a > tol; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = p(m);
    if (fm == 0.0) return m;
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  // Newton polish inside the final bracket.
  const double lo = a, hi = b;
  double x = 0.5 * (a + b);
  const Polynomial<double> dp = p.derivative();
  for (int it = 0; it < 4; ++it) {
    const double d = dp(x);
    if (d == 0.0) break;
    const double nx = x - p(x) / d;
    if (!(nx >= lo - tol && nx <= hi + tol)) break;
    x = nx;
  }
  return x;
}

}  // namespace detail

/// All real roots of p in [lo, hi], sorted, isolated by recursive derivative
/// bracketing: between consecutive critical points of p the polynomial is
/// monotone, so each bracket holds at most one simple root. Even-multiplicity
/// roots are picked up at the critical points themselves.
inline std::vector<double> real_roots(const Polynomial<double>& p, double lo, double hi, double tol = 1e-13) {
  std::vector<double> roots;
  if (p.is_zero()) throw std::domain_error("real_roots: zero polynomial has no isolated roots");
  if (p.degree() == 0) return roots;
  if (p.degree() == 1) {
    const double r = -p.coefficients()[0] / p.coefficients()[1];
    if (r >= lo && r <= hi) roots.push_back(r);
    return roots;
  }
  std::vector<double> pts{lo};
  for (double c : real_roots(p.derivative(), lo, hi, tol))
    if (c > lo && c < hi) pts.push_back(c);
  pts.push_back(hi);

  auto near_zero = [&](double x) { return std::abs(p(x)) <= 1e-12 * p.scale_at(x); };
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double a = pts[k], b = pts[k + 1];
    if (near_zero(a)) {
      roots.push_back(a);
      continue;
    }
    const double fa = p(a), fb = p(b);
    if (near_zero(b)) continue;  // handled as left end of next bracket (or appended below)
    if ((fa < 0) != (fb < 0)) roots.push_back(detail::bisect_root(p, a, b, tol));
  }
  if (near_zero(hi)) roots.push_back(hi);

  std::sort(roots.begin(), roots.end());
  std::vector<double> unique;
  for (double r : roots)
    if (unique.empty() || r - unique.back() > 10 * tol) unique.push_back(r);
  return unique;
}

}  // namespace pdmp::numerics
