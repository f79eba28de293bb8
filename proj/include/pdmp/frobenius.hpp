#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "pdmp/errors.hpp"
#include "pdmp/numerics/polynomial.hpp"
#include "pdmp/system_model.hpp"

// Regular singular point analysis of eta * phi'(eta) = B(eta) phi(eta) at a
// point xi that is critical for exactly one field k. eta = sigma * (x - xi)
// is the one-sided local coordinate (sigma = +1 looks right, -1 looks left).
namespace pdmp {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct LocalSystem {
  double xi = 0.0;
  int sigma = 1;
  int k = 0;  // critical field
  MatrixX<Scalar> Lambda;
  /// u~_i(eta) = sigma * u_i(xi + sigma * eta); u~_k has zero constant term.
  std::vector<numerics::Polynomial<Scalar>> u;
  /// u~_k(eta) = eta * q(eta).
  numerics::Polynomial<Scalar> q;
  Scalar a = 0;  // -q(0), identical from both sides
  /// False for tabulated fields, which only carry the linearization.
  bool exact = true;
};

template <typename Scalar>
LocalSystem<Scalar> local_system(const SwitchingSystem& system, double xi, int sigma = 1) {
  if (sigma != 1 && sigma != -1) throw DomainError("local_system: sigma must be +1 or -1");
  const auto crit = system.fields_critical_at(xi);
  if (crit.empty()) throw DomainError("local_system: point is not critical for any field");
  if (crit.size() > 1) throw UnsupportedConfiguration("point is critical for more than one field");
  LocalSystem<Scalar> ls;
  ls.xi = xi;
  ls.sigma = sigma;
  ls.k = crit.front();
  ls.Lambda = system.flux_matrix().template cast<Scalar>();
  for (int i = 0; i < system.n(); ++i) {
    const auto& f = system.field(i);
    numerics::Polynomial<Scalar> p;
    if (f.analytic()) {
      const auto g = f.polynomial().template cast<Scalar>();
      p = sigma > 0 ? g.taylor_shift(Scalar(xi)) : g.reflected(Scalar(xi));
    } else {
      ls.exact = false;
      // Linearization only: sigma u(xi + sigma s) = sigma u(xi) + u'(xi) s.
      p = numerics::Polynomial<Scalar>({Scalar(sigma * f(xi)), Scalar(f.derivative(xi))});
    }
    std::vector<Scalar> c = p.coefficients();
    if (i == ls.k) {
      if (c.empty()) throw UnsupportedConfiguration("critical field vanishes identically");
      c[0] = Scalar(0);
      ls.q = numerics::Polynomial<Scalar>(std::vector<Scalar>(c.begin() + 1, c.end()));
      ls.a = ls.q.is_zero() ? Scalar(0) : -ls.q.coefficients()[0];
      if (ls.a == Scalar(0)) throw UnsupportedConfiguration("degenerate tangency: zero linear coefficient");
    }
    ls.u.push_back(numerics::Polynomial<Scalar>(std::move(c)));
  }
  return ls;
}

/// Exact B(eta) = Lambda diag(eta / u~_i(eta)).
template <typename Scalar>
MatrixX<Scalar> B_at(const LocalSystem<Scalar>& ls, Scalar eta) {
  const int n = static_cast<int>(ls.u.size());
  VectorX<Scalar> g(n);
  for (int i = 0; i < n; ++i) g(i) = i == ls.k ? Scalar(1) / ls.q(eta) : eta / ls.u[i](eta);
  return ls.Lambda * g.asDiagonal();
}

/// Taylor coefficients B_0..B_K of B(eta).
template <typename Scalar>
std::vector<MatrixX<Scalar>> taylor_B(const LocalSystem<Scalar>& ls, int K) {
  if (K < 0) throw DomainError("taylor_B: negative order");
  if (!ls.exact && K > 0) throw UnsupportedConfiguration("taylor_B: non-analytic field; only order 0 is available");
  const int n = static_cast<int>(ls.u.size());
  MatrixX<Scalar> G = MatrixX<Scalar>::Zero(n, K + 1);  // G(i, j): coefficient of eta^j in eta / u~_i
  for (int i = 0; i < n; ++i) {
    if (i == ls.k) {
      const auto r = numerics::series_reciprocal(ls.q.coefficients(), K);
      for (int j = 0; j <= K; ++j) G(i, j) = r[j];
    } else {
      if (ls.u[i].is_zero() || ls.u[i].coefficients()[0] == Scalar(0))
        throw UnsupportedConfiguration("taylor_B: a second field vanishes at the point");
      if (K >= 1) {
        const auto r = numerics::series_reciprocal(ls.u[i].coefficients(), K - 1);
        for (int j = 1; j <= K; ++j) G(i, j) = r[j - 1];
      }
    }
  }
  std::vector<MatrixX<Scalar>> B;
  for (int j = 0; j <= K; ++j) B.push_back(ls.Lambda * G.col(j).asDiagonal());
  return B;
}

template <typename Scalar>
struct B0Eigensystem {
  Scalar mu = 0;         // lambda_k / a
  VectorX<Scalar> lambda;  // (-Lambda(:, k)): lambda_k at k, -lambda_{k,i} elsewhere
  /// Eigenbasis: column k is `lambda`, column j != k is e_j.
  MatrixX<Scalar> P, P_inv;
  VectorX<Scalar> d;  // mu at k, 0 elsewhere
  Scalar residual = 0;  // max-norm of B0 P - P diag(d)
};

template <typename Scalar>
B0Eigensystem<Scalar> b0_eigensystem(const MatrixX<Scalar>& B0, int k, Scalar lambda_k, Scalar a) {
  const int n = static_cast<int>(B0.rows());
  B0Eigensystem<Scalar> e;
  e.mu = lambda_k / a;
  e.lambda = a * B0.col(k);
  e.P = MatrixX<Scalar>::Identity(n, n);
  e.P.col(k) = e.lambda;
  // P = I + (lambda - e_k) e_k^T, so P^{-1} = I - (lambda - e_k) e_k^T / lambda_k.
  VectorX<Scalar> w = e.lambda;
  w(k) -= Scalar(1);
  e.P_inv = MatrixX<Scalar>::Identity(n, n);
  e.P_inv.col(k) -= w / e.lambda(k);
  e.d = VectorX<Scalar>::Zero(n);
  e.d(k) = e.mu;
  e.residual = (B0 * e.P - e.P * e.d.asDiagonal()).cwiseAbs().maxCoeff();
  return e;
}

template <typename Scalar>
struct NormalSolution {
  std::vector<MatrixX<Scalar>> V;  // V_0 = I, ..., V_K
  bool resonant = false;
  int m = 0;  // |lambda_k / a| when resonant
  MatrixX<Scalar> Y, Y_hat;  // Y = P Y_hat P^{-1}
  Scalar min_divisor = std::numeric_limits<Scalar>::infinity();
};

/// Solves B0 V_j - V_j (B0 + j) = -sum_{l=1}^{j} B_l V_{j-l} + [j >= m] V_{j-m} Y
/// order by order. In the eigenbasis of B0 the operator is diagonal with
/// divisors d_a - d_b - j; at a resonance those entries vanish and the
/// obstruction is absorbed into Y_hat.
template <typename Scalar>
NormalSolution<Scalar> solve_normal_equation(const std::vector<MatrixX<Scalar>>& B, const B0Eigensystem<Scalar>& eig,
                                             double resonance_tol = 1e-9) {
  using std::abs;
  using std::round;
  if (B.empty()) throw DomainError("solve_normal_equation: no coefficients");
  const int n = static_cast<int>(B[0].rows());
  const int K = static_cast<int>(B.size()) - 1;
  NormalSolution<Scalar> s;
  VectorX<Scalar> d = eig.d;
  const Scalar r = round(eig.mu);
  if (r != Scalar(0) && abs(eig.mu - r) < Scalar(resonance_tol)) {
    s.m = static_cast<int>(abs(r));
    s.resonant = s.m <= K;
    for (int i = 0; i < n; ++i)
      if (d(i) != Scalar(0)) d(i) = r;
  }
  s.Y_hat = MatrixX<Scalar>::Zero(n, n);
  std::vector<MatrixX<Scalar>> C, W;
  for (const auto& Bl : B) C.push_back(eig.P_inv * Bl * eig.P);
  W.push_back(MatrixX<Scalar>::Identity(n, n));
  for (int j = 1; j <= K; ++j) {
    MatrixX<Scalar> S = MatrixX<Scalar>::Zero(n, n);
    for (int l = 1; l <= j; ++l) S -= C[l] * W[j - l];
    if (s.resonant && j > s.m) S += W[j - s.m] * s.Y_hat;
    MatrixX<Scalar> Wj(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const Scalar div = d(a) - d(b) - Scalar(j);
        if (s.resonant && j == s.m && div == Scalar(0)) {
          s.Y_hat(a, b) = -S(a, b);
          Wj(a, b) = Scalar(0);
        } else {
          s.min_divisor = std::min(s.min_divisor, abs(div));
          Wj(a, b) = S(a, b) / div;
        }
      }
    W.push_back(std::move(Wj));
  }
  for (const auto& Wj : W) s.V.push_back(eig.P * Wj * eig.P_inv);
  s.Y = eig.P * s.Y_hat * eig.P_inv;
  return s;
}

template <typename Scalar>
struct FrobeniusExpansion {
  LocalSystem<Scalar> local;
  int K = 0;
  std::vector<MatrixX<Scalar>> B;
  B0Eigensystem<Scalar> eig;
  NormalSolution<Scalar> normal;
  Scalar validity_radius = 0;
  Scalar epsilon = 0;  // matching radius
};

/// Largest eta where the last retained orders change V(eta) by < tol.
template <typename Scalar>
Scalar validity_radius(const NormalSolution<Scalar>& ns, double tol = 1e-10) {
  using std::pow;
  const int K = static_cast<int>(ns.V.size()) - 1;
  Scalar r = std::numeric_limits<Scalar>::infinity();
  for (int j = std::max(1, K - 1); j <= K; ++j) {
    const Scalar norm = ns.V[j].cwiseAbs().maxCoeff();
    if (norm > Scalar(0)) r = std::min(r, pow(Scalar(tol) / norm, Scalar(1) / Scalar(j)));
  }
  return r;
}

/// Expansion at xi looking into side sigma, matched at epsilon = min(delta / 2,
/// validity radius). Non-analytic systems fall back to K = 0.
template <typename Scalar>
FrobeniusExpansion<Scalar> frobenius_expansion(const SwitchingSystem& system, double xi, int sigma, int K,
                                               double delta, double resonance_tol = 1e-9,
                                               double epsilon_fraction = 0.5) {
  FrobeniusExpansion<Scalar> fe;
  fe.local = local_system<Scalar>(system, xi, sigma);
  fe.K = fe.local.exact ? K : 0;
  fe.B = taylor_B(fe.local, fe.K);
  const int k = fe.local.k;
  fe.eig = b0_eigensystem<Scalar>(fe.B[0], k, Scalar(system.rates().total(k)), fe.local.a);
  fe.normal = solve_normal_equation(fe.B, fe.eig, resonance_tol);
  if (fe.normal.resonant) {
    using std::round;
    fe.eig.mu = round(fe.eig.mu);
    fe.eig.d(k) = fe.eig.mu;
  }
  fe.validity_radius = fe.K > 0 ? validity_radius(fe.normal) : Scalar(delta) * Scalar(1e-3);
  fe.epsilon = std::min(Scalar(delta) * Scalar(epsilon_fraction), fe.validity_radius);
  return fe;
}

template <typename Scalar>
MatrixX<Scalar> V_at(const FrobeniusExpansion<Scalar>& fe, Scalar eta) {
  const auto& V = fe.normal.V;
  MatrixX<Scalar> acc = V.back();
  for (int j = static_cast<int>(V.size()) - 2; j >= 0; --j) acc = (acc * eta + V[j]).eval();
  return acc;
}

template <typename Scalar>
MatrixX<Scalar> dV_at(const FrobeniusExpansion<Scalar>& fe, Scalar eta) {
  const auto& V = fe.normal.V;
  const int K = static_cast<int>(V.size()) - 1;
  MatrixX<Scalar> acc = MatrixX<Scalar>::Zero(V[0].rows(), V[0].cols());
  for (int j = K; j >= 1; --j) acc = (acc * eta + Scalar(j) * V[j]).eval();
  return acc;
}

/// Fundamental matrix F(eta) = V(eta) P eta^D (I + ln(eta) Y_hat); columns are
/// the local solutions, column k being the eta^mu mode.
template <typename Scalar>
MatrixX<Scalar> fundamental_matrix(const FrobeniusExpansion<Scalar>& fe, Scalar eta) {
  using std::log;
  using std::pow;
  const int n = static_cast<int>(fe.eig.d.size());
  VectorX<Scalar> powers(n);
  for (int i = 0; i < n; ++i) powers(i) = fe.eig.d(i) == Scalar(0) ? Scalar(1) : pow(eta, fe.eig.d(i));
  MatrixX<Scalar> G = MatrixX<Scalar>::Identity(n, n);
  if (fe.normal.resonant) G += log(eta) * fe.normal.Y_hat;
  return V_at(fe, eta) * fe.eig.P * powers.asDiagonal() * G;
}

/// F(eta) w without forming F; zero coefficients stay exactly zero even where
/// their power of eta overflows.
template <typename Scalar>
VectorX<Scalar> local_flux(const FrobeniusExpansion<Scalar>& fe, Scalar eta, const VectorX<Scalar>& w) {
  using std::log;
  using std::pow;
  VectorX<Scalar> y = w;
  if (fe.normal.resonant) y += log(eta) * (fe.normal.Y_hat * w);
  for (int i = 0; i < y.size(); ++i)
    if (fe.eig.d(i) != Scalar(0) && y(i) != Scalar(0)) y(i) *= pow(eta, fe.eig.d(i));
  return V_at(fe, eta) * (fe.eig.P * y);
}

/// ||eta V' + V B0 + eta^m V Y - B(eta) V|| with B(eta) evaluated exactly.
template <typename Scalar>
Scalar normal_equation_residual(const FrobeniusExpansion<Scalar>& fe, Scalar eta) {
  using std::pow;
  const MatrixX<Scalar> V = V_at(fe, eta);
  MatrixX<Scalar> R = eta * dV_at(fe, eta) + V * fe.B[0] - B_at(fe.local, eta) * V;
  if (fe.normal.resonant) R += pow(eta, Scalar(fe.normal.m)) * V * fe.normal.Y;
  return R.cwiseAbs().maxCoeff();
}

template <typename Scalar>
struct FluxDecomposition {
  Scalar nu = 0;
  VectorX<Scalar> y_tilde;  // in the 0-eigenspace of B0
};

/// V(eps)^{-1} phi = y~ + nu * lambda.
template <typename Scalar>
FluxDecomposition<Scalar> decompose_flux(const FrobeniusExpansion<Scalar>& fe, const VectorX<Scalar>& phi_eps) {
  const VectorX<Scalar> x = V_at(fe, fe.epsilon).partialPivLu().solve(phi_eps);
  FluxDecomposition<Scalar> out;
  const int k = fe.local.k;
  out.nu = x(k) / fe.eig.lambda(k);
  out.y_tilde = x - out.nu * fe.eig.lambda;
  out.y_tilde(k) = Scalar(0);
  return out;
}

/// phi(eta) = V(eta) (eta/eps)^{B0} (I + ln(eta/eps) eps^m Y) V(eps)^{-1} phi(eps).
template <typename Scalar>
VectorX<Scalar> reconstruct_flux(const FrobeniusExpansion<Scalar>& fe, const VectorX<Scalar>& phi_eps, Scalar eta) {
  using std::log;
  using std::pow;
  if (!(eta > Scalar(0))) throw DomainError("reconstruct_flux: eta must be positive");
  const Scalar eps = fe.epsilon;
  const int k = fe.local.k;
  VectorX<Scalar> x = V_at(fe, eps).partialPivLu().solve(phi_eps);
  if (fe.normal.resonant) x += log(eta / eps) * pow(eps, Scalar(fe.normal.m)) * (fe.normal.Y * x);
  const Scalar nu = x(k) / fe.eig.lambda(k);
  VectorX<Scalar> y = x - nu * fe.eig.lambda;
  y(k) = Scalar(0);
  const VectorX<Scalar> z = y + nu * pow(eta / eps, fe.eig.mu) * fe.eig.lambda;
  return V_at(fe, eta) * z;
}

}  // namespace pdmp
