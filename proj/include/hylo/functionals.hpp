#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "hylo/errors.hpp"
#include "hylo/grid.hpp"
#include "hylo/model.hpp"
#include "hylo/ops.hpp"

namespace hylo {

/// Model bound to a concrete grid, with the quadratic potential
/// q(x) = (1/2) ell^2 / r^2 + V(x) pre-sampled for the NSE kinds.
struct ModelOnGrid {
  ModelSpec spec;
  GridPtr grid;
  RealField qpot;  // NSE kinds only; empty for NKG
  double floor = 0.0;
};

inline ModelOnGrid make_model_on_grid(const ModelSpec& spec,
                                      const GridPtr& grid) {
  validate_model(spec, *grid);
  ModelOnGrid m;
  m.spec = spec;
  m.grid = grid;
  m.floor = charge_floor(*grid);
  if (spec.equation != Equation::nkg) {
    m.qpot = make_potential_field(spec.potential, grid);
    if (spec.equation == Equation::nse_vortex) {
      const double half_l2 = 0.5 * double(spec.ell) * double(spec.ell);
      const AxisGeom& rax = grid->axis(0);
      std::vector<int> idx;
      for (std::size_t f = 0; f < grid->size(); ++f) {
        grid->unflatten(f, idx);
        const double r = rax.x[idx[0]];
        m.qpot.v[f] += half_l2 / (r * r);
      }
    }
  }
  return m;
}

namespace detail {

inline void require_nse(const ModelOnGrid& m, const char* op) {
  if (m.spec.equation == Equation::nkg)
    throw UsageError(std::string(op) + ": NKG model takes an NKGState");
}
inline void require_nkg(const ModelOnGrid& m, const char* op) {
  if (m.spec.equation != Equation::nkg)
    throw UsageError(std::string(op) + ": NKGState requires an NKG model");
}

}  // namespace detail

// ---- energy --------------------------------------------------------------
// NSE kinds:  E(u)   = int [ (1/2)|grad u|^2 + q(x) u^2 + W(u) ]
// NKG:        E(u)   = int [ (1/2)|psi_hat|^2 + (1/2)|grad psi|^2 + W(|psi|) ]

inline double energy(const RealField& u, const ModelOnGrid& m) {
  detail::require_nse(m, "energy");
  const std::vector<double>& w = m.grid->weights();
  const Nonlinearity& nl = m.spec.nonlin;
  const double pot = detail::pairwise_reduce(
      std::size_t{0}, u.v.size(), [&](std::size_t i) {
        const double s = u.v[i];
        return w[i] * (m.qpot.v[i] * s * s + eval_W(nl, s));
      });
  return 0.5 * dirichlet_energy(u) + pot;
}

inline double energy(const ComplexField& psi, const ModelOnGrid& m) {
  detail::require_nse(m, "energy");
  const std::vector<double>& w = m.grid->weights();
  const Nonlinearity& nl = m.spec.nonlin;
  const double pot = detail::pairwise_reduce(
      std::size_t{0}, psi.v.size(), [&](std::size_t i) {
        const double s = std::abs(psi.v[i]);
        return w[i] * (m.qpot.v[i] * s * s + eval_W(nl, s));
      });
  return 0.5 * dirichlet_energy(psi) + pot;
}

inline double energy(const NKGState& st, const ModelOnGrid& m) {
  detail::require_nkg(m, "energy");
  const std::vector<double>& w = m.grid->weights();
  const Nonlinearity& nl = m.spec.nonlin;
  const double pot = detail::pairwise_reduce(
      std::size_t{0}, st.psi.v.size(), [&](std::size_t i) {
        return w[i] * (0.5 * std::norm(st.psi_hat.v[i]) +
                       eval_W(nl, std::abs(st.psi.v[i])));
      });
  return 0.5 * dirichlet_energy(st.psi) + pot;
}

// ---- charge --------------------------------------------------------------
// NSE: C = int |psi|^2 >= 0.   NKG: C = -Re int i psi_hat conj(psi).

inline double charge(const RealField& u, const ModelOnGrid& m) {
  detail::require_nse(m, "charge");
  return dot(u, u);
}

inline double charge(const ComplexField& psi, const ModelOnGrid& m) {
  detail::require_nse(m, "charge");
  return dot(psi, psi);
}

inline double charge(const NKGState& st, const ModelOnGrid& m) {
  detail::require_nkg(m, "charge");
  const std::vector<double>& w = m.grid->weights();
  return detail::pairwise_reduce(
      std::size_t{0}, st.psi.v.size(), [&](std::size_t i) {
        const cplx z = cplx(0, 1) * st.psi_hat.v[i] * std::conj(st.psi.v[i]);
        return -w[i] * z.real();
      });
}

// ---- bundled evaluation --------------------------------------------------

struct FunctionalValue {
  double E = 0.0;
  double C = 0.0;
  double lambda = std::numeric_limits<double>::quiet_NaN();  // E/|C|
  double phi = 0.0;                                          // E + 2a|C|^s
  double j_delta = std::numeric_limits<double>::quiet_NaN();
  bool lambda_defined = false;  // |C| >= charge floor
};

template <class State>
FunctionalValue evaluate_all(const State& st, const ModelOnGrid& m) {
  FunctionalValue f;
  f.E = energy(st, m);
  f.C = charge(st, m);
  const double ac = std::abs(f.C);
  const Coercivity& co = m.spec.coercivity;
  f.phi = f.E + (co.a > 0.0 ? 2.0 * co.a * std::pow(ac, co.s) : 0.0);
  if (ac >= m.floor) {
    f.lambda = f.E / ac;
    f.j_delta = f.lambda + m.spec.delta * f.phi;
    f.lambda_defined = true;
  }
  return f;
}

// ---- first variations ----------------------------------------------------
// Gradients w.r.t. the quadrature inner product (real pairing for complex
// states), so that F(u + eps v) = F(u) + eps <g, v> + O(eps^2).

enum class Which { E, C, Jdelta };

template <class State>
struct VariationReport {
  State gradient;
  double norm = 0.0;
};

inline RealField grad_energy(const RealField& u, const ModelOnGrid& m) {
  detail::require_nse(m, "first_variation");
  RealField g = laplacian(u);
  const Nonlinearity& nl = m.spec.nonlin;
  for (std::size_t i = 0; i < g.v.size(); ++i)
    g.v[i] = -g.v[i] + 2.0 * m.qpot.v[i] * u.v[i] + eval_Wprime(nl, u.v[i]);
  return g;
}

inline ComplexField grad_energy(const ComplexField& psi, const ModelOnGrid& m) {
  detail::require_nse(m, "first_variation");
  ComplexField g = laplacian(psi);
  const Nonlinearity& nl = m.spec.nonlin;
  for (std::size_t i = 0; i < g.v.size(); ++i)
    g.v[i] = -g.v[i] + (2.0 * m.qpot.v[i] +
                        eval_Wprime_over_s(nl, std::abs(psi.v[i]))) *
                           psi.v[i];
  return g;
}

inline NKGState grad_energy(const NKGState& st, const ModelOnGrid& m) {
  detail::require_nkg(m, "first_variation");
  NKGState g{laplacian(st.psi), st.psi_hat};
  const Nonlinearity& nl = m.spec.nonlin;
  for (std::size_t i = 0; i < g.psi.v.size(); ++i)
    g.psi.v[i] = -g.psi.v[i] +
                 eval_Wprime_over_s(nl, std::abs(st.psi.v[i])) * st.psi.v[i];
  return g;
}

inline RealField grad_charge(const RealField& u, const ModelOnGrid& m) {
  detail::require_nse(m, "first_variation");
  RealField g = u;
  for (double& x : g.v) x *= 2.0;
  return g;
}

inline ComplexField grad_charge(const ComplexField& psi, const ModelOnGrid& m) {
  detail::require_nse(m, "first_variation");
  ComplexField g = psi;
  for (cplx& x : g.v) x *= 2.0;
  return g;
}

inline NKGState grad_charge(const NKGState& st, const ModelOnGrid& m) {
  detail::require_nkg(m, "first_variation");
  NKGState g{st.psi_hat, st.psi};
  for (cplx& x : g.psi.v) x *= cplx(0, -1);
  for (cplx& x : g.psi_hat.v) x *= cplx(0, 1);
  return g;
}

template <class State>
VariationReport<State> first_variation(const State& st, const ModelOnGrid& m,
                                       Which which) {
  VariationReport<State> rep{st, 0.0};
  switch (which) {
    case Which::E:
      rep.gradient = grad_energy(st, m);
      break;
    case Which::C:
      rep.gradient = grad_charge(st, m);
      break;
    case Which::Jdelta: {
      const FunctionalValue f = evaluate_all(st, m);
      if (!f.lambda_defined)
        throw UsageError("first_variation: charge below floor, J_delta "
                         "gradient undefined");
      State ge = grad_energy(st, m);
      State gc = grad_charge(st, m);
      const double ac = std::abs(f.C);
      const double sg = f.C >= 0.0 ? 1.0 : -1.0;
      const Coercivity& co = m.spec.coercivity;
      // J' = (1/|C| + delta) E' + (-Lambda sgn/|C| + 2as delta |C|^(s-1) sgn) C'
      double ce = 1.0 / ac + m.spec.delta;
      double cc = -f.lambda * sg / ac;
      if (co.a > 0.0)
        cc += m.spec.delta * 2.0 * co.a * co.s * std::pow(ac, co.s - 1.0) * sg;
      scale(ge, ce);
      axpy(cc, gc, ge);
      rep.gradient = std::move(ge);
      break;
    }
  }
  rep.norm = state_norm(rep.gradient);
  if (!state_finite(rep.gradient))
    throw NumericalError("first_variation: non-finite gradient");
  return rep;
}

// ---- Rayleigh quotient minimum (Lambda_0 proxy) --------------------------

namespace detail {

/// Conjugate gradients for A = -(1/2)Lap + qpot (SPD since V >= 1), in the
/// quadrature inner product where A is symmetric by summation by parts.
inline RealField cg_solve(const ModelOnGrid& m, const RealField& b,
                          double tol, int max_iters) {
  RealField x(b.grid);  // x0 = 0
  RealField r = b;
  RealField p = r;
  RealField ap(b.grid);
  double rs = dot(r, r);
  const double stop = tol * tol * rs;
  for (int it = 0; it < max_iters && rs > stop; ++it) {
    ap = laplacian(p);
    for (std::size_t i = 0; i < ap.v.size(); ++i)
      ap.v[i] = -0.5 * ap.v[i] + m.qpot.v[i] * p.v[i];
    const double alpha = rs / dot(p, ap);
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    const double rs_new = dot(r, r);
    const double beta = rs_new / rs;
    rs = rs_new;
    for (std::size_t i = 0; i < p.v.size(); ++i)
      p.v[i] = r.v[i] + beta * p.v[i];
  }
  return x;
}

/// Largest eigenvalue of the symmetric tridiagonal with diagonal a and
/// off-diagonal b (b[j] couples j-1 and j; b[0] unused), by Sturm bisection.
inline double tridiag_max_eig(const std::vector<double>& a,
                              const std::vector<double>& b) {
  const int n = int(a.size());
  double lo = a[0], hi = a[0];
  for (int j = 0; j < n; ++j) {
    const double rad =
        (j > 0 ? std::abs(b[j]) : 0.0) + (j + 1 < n ? std::abs(b[j + 1]) : 0.0);
    lo = std::min(lo, a[j] - rad);
    hi = std::max(hi, a[j] + rad);
  }
  const auto all_below = [&](double x) {
    double d = 1.0;
    int cnt = 0;
    for (int j = 0; j < n; ++j) {
      d = (a[j] - x) - (j > 0 ? b[j] * b[j] / d : 0.0);
      if (d == 0.0) d = -1e-300;
      if (d < 0.0) ++cnt;
    }
    return cnt >= n;
  };
  for (int it = 0; it < 80 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (all_below(mid)) hi = mid; else lo = mid;
  }
  return hi;
}

/// Eigenvector of the tridiagonal (a, b) for eigenvalue near theta, by two
/// rounds of inverse iteration with pivot clamping; result is normalized.
inline std::vector<double> tridiag_eigvec(const std::vector<double>& a,
                                          const std::vector<double>& b,
                                          double theta) {
  const int n = int(a.size());
  std::vector<double> s(n, 1.0);
  const double shift = theta * (1.0 + 1e-12) + 1e-300;
  for (int round = 0; round < 2; ++round) {
    // Thomas solve of (T - shift I) x = s, clamping tiny pivots
    std::vector<double> diag(n), rhs = s;
    for (int j = 0; j < n; ++j) diag[j] = a[j] - shift;
    for (int j = 1; j < n; ++j) {
      double piv = diag[j - 1];
      if (std::abs(piv) < 1e-14 * std::max(1.0, std::abs(theta)))
        piv = (piv < 0.0 ? -1.0 : 1.0) * 1e-14 * std::max(1.0, std::abs(theta));
      const double w = b[j] / piv;
      diag[j] -= w * b[j];
      rhs[j] -= w * rhs[j - 1];
    }
    double piv = diag[n - 1];
    if (std::abs(piv) < 1e-14 * std::max(1.0, std::abs(theta)))
      piv = (piv < 0.0 ? -1.0 : 1.0) * 1e-14 * std::max(1.0, std::abs(theta));
    s[n - 1] = rhs[n - 1] / piv;
    for (int j = n - 2; j >= 0; --j) s[j] = (rhs[j] - b[j + 1] * s[j + 1]) / diag[j];
    double nrm = 0.0;
    for (double v : s) nrm += v * v;
    nrm = std::sqrt(nrm);
    for (double& v : s) v /= nrm;
  }
  return s;
}

}  // namespace detail

/// Minimum of the quadratic-part Rayleigh quotient
///   ( (1/2)|grad u|^2 + int q(x) u^2 ) / int u^2
/// via Lanczos on A^{-1} (inner solves by CG); NKG returns the mass m
/// directly. Krylov acceleration keeps the step count modest even when the
/// low end of the spectrum is clustered (large boxes, shallow lattice bands),
/// where single-vector inverse iteration stagnates.
inline double rayleigh_quotient_min(const ModelOnGrid& m) {
  if (m.spec.equation == Equation::nkg) return std::abs(m.spec.nonlin.m);
  const int max_steps = 100, max_restarts = 4;
  const int cg_cap = int(10 * m.grid->size()) + 100;
  RealField v(m.grid);
  for (double& t : v.v) t = 1.0;
  scale(v, 1.0 / state_norm(v));
  double lam = std::numeric_limits<double>::infinity();
  for (int r = 0; r <= max_restarts; ++r) {
    std::vector<RealField> basis;
    basis.push_back(v);
    std::vector<double> alpha, beta;
    beta.push_back(0.0);
    int plateau = 0;
    for (int j = 0; j < max_steps; ++j) {
      RealField w = detail::cg_solve(m, basis[j], 1e-12, cg_cap);
      if (!all_finite(w))
        throw NumericalError("rayleigh_quotient_min: inner solve broke down "
                             "at step " + std::to_string(j));
      const double aj = dot(basis[j], w);
      axpy(-aj, basis[j], w);
      if (j > 0) axpy(-beta[j], basis[j - 1], w);
      for (int pass = 0; pass < 2; ++pass)  // full reorthogonalization
        for (const RealField& q : basis) axpy(-dot(q, w), q, w);
      alpha.push_back(aj);
      const double theta = detail::tridiag_max_eig(alpha, beta);
      if (!(theta > 0.0))
        throw NumericalError("rayleigh_quotient_min: operator is not "
                             "positive definite");
      const double lam_new = 1.0 / theta;
      plateau = std::abs(lam_new - lam) <=
                        1e-9 * std::max(1.0, std::abs(lam_new))
                    ? plateau + 1
                    : 0;
      lam = lam_new;
      const double bj = state_norm(w);
      if (plateau >= 2 || bj <= 1e-13 * std::abs(aj)) return lam;
      if (j + 1 == max_steps) break;
      beta.push_back(bj);
      scale(w, 1.0 / bj);
      basis.push_back(std::move(w));
    }
    // restart from the best Ritz vector
    const std::vector<double> s =
        detail::tridiag_eigvec(alpha, beta, 1.0 / lam);
    RealField next(m.grid);
    for (std::size_t i = 0; i < basis.size(); ++i) axpy(s[i], basis[i], next);
    const double nn = state_norm(next);
    if (!(nn > 0.0) || !all_finite(next))
      throw NumericalError("rayleigh_quotient_min: restart vector collapsed");
    scale(next, 1.0 / nn);
    v = std::move(next);
  }
  throw NumericalError(
      "rayleigh_quotient_min: no convergence after " +
      std::to_string((max_restarts + 1) * max_steps) +
      " Lanczos steps; last eigenvalue " + std::to_string(lam));
}

// ---- splitting defect ----------------------------------------------------

enum class WhichFC { E, C };

/// |F(u + w) - F(u) - F(w)|; exactly 0 at quadrature level for disjointly
/// supported u, w because all integrands are local and stencils are 3-point.
template <class State>
double splitting_defect(const ModelOnGrid& m, WhichFC which, const State& u,
                        const State& w) {
  State sum = u;
  axpy(1.0, w, sum);
  const auto f = [&](const State& s) {
    return which == WhichFC::E ? energy(s, m) : charge(s, m);
  };
  return std::abs(f(sum) - f(u) - f(w));
}

// ---- coercivity lower-bound constant -------------------------------------

/// M in J_delta(u) >= (delta/2) Phi(u) - M, i.e.
/// M = -a min_{t>=0} ((delta/2) t^s - t^(s-1)), evaluated in closed form at
/// the interior critical point t* = 2(s-1)/(s delta).
inline double coercivity_bound_M(double a, double s, double delta) {
  if (a <= 0.0 || s <= 1.0) return 0.0;
  const double tstar = 2.0 * (s - 1.0) / (s * delta);
  const double val =
      0.5 * delta * std::pow(tstar, s) - std::pow(tstar, s - 1.0);
  return -a * std::min(0.0, val);
}

}  // namespace hylo
