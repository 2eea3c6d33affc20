#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "hylo/errors.hpp"
#include "hylo/grid.hpp"
#include "hylo/ops.hpp"

namespace hylo {

// ---- nonlinearity --------------------------------------------------------

enum class NonlinFamily { nse_power, nkg_power };

/// Single-power internal energy density with optional stabilizer:
///   nse-power:  W(s) = -(c_w/p) s^p + d s^q
///   nkg-power:  W(s) = (1/2) m^2 s^2 - (c_n/p) s^p + d s^q
/// extended evenly to negative arguments.
struct Nonlinearity {
  NonlinFamily family = NonlinFamily::nse_power;
  double c_w = 1.0;  // nse-power coefficient, > 0
  double m = 1.0;    // nkg-power mass, != 0
  double c_n = 1.0;  // nkg-power coefficient, >= 0 (0 = linear Klein-Gordon)
  double p = 4.0;    // power, > 2
  double d = 0.0;    // stabilizer coefficient, >= 0
  double q = 0.0;    // stabilizer power, > p when d > 0
};

inline void validate_nonlinearity(const Nonlinearity& n) {
  if (!(n.p > 2.0)) throw ConfigError("nonlinearity: exponent p must be > 2");
  if (n.d < 0.0) throw ConfigError("nonlinearity: stabilizer d must be >= 0");
  if (n.d > 0.0 && !(n.q > n.p))
    throw ConfigError("nonlinearity: stabilizer power q must exceed p");
  if (n.family == NonlinFamily::nse_power) {
    if (!(n.c_w > 0.0)) throw ConfigError("nonlinearity: c_w must be > 0");
  } else {
    if (n.m == 0.0) throw ConfigError("nonlinearity: mass m must be nonzero");
    if (n.c_n < 0.0) throw ConfigError("nonlinearity: c_n must be >= 0");
  }
}

/// Largest amplitude up to which W stays nonnegative for the Klein-Gordon
/// family (the positivity hypothesis on the internal energy). Without the
/// stabilizer this is s_pos = (p m^2 / (2 c_n))^(1/(p-2)); with d > 0 the
/// ratio W/s^2 has a single interior minimum, so the region is either all
/// of [0, inf) or ends at the first zero crossing, found by bisection.
/// Infinite for the Schroedinger families, where boundedness comes from the
/// (a, s) coercivity pair instead.
inline double positivity_amplitude(const Nonlinearity& n) {
  if (n.family != NonlinFamily::nkg_power || n.c_n <= 0.0)
    return std::numeric_limits<double>::infinity();
  if (n.d > 0.0) {
    auto g = [&n](double s) {
      return 0.5 * n.m * n.m - (n.c_n / n.p) * std::pow(s, n.p - 2.0) +
             n.d * std::pow(s, n.q - 2.0);
    };
    const double smin = std::pow(
        n.c_n * (n.p - 2.0) / (n.p * n.d * (n.q - 2.0)), 1.0 / (n.q - n.p));
    if (g(smin) >= 0.0) return std::numeric_limits<double>::infinity();
    double lo = 0.0, hi = smin;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) >= 0.0 ? lo : hi) = mid;
    }
    return lo;
  }
  return std::pow(n.p * n.m * n.m / (2.0 * n.c_n), 1.0 / (n.p - 2.0));
}

inline double eval_W(const Nonlinearity& n, double s) {
  const double t = std::abs(s);
  double w = -( (n.family == NonlinFamily::nse_power ? n.c_w : n.c_n) / n.p) *
             std::pow(t, n.p);
  if (n.d > 0.0) w += n.d * std::pow(t, n.q);
  if (n.family == NonlinFamily::nkg_power) w += 0.5 * n.m * n.m * t * t;
  return w;
}

/// Derivative of the even extension (odd in s).
inline double eval_Wprime(const Nonlinearity& n, double s) {
  const double t = std::abs(s);
  double w = -(n.family == NonlinFamily::nse_power ? n.c_w : n.c_n) *
             std::pow(t, n.p - 1.0);
  if (n.d > 0.0) w += n.d * n.q * std::pow(t, n.q - 1.0);
  if (n.family == NonlinFamily::nkg_power) w += n.m * n.m * t;
  return s < 0.0 ? -w : w;
}

/// W'(t)/t, continuous at 0 (p > 2 makes the power part vanish there).
/// This is the factor in the complex extension W'(psi) = (W'(|psi|)/|psi|) psi.
inline double eval_Wprime_over_s(const Nonlinearity& n, double s) {
  const double t = std::abs(s);
  double g = -(n.family == NonlinFamily::nse_power ? n.c_w : n.c_n) *
             std::pow(t, n.p - 2.0);
  if (n.d > 0.0) g += n.d * n.q * std::pow(t, n.q - 2.0);
  if (n.family == NonlinFamily::nkg_power) g += n.m * n.m;
  return g;
}

/// Largest s_max such that W >= 0 on [0, s_max] (nkg families only; the
/// positivity hypothesis is enforced on the amplitude range actually visited).
inline double nkg_positive_smax(const Nonlinearity& n) {
  if (n.family != NonlinFamily::nkg_power || n.c_n == 0.0)
    return std::numeric_limits<double>::infinity();
  if (n.d == 0.0)
    return std::pow(n.p * n.m * n.m / (2.0 * n.c_n), 1.0 / (n.p - 2.0));
  double s = 1e-4;
  while (s < 1e6 && eval_W(n, s) >= 0.0) s *= 1.01;
  return s >= 1e6 ? std::numeric_limits<double>::infinity() : s / 1.01;
}

// ---- potential -----------------------------------------------------------

enum class PotentialFamily { constant, lattice, axial_periodic };

/// Closed-form potentials satisfying 1 <= V <= V0:
///   constant:        V = value
///   lattice:         V(x) = 1 + amp * prod_i (1 + cos(2 pi (A^-1 x)_i)) / 2
///   axial-periodic:  V(r, x3) = 1 + amp * (1 + cos(2 pi x3)) / 2
/// The lattice period matrix A is stored row-major; default identity.
struct Potential {
  PotentialFamily family = PotentialFamily::constant;
  double value = 1.0;          // constant family
  double amp = 0.0;            // lattice / axial amplitude, V0 = 1 + amp
  std::vector<double> period;  // lattice A, row-major N x N; empty = identity
};

inline void validate_potential(const Potential& p, std::size_t ndims) {
  if (p.family == PotentialFamily::constant) {
    if (!(p.value >= 1.0))
      throw ConfigError("potential: constant value must satisfy V >= 1");
    return;
  }
  if (p.amp < 0.0) throw ConfigError("potential: amplitude must be >= 0");
  if (p.family == PotentialFamily::lattice && !p.period.empty() &&
      p.period.size() != ndims * ndims)
    throw ConfigError("potential: period matrix must be " +
                      std::to_string(ndims) + "x" + std::to_string(ndims));
}

inline std::pair<double, double> potential_bounds(const Potential& p) {
  switch (p.family) {
    case PotentialFamily::constant:
      return {p.value, p.value};
    default:
      return {1.0, 1.0 + p.amp};
  }
}

namespace detail {

/// Inverts the (at most 3x3) period matrix; identity when unset.
inline std::vector<double> invert_period(const std::vector<double>& a,
                                         std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  if (a.empty()) {
    for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    return inv;
  }
  // Gauss-Jordan; n <= 3 so no pivoting subtleties worth more machinery.
  std::vector<double> m(a);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(m[r * n + c]) > std::abs(m[piv * n + c])) piv = r;
    if (std::abs(m[piv * n + c]) < 1e-14)
      throw ConfigError("potential: period matrix is singular");
    if (piv != c)
      for (std::size_t k = 0; k < n; ++k) {
        std::swap(m[piv * n + k], m[c * n + k]);
        std::swap(inv[piv * n + k], inv[c * n + k]);
      }
    const double d = m[c * n + c];
    for (std::size_t k = 0; k < n; ++k) {
      m[c * n + k] /= d;
      inv[c * n + k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = m[r * n + c];
      for (std::size_t k = 0; k < n; ++k) {
        m[r * n + k] -= f * m[c * n + k];
        inv[r * n + k] -= f * inv[c * n + k];
      }
    }
  }
  return inv;
}

}  // namespace detail

/// Evaluates V at a physical point (Cartesian coordinates, or (r, x3) on
/// cylindrical grids where only the axial family depends on position).
inline double potential_value(const Potential& p,
                              const std::vector<double>& x) {
  switch (p.family) {
    case PotentialFamily::constant:
      return p.value;
    case PotentialFamily::axial_periodic: {
      const double x3 = x.back();
      const double v =
          1.0 + p.amp * (1.0 + std::cos(2.0 * std::numbers::pi * x3)) / 2.0;
      return std::clamp(v, 1.0, 1.0 + p.amp);
    }
    case PotentialFamily::lattice: {
      const std::size_t n = x.size();
      const std::vector<double> inv = detail::invert_period(p.period, n);
      double prod = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double yi = 0.0;
        for (std::size_t j = 0; j < n; ++j) yi += inv[i * n + j] * x[j];
        prod *= (1.0 + std::cos(2.0 * std::numbers::pi * yi)) / 2.0;
      }
      return std::clamp(1.0 + p.amp * prod, 1.0, 1.0 + p.amp);
    }
  }
  return 1.0;
}

/// Samples V on the grid. Constant and axial families are valid on any grid;
/// the lattice family requires a Cartesian grid.
inline RealField make_potential_field(const Potential& p, const GridPtr& g) {
  RealField out(g);
  const std::size_t na = g->naxes();
  if (p.family == PotentialFamily::lattice && g->kind() != GridKind::cartesian)
    throw ConfigError("potential: lattice family requires a cartesian grid");
  const std::vector<double> inv =
      p.family == PotentialFamily::lattice ? detail::invert_period(p.period, na)
                                           : std::vector<double>{};
  std::vector<int> idx;
  std::vector<double> x(na);
  for (std::size_t f = 0; f < g->size(); ++f) {
    g->unflatten(f, idx);
    for (std::size_t a = 0; a < na; ++a) x[a] = g->axis(a).x[idx[a]];
    if (p.family == PotentialFamily::lattice) {
      double prod = 1.0;
      for (std::size_t i = 0; i < na; ++i) {
        double yi = 0.0;
        for (std::size_t j = 0; j < na; ++j) yi += inv[i * na + j] * x[j];
        prod *= (1.0 + std::cos(2.0 * std::numbers::pi * yi)) / 2.0;
      }
      out.v[f] = std::clamp(1.0 + p.amp * prod, 1.0, 1.0 + p.amp);
    } else {
      out.v[f] = potential_value(p, x);
    }
  }
  return out;
}

// ---- problem specification ----------------------------------------------

enum class Equation { nse, nse_vortex, nkg };

struct Coercivity {
  double a = 0.0;  // >= 0; 0 exactly for NKG (sign-indefinite charge)
  double s = 1.0;  // >= 1; > 1 for NSE kinds
};

struct ModelSpec {
  Equation equation = Equation::nse;
  Nonlinearity nonlin;
  Potential potential;  // ignored for NKG
  int ell = 0;          // winding, NSE-VORTEX only
  Coercivity coercivity;
  double delta = 0.01;
};

/// Spatial dimension of the underlying problem: grid dimension for Cartesian
/// kinds, 3 for the axisymmetric vortex reduction.
inline int problem_dimension(const ModelSpec& spec, const Grid& g) {
  return spec.equation == Equation::nse_vortex ? 3
                                               : static_cast<int>(g.naxes());
}

inline void validate_model(const ModelSpec& spec, const Grid& g) {
  validate_nonlinearity(spec.nonlin);
  const int N = problem_dimension(spec, g);
  switch (spec.equation) {
    case Equation::nse:
    case Equation::nse_vortex:
      if (spec.nonlin.family != NonlinFamily::nse_power)
        throw ConfigError("model: NSE equations require the nse-power family");
      if (!(spec.nonlin.p < 2.0 + 4.0 / N))
        throw ConfigError(
            "model: exponent p violates the subcritical growth condition "
            "2 < p < 2 + 4/N; got p=" + std::to_string(spec.nonlin.p) +
            " with N=" + std::to_string(N));
      if (!(spec.coercivity.a > 0.0) || !(spec.coercivity.s > 1.0))
        throw ConfigError("model: NSE kinds need coercivity a > 0, s > 1");
      validate_potential(spec.potential, g.naxes());
      break;
    case Equation::nkg:
      if (spec.nonlin.family != NonlinFamily::nkg_power)
        throw ConfigError("model: NKG requires the nkg-power family");
      if (spec.coercivity.a != 0.0)
        throw ConfigError("model: NKG charge is sign-indefinite; a must be 0");
      if (N >= 3 && !(spec.nonlin.p < 2.0 * N / (N - 2.0)))
        throw ConfigError("model: NKG exponent p must stay below 2N/(N-2)");
      break;
  }
  if (spec.equation == Equation::nse_vortex) {
    if (g.kind() != GridKind::cylindrical)
      throw ConfigError("model: NSE-VORTEX requires a cylindrical grid");
    if (spec.ell == 0)
      throw ConfigError("model: NSE-VORTEX requires winding ell != 0");
    if (spec.potential.family == PotentialFamily::lattice)
      throw ConfigError("model: vortex potential must be constant or "
                        "axial-periodic");
  } else if (spec.ell != 0) {
    throw ConfigError("model: winding ell is only meaningful for NSE-VORTEX");
  }
  if (spec.equation != Equation::nse_vortex &&
      spec.potential.family == PotentialFamily::axial_periodic)
    throw ConfigError("model: axial-periodic potential requires NSE-VORTEX");
  if (!(spec.delta > 0.0)) throw ConfigError("model: delta must be > 0");
}

/// States with |C| below this are excluded from Lambda-based quantities.
inline double charge_floor(const Grid& g) { return 1e-10 * g.volume(); }

// ---- coercivity constants (Lemma-coercive algebra) -----------------------

struct CoercivityConstants {
  double a, s, q_exp, gamma, gamma_prime, M;
};

/// Derives (a, s) from the interpolation-inequality splitting
///   c |u|_p^p <= a |u|_2^(2s) + (1/2) |grad u|^2
/// for W(s) >= -c s^p in dimension N with Gagliardo-Nirenberg constant b_p.
inline CoercivityConstants coercivity_constants(int N, double p, double c_w,
                                                double b_p) {
  if (!(p > 2.0 && p < 2.0 + 4.0 / N))
    throw ConfigError(
        "coercivity: exponent p must satisfy the subcritical growth "
        "condition 2 < p < 2 + 4/N; got p=" + std::to_string(p) +
        " with N=" + std::to_string(N));
  if (!(b_p > 0.0)) throw ConfigError("coercivity: b_p must be > 0");
  CoercivityConstants c{};
  c.q_exp = N * (p - 2.0) / 2.0;
  c.gamma = 2.0 / c.q_exp;
  c.gamma_prime = c.gamma / (c.gamma - 1.0);
  c.M = std::pow(2.0 * c_w / c.gamma, 1.0 / c.gamma);
  c.s = (p - c.q_exp) * c.gamma_prime / 2.0;
  c.a = c_w * std::pow(b_p * c.M, c.gamma_prime) / c.gamma_prime;
  if (!(c.q_exp < 2.0))
    throw NumericalError("coercivity: derived q_exp >= 2");
  if (!(c.s > 1.0)) throw NumericalError("coercivity: derived s <= 1");
  return c;
}

// ---- Gagliardo-Nirenberg constant estimate -------------------------------

namespace detail {

/// L^p norm, gradient norm and the GN ratio of a radial profile about the
/// box center (axis for cylindrical grids, where the quadrature weights
/// already encode the 3-D measure).
template <class Profile>
double gn_ratio(const GridPtr& g, double p, double theta, const Profile& prof,
                double sigma) {
  RealField u(g);
  const std::size_t na = g->naxes();
  std::vector<double> c(na);
  for (std::size_t a = 0; a < na; ++a)
    c[a] = g->kind() == GridKind::cylindrical && a == 0
               ? 0.0
               : 0.5 * (g->axis(a).lo + g->axis(a).hi);
  std::vector<int> idx;
  for (std::size_t f = 0; f < g->size(); ++f) {
    g->unflatten(f, idx);
    double rho2 = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      const double d = g->axis(a).x[idx[a]] - c[a];
      rho2 += d * d;
    }
    u.v[f] = prof(std::sqrt(rho2) / sigma);
  }
  const double np = std::pow(
      integrate(u, [&](double s) { return std::pow(std::abs(s), p); }),
      1.0 / p);
  const double n2 = norm_l2(u);
  const double ng = std::sqrt(dirichlet_energy(u));
  if (n2 <= 0.0 || ng <= 0.0) return 0.0;
  return np / (std::pow(n2, 1.0 - theta) * std::pow(ng, theta));
}

}  // namespace detail

/// Estimates the best constant in |u|_p <= b_p |u|_2^(1-theta) |grad u|_2^theta
/// by maximizing the ratio over Gaussian and sech profiles with a scale scan
/// plus golden-section refinement, then applies a 1.1 safety factor. Used
/// only to size the coercivity parameter a.
inline double estimate_gn_constant(int N, double p, const GridPtr& g) {
  if (!(p > 2.0)) throw ConfigError("gn-estimate: need p > 2");
  const double theta = N * (0.5 - 1.0 / p);
  auto gauss = [](double r) { return std::exp(-r * r); };
  auto sech = [](double r) { return 1.0 / std::cosh(r); };
  double span = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < g->naxes(); ++a)
    span = std::min(span, g->axis(a).hi - g->axis(a).lo);
  const double lo = 4.0 * g->min_dx(), hi = span / 6.0;
  if (!(hi > lo))
    throw ConfigError("gn-estimate: grid too coarse for the scale scan");
  double best = 0.0, best_sigma = lo;
  int best_profile = 0;
  for (int k = 0; k < 33; ++k) {
    const double sigma = lo * std::pow(hi / lo, k / 32.0);
    const double rg = detail::gn_ratio(g, p, theta, gauss, sigma);
    const double rs = detail::gn_ratio(g, p, theta, sech, sigma);
    if (rg > best) best = rg, best_sigma = sigma, best_profile = 0;
    if (rs > best) best = rs, best_sigma = sigma, best_profile = 1;
  }
  // golden-section ascent around the best scale
  double a = best_sigma / 1.6, b = best_sigma * 1.6;
  b = std::min(b, hi);
  a = std::max(a, lo);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  auto ratio = [&](double sigma) {
    return best_profile == 0 ? detail::gn_ratio(g, p, theta, gauss, sigma)
                             : detail::gn_ratio(g, p, theta, sech, sigma);
  };
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = ratio(x1), f2 = ratio(x2);
  for (int it = 0; it < 40; ++it) {
    if (f1 < f2) {
      a = x1, x1 = x2, f1 = f2;
      x2 = a + gr * (b - a), f2 = ratio(x2);
    } else {
      b = x2, x2 = x1, f2 = f1;
      x1 = b - gr * (b - a), f1 = ratio(x1);
    }
  }
  best = std::max(best, std::max(f1, f2));
  return 1.1 * best;
}

// ---- hylomorphy hypothesis ----------------------------------------------

struct HylomorphyHypothesis {
  bool holds = false;
  double s0 = 1.0;
  double margin = 0.0;
};

/// NKG test-pair phase speed from the equality case of the hylomorphy
/// hypothesis; guarded strictly below m. Meaningful only where W(s0) >= 0.
inline double nkg_test_beta(const Nonlinearity& n, double s0) {
  const double w = eval_W(n, s0);
  if (w < 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double beta = std::sqrt(2.0 * w) / s0;
  const double cap = std::abs(n.m) * (1.0 - 1e-9);
  return std::min(beta, cap);
}

/// Scans s0 over a log grid and reports the hypothesis margin:
/// NSE kinds: (inf V - sup V) - W(s0)/s0^2, maximized (torus family caps
/// s0 at 2 to honor the ramp gradient bound). NKG: (1/2) m^2 s0^2 - W(s0)
/// maximized over s0 whose test speed beta = sqrt(2 W(s0))/s0 stays in
/// [m/4, m); the lower guard keeps the resulting test pair usable at
/// desk-scale radii.
inline HylomorphyHypothesis check_hylomorphy_hypothesis(const ModelSpec& spec) {
  HylomorphyHypothesis out;
  const Nonlinearity& n = spec.nonlin;
  const int pts = 241;
  double best_any = -std::numeric_limits<double>::infinity();
  double s0_any = 1.0;
  if (spec.equation == Equation::nkg) {
    const double m = std::abs(n.m);
    bool found = false;
    for (int k = 0; k < pts; ++k) {
      const double s0 = 1e-3 * std::pow(1e6, k / double(pts - 1));
      const double margin = 0.5 * n.m * n.m * s0 * s0 - eval_W(n, s0);
      if (margin > best_any) best_any = margin, s0_any = s0;
      const double w = eval_W(n, s0);
      if (w < 0.0) continue;
      const double beta = std::sqrt(2.0 * w) / s0;
      if (!(beta >= 0.25 * m) || !(beta < m * (1.0 - 1e-9))) continue;
      if (!found || margin > out.margin) out.margin = margin, out.s0 = s0;
      found = true;
    }
    if (!found) out.margin = best_any, out.s0 = s0_any;
    out.holds = found && out.margin > 0.0;
    return out;
  }
  const auto [vlo, vhi] = potential_bounds(spec.potential);
  const double cap = spec.equation == Equation::nse_vortex ? 2.0 : 1e3;
  for (int k = 0; k < pts; ++k) {
    double s0 = 1e-3 * std::pow(1e6, k / double(pts - 1));
    if (s0 > cap) break;
    const double margin = (vlo - vhi) - eval_W(n, s0) / (s0 * s0);
    if (margin > best_any) best_any = margin, s0_any = s0;
  }
  out.margin = best_any;
  out.s0 = s0_any;
  out.holds = best_any > 0.0;
  return out;
}

}  // namespace hylo
