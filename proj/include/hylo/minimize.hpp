#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hylo/errors.hpp"
#include "hylo/functionals.hpp"
#include "hylo/grid.hpp"

namespace hylo {

enum class StepRule { barzilai_borwein_armijo, fixed };

struct MinimizeOptions {
  int max_iters = 2000;
  double gradient_tolerance = 1e-6;  // relative to the initial gradient norm
  StepRule step_rule = StepRule::barzilai_borwein_armijo;
  double initial_step = 1e-2;
  std::uint64_t rng_seed = 0;  // consumed by randomized initializers, not here
  std::vector<double> continuation_deltas;  // descending; empty = single stage
};

struct TraceEntry {
  int iter = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
};

template <class State>
struct MinimizeReport {
  State minimizer;
  double e_delta = std::numeric_limits<double>::quiet_NaN();
  double c_delta = std::numeric_limits<double>::quiet_NaN();  // |C|
  double omega = std::numeric_limits<double>::quiet_NaN();
  double lambda_value = std::numeric_limits<double>::quiet_NaN();
  double el_residual = std::numeric_limits<double>::quiet_NaN();
  std::vector<TraceEntry> trace;  // (iter, objective, gradient norm)
  bool converged = false;
  std::string diagnostic;  // nonempty on aborted or stalled runs
};

struct Multiplier {
  double omega = 0.0;
  double el_residual = 0.0;
};

// ---- multiplier extraction -----------------------------------------------

/// Least-squares multiplier lam = <E', C'>/<C', C'> and the relative
/// stationarity residual ||E' - lam C'|| / ||E'||. The reported omega
/// follows each equation's own sign convention: NSE omega = lam (so the
/// reduced elliptic equation holds verbatim), NKG omega = -lam (psi_hat =
/// -i omega psi for standing waves).
template <class State>
Multiplier extract_multiplier(const State& st, const ModelOnGrid& m) {
  if (!(state_norm(st) > 0.0))
    throw UsageError("extract_multiplier: zero state");
  State ge = grad_energy(st, m);
  State gc = grad_charge(st, m);
  const double cc = state_dot(gc, gc);
  if (!(cc > 0.0))
    throw UsageError("extract_multiplier: charge gradient vanishes");
  const double lam = state_dot(ge, gc) / cc;
  const double ne = state_norm(ge);
  axpy(-lam, gc, ge);
  Multiplier out;
  out.el_residual = ne > 0.0 ? state_norm(ge) / ne : 0.0;
  out.omega = m.spec.equation == Equation::nkg ? -lam : lam;
  return out;
}

// ---- recentering ---------------------------------------------------------

namespace detail {

inline GridPtr state_grid(const RealField& u) { return u.grid; }
inline GridPtr state_grid(const ComplexField& p) { return p.grid; }
inline GridPtr state_grid(const NKGState& st) { return st.psi.grid; }

inline void charge_density(const RealField& u, std::vector<double>& d) {
  d.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) d[i] = u.v[i] * u.v[i];
}
inline void charge_density(const ComplexField& p, std::vector<double>& d) {
  d.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) d[i] = std::norm(p.v[i]);
}
inline void charge_density(const NKGState& st, std::vector<double>& d) {
  d.resize(st.psi.size());
  for (std::size_t i = 0; i < st.psi.size(); ++i) {
    const cplx a = st.psi_hat.v[i], b = st.psi.v[i];
    // |Im(psi_hat conj(psi))|, the pointwise charge density magnitude
    d[i] = std::abs(a.imag() * b.real() - a.real() * b.imag());
  }
}

template <typename T>
Field<T> shift_state(const Field<T>& f, const std::vector<int>& cells) {
  return shift(f, cells);
}
inline NKGState shift_state(const NKGState& st, const std::vector<int>& cells) {
  return {shift(st.psi, cells), shift(st.psi_hat, cells)};
}

inline std::size_t center_flat(const Grid& g) {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < g.naxes(); ++a)
    flat += std::size_t(g.axis(a).n / 2) * g.stride(a);
  return flat;
}

inline void fix_phase(RealField&) {}
inline void fix_phase(ComplexField& p) {
  const cplx z = p.v[center_flat(*p.grid)];
  if (!(std::abs(z) > 0.0)) return;
  const double th = std::arg(z);
  if (std::abs(th) <= 1e-12) return;  // keeps recentering exactly idempotent
  const cplx rot = std::polar(1.0, -th);
  for (cplx& v : p.v) v *= rot;
}
inline void fix_phase(NKGState& st) {
  const cplx z = st.psi.v[center_flat(*st.psi.grid)];
  if (!(std::abs(z) > 0.0)) return;
  const double th = std::arg(z);
  if (std::abs(th) <= 1e-12) return;
  const cplx rot = std::polar(1.0, -th);
  for (cplx& v : st.psi.v) v *= rot;
  for (cplx& v : st.psi_hat.v) v *= rot;
}

}  // namespace detail

/// Canonical representative of the translation (and, for complex states,
/// phase) orbit: integer shifts along periodic axes move the charge-density
/// centroid to the box center, then the value at the center is made
/// real-positive. Dirichlet axes are untouched; the zero state is a no-op.
template <class State>
State recenter(const State& st) {
  GridPtr gp = detail::state_grid(st);
  const Grid& g = *gp;
  State out = st;
  std::vector<double> d;
  detail::charge_density(out, d);
  const auto& w = g.weights();
  double mass = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) mass += w[i] * d[i];
  if (!(mass > 0.0)) return out;

  const double two_pi = 2.0 * std::acos(-1.0);
  std::vector<int> idx, cells(g.naxes(), 0);
  for (int round = 0; round < 5; ++round) {
    std::vector<double> s(g.naxes(), 0.0), c(g.naxes(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      g.unflatten(i, idx);
      const double wd = w[i] * d[i];
      for (std::size_t a = 0; a < g.naxes(); ++a) {
        if (g.axis(a).bc != Boundary::periodic) continue;
        const double th = two_pi * idx[a] / g.axis(a).n;
        s[a] += wd * std::sin(th);
        c[a] += wd * std::cos(th);
      }
    }
    bool moved = false;
    for (std::size_t a = 0; a < g.naxes(); ++a) {
      cells[a] = 0;
      if (g.axis(a).bc != Boundary::periodic) continue;
      const int n = g.axis(a).n;
      if (!(s[a] != 0.0 || c[a] != 0.0)) continue;
      const double phi = std::atan2(s[a], c[a]);
      const double target = two_pi * (n / 2) / n;  // box-center node angle
      int k = int(std::lround((target - phi) * n / two_pi)) % n;
      if (k > n / 2) k -= n;
      if (k < -(n / 2)) k += n;
      cells[a] = k;
      if (k != 0) moved = true;
    }
    if (!moved) break;
    out = detail::shift_state(out, cells);
    detail::charge_density(out, d);
  }
  detail::fix_phase(out);
  return out;
}

// ---- descent core --------------------------------------------------------

namespace detail {

struct EvalResult {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool collapsed = false;  // charge fell below the floor (free descent only)
};

template <class State>
struct CoreOutcome {
  State x;
  double g0 = 0.0;  // gradient norm at the (retracted) initial state
  bool converged = false;
  bool aborted = false;
  std::string diagnostic;
};

/// Shared descent loop: alternating Barzilai-Borwein trial steps with Armijo
/// halving (sufficient decrease 1e-4); only non-increasing steps are
/// accepted, so the trace objective never rises. Once the model decrease
/// falls below the floating-point resolution of the objective the test
/// degrades to plain non-increase, which is what lets tight gradient
/// tolerances be reached at all. `retract` returning false marks an
/// infeasible trial (rejected, not fatal); `eval` flagging collapse aborts.
/// `ref_gn` widens the convergence reference for warm-started stages.
template <class State, class Eval, class Gradf, class Retract>
CoreOutcome<State> descent_core(State x0, const MinimizeOptions& opts,
                                int iter_base, std::vector<TraceEntry>& trace,
                                const Eval& eval, const Gradf& gradf,
                                const Retract& retract, double ref_gn = 0.0) {
  CoreOutcome<State> out{std::move(x0)};
  if (!retract(out.x)) {
    out.aborted = true;
    out.diagnostic = "cannot project the initial state onto the constraint";
    return out;
  }
  EvalResult f0 = eval(out.x);
  if (f0.collapsed) {
    out.aborted = true;
    out.diagnostic = "initial charge is below the floor";
    return out;
  }
  State g = gradf(out.x);
  double gn = state_norm(g);
  out.g0 = gn;
  const double ref = std::max(gn, ref_gn);
  double f = f0.value;
  trace.push_back({iter_base, f, gn});
  if (gn <= opts.gradient_tolerance * ref) {  // covers g0 = 0 and tol >= 1
    out.converged = true;
    return out;
  }
  double alpha = opts.initial_step;
  double f_best = f;
  double gn_best = gn;
  int since_progress = 0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    double a = opts.step_rule == StepRule::fixed ? opts.initial_step : alpha;
    const double gg = state_dot(g, g);
    const double resolution = 4.0 * std::numeric_limits<double>::epsilon() *
                              std::max(1.0, std::abs(f_best));
    State cand;
    EvalResult fc;
    bool accepted = false;
    for (int h = 0; h < 60; ++h) {
      cand = out.x;
      axpy(-a, g, cand);
      if (!retract(cand)) {
        a *= 0.5;
        continue;
      }
      fc = eval(cand);
      if (fc.collapsed) {
        out.aborted = true;
        out.diagnostic =
            "charge fell below the floor at iteration " +
            std::to_string(iter_base + it) +
            "; delta is likely too large for this configuration";
        return out;
      }
      if (!std::isfinite(fc.value)) {
        a *= 0.5;
        continue;
      }
      const double required = 1e-4 * a * gg;
      // Below the objective's floating-point resolution the Armijo test is
      // pure rounding noise; accept anything that does not rise above the
      // best value seen, so the gradient can keep shrinking.
      if (required >= resolution ? fc.value <= f - required
                                 : fc.value <= f_best + resolution) {
        accepted = true;
        break;
      }
      a *= 0.5;
    }
    if (!accepted) {
      out.diagnostic =
          "line search stalled at iteration " + std::to_string(iter_base + it);
      break;
    }
    State g_new = gradf(cand);
    const double gn_new = state_norm(g_new);
    if (opts.step_rule == StepRule::barzilai_borwein_armijo) {
      State dx = cand;
      axpy(-1.0, out.x, dx);
      State dg = g_new;
      axpy(-1.0, g, dg);
      const double sxy = state_dot(dx, dg);
      double bb;
      if (it % 2 == 1) {
        const double den = state_dot(dg, dg);
        bb = den > 0.0 ? sxy / den : 0.0;
      } else {
        bb = sxy > 0.0 ? state_dot(dx, dx) / sxy : 0.0;
      }
      if (!std::isfinite(bb) || bb <= 0.0) bb = opts.initial_step;
      alpha = std::min(1e8, std::max(1e-14, bb));
    }
    out.x = std::move(cand);
    g = std::move(g_new);
    f = fc.value;
    gn = gn_new;
    // Progress = a representable objective decrease or a new gradient low;
    // the BB gradient norm is nonmonotone, so neither alone is reliable.
    bool progress = f < f_best - resolution;
    f_best = std::min(f_best, f);
    if (gn < 0.999 * gn_best) {
      gn_best = gn;
      progress = true;
    }
    if (progress)
      since_progress = 0;
    else
      ++since_progress;
    trace.push_back({iter_base + it, f, gn});
    if (gn <= opts.gradient_tolerance * ref) {
      out.converged = true;
      break;
    }
    if (since_progress >= 600) {
      out.diagnostic = "descent stalled at the numerical resolution after "
                       "iteration " +
                       std::to_string(iter_base + it);
      break;
    }
  }
  if (!out.converged && out.diagnostic.empty())
    out.diagnostic = "gradient tolerance not reached within the iteration "
                     "budget";
  return out;
}

inline void flag_negative_part(const RealField& u, std::string& diagnostic) {
  double lo = 0.0, hi = 0.0;
  for (double v : u.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < -1e-6 * hi) {
    if (!diagnostic.empty()) diagnostic += "; ";
    diagnostic += "minimizer has a negative part beyond tolerance";
  }
}
inline void flag_negative_part(const ComplexField&, std::string&) {}
inline void flag_negative_part(const NKGState&, std::string&) {}

template <class State>
void finalize_report(MinimizeReport<State>& rep, State x,
                     const ModelOnGrid& m) {
  rep.minimizer = recenter(x);
  const FunctionalValue f = evaluate_all(rep.minimizer, m);
  rep.e_delta = f.E;
  rep.c_delta = std::abs(f.C);
  rep.lambda_value = f.lambda;
  if (f.lambda_defined) {
    const Multiplier mu = extract_multiplier(rep.minimizer, m);
    rep.omega = mu.omega;
    rep.el_residual = mu.el_residual;
    flag_negative_part(rep.minimizer, rep.diagnostic);
  }
}

inline void check_options(const MinimizeOptions& opts) {
  if (opts.max_iters < 1)
    throw ConfigError("minimize: max-iters must be at least 1");
  if (!(opts.gradient_tolerance > 0.0))
    throw ConfigError("minimize: gradient-tolerance must be positive");
  if (!(opts.initial_step > 0.0))
    throw ConfigError("minimize: initial-step must be positive");
}

// charge projection: returns false for states that cannot be rescaled
inline bool project_charge(RealField& u, double c, const ModelOnGrid& m) {
  const double cu = charge(u, m);
  if (!(cu >= m.floor) || !std::isfinite(cu)) return false;
  scale(u, std::sqrt(c / cu));
  return true;
}
inline bool project_charge(ComplexField& p, double c, const ModelOnGrid& m) {
  const double cu = charge(p, m);
  if (!(cu >= m.floor) || !std::isfinite(cu)) return false;
  scale(p, std::sqrt(c / cu));
  return true;
}
/// C is linear in psi_hat, so only psi_hat is rescaled; the factor uses |C|
/// so the sign of the charge (the branch of the constraint set) is kept.
inline bool project_charge(NKGState& st, double c, const ModelOnGrid& m) {
  const double cu = charge(st, m);
  if (!(std::abs(cu) >= m.floor) || !std::isfinite(cu)) return false;
  scale(st.psi_hat, c / std::abs(cu));
  return true;
}

// Descent iterates must stay inside the amplitude region where the
// Klein-Gordon internal energy is nonnegative: outside it J_delta is
// unbounded below (energy can be driven arbitrarily negative while the
// charge shrinks) and the variational characterization no longer applies.
// Trials beyond the region are treated as infeasible, which makes the line
// search back off instead of tunneling into the unbounded valley.
template <class State>
bool within_positivity(const State&, const ModelOnGrid&) {
  return true;
}

inline bool within_positivity(const NKGState& s, const ModelOnGrid& m) {
  const double cap = positivity_amplitude(m.spec.nonlin);
  if (!std::isfinite(cap)) return true;
  for (const cplx& z : s.psi.v)
    if (std::abs(z) > cap) return false;
  return true;
}

}  // namespace detail

// ---- public drivers ------------------------------------------------------

/// Unconstrained descent on J_delta. With continuation-deltas set, runs one
/// stage per delta in list order (descending recommended), warm-starting
/// each stage from the previous minimizer; the report's scalar fields are
/// evaluated at the model's own delta.
template <class State>
MinimizeReport<State> minimize_free(const ModelOnGrid& m, const State& init,
                                    const MinimizeOptions& opts) {
  detail::check_options(opts);
  if (!(std::abs(charge(init, m)) >= m.floor))
    throw UsageError("minimize_free: initial charge is below the floor");
  if (!detail::within_positivity(init, m))
    throw UsageError(
        "minimize_free: initial amplitude lies outside the region where W "
        "is nonnegative");
  std::vector<double> deltas = opts.continuation_deltas;
  if (deltas.empty()) deltas = {m.spec.delta};
  for (double d : deltas)
    if (!(d > 0.0))
      throw ConfigError("minimize_free: continuation deltas must be positive");
  MinimizeReport<State> rep;
  State x = init;
  int iter_base = 0;
  double ref_gn = 0.0;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    ModelOnGrid stage = m;
    stage.spec.delta = deltas[k];
    auto eval = [&stage](const State& s) {
      const FunctionalValue f = evaluate_all(s, stage);
      detail::EvalResult r;
      r.collapsed = !f.lambda_defined;
      r.value = f.j_delta;
      return r;
    };
    auto gradf = [&stage](const State& s) {
      return first_variation(s, stage, Which::Jdelta).gradient;
    };
    auto retract = [&m](State& s) { return detail::within_positivity(s, m); };
    auto out = detail::descent_core(std::move(x), opts, iter_base, rep.trace,
                                    eval, gradf, retract, ref_gn);
    x = std::move(out.x);
    rep.converged = out.converged && !out.aborted;
    rep.diagnostic = out.diagnostic;
    if (out.aborted) break;
    if (k == 0) ref_gn = out.g0;
    iter_base = rep.trace.empty() ? 0 : rep.trace.back().iter + 1;
  }
  detail::finalize_report(rep, std::move(x), m);
  return rep;
}

/// Projected descent of E on the charge level set |C| = c: each trial step
/// is rescaled back onto the constraint, the working gradient is E'
/// projected onto the constraint tangent.
template <class State>
MinimizeReport<State> minimize_constrained(const ModelOnGrid& m, double c,
                                           const State& init,
                                           const MinimizeOptions& opts) {
  detail::check_options(opts);
  if (!(c >= m.floor))
    throw UsageError(
        "minimize_constrained: target charge must exceed the charge floor");
  auto retract = [&m, c](State& s) {
    return detail::project_charge(s, c, m) && detail::within_positivity(s, m);
  };
  auto eval = [&m](const State& s) {
    detail::EvalResult r;
    r.collapsed = false;
    r.value = energy(s, m);
    return r;
  };
  auto gradf = [&m](const State& s) {
    State ge = grad_energy(s, m);
    State gc = grad_charge(s, m);
    const double cc = state_dot(gc, gc);
    if (cc > 0.0) axpy(-state_dot(ge, gc) / cc, gc, ge);
    return ge;
  };
  MinimizeReport<State> rep;
  auto out = detail::descent_core(State(init), opts, 0, rep.trace, eval, gradf,
                                  retract);
  rep.converged = out.converged && !out.aborted;
  rep.diagnostic = out.diagnostic;
  detail::finalize_report(rep, std::move(out.x), m);
  return rep;
}

}  // namespace hylo
