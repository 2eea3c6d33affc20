#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "hylo/fft.hpp"
#include "hylo/functionals.hpp"
#include "hylo/ops.hpp"

namespace hylo {

// ---- step-size control ---------------------------------------------------

/// Largest admissible step for the model's integrator. The Schroedinger
/// splitting is unconditionally stable (each substep is unitary), so its cap
/// only protects accuracy; the Klein-Gordon leapfrog cap is the CFL bound of
/// the linearized wave operator with the mass term included.
inline double dt_limit(const ModelOnGrid& m) {
  if (m.spec.equation == Equation::nkg) {
    const double h = m.grid->min_dx();
    const double mm = m.spec.nonlin.m;
    return 0.9 * h / std::sqrt(1.0 + mm * mm * h * h);
  }
  return 0.05;
}

/// Conservative default step, well inside dt_limit.
inline double suggest_dt(const ModelOnGrid& m) {
  const double cap = dt_limit(m);
  if (m.spec.equation == Equation::nkg) return 0.5 * cap;
  const double h = m.grid->min_dx();
  return std::min({0.5 * h * h, 1e-2, cap});
}

namespace detail {

inline void check_dt(double dt, const ModelOnGrid& m) {
  if (!(dt > 0.0)) throw ConfigError("evolve: dt must be positive");
  const double cap = dt_limit(m);
  if (dt > cap * (1.0 + 1e-12))
    throw ConfigError("evolve: dt = " + std::to_string(dt) +
                      " exceeds the step limit " + std::to_string(cap) +
                      " for this model and grid");
}

inline void check_same_grid(const GridPtr& state_grid, const ModelOnGrid& m,
                            const char* who) {
  if (state_grid.get() != m.grid.get())
    throw UsageError(std::string(who) +
                     ": state grid differs from the model grid");
}

/// Exact flow of the pointwise part i psi_t = (q + W'(|psi|)/(2|psi|)) psi
/// over time tau. The generator is real and multiplicative, so |psi| is
/// invariant along it and evaluating the factor at the initial modulus is
/// not an approximation.
inline void nse_phase(ComplexField& psi, double tau, const ModelOnGrid& m) {
  const Nonlinearity& nl = m.spec.nonlin;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double s = std::abs(psi.v[i]);
    const double gen = m.qpot.v[i] + 0.5 * eval_Wprime_over_s(nl, s);
    psi.v[i] *= std::polar(1.0, -tau * gen);
  }
}

/// Full linear substep exp(+i dt Laplacian / 2) along one periodic axis,
/// applied through the exact Fourier symbol so plane waves pick up their
/// continuum dispersion phase to machine precision. Mode moduli are
/// untouched, hence the charge is conserved to roundoff.
inline void nse_linear_periodic(ComplexField& psi, std::size_t a, double dt) {
  const Grid& g = *psi.grid;
  const AxisGeom& ax = g.axis(a);
  const std::size_t n = static_cast<std::size_t>(ax.n);
  fft_axis(psi, a, FFTW_FORWARD);
  std::vector<cplx> factor(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double k = wavenumber(ax, static_cast<int>(j));
    // the 1/n of the inverse transform is folded into the symbol
    factor[j] = std::polar(1.0 / static_cast<double>(n), -0.5 * dt * k * k);
  }
  for_each_line(g, a, [&](std::size_t base, std::size_t s, double) {
    for (std::size_t j = 0; j < n; ++j) psi.v[base + j * s] *= factor[j];
  });
  fft_axis(psi, a, FFTW_BACKWARD);
}

/// Crank-Nicolson substep for the same generator on a dirichlet or radial
/// axis, built from the face conductances of the flux Laplacian. The update
/// is the Cayley transform of a skew-adjoint operator in the quadrature
/// inner product, so it is unitary: the charge survives to solver roundoff
/// and the scheme is unconditionally stable.
inline void nse_linear_cn(ComplexField& psi, std::size_t a, double dt) {
  const Grid& g = *psi.grid;
  const AxisGeom& ax = g.axis(a);
  const std::size_t n = static_cast<std::size_t>(ax.n);
  const cplx z(0.0, dt / 4.0);  // (dt/2) * (i/2)
  std::vector<double> lo(n), di(n), up(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = i > 0 ? ax.fc[i] / ax.w[i] : 0.0;
    up[i] = i + 1 < n ? ax.fc[i + 1] / ax.w[i] : 0.0;
    di[i] = -(ax.fc[i] + ax.fc[i + 1]) / ax.w[i];
  }
  std::vector<cplx> rhs(n), cp(n);
  for_each_line(g, a, [&](std::size_t base, std::size_t s, double) {
    for (std::size_t i = 0; i < n; ++i) {
      const cplx pc = psi.v[base + i * s];
      const cplx pm = i > 0 ? psi.v[base + (i - 1) * s] : cplx{};
      const cplx pp = i + 1 < n ? psi.v[base + (i + 1) * s] : cplx{};
      rhs[i] = pc + z * (lo[i] * pm + di[i] * pc + up[i] * pp);
    }
    // Thomas sweep for (I - z L); strictly diagonally dominant since the
    // diagonal is 1 + imaginary while the couplings are purely imaginary.
    cplx den = 1.0 - z * di[0];
    cp[0] = (-z * up[0]) / den;
    rhs[0] /= den;
    for (std::size_t i = 1; i < n; ++i) {
      const cplx sub = -z * lo[i];
      den = (1.0 - z * di[i]) - sub * cp[i - 1];
      cp[i] = (-z * up[i]) / den;
      rhs[i] = (rhs[i] - sub * rhs[i - 1]) / den;
    }
    psi.v[base + (n - 1) * s] = rhs[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
      psi.v[base + i * s] = rhs[i] - cp[i] * psi.v[base + (i + 1) * s];
  });
}

inline ComplexField nkg_force(const ComplexField& psi, const ModelOnGrid& m) {
  ComplexField f = laplacian(psi);
  const Nonlinearity& nl = m.spec.nonlin;
  for (std::size_t i = 0; i < f.size(); ++i)
    f.v[i] -= eval_Wprime_over_s(nl, std::abs(psi.v[i])) * psi.v[i];
  return f;
}

}  // namespace detail

// ---- single steps --------------------------------------------------------

/// One Strang step of i psi_t = -Laplacian psi / 2 + q psi + W'(psi)/2:
/// half a pointwise phase rotation, one full linear substep per axis, half a
/// phase rotation again. The per-axis linear factors commute exactly on a
/// tensor grid, so their composition order does not matter.
inline void step_nse(ComplexField& psi, double dt, const ModelOnGrid& m) {
  if (m.spec.equation == Equation::nkg)
    throw UsageError("step_nse: the model is a Klein-Gordon model");
  detail::check_same_grid(psi.grid, m, "step_nse");
  detail::check_dt(dt, m);
  detail::nse_phase(psi, 0.5 * dt, m);
  const Grid& g = *psi.grid;
  for (std::size_t a = 0; a < g.naxes(); ++a) {
    if (g.axis(a).bc == Boundary::periodic)
      detail::nse_linear_periodic(psi, a, dt);
    else
      detail::nse_linear_cn(psi, a, dt);
  }
  detail::nse_phase(psi, 0.5 * dt, m);
}

/// One velocity-Verlet (leapfrog) step of psi_tt = Laplacian psi - W'(psi):
/// half kick, drift, half kick. Exactly time-reversal symmetric: negating
/// psi_hat and stepping again retraces the trajectory bitwise up to rounding.
inline void step_nkg(NKGState& st, double dt, const ModelOnGrid& m) {
  if (m.spec.equation != Equation::nkg)
    throw UsageError("step_nkg: the model is not a Klein-Gordon model");
  detail::check_same_grid(st.psi.grid, m, "step_nkg");
  detail::check_dt(dt, m);
  ComplexField f = detail::nkg_force(st.psi, m);
  axpy(0.5 * dt, f, st.psi_hat);
  axpy(dt, st.psi_hat, st.psi);
  f = detail::nkg_force(st.psi, m);
  axpy(0.5 * dt, f, st.psi_hat);
}

namespace detail {
inline void advance(ComplexField& st, double dt, const ModelOnGrid& m) {
  step_nse(st, dt, m);
}
inline void advance(NKGState& st, double dt, const ModelOnGrid& m) {
  step_nkg(st, dt, m);
}
}  // namespace detail

// ---- orbit distance ------------------------------------------------------

namespace detail {

/// Inner products <T_k ref, state> for every integer shift k along the
/// periodic axes, conjugate-linear in ref. weight = 0 pairs in L2;
/// weight = 1 applies the spectral H1 factor 1 + |kappa|^2 per mode.
/// Computed as a circular cross-correlation through the FFT; non-periodic
/// directions are collapsed with their quadrature weights.
struct ShiftCorr {
  std::vector<cplx> corr;        // flattened over the periodic axes
  std::vector<std::size_t> pax;  // periodic axis ids, ascending
  std::vector<int> dims;         // their sizes
};

inline ShiftCorr shift_correlation(const ComplexField& state,
                                   const ComplexField& ref, int weight) {
  const Grid& g = *state.grid;
  ShiftCorr out;
  for (std::size_t a = 0; a < g.naxes(); ++a)
    if (g.axis(a).bc == Boundary::periodic) {
      out.pax.push_back(a);
      out.dims.push_back(g.axis(a).n);
    }
  if (out.pax.empty()) {
    out.corr = {cdot(ref, state)};
    return out;
  }
  ComplexField fs = state;
  ComplexField fr = ref;
  for (std::size_t a : out.pax) {
    fft_axis(fs, a, FFTW_FORWARD);
    fft_axis(fr, a, FFTW_FORWARD);
  }
  std::vector<int> idx;
  if (weight == 1) {
    for (std::size_t i = 0; i < fs.size(); ++i) {
      g.unflatten(i, idx);
      double k2 = 0.0;
      for (std::size_t a : out.pax) {
        const double k = wavenumber(g.axis(a), idx[a]);
        k2 += k * k;
      }
      fs.v[i] *= (1.0 + k2) * std::conj(fr.v[i]);
    }
  } else {
    for (std::size_t i = 0; i < fs.size(); ++i) fs.v[i] *= std::conj(fr.v[i]);
  }
  for (std::size_t a : out.pax) fft_axis(fs, a, FFTW_BACKWARD);
  double cell_over_n = 1.0;  // dx product / mode count, periodic axes only
  for (std::size_t a : out.pax)
    cell_over_n *= g.axis(a).dx / static_cast<double>(g.axis(a).n);
  std::size_t nshift = 1;
  for (int d : out.dims) nshift *= static_cast<std::size_t>(d);
  out.corr.assign(nshift, cplx{});
  for (std::size_t i = 0; i < fs.size(); ++i) {
    g.unflatten(i, idx);
    std::size_t sh = 0;
    double wperp = 1.0;
    for (std::size_t a = 0, p = 0; a < g.naxes(); ++a) {
      if (p < out.pax.size() && a == out.pax[p]) {
        sh = sh * static_cast<std::size_t>(out.dims[p]) +
             static_cast<std::size_t>(idx[a]);
        ++p;
      } else {
        wperp *= g.axis(a).w[idx[a]];
      }
    }
    out.corr[sh] += (cell_over_n * wperp) * fs.v[i];
  }
  return out;
}

/// ||f||^2 in the spectral H1 metric (fully periodic grids).
inline double spectral_h1_sq(const ComplexField& f) {
  const Grid& g = *f.grid;
  ComplexField ff = f;
  double cell_over_n = 1.0;
  for (std::size_t a = 0; a < g.naxes(); ++a) {
    fft_axis(ff, a, FFTW_FORWARD);
    cell_over_n *= g.axis(a).dx / static_cast<double>(g.axis(a).n);
  }
  std::vector<int> idx;
  double acc = 0.0;
  for (std::size_t i = 0; i < ff.size(); ++i) {
    g.unflatten(i, idx);
    double k2 = 0.0;
    for (std::size_t a = 0; a < g.naxes(); ++a) {
      const double k = wavenumber(g.axis(a), idx[a]);
      k2 += k * k;
    }
    acc += (1.0 + k2) * std::norm(ff.v[i]);
  }
  return cell_over_n * acc;
}

}  // namespace detail

/// Best alignment of a state with the group orbit of a reference: minimizes
/// the metric distance over integer lattice shifts along the periodic axes
/// and a global phase, both found from the peak of the cross-correlation.
struct OrbitalAlignment {
  double distance = 0.0;   // relative to the reference norm
  double phase = 0.0;      // optimal global phase angle
  std::vector<int> cells;  // optimal shift; zero on non-periodic axes
  std::string metric;      // which norm the distance is measured in
};

/// Schroedinger states: relative distance in L2. The correlation peak only
/// locates the optimal shift and phase; the distance is then evaluated on
/// the explicit difference field, because the quadratic-form shortcut
/// ||a||^2 + ||b||^2 - 2|corr| cancels catastrophically and floors near
/// sqrt(machine epsilon) times the norm.
inline OrbitalAlignment orbital_align(const ComplexField& state,
                                      const ComplexField& ref) {
  detail::ShiftCorr sc = detail::shift_correlation(state, ref, 0);
  std::size_t best = 0;
  double bv = -1.0;
  for (std::size_t i = 0; i < sc.corr.size(); ++i) {
    const double v = std::abs(sc.corr[i]);
    if (v > bv) {
      bv = v;
      best = i;
    }
  }
  OrbitalAlignment out;
  out.phase = std::arg(sc.corr[best]);
  out.cells.assign(state.grid->naxes(), 0);
  for (std::size_t p = sc.pax.size(); p-- > 0;) {
    out.cells[sc.pax[p]] =
        static_cast<int>(best % static_cast<std::size_t>(sc.dims[p]));
    best /= static_cast<std::size_t>(sc.dims[p]);
  }
  ComplexField diff = shift(ref, out.cells);
  const cplx rot = std::polar(1.0, out.phase);
  for (std::size_t i = 0; i < diff.size(); ++i)
    diff.v[i] = state.v[i] - rot * diff.v[i];
  out.distance = norm_l2(diff) / std::max(norm_l2(ref), 1e-300);
  out.metric = "L2";
  return out;
}

/// Klein-Gordon pairs: H1 x L2 on fully periodic grids (the natural energy
/// metric, evaluated spectrally so the correlation and the norms agree
/// exactly); otherwise L2 x L2. Both components share one phase and shift.
inline OrbitalAlignment orbital_align(const NKGState& state,
                                      const NKGState& ref) {
  const Grid& g = *state.psi.grid;
  const bool spectral = g.fully_periodic();
  detail::ShiftCorr cp =
      detail::shift_correlation(state.psi, ref.psi, spectral ? 1 : 0);
  detail::ShiftCorr ch =
      detail::shift_correlation(state.psi_hat, ref.psi_hat, 0);
  std::size_t best = 0;
  double bv = -1.0;
  for (std::size_t i = 0; i < cp.corr.size(); ++i) {
    const double v = std::abs(cp.corr[i] + ch.corr[i]);
    if (v > bv) {
      bv = v;
      best = i;
    }
  }
  OrbitalAlignment out;
  out.phase = std::arg(cp.corr[best] + ch.corr[best]);
  out.cells.assign(g.naxes(), 0);
  for (std::size_t p = cp.pax.size(); p-- > 0;) {
    out.cells[cp.pax[p]] =
        static_cast<int>(best % static_cast<std::size_t>(cp.dims[p]));
    best /= static_cast<std::size_t>(cp.dims[p]);
  }
  // evaluate the distance on the explicit difference (see the L2 overload)
  ComplexField dpsi = shift(ref.psi, out.cells);
  ComplexField dhat = shift(ref.psi_hat, out.cells);
  const cplx rot = std::polar(1.0, out.phase);
  for (std::size_t i = 0; i < dpsi.size(); ++i) {
    dpsi.v[i] = state.psi.v[i] - rot * dpsi.v[i];
    dhat.v[i] = state.psi_hat.v[i] - rot * dhat.v[i];
  }
  double d2, nr;
  if (spectral) {
    d2 = detail::spectral_h1_sq(dpsi) + dot(dhat, dhat);
    nr = detail::spectral_h1_sq(ref.psi) + dot(ref.psi_hat, ref.psi_hat);
  } else {
    d2 = dot(dpsi, dpsi) + dot(dhat, dhat);
    nr = state_dot(ref, ref);
  }
  out.distance = std::sqrt(std::max(0.0, d2)) / std::sqrt(std::max(nr, 1e-300));
  out.metric = spectral ? "H1xL2" : "L2xL2";
  return out;
}

// ---- monitored evolution -------------------------------------------------

/// Reference data for the monitored flow: the conserved pair (e0, c0) and a
/// state realizing it. evolve_and_monitor checks the pair against the
/// reference to 1e-6 relative before running.
template <class State>
struct GammaParams {
  double e0 = 0.0;
  double c0 = 0.0;  // |C| of the reference
  State reference;
};

struct EvolutionReport {
  std::vector<double> times;
  std::vector<double> E_series;
  std::vector<double> C_series;  // signed charge as computed
  std::vector<double> V_series;  // (E - e0)^2 + (|C| - c0)^2
  std::vector<double> orbital_distance_series;
  double max_phase_deviation = 0.0;
  double reversibility_defect = 0.0;
  bool diverged = false;
  std::string distance_metric;
  std::string diagnostic;
};

/// Integrates the flow from `init` for total_time and samples the conserved
/// quantities, the Lyapunov-style monitor V, and the orbit distance to the
/// reference on roughly `samples` evenly spaced steps (always including the
/// first and the last). A non-finite state ends the run early with the
/// partial series and the diverged flag set.
template <class State>
EvolutionReport evolve_and_monitor(const State& init, double total_time,
                                   double dt, const ModelOnGrid& m,
                                   const GammaParams<State>& gamma,
                                   int samples = 200) {
  detail::check_dt(dt, m);
  if (!(total_time > 0.0))
    throw ConfigError("evolve: total time must be positive");
  if (samples < 1) throw ConfigError("evolve: sample count must be positive");
  {
    const FunctionalValue fr = evaluate_all(gamma.reference, m);
    const double de = std::abs(fr.E - gamma.e0);
    const double dc = std::abs(std::abs(fr.C) - gamma.c0);
    if (de > 1e-6 * (1.0 + std::abs(gamma.e0)) ||
        dc > 1e-6 * (1.0 + std::abs(gamma.c0)))
      throw UsageError(
          "gamma: reference state does not realize (e0, c0) to 1e-6: "
          "E = " +
          std::to_string(fr.E) + ", |C| = " + std::to_string(std::abs(fr.C)));
  }
  const long steps =
      std::max<long>(1, std::lround(std::ceil(total_time / dt - 1e-9)));
  const long stride = std::max<long>(1, steps / samples);
  EvolutionReport rep;
  State st = init;
  const auto sample = [&](long k) -> bool {
    if (!state_finite(st)) {
      rep.diverged = true;
      rep.diagnostic =
          "state lost finiteness near t = " + std::to_string(k * dt);
      return false;
    }
    const FunctionalValue fv = evaluate_all(st, m);
    const OrbitalAlignment al = orbital_align(st, gamma.reference);
    if (!std::isfinite(fv.E) || !std::isfinite(fv.C) ||
        !std::isfinite(al.distance)) {
      rep.diverged = true;
      rep.diagnostic =
          "functionals lost finiteness near t = " + std::to_string(k * dt);
      return false;
    }
    const double de = fv.E - gamma.e0;
    const double dc = std::abs(fv.C) - gamma.c0;
    rep.times.push_back(k * dt);
    rep.E_series.push_back(fv.E);
    rep.C_series.push_back(fv.C);
    rep.V_series.push_back(de * de + dc * dc);
    rep.orbital_distance_series.push_back(al.distance);
    rep.distance_metric = al.metric;
    return true;
  };
  if (!sample(0)) return rep;
  for (long k = 1; k <= steps; ++k) {
    detail::advance(st, dt, m);
    if (k % stride == 0 || k == steps)
      if (!sample(k)) return rep;
  }
  return rep;
}

// ---- standing-wave and reversibility checks ------------------------------

/// Integrates from `init` and returns the largest sampled relative deviation
/// from the rigidly rotating profile e^{-i omega t} init. For the right
/// omega this measures how well the state is a standing wave under the
/// discrete flow; for a wrong omega it is O(1).
inline double standing_wave_check(const ComplexField& init, double omega,
                                  double total_time, double dt,
                                  const ModelOnGrid& m) {
  detail::check_dt(dt, m);
  const long steps =
      std::max<long>(1, std::lround(std::ceil(total_time / dt - 1e-9)));
  const long stride = std::max<long>(1, steps / 1000);
  ComplexField st = init;
  const double n0 = std::max(norm_l2(init), 1e-300);
  const auto& w = st.grid->weights();
  double worst = 0.0;
  for (long k = 1; k <= steps; ++k) {
    detail::advance(st, dt, m);
    if (k % stride == 0 || k == steps) {
      if (!state_finite(st)) return std::numeric_limits<double>::infinity();
      const cplx rot = std::polar(1.0, -omega * k * dt);
      const double acc =
          detail::pairwise_reduce(0, st.size(), [&](std::size_t i) {
            return w[i] * std::norm(st.v[i] - rot * init.v[i]);
          });
      worst = std::max(worst, std::sqrt(std::max(0.0, acc)) / n0);
    }
  }
  return worst;
}

/// Klein-Gordon variant: both components must rotate with the same phase.
inline double standing_wave_check(const NKGState& init, double omega,
                                  double total_time, double dt,
                                  const ModelOnGrid& m) {
  detail::check_dt(dt, m);
  const long steps =
      std::max<long>(1, std::lround(std::ceil(total_time / dt - 1e-9)));
  const long stride = std::max<long>(1, steps / 1000);
  NKGState st = init;
  const double n0 = std::max(state_norm(init), 1e-300);
  const auto& w = st.psi.grid->weights();
  double worst = 0.0;
  for (long k = 1; k <= steps; ++k) {
    detail::advance(st, dt, m);
    if (k % stride == 0 || k == steps) {
      if (!state_finite(st)) return std::numeric_limits<double>::infinity();
      const cplx rot = std::polar(1.0, -omega * k * dt);
      const double acc =
          detail::pairwise_reduce(0, st.psi.size(), [&](std::size_t i) {
            return w[i] * (std::norm(st.psi.v[i] - rot * init.psi.v[i]) +
                           std::norm(st.psi_hat.v[i] - rot * init.psi_hat.v[i]));
          });
      worst = std::max(worst, std::sqrt(std::max(0.0, acc)) / n0);
    }
  }
  return worst;
}

/// Forward `steps` steps, flip the velocity, forward the same number again,
/// flip back; the leapfrog is exactly time-reversal symmetric, so anything
/// nonzero here is accumulated floating-point noise.
inline double time_reversal_defect(const NKGState& init, long steps, double dt,
                                   const ModelOnGrid& m) {
  NKGState st = init;
  for (long k = 0; k < steps; ++k) step_nkg(st, dt, m);
  scale(st.psi_hat, -1.0);
  for (long k = 0; k < steps; ++k) step_nkg(st, dt, m);
  scale(st.psi_hat, -1.0);
  axpy(-1.0, init, st);
  return state_norm(st) / std::max(state_norm(init), 1e-300);
}

// ---- vortex lift ---------------------------------------------------------

/// A planar vortex profile lifted to three dimensions.
struct LiftedVortex {
  ComplexField psi;    // u(r, x3) e^{i ell theta} on the target grid
  double m3 = 0.0;     // angular momentum about the axis: -ell * int u^2
  double omega = 0.0;  // frequency carried through for reporting
};

/// Lifts a nonnegative profile u on a cylindrical (r, x3) grid to
/// psi = u e^{i ell theta} on a 3-D cartesian grid, interpolating bilinearly
/// in (r, x3). Inside the first radial cell the profile is taken linear to
/// zero at the axis when ell != 0 (constant when ell = 0); outside the last
/// cell center it tapers linearly to zero at the wall. For ell != 0 the
/// profile must already vanish at the axis or the lift would manufacture a
/// phase singularity on a nonzero modulus, which is rejected.
inline LiftedVortex lift_vortex(const RealField& u, int ell, double omega,
                                const GridPtr& target) {
  const Grid& gc = *u.grid;
  if (gc.kind() != GridKind::cylindrical || gc.naxes() != 2)
    throw UsageError("lift_vortex: profile must live on a cylindrical (r, x3) grid");
  const Grid& g3 = *target;
  if (g3.kind() != GridKind::cartesian || g3.naxes() != 3)
    throw UsageError("lift_vortex: target must be a 3-D cartesian grid");
  double umax = 0.0, umin = 0.0;
  for (double s : u.v) {
    umax = std::max(umax, s);
    umin = std::min(umin, s);
  }
  if (umin < -1e-10 * std::max(1.0, umax))
    throw UsageError("lift_vortex: profile must be nonnegative");
  const AxisGeom& ar = gc.axis(0);
  const AxisGeom& az = gc.axis(1);
  const std::size_t sr = gc.stride(0);
  const std::size_t sz = gc.stride(1);
  const std::size_t nr = static_cast<std::size_t>(ar.n);
  const std::size_t nz = static_cast<std::size_t>(az.n);
  if (ell != 0 && umax > 0.0) {
    double rms = 0.0;
    for (std::size_t j = 0; j < nz; ++j) {
      const double v = u.v[j * sz];  // first radial ring
      rms += v * v;
    }
    rms = std::sqrt(rms / static_cast<double>(nz));
    if (rms > 0.1 * umax)
      throw UsageError(
          "lift_vortex: ell != 0 but the profile does not vanish at the "
          "axis (first-ring rms " +
          std::to_string(rms) + " vs max " + std::to_string(umax) + ")");
  }

  // per-axis supports: at most two (index, weight) pairs, empty when the
  // point falls outside the tapered range
  struct Support {
    int i0 = 0, i1 = -1;
    double w0 = 0.0, w1 = 0.0;
  };
  const auto radial = [&](double rq) {
    Support s;
    if (rq >= ar.hi) return s;
    if (rq <= ar.x[0]) {
      s.i0 = 0;
      s.w0 = ell == 0 ? 1.0 : rq / ar.x[0];
      return s;
    }
    if (rq >= ar.x[nr - 1]) {
      s.i0 = static_cast<int>(nr) - 1;
      s.w0 = (ar.hi - rq) / (ar.hi - ar.x[nr - 1]);
      return s;
    }
    const double t = (rq - ar.x[0]) / ar.dx;
    const int i = std::min(static_cast<int>(t), static_cast<int>(nr) - 2);
    s.i0 = i;
    s.i1 = i + 1;
    s.w1 = t - i;
    s.w0 = 1.0 - s.w1;
    return s;
  };
  const auto axial = [&](double zq) {
    Support s;
    if (az.bc == Boundary::periodic) {
      double t = (zq - az.lo) / az.dx;
      t -= std::floor(t / static_cast<double>(nz)) * static_cast<double>(nz);
      int j = static_cast<int>(t);
      if (j >= static_cast<int>(nz)) j = 0;
      s.i0 = j;
      s.i1 = (j + 1) % static_cast<int>(nz);
      s.w1 = t - j;
      s.w0 = 1.0 - s.w1;
      return s;
    }
    if (zq <= az.lo || zq >= az.hi) return s;
    if (zq <= az.x[0]) {
      s.i0 = 0;
      s.w0 = (zq - az.lo) / (az.x[0] - az.lo);
      return s;
    }
    if (zq >= az.x[nz - 1]) {
      s.i0 = static_cast<int>(nz) - 1;
      s.w0 = (az.hi - zq) / (az.hi - az.x[nz - 1]);
      return s;
    }
    const double t = (zq - az.x[0]) / az.dx;
    const int j = std::min(static_cast<int>(t), static_cast<int>(nz) - 2);
    s.i0 = j;
    s.i1 = j + 1;
    s.w1 = t - j;
    s.w0 = 1.0 - s.w1;
    return s;
  };
  const auto profile = [&](double rq, double zq) -> double {
    const Support a = radial(rq);
    if (a.w0 == 0.0 && a.i1 < 0) return 0.0;
    const Support b = axial(zq);
    if (b.w0 == 0.0 && b.i1 < 0) return 0.0;
    double val = 0.0;
    val += a.w0 * b.w0 * u.v[static_cast<std::size_t>(a.i0) * sr +
                             static_cast<std::size_t>(b.i0) * sz];
    if (b.i1 >= 0)
      val += a.w0 * b.w1 * u.v[static_cast<std::size_t>(a.i0) * sr +
                               static_cast<std::size_t>(b.i1) * sz];
    if (a.i1 >= 0) {
      val += a.w1 * b.w0 * u.v[static_cast<std::size_t>(a.i1) * sr +
                               static_cast<std::size_t>(b.i0) * sz];
      if (b.i1 >= 0)
        val += a.w1 * b.w1 * u.v[static_cast<std::size_t>(a.i1) * sr +
                                 static_cast<std::size_t>(b.i1) * sz];
    }
    return val;
  };

  LiftedVortex out{ComplexField(target), -ell * dot(u, u), omega};
  std::vector<int> idx;
  for (std::size_t i = 0; i < out.psi.size(); ++i) {
    g3.unflatten(i, idx);
    const double x = g3.axis(0).x[idx[0]];
    const double y = g3.axis(1).x[idx[1]];
    const double zq = g3.axis(2).x[idx[2]];
    const double rq = std::hypot(x, y);
    const double val = profile(rq, zq);
    out.psi.v[i] =
        val == 0.0 ? cplx{} : val * std::polar(1.0, ell * std::atan2(y, x));
  }
  return out;
}

}  // namespace hylo
