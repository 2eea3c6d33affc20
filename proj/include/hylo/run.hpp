#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hylo/config.hpp"
#include "hylo/errors.hpp"
#include "hylo/evolve.hpp"
#include "hylo/functionals.hpp"
#include "hylo/grid.hpp"
#include "hylo/hylomorphy.hpp"
#include "hylo/minimize.hpp"
#include "hylo/model.hpp"
#include "hylo/snapshot.hpp"

// Workflow orchestration: the four subcommand entry points. Each run_*
// writes its artifacts under the configured output directory and returns
// the process exit status: 0 success, 1 configuration or usage error,
// 2 numerical failure (non-convergence, divergence, failed property).
// Errors are reported as a single-line JSON object on the error stream.
//
// Artifacts:
//   solve   report.json, trace.csv, trace-constrained.csv,
//           fields/minimizer.snap(+.json), fields/constrained.snap(+.json)
//   evolve  report.json, series.csv, fields/reference.snap,
//           optional fields/step-NNNNNN.snap every snapshot-every steps
//   verify  report.json (property list: name, measured, bound, pass)
//   testfn  report.json, series.csv (parameter, lambda)
//
// No artifact contains a timestamp: with deterministic = true and a fixed
// seed, two runs produce byte-identical outputs.

namespace hylo {

namespace detail {

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void emit_error_json(std::ostream& err, const std::string& command,
                            const std::string& type, const std::string& msg) {
  nlohmann::json j;
  j["error"] = {{"command", command}, {"type", type}, {"message", msg}};
  err << j.dump() << std::endl;
}

template <class Fn>
int guarded(const std::string& command, std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    emit_error_json(err, command, "config", e.what());
    return 1;
  } catch (const UsageError& e) {
    emit_error_json(err, command, "usage", e.what());
    return 1;
  } catch (const NumericalError& e) {
    emit_error_json(err, command, "numerical", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error_json(err, command, "internal", e.what());
    return 2;
  }
}

inline void write_json_file(const std::string& path,
                            const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw UsageError("run: cannot write '" + path + "'");
  os << j.dump(2) << '\n';
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<TraceEntry>& trace) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw UsageError("run: cannot write '" + path + "'");
  os << "iter,objective,gradnorm\n";
  for (const TraceEntry& t : trace)
    os << t.iter << ',' << fmt17(t.objective) << ',' << fmt17(t.grad_norm)
       << '\n';
}

inline std::uint64_t resolve_seed(const RunConfig& cfg) {
  if (cfg.deterministic) return cfg.rng_seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

inline std::string equation_name(Equation eq) {
  switch (eq) {
    case Equation::nse: return "nse";
    case Equation::nse_vortex: return "nse-vortex";
    default: return "nkg";
  }
}

inline nlohmann::json grid_json(const Grid& g) {
  nlohmann::json axes = nlohmann::json::array();
  for (std::size_t a = 0; a < g.naxes(); ++a) {
    const AxisGeom& ax = g.axis(a);
    axes.push_back({{"lo", ax.lo},
                    {"hi", ax.hi},
                    {"points", ax.n},
                    {"boundary", boundary_name(ax.bc)}});
  }
  return {{"kind", g.kind() == GridKind::cylindrical ? "cylindrical"
                                                     : "cartesian"},
          {"axes", axes}};
}

inline nlohmann::json hylomorphy_json(const HylomorphyReport& h) {
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& [par, lam] : h.sweep) sweep.push_back({par, lam});
  return {{"lambda0-proxy", h.lambda0_proxy},
          {"best-test-lambda", h.best_test_lambda},
          {"best-parameter", h.best_parameter},
          {"verdict", h.verdict},
          {"s0-used", h.s0_used},
          {"sweep", sweep}};
}

template <class State>
nlohmann::json minimize_json(const MinimizeReport<State>& r) {
  return {{"converged", r.converged},
          {"e-delta", r.e_delta},
          {"c-delta", r.c_delta},
          {"omega", r.omega},
          {"lambda", r.lambda_value},
          {"el-residual", r.el_residual},
          {"iterations",
           r.trace.empty() ? 0 : r.trace.back().iter},
          {"diagnostic", r.diagnostic}};
}

// ---- state construction --------------------------------------------------

inline ComplexField complex_of(const RealField& u) {
  ComplexField p(u.grid);
  for (std::size_t i = 0; i < u.v.size(); ++i) p.v[i] = u.v[i];
  return p;
}

/// Axis-aligned gaussian bump, product over axes; centers outside the
/// domain are admitted (the tail is what remains inside).
inline RealField gaussian_bump(const GridPtr& g,
                               const std::vector<double>& center,
                               double width, double amp) {
  RealField f(g);
  std::vector<int> idx;
  for (std::size_t i = 0; i < f.v.size(); ++i) {
    g->unflatten(i, idx);
    double q = 0.0;
    for (std::size_t a = 0; a < g->naxes(); ++a) {
      const double dx =
          g->axis(a).x[static_cast<std::size_t>(idx[a])] - center[a];
      q += dx * dx;
    }
    f.v[i] = amp * std::exp(-q / (2.0 * width * width));
  }
  return f;
}

/// Compactly supported product bump: per axis (1 - |dx|/w)^2 inside |dx| < w,
/// zero outside. Disjoint supports give an exactly additive energy.
inline RealField hat_bump(const GridPtr& g, const std::vector<double>& center,
                          double width, double amp) {
  RealField f(g);
  std::vector<int> idx;
  for (std::size_t i = 0; i < f.v.size(); ++i) {
    g->unflatten(i, idx);
    double prod = amp;
    for (std::size_t a = 0; a < g->naxes(); ++a) {
      const double dx = std::abs(
          g->axis(a).x[static_cast<std::size_t>(idx[a])] - center[a]);
      const double h = dx < width ? (1.0 - dx / width) : 0.0;
      prod *= h * h;
    }
    f.v[i] = prod;
  }
  return f;
}

inline std::vector<double> box_center(const Grid& g) {
  std::vector<double> c(g.naxes());
  for (std::size_t a = 0; a < g.naxes(); ++a)
    c[a] = g.axis(a).radial ? 0.0
                            : 0.5 * (g.axis(a).lo + g.axis(a).hi);
  return c;
}

/// Smooth random field: a fixed number of random gaussian bumps summed and
/// rescaled so that max |f| = amp. Deterministic in the seed; works on any
/// grid kind.
inline RealField random_smooth(const GridPtr& g, std::uint64_t seed,
                               double amp) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RealField f(g);
  const std::size_t nb = 12;
  for (std::size_t b = 0; b < nb; ++b) {
    std::vector<double> c(g->naxes());
    double wmin = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < g->naxes(); ++a) {
      const AxisGeom& ax = g->axis(a);
      const double L = ax.hi - ax.lo;
      // keep centers inside the middle 70% so dirichlet walls stay quiet
      c[a] = ax.lo + L * (0.15 + 0.7 * unit(rng));
      wmin = std::min(wmin, L);
    }
    const double w = wmin * (0.04 + 0.06 * unit(rng));
    const double s = unit(rng) < 0.5 ? -1.0 : 1.0;
    RealField bump = gaussian_bump(g, c, w, s);
    for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] += bump.v[i];
  }
  double mx = 0.0;
  for (double x : f.v) mx = std::max(mx, std::abs(x));
  if (mx > 0.0)
    for (double& x : f.v) x *= amp / mx;
  return f;
}

inline ComplexField random_smooth_complex(const GridPtr& g,
                                          std::uint64_t seed, double amp) {
  RealField re = random_smooth(g, seed, 1.0);
  RealField im = random_smooth(g, seed ^ 0x9e3779b97f4a7c15ULL, 1.0);
  ComplexField f(g);
  double mx = 0.0;
  for (std::size_t i = 0; i < f.v.size(); ++i) {
    f.v[i] = cplx(re.v[i], im.v[i]);
    mx = std::max(mx, std::abs(f.v[i]));
  }
  if (mx > 0.0)
    for (cplx& z : f.v) z *= amp / mx;
  return f;
}

inline ComplexField nse_initial_state(const RunConfig& cfg,
                                      const GridPtr& g) {
  return complex_of(gaussian_bump(g, box_center(*g), cfg.init.width,
                                  cfg.init.amp));
}

inline RealField vortex_initial_state(const RunConfig& cfg, const GridPtr& g,
                                      int ell) {
  const AxisGeom& rax = g->axis(0);
  const AxisGeom& zax = g->axis(1);
  const double w = cfg.init.width;
  const double zc = 0.5 * (zax.lo + zax.hi);
  const int l = std::abs(ell);
  RealField u(g);
  if (cfg.init.shape == "ring") {
    const double r0 = 2.0 * w;
    for (int i = 0; i < rax.n; ++i)
      for (int j = 0; j < zax.n; ++j) {
        const double r = rax.x[static_cast<std::size_t>(i)];
        const double z = zax.x[static_cast<std::size_t>(j)] - zc;
        const double rad = std::pow(r / r0, l);
        u.v[static_cast<std::size_t>(i) * g->stride(0) +
            static_cast<std::size_t>(j)] =
            cfg.init.amp * rad *
            std::exp(-((r - r0) * (r - r0) + z * z) / (2.0 * w * w));
      }
    return u;
  }
  // gaussian with the r^l prefactor the winding demands; peak rescaled to amp
  const double peak =
      l > 0 ? std::pow(static_cast<double>(l), 0.5 * l) * std::exp(-0.5 * l)
            : 1.0;
  for (int i = 0; i < rax.n; ++i)
    for (int j = 0; j < zax.n; ++j) {
      const double r = rax.x[static_cast<std::size_t>(i)];
      const double z = zax.x[static_cast<std::size_t>(j)] - zc;
      u.v[static_cast<std::size_t>(i) * g->stride(0) +
          static_cast<std::size_t>(j)] =
          (cfg.init.amp / peak) * std::pow(r / w, l) *
          std::exp(-(r * r + z * z) / (2.0 * w * w));
    }
  return u;
}

inline NKGState nkg_initial_state(const RunConfig& cfg, const GridPtr& g) {
  ComplexField psi = complex_of(
      gaussian_bump(g, box_center(*g), cfg.init.width, cfg.init.amp));
  ComplexField psih = psi;
  for (cplx& z : psih.v) z *= cplx(0.0, -cfg.init.omega);
  return {std::move(psi), std::move(psih)};
}

// ---- plateau warm start ---------------------------------------------------

/// One member of the explicit test family, in the state type of the run.
template <class State>
State family_state(const ModelOnGrid& m, double par, double s0) {
  if constexpr (std::is_same_v<State, RealField>) {
    return torus_test_function(par, s0, m.grid);
  } else if constexpr (std::is_same_v<State, ComplexField>) {
    return complex_of(plateau_test_function(par, s0, m.grid));
  } else {
    const RealField u = plateau_test_function(par, s0, m.grid);
    const double beta = nkg_test_beta(m.spec.nonlin, s0);
    NKGState st{ComplexField(m.grid), ComplexField(m.grid)};
    for (std::size_t i = 0; i < u.v.size(); ++i) {
      st.psi.v[i] = u.v[i];
      st.psi_hat.v[i] = cplx(0.0, -beta) * u.v[i];
    }
    return st;
  }
}

/// init = plateau starts the descent at the J_delta argmin of the swept test
/// family, which sits near the optimal charge instead of crawling toward it
/// along the flat valley.
template <class State>
State family_warm_start(const ModelOnGrid& m, const HylomorphyReport& hrep) {
  std::optional<State> best;
  double best_j = 0.0;
  for (const auto& entry : hrep.sweep) {
    State cand = family_state<State>(m, entry.first, hrep.s0_used);
    const FunctionalValue f = evaluate_all(cand, m);
    if (!f.lambda_defined) continue;
    if (!best || f.j_delta < best_j) {
      best_j = f.j_delta;
      best = std::move(cand);
    }
  }
  if (!best)
    throw NumericalError("plateau init: every test-family member fell below "
                         "the charge floor");
  return *std::move(best);
}

// ---- aligned profile distance (shift-and-phase surrogate) ----------------

inline double aligned_profile_distance(const ComplexField& a,
                                       const ComplexField& b) {
  return orbital_align(a, b).distance;
}

inline double aligned_profile_distance(const RealField& a,
                                       const RealField& b) {
  return orbital_align(complex_of(a), complex_of(b)).distance;
}

inline double aligned_profile_distance(const NKGState& a, const NKGState& b) {
  return orbital_align(a, b).distance;
}

inline void advance_state(ComplexField& st, double dt, const ModelOnGrid& m) {
  step_nse(st, dt, m);
}

inline void advance_state(NKGState& st, double dt, const ModelOnGrid& m) {
  step_nkg(st, dt, m);
}

// Loaded snapshots carry their own Grid instance; the library requires
// states to share the model's grid object, so after a structural match the
// field is rebased onto it.
inline void check_grid_matches(const Grid& a, const Grid& b,
                               const std::string& what) {
  bool ok = a.kind() == b.kind() && a.naxes() == b.naxes();
  for (std::size_t ax = 0; ok && ax < a.naxes(); ++ax)
    ok = a.axis(ax).lo == b.axis(ax).lo && a.axis(ax).hi == b.axis(ax).hi &&
         a.axis(ax).n == b.axis(ax).n && a.axis(ax).bc == b.axis(ax).bc;
  if (!ok)
    throw UsageError(what +
                     ": snapshot grid does not match the configured grid");
}

inline ComplexField rebased(ComplexField f, const GridPtr& g) {
  check_grid_matches(*f.grid, *g, "evolve");
  f.grid = g;
  return f;
}

inline RealField rebased(RealField f, const GridPtr& g) {
  check_grid_matches(*f.grid, *g, "evolve");
  f.grid = g;
  return f;
}

inline NKGState rebased(NKGState st, const GridPtr& g) {
  check_grid_matches(*st.psi.grid, *g, "evolve");
  st.psi.grid = g;
  st.psi_hat.grid = g;
  return st;
}

}  // namespace detail

// ---- solve ---------------------------------------------------------------

namespace detail {

template <class State>
int solve_impl(const RunConfig& cfg, const ModelOnGrid& m, const State& init,
               std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(cfg.output.dir) / "fields");

  HylomorphyReport hrep =
      hylomorphy_check(m, {cfg.sweep.parameters, cfg.sweep.s0});

  const State start = cfg.init.shape == "plateau"
                          ? detail::family_warm_start<State>(m, hrep)
                          : init;

  const FunctionalValue f0 = evaluate_all(start, m);
  const bool below = f0.lambda_defined && f0.j_delta < hrep.lambda0_proxy;

  MinimizeReport<State> free_rep = minimize_free(m, start, cfg.minimize);

  // cross-check: an independent constrained descent at the free charge
  bool have_cons = free_rep.c_delta >= m.floor;
  MinimizeReport<State> cons_rep;
  double e_diff = std::numeric_limits<double>::quiet_NaN();
  double profile_dist = std::numeric_limits<double>::quiet_NaN();
  if (have_cons) {
    cons_rep = minimize_constrained(m, free_rep.c_delta, start, cfg.minimize);
    e_diff = std::abs(free_rep.e_delta - cons_rep.e_delta);
    profile_dist =
        aligned_profile_distance(free_rep.minimizer, cons_rep.minimizer);
  }

  nlohmann::json rep;
  rep["command"] = "solve";
  rep["deterministic"] = cfg.deterministic;
  rep["rng-seed-used"] = seed;
  rep["equation"] = equation_name(m.spec.equation);
  rep["grid"] = grid_json(*m.grid);
  rep["delta"] = m.spec.delta;
  rep["hypothesis"] = {{"holds", hrep.hypothesis_holds},
                       {"s0", hrep.hypothesis_s0},
                       {"margin", hrep.hypothesis_margin}};
  rep["hylomorphy"] = hylomorphy_json(hrep);
  rep["jdelta-init-below-proxy"] = below;
  rep["free"] = minimize_json(free_rep);
  if (have_cons) {
    rep["constrained"] = minimize_json(cons_rep);
    rep["equivalence"] = {
        {"energy-abs-diff", e_diff},
        {"profile-distance", profile_dist},
        {"distance-surrogate", "shift-and-phase aligned relative L2"}};
  }
  rep["omega"] = free_rep.omega;
  rep["charge"] = free_rep.c_delta;
  rep["energy"] = free_rep.e_delta;

  const fs::path out(cfg.output.dir);
  write_trace_csv((out / "trace.csv").string(), free_rep.trace);
  if (have_cons)
    write_trace_csv((out / "trace-constrained.csv").string(),
                    cons_rep.trace);
  if (cfg.output.snapshots) {
    save_snapshot((out / "fields" / "minimizer.snap").string(),
                  free_rep.minimizer);
    if (have_cons)
      save_snapshot((out / "fields" / "constrained.snap").string(),
                    cons_rep.minimizer);
  }
  if (m.spec.equation == Equation::nse_vortex)
    rep["m3"] = -static_cast<double>(m.spec.ell) * free_rep.c_delta;

  const bool ok =
      free_rep.converged && (!have_cons || cons_rep.converged);
  write_json_file((out / "report.json").string(), rep);
  return ok ? 0 : 2;
}

}  // namespace detail

inline int run_solve(const RunConfig& cfg, std::ostream& err = std::cerr) {
  return detail::guarded("solve", err, [&]() -> int {
    GridPtr g = std::make_shared<Grid>(cfg.grid);
    ModelOnGrid m = make_model_on_grid(cfg.model, g);
    const std::uint64_t seed = detail::resolve_seed(cfg);
    switch (cfg.model.equation) {
      case Equation::nse:
        return detail::solve_impl(cfg, m, detail::nse_initial_state(cfg, g),
                                  seed);
      case Equation::nse_vortex:
        return detail::solve_impl(
            cfg, m, detail::vortex_initial_state(cfg, g, cfg.model.ell),
            seed);
      default:
        return detail::solve_impl(cfg, m, detail::nkg_initial_state(cfg, g),
                                  seed);
    }
  });
}

// ---- evolve --------------------------------------------------------------

namespace detail {

template <class State>
State solve_reference(const RunConfig& cfg, const ModelOnGrid& m,
                      const State& init) {
  MinimizeReport<State> rep = minimize_free(m, init, cfg.minimize);
  if (!(rep.c_delta >= m.floor))
    throw NumericalError("evolve: reference solve collapsed to the vacuum; "
                         "nothing to evolve");
  return rep.minimizer;
}

template <class State>
int evolve_impl(const RunConfig& cfg, const ModelOnGrid& m,
                const State& reference, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(cfg.output.dir) / "fields");
  const fs::path out(cfg.output.dir);

  const FunctionalValue fref = evaluate_all(reference, m);
  GammaParams<State> gamma{fref.E, std::abs(fref.C), reference};

  State init = reference;
  if (cfg.evolve.perturb > 0.0) {
    double mx = 0.0;
    if constexpr (std::is_same_v<State, NKGState>) {
      for (const cplx& z : init.psi.v) mx = std::max(mx, std::abs(z));
      ComplexField noise = random_smooth_complex(
          init.psi.grid, seed, cfg.evolve.perturb * mx);
      for (std::size_t i = 0; i < init.psi.v.size(); ++i)
        init.psi.v[i] += noise.v[i];
    } else {
      for (const cplx& z : init.v) mx = std::max(mx, std::abs(z));
      ComplexField noise =
          random_smooth_complex(init.grid, seed, cfg.evolve.perturb * mx);
      for (std::size_t i = 0; i < init.v.size(); ++i)
        init.v[i] += noise.v[i];
    }
  }

  const double dt = cfg.evolve.dt > 0.0 ? cfg.evolve.dt : suggest_dt(m);
  EvolutionReport rep = evolve_and_monitor(init, cfg.evolve.total_time, dt,
                                           m, gamma, cfg.evolve.samples);

  std::ofstream os((out / "series.csv").string(), std::ios::trunc);
  if (!os) throw UsageError("run: cannot write series.csv");
  os << "t,E,C,V,orbital_distance\n";
  for (std::size_t i = 0; i < rep.times.size(); ++i)
    os << fmt17(rep.times[i]) << ',' << fmt17(rep.E_series[i]) << ','
       << fmt17(rep.C_series[i]) << ',' << fmt17(rep.V_series[i]) << ','
       << fmt17(rep.orbital_distance_series[i]) << '\n';
  os.close();

  double vmax = 0.0, dmax = 0.0;
  for (double v : rep.V_series) vmax = std::max(vmax, v);
  for (double d : rep.orbital_distance_series) dmax = std::max(dmax, d);
  const double e_drift =
      rep.E_series.empty()
          ? 0.0
          : std::abs(rep.E_series.back() - rep.E_series.front());
  const double c_drift =
      rep.C_series.empty()
          ? 0.0
          : std::abs(rep.C_series.back() - rep.C_series.front());

  nlohmann::json j;
  j["command"] = "evolve";
  j["deterministic"] = cfg.deterministic;
  j["rng-seed-used"] = seed;
  j["equation"] = equation_name(m.spec.equation);
  j["grid"] = grid_json(*m.grid);
  j["dt"] = dt;
  j["total-time"] = cfg.evolve.total_time;
  j["perturb"] = cfg.evolve.perturb;
  j["reference"] = {{"energy", gamma.e0}, {"charge", gamma.c0}};
  j["distance-metric"] = rep.distance_metric;
  j["distance-surrogate"] = "shift-and-phase orbit of the reference";
  j["diverged"] = rep.diverged;
  j["diagnostic"] = rep.diagnostic;
  j["samples"] = rep.times.size();
  j["max-lyapunov"] = vmax;
  j["sup-orbital-distance"] = dmax;
  j["energy-drift"] = e_drift;
  j["charge-drift"] = c_drift;
  write_json_file((out / "report.json").string(), j);

  if (cfg.output.snapshots)
    save_snapshot((out / "fields" / "reference.snap").string(), reference);

  // optional field movie: re-integrate, dumping every k-th step
  if (cfg.output.snapshots && cfg.output.snapshot_every > 0 &&
      !rep.diverged) {
    State st = init;
    const long steps = std::lround(
        std::ceil(cfg.evolve.total_time / dt - 1e-9));
    for (long k = 0; k < steps; ++k) {
      advance_state(st, dt, m);
      if ((k + 1) % cfg.output.snapshot_every == 0 || k + 1 == steps) {
        char name[32];
        std::snprintf(name, sizeof name, "step-%06ld.snap", k + 1);
        save_snapshot((out / "fields" / name).string(), st);
      }
    }
  }
  return rep.diverged ? 2 : 0;
}

}  // namespace detail

inline int run_evolve(const RunConfig& cfg, std::ostream& err = std::cerr) {
  return detail::guarded("evolve", err, [&]() -> int {
    GridPtr g = std::make_shared<Grid>(cfg.grid);
    ModelOnGrid m = make_model_on_grid(cfg.model, g);
    const std::uint64_t seed = detail::resolve_seed(cfg);
    const std::string& ref = cfg.evolve.reference;
    switch (cfg.model.equation) {
      case Equation::nse: {
        ComplexField r =
            ref == "solve"
                ? detail::solve_reference(cfg, m,
                                          detail::nse_initial_state(cfg, g))
                : detail::rebased(load_complex_snapshot(ref), g);
        return detail::evolve_impl(cfg, m, r, seed);
      }
      case Equation::nse_vortex: {
        // the reduced profile evolves as a complex field over (r, x3)
        ComplexField r =
            ref == "solve"
                ? detail::complex_of(detail::solve_reference(
                      cfg, m,
                      detail::vortex_initial_state(cfg, g, cfg.model.ell)))
                : (snapshot_kind(ref) == SnapshotKind::real
                       ? detail::complex_of(
                             detail::rebased(load_real_snapshot(ref), g))
                       : detail::rebased(load_complex_snapshot(ref), g));
        return detail::evolve_impl(cfg, m, r, seed);
      }
      default: {
        NKGState r =
            ref == "solve"
                ? detail::solve_reference(cfg, m,
                                          detail::nkg_initial_state(cfg, g))
                : detail::rebased(load_nkg_snapshot(ref), g);
        return detail::evolve_impl(cfg, m, r, seed);
      }
    }
  });
}

// ---- verify --------------------------------------------------------------

namespace detail {

struct Property {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool greater = false;  // false: pass iff measured <= bound
  bool pass = false;
};

inline void close_property(Property& p) {
  p.pass = p.greater ? (p.measured >= p.bound) : (p.measured <= p.bound);
}

template <class State, class Eval>
double fd_relative_error(const State& st, const State& dir, Eval&& f,
                         const State& grad) {
  const double eps = 1e-5;
  State up = st, dn = st;
  axpy(eps, dir, up);
  axpy(-eps, dir, dn);
  const double fd = (f(up) - f(dn)) / (2.0 * eps);
  const double an = state_dot(grad, dir);
  return std::abs(fd - an) / std::max(1.0, std::abs(an));
}

template <class State, class MakeState, class MakeDir>
void gradient_properties(const ModelOnGrid& m, std::uint64_t seed,
                         MakeState&& mk_state, MakeDir&& mk_dir,
                         std::vector<Property>& props) {
  double ge = 0.0, gc = 0.0, gj = 0.0;
  for (unsigned k = 0; k < 5; ++k) {
    State u = mk_state(seed + 11 * k);
    State d = mk_dir(seed + 11 * k + 7);
    ge = std::max(ge, fd_relative_error(
                          u, d,
                          [&](const State& s) { return energy(s, m); },
                          first_variation(u, m, Which::E).gradient));
    gc = std::max(gc, fd_relative_error(
                          u, d,
                          [&](const State& s) { return charge(s, m); },
                          first_variation(u, m, Which::C).gradient));
    gj = std::max(
        gj, fd_relative_error(
                u, d,
                [&](const State& s) { return evaluate_all(s, m).j_delta; },
                first_variation(u, m, Which::Jdelta).gradient));
  }
  props.push_back({"gradient-fd-energy", ge, 1e-6, false, false});
  props.push_back({"gradient-fd-charge", gc, 1e-6, false, false});
  props.push_back({"gradient-fd-jdelta", gj, 1e-6, false, false});
}

/// Disjointness is checked on compactly supported hats (the defect is then
/// pure roundoff); the decay trend on gaussians whose tails still overlap.
/// mk_bump(axis, offset, width, compact) builds the state.
template <class State, class MakeBump>
void splitting_properties(const ModelOnGrid& m, MakeBump&& mk_bump,
                          std::vector<Property>& props) {
  const Grid& g = *m.grid;
  std::size_t axis = 0;
  double L = 0.0;
  for (std::size_t a = 0; a < g.naxes(); ++a) {
    const double len = g.axis(a).hi - g.axis(a).lo;
    if (len > L) {
      L = len;
      axis = a;
    }
  }
  {
    const double sep = 0.4 * L, width = L / 12.0;
    State u = mk_bump(axis, +0.5 * sep, width, true);
    State w = mk_bump(axis, -0.5 * sep, width, true);
    props.push_back({"splitting-energy-disjoint",
                     splitting_defect(m, WhichFC::E, u, w), 1e-12, false,
                     false});
    props.push_back({"splitting-charge-disjoint",
                     splitting_defect(m, WhichFC::C, u, w), 1e-12, false,
                     false});
  }
  const double width = L / 24.0;
  std::vector<double> de;
  for (double frac : {0.15, 0.25, 0.35}) {
    const double sep = frac * L;
    State u = mk_bump(axis, +0.5 * sep, width, false);
    State w = mk_bump(axis, -0.5 * sep, width, false);
    de.push_back(splitting_defect(m, WhichFC::E, u, w));
  }
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < de.size(); ++k)
    worst = std::max(worst, de[k + 1] - de[k]);
  props.push_back({"splitting-energy-decreasing", worst, 0.0, false, false});
}

template <class State>
void conservation_properties(const ModelOnGrid& m, const State& init,
                             std::vector<Property>& props) {
  const double T = 2.0;
  const double dt = 0.5 * suggest_dt(m);
  const FunctionalValue f0 = evaluate_all(init, m);
  State st = init;
  const long steps =
      std::max<long>(1, std::lround(std::ceil(T / dt - 1e-9)));
  for (long k = 0; k < steps; ++k) advance_state(st, dt, m);
  const FunctionalValue f1 = evaluate_all(st, m);
  const double scale_t = 10.0 / (static_cast<double>(steps) * dt);
  const double de =
      std::abs(f1.E - f0.E) / std::max(1e-300, std::abs(f0.E)) * scale_t;
  const double dc =
      std::abs(f1.C - f0.C) / (std::abs(f0.C) + 1.0) * scale_t;
  props.push_back({"conservation-energy-per-10", de, 1e-6, false, false});
  props.push_back({"conservation-charge-per-10", dc, 1e-6, false, false});
  if (m.spec.equation != Equation::nkg && m.grid->fully_periodic())
    props.push_back({"charge-unitarity", std::abs(f1.C - f0.C) /
                                             (std::abs(f0.C) + 1.0),
                     1e-12, false, false});
  if (m.spec.equation == Equation::nkg) {
    if constexpr (std::is_same_v<State, NKGState>) {
      const double defect = time_reversal_defect(init, 1000, dt, m);
      props.push_back({"leapfrog-reversibility", defect, 1e-10, false,
                       false});
    }
  }
}

inline void coercivity_property(const ModelOnGrid& m, std::uint64_t seed,
                                std::vector<Property>& props) {
  const Grid& g = *m.grid;
  const int N = problem_dimension(m.spec, g);
  const GridPtr gp = m.grid;
  const double bp = estimate_gn_constant(N, m.spec.nonlin.p, gp);
  const CoercivityConstants cc = coercivity_constants(
      N, m.spec.nonlin.p, m.spec.nonlin.c_w / m.spec.nonlin.p, bp);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> logamp(-1.0, 1.0);
  double worst = std::numeric_limits<double>::infinity();
  for (unsigned k = 0; k < 1000; ++k) {
    const double amp = std::pow(10.0, logamp(rng));
    ComplexField psi = random_smooth_complex(gp, seed + 13 * k + 1, amp);
    const FunctionalValue f = evaluate_all(psi, m);
    const double margin = (f.E + cc.a * std::pow(std::abs(f.C), cc.s)) /
                          std::max(1.0, std::abs(f.E));
    worst = std::min(worst, margin);
  }
  props.push_back({"coercivity-sample-min", worst, -1e-9, true, false});
}

inline void nkg_lambda_floor_property(const ModelOnGrid& m,
                                      std::uint64_t seed,
                                      std::vector<Property>& props) {
  const Nonlinearity& nl = m.spec.nonlin;
  const double mass = std::abs(nl.m);
  const double s_exp = 0.5 * (2.0 + nl.p);
  double worst = std::numeric_limits<double>::infinity();
  for (double eps : {0.3, 0.1, 0.03}) {
    const double floor_sq =
        1.0 - 2.0 * (nl.c_n / (mass * mass)) * std::pow(eps, s_exp - 2.0);
    const double floor = mass * std::sqrt(std::max(0.0, floor_sq));
    for (unsigned k = 0; k < 20; ++k) {
      NKGState st{random_smooth_complex(m.grid, seed + 101 * k + 3, eps),
                  random_smooth_complex(m.grid, seed + 101 * k + 57, mass)};
      const FunctionalValue f = evaluate_all(st, m);
      if (!f.lambda_defined) continue;
      worst = std::min(worst, f.lambda - floor);
    }
  }
  props.push_back({"nkg-lambda-floor", worst, -1e-9, true, false});
}

}  // namespace detail

inline int run_verify(const RunConfig& cfg, std::ostream& err = std::cerr) {
  return detail::guarded("verify", err, [&]() -> int {
    namespace fs = std::filesystem;
    GridPtr g = std::make_shared<Grid>(cfg.grid);
    ModelOnGrid m = make_model_on_grid(cfg.model, g);
    const std::uint64_t seed = detail::resolve_seed(cfg);
    fs::create_directories(cfg.output.dir);
    std::vector<detail::Property> props;

    if (cfg.model.equation == Equation::nkg) {
      auto mk_state = [&](std::uint64_t s) {
        // definite charge: psi_hat dominated by -i omega psi plus noise
        ComplexField psi = detail::random_smooth_complex(g, s, 0.8);
        ComplexField psih = psi;
        for (cplx& z : psih.v) z *= cplx(0.0, -0.5);
        ComplexField noise = detail::random_smooth_complex(g, s + 5, 0.3);
        for (std::size_t i = 0; i < psih.v.size(); ++i)
          psih.v[i] += noise.v[i];
        return NKGState{std::move(psi), std::move(psih)};
      };
      auto mk_dir = [&](std::uint64_t s) {
        return NKGState{detail::random_smooth_complex(g, s, 0.5),
                        detail::random_smooth_complex(g, s + 9, 0.5)};
      };
      detail::gradient_properties<NKGState>(m, seed, mk_state, mk_dir,
                                            props);
      auto mk_bump = [&](std::size_t axis, double offset, double width,
                         bool compact) {
        std::vector<double> c = detail::box_center(*g);
        c[axis] += offset;
        RealField b = compact ? detail::hat_bump(g, c, width, 0.8)
                              : detail::gaussian_bump(g, c, width, 0.8);
        NKGState st{detail::complex_of(b), detail::complex_of(b)};
        for (cplx& z : st.psi_hat.v) z *= cplx(0.0, -0.7);
        return st;
      };
      detail::splitting_properties<NKGState>(m, mk_bump, props);
      // conservation is judged on the solitary wave when one exists, else
      // on the configured initial state
      NKGState cons_init = detail::nkg_initial_state(cfg, g);
      try {
        cons_init = detail::solve_reference(cfg, m, cons_init);
      } catch (const NumericalError&) {
      }
      detail::conservation_properties(m, cons_init, props);
      detail::nkg_lambda_floor_property(m, seed + 77, props);
    } else {
      auto mk_state = [&](std::uint64_t s) {
        return detail::random_smooth_complex(g, s, 0.8);
      };
      auto mk_dir = [&](std::uint64_t s) {
        return detail::random_smooth_complex(g, s + 3, 0.5);
      };
      detail::gradient_properties<ComplexField>(m, seed, mk_state, mk_dir,
                                                props);
      auto mk_bump = [&](std::size_t axis, double offset, double width,
                         bool compact) {
        std::vector<double> c = detail::box_center(*g);
        if (m.grid->axis(0).radial) c[0] = 0.4 * m.grid->axis(0).hi;
        c[axis] += offset;
        RealField b = compact ? detail::hat_bump(g, c, width, 0.8)
                              : detail::gaussian_bump(g, c, width, 0.8);
        return detail::complex_of(b);
      };
      detail::splitting_properties<ComplexField>(m, mk_bump, props);
      ComplexField init =
          cfg.model.equation == Equation::nse_vortex
              ? detail::complex_of(
                    detail::vortex_initial_state(cfg, g, cfg.model.ell))
              : detail::nse_initial_state(cfg, g);
      try {
        if (cfg.model.equation == Equation::nse_vortex)
          init = detail::complex_of(detail::solve_reference(
              cfg, m, detail::vortex_initial_state(cfg, g, cfg.model.ell)));
        else
          init = detail::solve_reference(cfg, m, init);
      } catch (const NumericalError&) {
      }
      detail::conservation_properties(m, init, props);
      detail::coercivity_property(m, seed + 77, props);
    }

    bool all = true;
    nlohmann::json plist = nlohmann::json::array();
    for (detail::Property& p : props) {
      detail::close_property(p);
      all = all && p.pass;
      plist.push_back({{"name", p.name},
                       {"measured", p.measured},
                       {"bound", p.bound},
                       {"comparison", p.greater ? ">=" : "<="},
                       {"pass", p.pass}});
    }
    nlohmann::json j;
    j["command"] = "verify";
    j["deterministic"] = cfg.deterministic;
    j["rng-seed-used"] = seed;
    j["equation"] = detail::equation_name(m.spec.equation);
    j["grid"] = detail::grid_json(*g);
    j["properties"] = plist;
    j["all-pass"] = all;
    detail::write_json_file(
        (std::filesystem::path(cfg.output.dir) / "report.json").string(), j);
    return all ? 0 : 2;
  });
}

// ---- testfn --------------------------------------------------------------

inline int run_testfn(const RunConfig& cfg, std::ostream& err = std::cerr) {
  return detail::guarded("testfn", err, [&]() -> int {
    namespace fs = std::filesystem;
    GridPtr g = std::make_shared<Grid>(cfg.grid);
    ModelOnGrid m = make_model_on_grid(cfg.model, g);
    fs::create_directories(cfg.output.dir);
    HylomorphyReport rep =
        hylomorphy_check(m, {cfg.sweep.parameters, cfg.sweep.s0});

    const fs::path out(cfg.output.dir);
    std::ofstream os((out / "series.csv").string(), std::ios::trunc);
    if (!os) throw UsageError("run: cannot write series.csv");
    os << "parameter,lambda\n";
    for (const auto& [par, lam] : rep.sweep)
      os << detail::fmt17(par) << ',' << detail::fmt17(lam) << '\n';
    os.close();

    nlohmann::json j;
    j["command"] = "testfn";
    j["equation"] = detail::equation_name(m.spec.equation);
    j["grid"] = detail::grid_json(*g);
    j["hypothesis"] = {{"holds", rep.hypothesis_holds},
                       {"s0", rep.hypothesis_s0},
                       {"margin", rep.hypothesis_margin}};
    j["hylomorphy"] = detail::hylomorphy_json(rep);
    detail::write_json_file((out / "report.json").string(), j);
    return 0;
  });
}

}  // namespace hylo
