#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hylo/functionals.hpp"
#include "hylo/grid.hpp"
#include "hylo/model.hpp"
#include "oracles.hpp"

using namespace hylo;
using Catch::Approx;

namespace {

ModelOnGrid nse_model(const GridPtr& g, double a = 1.0, double s = 3.0,
                      double delta = 0.01) {
  ModelSpec spec;
  spec.equation = Equation::nse;
  spec.nonlin = oracle::nse_quartic();
  spec.coercivity = {a, s};
  spec.delta = delta;
  return make_model_on_grid(spec, g);
}

ModelOnGrid nkg_model(const GridPtr& g, double c_n = 1.0) {
  ModelSpec spec;
  spec.equation = Equation::nkg;
  spec.nonlin = oracle::nkg_cubic();
  spec.nonlin.c_n = c_n;
  spec.coercivity = {0.0, 1.0};
  return make_model_on_grid(spec, g);
}

}  // namespace

TEST_CASE("energy and charge of reference states") {
  GridPtr g = oracle::line(-20.0, 20.0, 2048);
  ModelOnGrid m = nse_model(g);

  RealField zero(g);
  REQUIRE(energy(zero, m) == 0.0);
  REQUIRE(charge(zero, m) == 0.0);

  RealField sech = oracle::nse_sech(g, 1.0);
  REQUIRE(energy(sech, m) == Approx(5.0 / 3.0).margin(1e-4));
  REQUIRE(charge(sech, m) == Approx(2.0).margin(1e-8));

  // the family at another amplitude
  RealField s2 = oracle::nse_sech(g, 0.8);
  REQUIRE(energy(s2, m) == Approx(oracle::nse_E(0.8)).margin(1e-4));
  REQUIRE(charge(s2, m) == Approx(oracle::nse_C(0.8)).margin(1e-8));
}

TEST_CASE("NKG constant state on the unit box") {
  GridPtr g = oracle::line(0.0, 1.0, 64);
  ModelOnGrid m = nkg_model(g, 0.0);  // linear Klein-Gordon
  const double c0 = 0.7;
  NKGState st{ComplexField(g), ComplexField(g)};
  for (std::size_t i = 0; i < g->size(); ++i) {
    st.psi.v[i] = c0;
    st.psi_hat.v[i] = cplx(0.0, -c0);  // -i m c0, m=1
  }
  REQUIRE(energy(st, m) == Approx(c0 * c0).margin(1e-13));
  REQUIRE(charge(st, m) == Approx(-c0 * c0).margin(1e-13));
  const FunctionalValue f = evaluate_all(st, m);
  REQUIRE(f.lambda_defined);
  REQUIRE(f.lambda == Approx(1.0).margin(1e-13));  // Lambda = m
}

TEST_CASE("NKG standing-wave bundle at omega 0.8") {
  GridPtr g = oracle::line(-20.0, 20.0, 2048);
  ModelOnGrid m = nkg_model(g);
  NKGState st = oracle::nkg_standing_wave(g, 0.8);
  const FunctionalValue f = evaluate_all(st, m);
  REQUIRE(f.E == Approx(1.824).margin(1e-3));
  REQUIRE(std::abs(f.C) == Approx(1.92).margin(1e-3));
  REQUIRE(f.C < 0.0);  // C = -omega int u^2
  REQUIRE(f.lambda == Approx(0.95).margin(1e-3));
  REQUIRE(f.phi == f.E);  // a = 0
}

TEST_CASE("NSE bundle with coercivity regularizer") {
  GridPtr g = oracle::line(-20.0, 20.0, 2048);
  ModelOnGrid m = nse_model(g, 1.0, 3.0, 0.01);
  RealField sech = oracle::nse_sech(g, 1.0);
  const FunctionalValue f = evaluate_all(sech, m);
  REQUIRE(f.phi == Approx(5.0 / 3.0 + 16.0).margin(1e-3));
  REQUIRE(f.lambda == Approx(5.0 / 6.0).margin(1e-4));
  REQUIRE(f.j_delta == Approx(f.lambda + 0.01 * f.phi).margin(1e-12));
}

TEST_CASE("charge floor flags Lambda undefined") {
  GridPtr g = oracle::line(-1.0, 1.0, 64);
  ModelOnGrid m = nse_model(g);
  RealField tiny(g);
  for (double& v : tiny.v) v = 1e-9;
  const FunctionalValue f = evaluate_all(tiny, m);
  REQUIRE_FALSE(f.lambda_defined);
  REQUIRE(std::isnan(f.lambda));
  REQUIRE(std::isnan(f.j_delta));
  REQUIRE_THROWS_AS(first_variation(tiny, m, Which::Jdelta), UsageError);
}

TEST_CASE("state/spec mismatch is a usage error") {
  GridPtr g = oracle::line(0.0, 1.0, 16);
  ModelOnGrid nse = nse_model(g);
  ModelOnGrid nkg = nkg_model(g);
  NKGState st{ComplexField(g), ComplexField(g)};
  RealField u(g);
  REQUIRE_THROWS_AS(energy(st, nse), UsageError);
  REQUIRE_THROWS_AS(energy(u, nkg), UsageError);
  REQUIRE_THROWS_AS(charge(st, nse), UsageError);
}

TEST_CASE("charge homogeneity at quadrature level") {
  GridPtr g = oracle::line(-5.0, 5.0, 256);
  ModelOnGrid m = nse_model(g);
  RealField u = oracle::random_band_limited(g, 21);
  const double c = charge(u, m);
  for (double t : {0.5, 2.0}) {
    RealField tu = u;
    for (double& v : tu.v) v *= t;
    REQUIRE(charge(tu, m) == t * t * c);  // power-of-two scaling is exact
  }
  RealField tu = u;
  for (double& v : tu.v) v *= 3.0;
  REQUIRE(charge(tu, m) == Approx(9.0 * c).epsilon(5e-15));
}

TEST_CASE("trivial first variations") {
  GridPtr g = oracle::line(-5.0, 5.0, 128);
  ModelOnGrid m = nse_model(g);
  RealField zero(g);
  auto ve = first_variation(zero, m, Which::E);
  REQUIRE(ve.norm == 0.0);
  RealField u = oracle::random_band_limited(g, 3);
  auto vc = first_variation(u, m, Which::C);
  for (std::size_t i = 0; i < g->size(); ++i)
    REQUIRE(vc.gradient.v[i] == 2.0 * u.v[i]);
}

namespace {

template <class State, class Eval>
void fd_check(const State& st, const State& dir, Eval&& f,
              const State& grad, double tol) {
  const double eps = 1e-5;
  State up = st, dn = st;
  axpy(eps, dir, up);
  axpy(-eps, dir, dn);
  const double fd = (f(up) - f(dn)) / (2.0 * eps);
  const double an = state_dot(grad, dir);
  REQUIRE(fd == Approx(an).margin(tol * std::max(1.0, std::abs(an))));
}

}  // namespace

TEST_CASE("gradients match finite differences (NSE)") {
  GridPtr g = oracle::line(-8.0, 8.0, 256);
  ModelOnGrid m = nse_model(g);
  for (unsigned seed = 0; seed < 20; ++seed) {
    RealField u = oracle::random_band_limited(g, 100 + seed, 10, 0.9);
    RealField v = oracle::random_band_limited(g, 200 + seed, 10, 0.5);
    fd_check(u, v, [&](const RealField& s) { return energy(s, m); },
             first_variation(u, m, Which::E).gradient, 1e-6);
    fd_check(u, v, [&](const RealField& s) { return charge(s, m); },
             first_variation(u, m, Which::C).gradient, 1e-6);
    fd_check(u, v,
             [&](const RealField& s) { return evaluate_all(s, m).j_delta; },
             first_variation(u, m, Which::Jdelta).gradient, 1e-6);
  }
}

TEST_CASE("gradients match finite differences (NKG)") {
  GridPtr g = oracle::line(-8.0, 8.0, 256);
  ModelOnGrid m = nkg_model(g);
  for (unsigned seed = 0; seed < 20; ++seed) {
    NKGState u{oracle::random_band_limited_complex(g, 300 + seed, 10, 0.8),
               oracle::random_band_limited_complex(g, 400 + seed, 10, 0.8)};
    NKGState v{oracle::random_band_limited_complex(g, 500 + seed, 10, 0.5),
               oracle::random_band_limited_complex(g, 600 + seed, 10, 0.5)};
    fd_check(u, v, [&](const NKGState& s) { return energy(s, m); },
             first_variation(u, m, Which::E).gradient, 1e-6);
    fd_check(u, v, [&](const NKGState& s) { return charge(s, m); },
             first_variation(u, m, Which::C).gradient, 1e-6);
    fd_check(u, v,
             [&](const NKGState& s) { return evaluate_all(s, m).j_delta; },
             first_variation(u, m, Which::Jdelta).gradient, 1e-6);
  }
}

TEST_CASE("gradient of complex NSE field") {
  GridPtr g = oracle::line(-8.0, 8.0, 256);
  ModelOnGrid m = nse_model(g);
  ComplexField psi = oracle::random_band_limited_complex(g, 7, 10, 0.8);
  ComplexField dir = oracle::random_band_limited_complex(g, 8, 10, 0.5);
  fd_check(psi, dir, [&](const ComplexField& s) { return energy(s, m); },
           grad_energy(psi, m), 1e-6);
  fd_check(psi, dir, [&](const ComplexField& s) { return charge(s, m); },
           grad_charge(psi, m), 1e-6);
}

TEST_CASE("Rayleigh quotient minimum") {
  // constant potential, periodic: constant eigenfunction, eigenvalue 1
  GridPtr g = oracle::line(-5.0, 5.0, 128);
  REQUIRE(rayleigh_quotient_min(nse_model(g)) == Approx(1.0).margin(1e-8));

  // Dirichlet box [0,1]: 1 + (1/2) pi^2
  GridPtr gd = oracle::line(0.0, 1.0, 512, Boundary::dirichlet_zero);
  REQUIRE(rayleigh_quotient_min(nse_model(gd)) ==
          Approx(1.0 + 0.5 * std::numbers::pi * std::numbers::pi)
              .margin(1e-4));

  // NKG: returns the mass
  REQUIRE(rayleigh_quotient_min(nkg_model(g)) == 1.0);

  // lattice potential: ground state between inf V and sup V
  ModelSpec spec;
  spec.equation = Equation::nse;
  spec.nonlin = oracle::nse_quartic();
  spec.coercivity = {1.0, 3.0};
  spec.potential.family = PotentialFamily::lattice;
  spec.potential.amp = 0.2;
  GridPtr gl = oracle::line(-20.0, 20.0, 1024);
  const double lam = rayleigh_quotient_min(make_model_on_grid(spec, gl));
  REQUIRE(lam > 1.0);
  REQUIRE(lam < 1.2);
}

TEST_CASE("splitting defect") {
  GridPtr g = oracle::line(-24.0, 24.0, 1024);
  ModelOnGrid m = nse_model(g);
  const AxisGeom& ax = g->axis(0);

  // compactly supported bumps, supports separated by far more than 2 cells
  auto bump = [&](double x0) {
    RealField u(g);
    for (int i = 0; i < ax.n; ++i) {
      const double d = std::abs(ax.x[i] - x0);
      u.v[i] = d < 2.0 ? (1.0 - d / 2.0) * (1.0 - d / 2.0) : 0.0;
    }
    return u;
  };
  RealField u = bump(-6.0), w = bump(6.0);
  const double fu = energy(u, m), fw = energy(w, m);
  REQUIRE(splitting_defect(m, WhichFC::E, u, w) <=
          1e-12 * (std::abs(fu) + std::abs(fw) + 1.0));
  REQUIRE(splitting_defect(m, WhichFC::C, u, w) <=
          1e-12 * (charge(u, m) + charge(w, m) + 1.0));

  RealField zero(g);
  REQUIRE(splitting_defect(m, WhichFC::E, u, zero) == 0.0);
  REQUIRE(splitting_defect(m, WhichFC::C, u, zero) == 0.0);

  // overlapping sech tails: defect strictly decreasing in separation
  double prev_e = std::numeric_limits<double>::infinity();
  double prev_c = std::numeric_limits<double>::infinity();
  for (double d : {4.0, 8.0, 16.0}) {
    RealField a = oracle::nse_sech(g, 1.0, -0.5 * d);
    RealField b = oracle::nse_sech(g, 1.0, 0.5 * d);
    const double de = splitting_defect(m, WhichFC::E, a, b);
    const double dc = splitting_defect(m, WhichFC::C, a, b);
    REQUIRE(de < prev_e);
    REQUIRE(dc < prev_c);
    REQUIRE(de > 0.0);
    prev_e = de;
    prev_c = dc;
  }

  // NKG states split as well
  ModelOnGrid mk = nkg_model(g);
  NKGState su{ComplexField(g), ComplexField(g)};
  NKGState sw{ComplexField(g), ComplexField(g)};
  for (std::size_t i = 0; i < g->size(); ++i) {
    su.psi.v[i] = bump(-6.0).v[i];
  }
  for (std::size_t i = 0; i < g->size(); ++i) {
    sw.psi.v[i] = cplx(0.0, bump(6.0).v[i]);
    sw.psi_hat.v[i] = bump(6.0).v[i];
  }
  REQUIRE(splitting_defect(mk, WhichFC::E, su, sw) <= 1e-12);
  REQUIRE(splitting_defect(mk, WhichFC::C, su, sw) <= 1e-12);
}

TEST_CASE("coercivity bound on random fields") {
  GridPtr g = oracle::line(-10.0, 10.0, 256);
  const double bp = estimate_gn_constant(1, 4.0, g);
  // paper convention: W(s) >= -c s^p with c = c_w/p
  const CoercivityConstants cc = coercivity_constants(1, 4.0, 2.0 / 4.0, bp);
  ModelOnGrid m = nse_model(g, cc.a, cc.s, 0.01);
  const double M = coercivity_bound_M(cc.a, cc.s, m.spec.delta);
  REQUIRE(M > 0.0);

  std::mt19937 rng(99);
  std::uniform_real_distribution<double> logamp(-1.3, 1.3);
  int checked = 0;
  for (unsigned k = 0; k < 1000; ++k) {
    const double amp = std::pow(10.0, logamp(rng));
    RealField u = oracle::random_band_limited(g, 5000 + k, 16, amp);
    const FunctionalValue f = evaluate_all(u, m);
    // EC-3 instance: E + a C^s >= 0 up to roundoff
    REQUIRE(f.E + cc.a * std::pow(f.C, cc.s) >=
            -1e-9 * std::max(1.0, std::abs(f.E)));
    if (!f.lambda_defined) continue;
    ++checked;
    // J_delta >= (delta/2) Phi - M
    REQUIRE(f.j_delta >=
            0.5 * m.spec.delta * f.phi - M -
                1e-9 * std::max(1.0, std::abs(f.j_delta)));
  }
  REQUIRE(checked == 1000);
}

TEST_CASE("NKG small-amplitude Lambda bound") {
  GridPtr g = oracle::line(-10.0, 10.0, 256);
  ModelOnGrid m = nkg_model(g);
  // s = (2 + min(r, q))/2 with r = q = p = 4
  const double s = 3.0;
  for (double eps : {0.3, 0.1, 0.03}) {
    const double bound = std::sqrt(1.0 - 2.0 * std::pow(eps, s - 2.0));
    for (unsigned k = 0; k < 50; ++k) {
      ComplexField psi =
          oracle::random_band_limited_complex(g, 9000 + k, 10, eps);
      ComplexField psih =
          oracle::random_band_limited_complex(g, 9100 + k, 10, 1.0);
      NKGState st{psi, psih};
      const FunctionalValue f = evaluate_all(st, m);
      REQUIRE(f.lambda_defined);
      REQUIRE(f.lambda >= bound - 1e-9);
      REQUIRE(f.lambda >= 0.0);  // W >= 0 on the tested amplitude range
    }
  }
}
